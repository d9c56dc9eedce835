import random

import pytest

from agrotelem.model import COMPOST_KINDS, GARDEN_KINDS, FactorKind
from agrotelem.sensors import (
    SignalModel,
    default_compost_models,
    default_garden_models,
    generate,
    models_from_json,
)

T0 = 1_690_070_400  # midnight UTC


def test_constant_signal():
    model = SignalModel(FactorKind.GardenAirTemp, 21.5, 0.0, 0.0, 0.0, seed=1)
    for t in (T0, T0 + 3600, T0 + 86399):
        assert generate(model, t) == 21.5


def test_sinusoid_peak():
    # peak sits 6 h after the phase hour; baseline 50 + amplitude 30 -> 80
    model = SignalModel(FactorKind.GardenAirHumidity, 50.0, 30.0, 3.0, 0.0, seed=1)
    assert generate(model, T0 + 9 * 3600) == pytest.approx(80.0, abs=1e-9)


def test_luminosity_trough_clamps_to_zero():
    # raw value at the trough: 40000 - 60000 = -20000, clamped to the 0 lux floor
    model = SignalModel(FactorKind.GardenLuminosity, 40000.0, 60000.0, 7.0, 0.0, seed=1)
    assert generate(model, T0 + 1 * 3600) == 0.0


def test_generate_is_deterministic():
    model = SignalModel(FactorKind.CompostTemp, 45.0, 2.0, 9.0, 0.8, seed=99)
    for t in (T0, T0 + 1234, T0 + 55555):
        assert generate(model, t) == generate(model, t)


def test_noise_varies_with_timestamp_and_seed():
    a = SignalModel(FactorKind.CompostTemp, 45.0, 0.0, 0.0, 1.0, seed=1)
    b = SignalModel(FactorKind.CompostTemp, 45.0, 0.0, 0.0, 1.0, seed=2)
    assert generate(a, T0) != generate(a, T0 + 1)
    assert generate(a, T0) != generate(b, T0)


def test_diurnal_period_without_noise():
    model = SignalModel(FactorKind.GardenAirTemp, 20.0, 8.0, 9.0, 0.0, seed=1)
    for t in (T0, T0 + 7200, T0 + 45000):
        assert generate(model, t) == pytest.approx(generate(model, t + 86400), abs=1e-12)


def test_output_always_in_physical_range():
    rng = random.Random(4242)
    kinds = list(FactorKind)
    for _ in range(500):
        kind = rng.choice(kinds)
        lo, hi = kind.physical_range
        model = SignalModel(
            kind,
            baseline=rng.uniform(lo - 10, hi + 10),
            diurnal_amplitude=rng.uniform(0, (hi - lo) * 1.5),
            phase=rng.uniform(0, 24),
            noise_sd=rng.uniform(0, (hi - lo) / 4),
            seed=rng.randrange(2**32),
        )
        value = generate(model, T0 + rng.randrange(7 * 86400))
        assert lo <= value <= hi


def test_default_garden_models_cover_garden_kinds():
    models = default_garden_models(7)
    assert len(models) == 5
    assert {m.kind for m in models} == set(GARDEN_KINDS)


def test_default_compost_models_cover_compost_kinds():
    models = default_compost_models(7)
    assert len(models) == 2
    assert {m.kind for m in models} == {FactorKind.CompostTemp, FactorKind.CompostHumidity}
    assert models == default_compost_models(7)  # same seed, identical list


def test_model_validation():
    with pytest.raises(ValueError):
        SignalModel(FactorKind.GardenUv, 3.0, -1.0, 0.0, 0.0, seed=1)
    with pytest.raises(ValueError):
        SignalModel(FactorKind.GardenUv, 3.0, 1.0, 0.0, -0.5, seed=1)


def test_models_from_json():
    doc = [
        {"kind": "GardenLuminosity", "baseline": 40000, "diurnal_amplitude": 60000,
         "phase": 7, "noise_sd": 0},
        {"kind": "CompostTemp", "baseline": 45, "diurnal_amplitude": 2,
         "phase": 9, "noise_sd": 0.5},
    ]
    models = models_from_json(doc, seed=11)
    assert [m.kind for m in models] == [FactorKind.GardenLuminosity, FactorKind.CompostTemp]
    assert all(m.seed == 11 for m in models)
