"""Deterministic synthetic signals standing in for the physical probes.

Each factor follows ``baseline + amplitude * sin(2*pi*(hour - phase)/24)``
plus hash-keyed Gaussian noise, clamped to the factor's physical range.
Keying the noise on (seed, kind, timestamp) makes every replay reproducible
without carrying RNG state between calls.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .model import FactorKind, clamp

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class SignalModel:
    kind: FactorKind
    baseline: float
    diurnal_amplitude: float
    phase: float  # hours 0-24; sinusoid peaks at phase + 6 h
    noise_sd: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.diurnal_amplitude < 0:
            raise ValueError("diurnal_amplitude must be >= 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def _hash_gauss(seed: int, kind: FactorKind, timestamp: int) -> float:
    """Standard-normal draw keyed on (seed, kind, timestamp) via SHA-256 + Box-Muller."""
    digest = hashlib.sha256(f"{seed}:{kind.name}:{timestamp}".encode()).digest()
    u1 = (int.from_bytes(digest[:8], "big") + 1) / (2**64 + 1)
    u2 = int.from_bytes(digest[8:16], "big") / 2**64
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def generate(model: SignalModel, timestamp: int) -> float:
    """Evaluate the signal at an epoch-seconds timestamp. Pure function."""
    hour = (timestamp % SECONDS_PER_DAY) / 3600.0
    value = model.baseline + model.diurnal_amplitude * math.sin(
        2.0 * math.pi * (hour - model.phase) / 24.0
    )
    if model.noise_sd > 0:
        value += model.noise_sd * _hash_gauss(model.seed, model.kind, timestamp)
    return clamp(model.kind, value)


# Default constants are plausible, not calibrated: ambient factors get mild
# diurnal swings, luminosity swings hard enough to clamp dark at night, and
# compost runs hot around 45 degC.
_GARDEN_DEFAULTS = {
    FactorKind.GardenAirTemp: (21.0, 6.0, 9.0, 0.3),
    FactorKind.GardenAirHumidity: (60.0, 15.0, 21.0, 2.0),
    FactorKind.GardenSoilMoisture: (40.0, 5.0, 21.0, 1.0),
    FactorKind.GardenUv: (3.0, 3.0, 7.0, 0.2),
    FactorKind.GardenLuminosity: (40000.0, 60000.0, 7.0, 1500.0),
}

_COMPOST_DEFAULTS = {
    FactorKind.CompostTemp: (45.0, 2.0, 9.0, 0.5),
    FactorKind.CompostHumidity: (55.0, 5.0, 21.0, 1.5),
}


def _models_from_table(table: dict, seed: int) -> list[SignalModel]:
    return [
        SignalModel(kind, baseline, amplitude, phase, noise_sd, seed)
        for kind, (baseline, amplitude, phase, noise_sd) in table.items()
    ]


def default_garden_models(seed: int) -> list[SignalModel]:
    """One model per garden factor (5 models)."""
    return _models_from_table(_GARDEN_DEFAULTS, seed)


def default_compost_models(seed: int) -> list[SignalModel]:
    """One model per compost factor (2 models)."""
    return _models_from_table(_COMPOST_DEFAULTS, seed)


def default_models(seed: int) -> list[SignalModel]:
    return default_garden_models(seed) + default_compost_models(seed)


def models_from_json(doc: list[dict], seed: int) -> list[SignalModel]:
    """Load a model set from config: array of {kind, baseline, diurnal_amplitude, phase, noise_sd}."""
    models = []
    for entry in doc:
        models.append(
            SignalModel(
                kind=FactorKind[entry["kind"]],
                baseline=float(entry["baseline"]),
                diurnal_amplitude=float(entry["diurnal_amplitude"]),
                phase=float(entry["phase"]),
                noise_sd=float(entry["noise_sd"]),
                seed=int(entry.get("seed", seed)),
            )
        )
    return models
