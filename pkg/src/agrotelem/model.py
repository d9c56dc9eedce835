"""Shared vocabulary: factor kinds, stations, samples, and the canonical text line."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import IntEnum

BASE_STATION_ID = 0  # reserved for the gateway; remotes use 1-255


class FactorKind(IntEnum):
    """Environmental factors the system measures.

    The integer value doubles as the wire-protocol kind byte; the member
    name is the canonical text form used in logs, CSV, and JSON.
    """

    GardenAirTemp = 0
    GardenAirHumidity = 1
    GardenSoilMoisture = 2
    GardenUv = 3
    GardenLuminosity = 4
    CompostTemp = 5
    CompostHumidity = 6

    @property
    def unit(self) -> str:
        return _UNITS[self]

    @property
    def physical_range(self) -> tuple[float, float]:
        """(lo, hi) bounds a plausible outdoor/compost reading must respect."""
        return _RANGES[self]

    @property
    def is_compost(self) -> bool:
        return self in (FactorKind.CompostTemp, FactorKind.CompostHumidity)

    @property
    def decimals(self) -> int:
        """Decimal places in the canonical text form (lux trades precision for range)."""
        return 1 if self is FactorKind.GardenLuminosity else 2


_UNITS = {
    FactorKind.GardenAirTemp: "degC",
    FactorKind.GardenAirHumidity: "%RH",
    FactorKind.GardenSoilMoisture: "%vol",
    FactorKind.GardenUv: "UV index",
    FactorKind.GardenLuminosity: "lux",
    FactorKind.CompostTemp: "degC",
    FactorKind.CompostHumidity: "%RH",
}

# Composting self-heats well above ambient, hence the wider compost temp range.
_RANGES = {
    FactorKind.GardenAirTemp: (-40.0, 60.0),
    FactorKind.GardenAirHumidity: (0.0, 100.0),
    FactorKind.GardenSoilMoisture: (0.0, 100.0),
    FactorKind.GardenUv: (0.0, 15.0),
    FactorKind.GardenLuminosity: (0.0, 131070.0),
    FactorKind.CompostTemp: (-40.0, 90.0),
    FactorKind.CompostHumidity: (0.0, 100.0),
}

GARDEN_KINDS = tuple(k for k in FactorKind if not k.is_compost)
COMPOST_KINDS = tuple(k for k in FactorKind if k.is_compost)


class SampleError(ValueError):
    """A sample violates its domain contract."""


class OutOfRange(SampleError):
    def __init__(self, kind: FactorKind, value: float):
        self.kind = kind
        self.value = value
        lo, hi = kind.physical_range
        super().__init__(f"{kind.name} value {value!r} outside [{lo}, {hi}]")


class ReservedStation(SampleError):
    def __init__(self, station: int):
        self.station = station
        super().__init__(f"station {station} is reserved for the base station")


@dataclass(frozen=True)
class Sample:
    """One timestamped reading of one factor from one station."""

    station: int
    kind: FactorKind
    timestamp: int  # epoch seconds, UTC
    value: float


def validate_sample(sample: Sample) -> Sample:
    """Return the sample unchanged iff it satisfies the domain contract.

    Raises OutOfRange when the value escapes the kind's physical range and
    ReservedStation when the sample claims the base-station id. Idempotent.
    """
    if not 0 <= sample.station <= 255:
        raise SampleError(f"station {sample.station} outside 0-255")
    if sample.station == BASE_STATION_ID:
        raise ReservedStation(sample.station)
    lo, hi = sample.kind.physical_range
    if not lo <= sample.value <= hi:
        raise OutOfRange(sample.kind, sample.value)
    return sample


def clamp(kind: FactorKind, value: float) -> float:
    lo, hi = kind.physical_range
    return min(max(value, lo), hi)


def format_value(kind: FactorKind, value: float) -> str:
    return f"{value:.{kind.decimals}f}"


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> int:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_sample_line(sample: Sample) -> str:
    """Canonical text form: ``ISO8601Z,station,kind,value``.

    This line is the lingua franca shared by the gateway log, CSV export,
    and anything downstream that wants human-recoverable records.
    """
    return ",".join(
        (
            format_timestamp(sample.timestamp),
            str(sample.station),
            sample.kind.name,
            format_value(sample.kind, sample.value),
        )
    )


def parse_sample_line(line: str) -> Sample:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise ValueError(f"malformed sample line: {line!r}")
    ts_text, station_text, kind_name, value_text = parts
    try:
        kind = FactorKind[kind_name]
    except KeyError:
        raise ValueError(f"unknown factor kind: {kind_name!r}") from None
    return Sample(
        station=int(station_text),
        kind=kind,
        timestamp=parse_timestamp(ts_text),
        value=float(value_text),
    )
