"""Binary frame codec for the inter-station radio link.

The radio hardware caps payloads at 32 bytes, which fixes the whole design:
a 10-byte header, up to six 3-byte readings, and a trailing CRC-16. Values
cross the wire as 16-bit fixed-point words per the quantization table below.
See protocol.md for the normative byte layout and a worked example.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .model import FactorKind

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 32  # radio hardware maximum
HEADER_LEN = 10  # version, station, msg_type, seq(2), timestamp(4), count
CRC_LEN = 2
READING_LEN = 3
MAX_READINGS = 6  # 12 + 3*6 = 30 <= 32; a 7th reading would need 33 bytes

MSG_DATA = 0
MSG_ACK = 1

SEQ_MODULUS = 1 << 16
DEDUPE_WINDOW = 1 << 15  # serial-number arithmetic half-space


class FrameError(ValueError):
    """Frame violates the wire contract."""


class CrcMismatch(FrameError):
    pass


class BadVersion(FrameError):
    pass


class BadLength(FrameError):
    pass


class BadKind(FrameError):
    pass


class BadType(FrameError):
    pass


class QuantizationError(ValueError):
    """Value outside the kind's physical range."""


# (offset, scale): raw = round((value - offset) / scale). Centi-resolution
# everywhere except luminosity, where 2 lux/step buys the 0-131070 range.
QUANTIZATION: dict[FactorKind, tuple[float, float]] = {
    FactorKind.GardenAirTemp: (-40.0, 0.01),
    FactorKind.GardenAirHumidity: (0.0, 0.01),
    FactorKind.GardenSoilMoisture: (0.0, 0.01),
    FactorKind.GardenUv: (0.0, 0.01),
    FactorKind.GardenLuminosity: (0.0, 2.0),
    FactorKind.CompostTemp: (-40.0, 0.01),
    FactorKind.CompostHumidity: (0.0, 0.01),
}


def quantize(kind: FactorKind, value: float) -> int:
    """Map a physical value to its 16-bit raw form."""
    lo, hi = kind.physical_range
    if not lo <= value <= hi:
        raise QuantizationError(f"{kind.name} value {value!r} outside [{lo}, {hi}]")
    offset, scale = QUANTIZATION[kind]
    raw = round((value - offset) / scale)
    return min(max(raw, 0), 0xFFFF)


def dequantize(kind: FactorKind, raw: int) -> float:
    offset, scale = QUANTIZATION[kind]
    return offset + raw * scale


# CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
# Check value: crc16(b"123456789") == 0x29B1.
def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return table


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ byte]
    return crc


@dataclass(frozen=True)
class Frame:
    """One radio protocol unit: a batch of quantized readings or an ACK."""

    station: int
    msg_type: int
    seq: int
    timestamp: int
    readings: tuple[tuple[FactorKind, int], ...] = field(default_factory=tuple)

    def encoded_length(self) -> int:
        return HEADER_LEN + READING_LEN * len(self.readings) + CRC_LEN


def data_frame(
    station: int, seq: int, timestamp: int, readings: list[tuple[FactorKind, int]]
) -> Frame:
    return Frame(station, MSG_DATA, seq, timestamp, tuple(readings))


def ack_frame(data: Frame) -> Frame:
    """ACK echoing the station, seq, and timestamp of the frame it acknowledges."""
    return Frame(data.station, MSG_ACK, data.seq, data.timestamp)


def _validate(frame: Frame) -> None:
    if frame.msg_type not in (MSG_DATA, MSG_ACK):
        raise BadType(f"msg_type {frame.msg_type}")
    count = len(frame.readings)
    if count > MAX_READINGS:
        raise BadLength(f"count {count} exceeds {MAX_READINGS}")
    if frame.msg_type == MSG_DATA and count < 1:
        raise BadLength("DATA frame must carry at least one reading")
    if frame.msg_type == MSG_ACK and count != 0:
        raise BadLength("ACK frame must carry no readings")
    if not 0 <= frame.station <= 255:
        raise FrameError(f"station {frame.station}")
    if not 0 <= frame.seq < SEQ_MODULUS:
        raise FrameError(f"seq {frame.seq}")
    if not 0 <= frame.timestamp < 1 << 32:
        raise FrameError(f"timestamp {frame.timestamp}")


def encode_frame(frame: Frame) -> bytes:
    """Serialize; the result never exceeds MAX_PAYLOAD bytes."""
    _validate(frame)
    body = struct.pack(
        ">BBBHIB",
        PROTOCOL_VERSION,
        frame.station,
        frame.msg_type,
        frame.seq,
        frame.timestamp,
        len(frame.readings),
    )
    for kind, raw in frame.readings:
        if not 0 <= raw <= 0xFFFF:
            raise FrameError(f"raw {raw} out of 16-bit range")
        body += struct.pack(">BH", int(kind), raw)
    return body + struct.pack(">H", crc16(body))


def decode_frame(data: bytes) -> Frame:
    """Parse and verify a frame; rejects anything that is not bit-exact valid."""
    if len(data) < HEADER_LEN + CRC_LEN or len(data) > MAX_PAYLOAD:
        raise BadLength(f"frame length {len(data)}")
    version, station, msg_type, seq, timestamp, count = struct.unpack(
        ">BBBHIB", data[:HEADER_LEN]
    )
    if version != PROTOCOL_VERSION:
        raise BadVersion(f"version {version}")
    if msg_type not in (MSG_DATA, MSG_ACK):
        raise BadType(f"msg_type {msg_type}")
    if count > MAX_READINGS:
        raise BadLength(f"count {count}")
    if len(data) != HEADER_LEN + READING_LEN * count + CRC_LEN:
        raise BadLength(f"length {len(data)} != {HEADER_LEN + READING_LEN * count + CRC_LEN}")
    (stated_crc,) = struct.unpack(">H", data[-CRC_LEN:])
    if crc16(data[:-CRC_LEN]) != stated_crc:
        raise CrcMismatch("checksum mismatch")
    if msg_type == MSG_DATA and count < 1:
        raise BadLength("DATA frame with no readings")
    if msg_type == MSG_ACK and count != 0:
        raise BadLength("ACK frame with readings")
    readings = []
    for i in range(count):
        offset = HEADER_LEN + READING_LEN * i
        kind_byte, raw = struct.unpack(">BH", data[offset : offset + READING_LEN])
        try:
            kind = FactorKind(kind_byte)
        except ValueError:
            raise BadKind(f"kind byte {kind_byte}") from None
        readings.append((kind, raw))
    return Frame(station, msg_type, seq, timestamp, tuple(readings))
