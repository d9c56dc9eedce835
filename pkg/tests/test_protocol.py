import random
import struct

import pytest

from agrotelem.model import FactorKind
from agrotelem.protocol import (
    MAX_PAYLOAD,
    MSG_ACK,
    MSG_DATA,
    QUANTIZATION,
    BadKind,
    BadLength,
    BadType,
    BadVersion,
    CrcMismatch,
    Frame,
    QuantizationError,
    ack_frame,
    crc16,
    data_frame,
    decode_frame,
    dequantize,
    encode_frame,
    quantize,
)

T = 1_690_070_400


# --- quantization ---

def test_quantize_air_temp_hand_value():
    # (21.57 + 40) / 0.01 = 6157
    assert quantize(FactorKind.GardenAirTemp, 21.57) == 6157
    assert dequantize(FactorKind.GardenAirTemp, 6157) == pytest.approx(21.57, abs=1e-9)


def test_quantize_range_floor():
    assert quantize(FactorKind.GardenAirHumidity, 0.0) == 0
    assert dequantize(FactorKind.GardenAirHumidity, 0) == 0.0


def test_quantize_luminosity_two_lux_steps():
    assert quantize(FactorKind.GardenLuminosity, 100000.0) == 50000
    assert dequantize(FactorKind.GardenLuminosity, 50000) == 100000.0


def test_quantize_rejects_out_of_range():
    with pytest.raises(QuantizationError):
        quantize(FactorKind.GardenAirHumidity, 100.01)
    with pytest.raises(QuantizationError):
        quantize(FactorKind.GardenAirTemp, -40.01)


def test_round_trip_error_bound_sweep():
    for kind in FactorKind:
        lo, hi = kind.physical_range
        _, scale = QUANTIZATION[kind]
        for i in range(201):
            value = lo + (hi - lo) * i / 200
            raw = quantize(kind, value)
            assert 0 <= raw <= 0xFFFF
            assert abs(dequantize(kind, raw) - value) <= scale / 2 + 1e-9


# --- CRC-16/CCITT-FALSE ---

def _crc16_bitwise(data: bytes) -> int:
    # independent re-implementation, bit by bit
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
    return crc


def test_crc16_published_check_value():
    assert crc16(b"123456789") == 0x29B1


def test_crc16_empty_input_is_init_value():
    assert crc16(b"") == 0xFFFF


def test_crc16_deterministic_and_matches_bitwise():
    rng = random.Random(7)
    for _ in range(200):
        data = rng.randbytes(rng.randrange(0, 40))
        assert crc16(data) == crc16(data) == _crc16_bitwise(data)


# --- frame codec ---

def _garden_frame(seq=5):
    readings = [(k, quantize(k, sum(k.physical_range) / 2)) for k in FactorKind if not k.is_compost]
    return data_frame(station=1, seq=seq, timestamp=T, readings=readings)


def test_data_frame_round_trip():
    frame = _garden_frame()
    encoded = encode_frame(frame)
    assert len(encoded) == 12 + 3 * 5 == 27
    assert decode_frame(encoded) == frame


def test_ack_round_trip_echoes_seq():
    data = _garden_frame(seq=777)
    ack = ack_frame(data)
    assert ack.msg_type == MSG_ACK and ack.seq == 777 and ack.readings == ()
    decoded = decode_frame(encode_frame(ack))
    assert decoded == ack
    assert len(encode_frame(ack)) == 12


def test_six_readings_fit_in_32_bytes():
    readings = [(FactorKind.GardenUv, i) for i in range(6)]
    frame = data_frame(1, 0, T, readings)
    assert len(encode_frame(frame)) == 30 <= MAX_PAYLOAD


def test_seven_readings_rejected():
    readings = [(FactorKind.GardenUv, i) for i in range(7)]
    with pytest.raises(BadLength):
        encode_frame(data_frame(1, 0, T, readings))


def test_data_frame_needs_a_reading():
    with pytest.raises(BadLength):
        encode_frame(Frame(1, MSG_DATA, 0, T, ()))


def test_flipped_payload_bit_is_crc_mismatch():
    encoded = bytearray(encode_frame(_garden_frame()))
    encoded[14] ^= 0x04  # inside the readings area
    with pytest.raises(CrcMismatch):
        decode_frame(bytes(encoded))


def _reseal(raw: bytearray) -> bytes:
    raw[-2:] = struct.pack(">H", crc16(bytes(raw[:-2])))
    return bytes(raw)


def test_bad_version_rejected_even_with_valid_crc():
    raw = bytearray(encode_frame(_garden_frame()))
    raw[0] = 2
    with pytest.raises(BadVersion):
        decode_frame(_reseal(raw))


def test_bad_msg_type_rejected():
    raw = bytearray(encode_frame(_garden_frame()))
    raw[2] = 9
    with pytest.raises(BadType):
        decode_frame(_reseal(raw))


def test_unknown_kind_byte_rejected():
    raw = bytearray(encode_frame(_garden_frame()))
    raw[10] = 99  # first reading's kind byte
    with pytest.raises(BadKind):
        decode_frame(_reseal(raw))


def test_truncated_frames_rejected():
    encoded = encode_frame(_garden_frame())
    for cut in range(len(encoded)):
        with pytest.raises(BadLength):
            decode_frame(encoded[:cut])


def test_length_count_mismatch_rejected():
    raw = bytearray(encode_frame(_garden_frame()))
    raw[9] = 4  # claim 4 readings while carrying 5
    with pytest.raises(BadLength):
        decode_frame(_reseal(raw))


def test_over_32_byte_buffer_rejected():
    with pytest.raises(BadLength):
        decode_frame(b"\x01" * 33)


def _random_frame(rng: random.Random) -> Frame:
    if rng.random() < 0.2:
        return Frame(rng.randrange(256), MSG_ACK, rng.randrange(65536), rng.randrange(2**32))
    count = rng.randint(1, 6)
    readings = tuple(
        (rng.choice(list(FactorKind)), rng.randrange(65536)) for _ in range(count)
    )
    return Frame(rng.randrange(256), MSG_DATA, rng.randrange(65536), rng.randrange(2**32), readings)


def test_randomized_round_trip_property():
    rng = random.Random(20_240_101)
    for _ in range(10_000):
        frame = _random_frame(rng)
        encoded = encode_frame(frame)
        assert len(encoded) <= MAX_PAYLOAD
        assert decode_frame(encoded) == frame
