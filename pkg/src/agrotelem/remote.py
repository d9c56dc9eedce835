"""Remote station: sample every cycle, frame, transmit, retry until ACKed.

Stop-and-wait ARQ, flavoured for a single-threaded microcontroller loop:
retransmissions happen on later cycles instead of a timer task. A DATA frame
leaves the retry buffer only when its ACK arrives or when the buffer
overflows and evicts it (a counted, documented data-loss mode).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

from . import protocol
from .model import Sample
from .sensors import SignalModel, generate


@dataclass(frozen=True)
class RemoteConfig:
    station: int
    sample_period_s: int = 300
    max_retries: int | None = None  # None = retry forever
    ack_timeout_ms: int = 5000
    buffer_capacity: int = 512

    def __post_init__(self) -> None:
        if not 1 <= self.station <= 255:
            raise ValueError("remote station id must lie in 1-255")
        if self.sample_period_s <= 0:
            raise ValueError("sample_period_s must be > 0")
        if self.max_retries is not None and self.max_retries < 0:
            raise ValueError("max_retries must be >= 0 or None")
        if self.ack_timeout_ms <= 0:
            raise ValueError("ack_timeout_ms must be > 0")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")


class _Buffered:
    __slots__ = ("frame", "encoded", "retries", "last_tx_ms")

    def __init__(self, frame: protocol.Frame, encoded: bytes):
        self.frame = frame
        self.encoded = encoded
        self.retries = 0
        self.last_tx_ms: int | None = None


class RemoteStation:
    """Single-owner state machine driven by an external simulated clock."""

    def __init__(
        self,
        config: RemoteConfig,
        models: list[SignalModel],
        endpoint,
        start_time: int,
        sample_listener: Callable[[list[Sample]], None] | None = None,
    ):
        self.config = config
        self.models = list(models)
        self.endpoint = endpoint
        self.start_time = start_time
        self.sample_listener = sample_listener
        self.draining = False  # True = retransmit-only cycles, no new samples
        self._next_seq = 0
        self._buffer: OrderedDict[int, _Buffered] = OrderedDict()
        self.counters = {
            "samples_generated": 0,
            "frames_sent": 0,
            "retries": 0,
            "acks": 0,
            "evictions": 0,
            "decode_errors": 0,
        }

    def buffer_size(self) -> int:
        return len(self._buffer)

    def _take_seq(self) -> int:
        seq = self._next_seq
        self._next_seq = (self._next_seq + 1) % protocol.SEQ_MODULUS
        return seq

    def _sample_all(self, timestamp: int) -> list[Sample]:
        samples = [
            Sample(self.config.station, m.kind, timestamp, generate(m, timestamp))
            for m in self.models
        ]
        self.counters["samples_generated"] += len(samples)
        if self.sample_listener is not None:
            self.sample_listener(samples)
        return samples

    def _frame_samples(self, samples: list[Sample], timestamp: int) -> list[protocol.Frame]:
        """One frame per physical unit: garden readings, then compost readings."""
        garden = [s for s in samples if not s.kind.is_compost]
        compost = [s for s in samples if s.kind.is_compost]
        frames = []
        for batch in (garden, compost):
            if not batch:
                continue
            readings = [(s.kind, protocol.quantize(s.kind, s.value)) for s in batch]
            frames.append(
                protocol.data_frame(self.config.station, self._take_seq(), timestamp, readings)
            )
        return frames

    def _buffer_frame(self, frame: protocol.Frame) -> None:
        self._buffer[frame.seq] = _Buffered(frame, protocol.encode_frame(frame))
        while len(self._buffer) > self.config.buffer_capacity:
            self._buffer.popitem(last=False)
            self.counters["evictions"] += 1

    def run_cycle(self, now_ms: int) -> list[protocol.Frame]:
        """Sample, frame, and transmit everything that is due. Returns sent frames."""
        if not self.draining:
            timestamp = self.start_time + now_ms // 1000
            for frame in self._frame_samples(self._sample_all(timestamp), timestamp):
                self._buffer_frame(frame)
        sent = []
        for entry in list(self._buffer.values()):
            if entry.last_tx_ms is None:
                pass  # first transmission, always due
            elif now_ms - entry.last_tx_ms < self.config.ack_timeout_ms:
                continue  # ACK may still be in flight
            elif (
                self.config.max_retries is not None
                and entry.retries >= self.config.max_retries
            ):
                continue  # retry budget spent; frame stays until ACK or eviction
            else:
                entry.retries += 1
                self.counters["retries"] += 1
            entry.last_tx_ms = now_ms
            self.endpoint.transmit(entry.encoded, now_ms)
            self.counters["frames_sent"] += 1
            sent.append(entry.frame)
        return sent

    def on_ack(self, ack: protocol.Frame) -> None:
        """Release the buffered frame the ACK names; stray or repeated ACKs are no-ops."""
        if ack.msg_type != protocol.MSG_ACK:
            return
        if self._buffer.pop(ack.seq, None) is not None:
            self.counters["acks"] += 1

    def drain_inbox(self, now_ms: int) -> None:
        """Process every delivered payload (expected: ACKs from the base station)."""
        while (payload := self.endpoint.poll(now_ms)) is not None:
            try:
                frame = protocol.decode_frame(payload)
            except protocol.FrameError:
                self.counters["decode_errors"] += 1
                continue
            self.on_ack(frame)
