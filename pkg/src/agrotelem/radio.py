"""Simulated half-duplex lossy channel between two stations.

Impairments are Bernoulli draws from one seeded PRNG, so a whole delivery
trace replays bit-for-bit from (config, transmission sequence, poll times).
The clock is explicit simulated milliseconds; nothing here touches wall time.

Draw discipline: every transmit consumes exactly four PRNG values
(loss uniform, duplicate uniform, primary delay, duplicate delay) whether or
not they end up used, so external oracles can replay decisions independently.
"""

from __future__ import annotations

import random
import threading
from collections import deque
from dataclasses import dataclass


class PayloadTooLarge(ValueError):
    pass


MAX_PAYLOAD = 32


@dataclass(frozen=True)
class ChannelConfig:
    loss_probability: float = 0.0
    duplicate_probability: float = 0.0
    max_delay_ms: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must lie in [0, 1]")
        if not 0.0 <= self.duplicate_probability <= 1.0:
            raise ValueError("duplicate_probability must lie in [0, 1]")
        if self.max_delay_ms < 0:
            raise ValueError("max_delay_ms must be >= 0")


class Endpoint:
    """One side of the channel: transmit to the peer, poll your own inbox."""

    def __init__(self, channel: "LossyChannel", inbox_index: int):
        self._channel = channel
        self._inbox_index = inbox_index

    def transmit(self, payload: bytes, now_ms: int) -> None:
        self._channel._transmit(1 - self._inbox_index, payload, now_ms)

    def poll(self, now_ms: int) -> bytes | None:
        return self._channel._poll(self._inbox_index, now_ms)

    def next_due(self) -> int | None:
        """Delivery time of the earliest pending payload, or None."""
        return self._channel._next_due(self._inbox_index)


class LossyChannel:
    """Two-endpoint channel with seeded loss, duplication, and delay.

    Delivery times are clamped non-decreasing per direction (the air is
    serial), which keeps the loss-free channel strictly FIFO.
    """

    def __init__(self, config: ChannelConfig):
        self.config = config
        self._rng = random.Random(config.seed)
        self._lock = threading.Lock()
        # per direction: deque of (delivery_ms, payload), monotone by construction
        self._inboxes: list[deque[tuple[int, bytes]]] = [deque(), deque()]
        self._last_delivery: list[int] = [0, 0]
        self.transmissions = 0
        self.lost = 0
        self.duplicated = 0

    def endpoints(self) -> tuple[Endpoint, Endpoint]:
        return Endpoint(self, 0), Endpoint(self, 1)

    def _transmit(self, to_index: int, payload: bytes, now_ms: int) -> None:
        if len(payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"{len(payload)} bytes > {MAX_PAYLOAD}")
        with self._lock:
            self.transmissions += 1
            u_loss = self._rng.random()
            u_dup = self._rng.random()
            delay_1 = self._rng.randint(0, self.config.max_delay_ms)
            delay_2 = self._rng.randint(0, self.config.max_delay_ms)
            if u_loss < self.config.loss_probability:
                self.lost += 1
                return
            self._enqueue(to_index, payload, now_ms + delay_1)
            if u_dup < self.config.duplicate_probability:
                self.duplicated += 1
                self._enqueue(to_index, payload, now_ms + delay_2)

    def _enqueue(self, to_index: int, payload: bytes, candidate_ms: int) -> None:
        delivery = max(candidate_ms, self._last_delivery[to_index])
        self._last_delivery[to_index] = delivery
        self._inboxes[to_index].append((delivery, payload))

    def _poll(self, inbox_index: int, now_ms: int) -> bytes | None:
        with self._lock:
            inbox = self._inboxes[inbox_index]
            if inbox and inbox[0][0] <= now_ms:
                return inbox.popleft()[1]
            return None

    def _next_due(self, inbox_index: int) -> int | None:
        with self._lock:
            inbox = self._inboxes[inbox_index]
            return inbox[0][0] if inbox else None

    def pending(self) -> int:
        with self._lock:
            return sum(len(box) for box in self._inboxes)
