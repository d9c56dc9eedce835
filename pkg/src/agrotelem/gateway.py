"""Base-station gateway: receive frames, ACK, dedupe, log durably, upload.

The local log is the source of truth (the "SD card"): a reading is appended
and flushed before its ACK leaves, and the upload cursor only advances after
the platform acknowledges a batch. At-least-once upload plus the platform's
idempotent ingest yields exactly-once platform state, including across
gateway crashes and restarts: any construction of a Gateway over existing
files resumes from the persisted cursor, and a corrupt or missing cursor
degrades safely to a full re-upload.
"""

from __future__ import annotations

import os
import zlib
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import protocol
from .model import Sample, clamp, format_sample_line, parse_sample_line
from .platform_api import BadBatch, PlatformStore, ServiceUnavailable


class UploadFailed(Exception):
    def __init__(self, status: int | None, message: str = ""):
        self.status = status
        super().__init__(message or f"upload failed with status {status}")


class SimulatedCrash(RuntimeError):
    """Raised by the test hook to model dying mid-flush."""


class LocalPlatformClient:
    """Direct in-process client for a PlatformStore (deterministic simulations)."""

    def __init__(self, store: PlatformStore):
        self.store = store

    def ingest(self, points: list[dict]) -> tuple[int, int]:
        try:
            return self.store.ingest(points)
        except ServiceUnavailable as exc:
            raise UploadFailed(503, str(exc)) from exc
        except BadBatch as exc:
            raise UploadFailed(400, str(exc)) from exc

    def query(self, station: int, kind: str, t_from: int, t_to: int) -> list[tuple[int, int, float]]:
        return [
            (p.timestamp, p.seq, p.value) for p in self.store.query(station, kind, t_from, t_to)
        ]


class HttpPlatformClient:
    """Client for a platform served over HTTP."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def ingest(self, points: list[dict]) -> tuple[int, int]:
        import requests

        try:
            resp = self._session.post(
                f"{self.base_url}/api/v1/ingest", json={"points": points}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise UploadFailed(None, str(exc)) from exc
        if resp.status_code != 200:
            raise UploadFailed(resp.status_code, resp.text)
        body = resp.json()
        return body["accepted"], body["duplicates"]

    def query(self, station: int, kind: str, t_from: int, t_to: int) -> list[tuple[int, int, float]]:
        resp = self._session.get(
            f"{self.base_url}/api/v1/series/{station}/{kind}",
            params={"from": t_from, "to": t_to},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return [(p["timestamp"], p["seq"], p["value"]) for p in resp.json()["points"]]


@dataclass(frozen=True)
class AckDecision:
    acked: bool
    station: int | None = None
    seq: int | None = None
    appended: int = 0
    duplicate: bool = False
    error: str | None = None


@dataclass(frozen=True)
class UploadReport:
    attempted: bool
    batches: int = 0
    records: int = 0
    duplicates: int = 0
    failed: bool = False
    status: int | None = None
    pending: int = 0


def _crc32_hex(data: bytes) -> str:
    return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"


class Gateway:
    """Receive path and upload path over one append-only log file.

    Log record: ``seq,ISO8601Z,station,kind,value`` per line. The cursor file
    holds ``offset,tail_checksum`` where offset is the byte position of the
    first not-yet-uploaded record and tail_checksum is the CRC32 of the log
    line immediately before it (CRC32 of b"" for offset 0).
    """

    BACKOFF_BASE_MS = 1_000
    BACKOFF_FACTOR = 2
    BACKOFF_CAP_MS = 300_000

    def __init__(
        self,
        log_path: str | Path,
        cursor_path: str | Path,
        client,
        batch_size: int = 100,
        dedupe_window: int = protocol.DEDUPE_WINDOW,
    ):
        if not 1 <= batch_size <= 1000:
            raise ValueError("batch_size must lie in 1-1000")
        self.log_path = Path(log_path)
        self.cursor_path = Path(cursor_path)
        self.client = client
        self.batch_size = batch_size
        self.dedupe_window = dedupe_window
        self.after_batch_accept: Callable[[int], None] | None = None  # test hook
        self.counters = {
            "frames_received": 0,
            "crc_errors": 0,
            "decode_errors": 0,
            "stray_acks": 0,
            "dedupe_hits": 0,
            "acks_sent": 0,
            "records_logged": 0,
            "records_uploaded": 0,
            "upload_batches": 0,
            "upload_duplicates": 0,
            "upload_failures": 0,
            "cursor_resets": 0,
        }
        self._seen: dict[int, set[int]] = {}
        self._seen_order: dict[int, deque[int]] = {}
        self._backoff_ms = self.BACKOFF_BASE_MS
        self._next_attempt_ms = 0
        self._recover()
        self._log_file = open(self.log_path, "ab")

    # -- recovery --

    def _recover(self) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        log_bytes = self.log_path.read_bytes() if self.log_path.exists() else b""
        if log_bytes and not log_bytes.endswith(b"\n"):
            # torn tail from a crash mid-append; drop the partial record
            log_bytes = log_bytes[: log_bytes.rfind(b"\n") + 1]
            self.log_path.write_bytes(log_bytes)
        self._log_size = len(log_bytes)
        for line in log_bytes.splitlines():
            try:
                parts = line.decode().split(",")
                self._mark_seen(station=int(parts[2]), seq=int(parts[0]))
            except (ValueError, IndexError, UnicodeDecodeError):
                continue  # unparsable line; uploading will surface it
        self._cursor = self._load_cursor(log_bytes)
        self._pending = self._count_records(log_bytes[self._cursor :])
        del log_bytes
        self._tail_line: bytes = b""  # refreshed on every cursor advance

    def _load_cursor(self, log_bytes: bytes) -> int:
        if not self.cursor_path.exists():
            return 0  # fresh start or lost cursor: full re-upload is safe
        try:
            offset_text, checksum = self.cursor_path.read_text().strip().split(",")
            offset = int(offset_text)
        except (ValueError, OSError):
            return self._reset_cursor()
        if not 0 <= offset <= len(log_bytes):
            return self._reset_cursor()
        if offset == 0:
            return 0 if checksum == _crc32_hex(b"") else self._reset_cursor()
        if log_bytes[offset - 1 : offset] != b"\n":
            return self._reset_cursor()  # not a record boundary
        start = log_bytes.rfind(b"\n", 0, offset - 1) + 1
        if _crc32_hex(log_bytes[start:offset]) != checksum:
            return self._reset_cursor()
        return offset

    def _reset_cursor(self) -> int:
        self.counters["cursor_resets"] += 1
        return 0

    @staticmethod
    def _count_records(data: bytes) -> int:
        return data.count(b"\n")

    # -- receive path --

    def _mark_seen(self, station: int, seq: int) -> None:
        seen = self._seen.setdefault(station, set())
        order = self._seen_order.setdefault(station, deque())
        if seq in seen:
            return
        seen.add(seq)
        order.append(seq)
        while len(order) > self.dedupe_window:
            seen.discard(order.popleft())

    def _is_duplicate(self, station: int, seq: int) -> bool:
        return seq in self._seen.get(station, ())

    def on_frame(self, payload: bytes, now_ms: int, reply=None) -> AckDecision:
        """Decode, append (iff new), then ACK. Decode failures are counted, never fatal."""
        try:
            frame = protocol.decode_frame(payload)
        except protocol.CrcMismatch as exc:
            self.counters["crc_errors"] += 1
            return AckDecision(acked=False, error=str(exc))
        except protocol.FrameError as exc:
            self.counters["decode_errors"] += 1
            return AckDecision(acked=False, error=str(exc))
        if frame.msg_type != protocol.MSG_DATA:
            self.counters["stray_acks"] += 1
            return AckDecision(acked=False, station=frame.station, seq=frame.seq)
        if frame.station == 0:
            # DATA frames cannot originate from the base station id
            self.counters["decode_errors"] += 1
            return AckDecision(acked=False, station=0, seq=frame.seq, error="reserved station")
        self.counters["frames_received"] += 1
        duplicate = self._is_duplicate(frame.station, frame.seq)
        appended = 0
        if duplicate:
            self.counters["dedupe_hits"] += 1
        else:
            appended = self._append_frame(frame)
            self._mark_seen(frame.station, frame.seq)
        if reply is not None:
            reply.transmit(protocol.encode_frame(protocol.ack_frame(frame)), now_ms)
            self.counters["acks_sent"] += 1
        return AckDecision(
            acked=True,
            station=frame.station,
            seq=frame.seq,
            appended=appended,
            duplicate=duplicate,
        )

    def _append_frame(self, frame: protocol.Frame) -> int:
        lines = []
        for kind, raw in frame.readings:
            # raws above the kind's span are protocol-legal; clamp to the physical range
            value = clamp(kind, protocol.dequantize(kind, raw))
            sample = Sample(frame.station, kind, frame.timestamp, value)
            lines.append(f"{frame.seq},{format_sample_line(sample)}\n")
        blob = "".join(lines).encode()
        self._log_file.write(blob)
        self._log_file.flush()
        self._log_size += len(blob)
        self._pending += len(lines)
        self.counters["records_logged"] += len(lines)
        return len(lines)

    # -- upload path --

    def pending_records(self) -> int:
        return self._pending

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def log_size(self) -> int:
        return self._log_size

    @property
    def next_attempt_ms(self) -> int:
        return self._next_attempt_ms

    def _read_batch(self) -> tuple[list[dict], int, bytes]:
        """Next batch after the cursor: (points, end offset, last line bytes)."""
        with open(self.log_path, "rb") as f:
            f.seek(self._cursor)
            data = f.read()
        points: list[dict] = []
        offset = self._cursor
        tail = b""
        for line in data.splitlines(keepends=True):
            if not line.endswith(b"\n"):
                break  # torn tail write; leave for the next flush
            seq_text, rest = line.decode().split(",", 1)
            sample = parse_sample_line(rest)
            points.append(
                {
                    "station": sample.station,
                    "kind": sample.kind.name,
                    "timestamp": sample.timestamp,
                    "value": sample.value,
                    "seq": int(seq_text),
                }
            )
            offset += len(line)
            tail = line
            if len(points) >= self.batch_size:
                break
        return points, offset, tail

    def _persist_cursor(self) -> None:
        tmp = self.cursor_path.with_suffix(self.cursor_path.suffix + ".tmp")
        tmp.write_text(f"{self._cursor},{_crc32_hex(self._tail_line)}\n")
        os.replace(tmp, self.cursor_path)

    def flush_pending(self, now_ms: int) -> UploadReport:
        """Upload everything past the cursor in batches; back off on failure."""
        if self._pending == 0:
            return UploadReport(attempted=False, pending=0)
        if now_ms < self._next_attempt_ms:
            return UploadReport(attempted=False, pending=self._pending)
        batches = records = duplicates = 0
        while self._pending > 0:
            points, end_offset, tail = self._read_batch()
            if not points:
                break
            try:
                accepted, dup = self.client.ingest(points)
            except UploadFailed as exc:
                self.counters["upload_failures"] += 1
                self._next_attempt_ms = now_ms + self._backoff_ms
                self._backoff_ms = min(self._backoff_ms * self.BACKOFF_FACTOR, self.BACKOFF_CAP_MS)
                return UploadReport(
                    attempted=True,
                    batches=batches,
                    records=records,
                    duplicates=duplicates,
                    failed=True,
                    status=exc.status,
                    pending=self._pending,
                )
            if self.after_batch_accept is not None:
                self.after_batch_accept(batches)
            self._cursor = end_offset
            self._tail_line = tail
            self._persist_cursor()
            self._pending -= len(points)
            self._backoff_ms = self.BACKOFF_BASE_MS
            self._next_attempt_ms = 0
            batches += 1
            records += len(points)
            duplicates += dup
            self.counters["upload_batches"] += 1
            self.counters["records_uploaded"] += len(points)
            self.counters["upload_duplicates"] += dup
        return UploadReport(
            attempted=True,
            batches=batches,
            records=records,
            duplicates=duplicates,
            pending=self._pending,
        )

    def close(self) -> None:
        self._log_file.close()
