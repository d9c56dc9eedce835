"""Mock IoT platform: idempotent batch ingestion, series queries, CSV export.

The store is an in-memory test double targeting the behavioral contract of a
cloud telemetry platform, not its implementation: idempotent writes keyed on
(station, kind, timestamp, seq), atomic batch validation, range queries, and
a fault-injection switch for outage drills.
"""

import json
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .model import FactorKind, format_value

MAX_BATCH = 1000


class BadBatch(ValueError):
    """Malformed ingest batch; nothing stored."""


class UnknownSeries(KeyError):
    """Station or kind outside the platform's vocabulary."""


class ServiceUnavailable(RuntimeError):
    """Fault-injection outage is active."""


@dataclass(frozen=True)
class SeriesPoint:
    timestamp: int
    value: float
    seq: int


def _wall_clock_ms() -> int:
    return int(time.time() * 1000)


class PlatformStore:
    """Thread-safe in-memory series store with optional snapshot persistence."""

    def __init__(self, clock_ms: Callable[[], int] = _wall_clock_ms):
        self._clock_ms = clock_ms
        self._lock = threading.Lock()
        # (station, kind name) -> {(timestamp, seq): value}
        self._series: dict[tuple[int, str], dict[tuple[int, int], float]] = {}
        self._outage_until_ms: int | None = None
        self.accepted_total = 0
        self.duplicates_total = 0

    # -- fault injection --

    def set_outage(self, until_ms: int) -> None:
        with self._lock:
            self._outage_until_ms = int(until_ms)

    def outage_active(self) -> bool:
        with self._lock:
            return self._outage_until_ms is not None and self._clock_ms() < self._outage_until_ms

    # -- ingestion --

    @staticmethod
    def _validate_item(index: int, item: object) -> tuple[int, str, int, float, int]:
        if not isinstance(item, dict):
            raise BadBatch(f"points[{index}]: not an object")
        for key in ("station", "kind", "timestamp", "value", "seq"):
            if key not in item:
                raise BadBatch(f"points[{index}]: missing field {key!r}")
        station = item["station"]
        if not isinstance(station, int) or isinstance(station, bool) or not 1 <= station <= 255:
            raise BadBatch(f"points[{index}].station: expected integer in 1-255")
        try:
            kind = FactorKind[str(item["kind"])]
        except KeyError:
            raise BadBatch(f"points[{index}].kind: unknown kind {item['kind']!r}") from None
        timestamp = item["timestamp"]
        if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp < 0:
            raise BadBatch(f"points[{index}].timestamp: expected non-negative integer")
        value = item["value"]
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise BadBatch(f"points[{index}].value: expected finite number")
        lo, hi = kind.physical_range
        if not lo <= value <= hi:
            raise BadBatch(f"points[{index}].value: {value} outside [{lo}, {hi}] for {kind.name}")
        seq = item["seq"]
        if not isinstance(seq, int) or isinstance(seq, bool) or not 0 <= seq <= 0xFFFF:
            raise BadBatch(f"points[{index}].seq: expected integer in 0-65535")
        return station, kind.name, timestamp, float(value), seq

    def ingest(self, points: list) -> tuple[int, int]:
        """Insert a batch; returns (accepted, duplicates). Validation is atomic:
        one bad item rejects the whole batch with nothing stored."""
        if self.outage_active():
            raise ServiceUnavailable("ingestion disabled by outage switch")
        if not isinstance(points, list):
            raise BadBatch("points: expected a list")
        if len(points) > MAX_BATCH:
            raise BadBatch(f"points: batch of {len(points)} exceeds {MAX_BATCH}")
        validated = [self._validate_item(i, item) for i, item in enumerate(points)]
        accepted = duplicates = 0
        with self._lock:
            for station, kind_name, timestamp, value, seq in validated:
                series = self._series.setdefault((station, kind_name), {})
                key = (timestamp, seq)
                if key in series:
                    duplicates += 1
                else:
                    series[key] = value
                    accepted += 1
            self.accepted_total += accepted
            self.duplicates_total += duplicates
        return accepted, duplicates

    # -- queries --

    @staticmethod
    def _series_key(station: int, kind: str | FactorKind) -> tuple[int, str, FactorKind]:
        if isinstance(kind, FactorKind):
            resolved = kind
        else:
            try:
                resolved = FactorKind[str(kind)]
            except KeyError:
                raise UnknownSeries(f"unknown kind {kind!r}") from None
        if not isinstance(station, int) or not 0 <= station <= 255:
            raise UnknownSeries(f"unknown station {station!r}")
        return station, resolved.name, resolved

    def query(
        self, station: int, kind: str | FactorKind, t_from: int, t_to: int
    ) -> list[SeriesPoint]:
        """All points with t_from <= timestamp <= t_to, ascending."""
        st, kind_name, _ = self._series_key(station, kind)
        with self._lock:
            series = self._series.get((st, kind_name), {})
            hits = [
                SeriesPoint(ts, value, seq)
                for (ts, seq), value in series.items()
                if t_from <= ts <= t_to
            ]
        hits.sort(key=lambda p: (p.timestamp, p.seq))
        return hits

    def export_csv(self, station: int, kind: str | FactorKind, t_from: int, t_to: int) -> str:
        """Pure formatting of query(): header ``timestamp,value`` plus canonical rows."""
        _, _, resolved = self._series_key(station, kind)
        lines = ["timestamp,value"]
        for point in self.query(station, kind, t_from, t_to):
            lines.append(f"{point.timestamp},{format_value(resolved, point.value)}")
        return "\n".join(lines) + "\n"

    # -- introspection / persistence --

    def total_points(self) -> int:
        with self._lock:
            return sum(len(s) for s in self._series.values())

    def snapshot(self) -> dict:
        """Deterministic JSON-ready dump of the full store."""
        with self._lock:
            series = {
                f"{station}/{kind}": [
                    {"timestamp": ts, "seq": seq, "value": value}
                    for (ts, seq), value in sorted(points.items())
                ]
                for (station, kind), points in sorted(self._series.items())
            }
        return {"series": series}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), sort_keys=True, indent=2) + "\n")

    def load(self, path: str | Path) -> None:
        doc = json.loads(Path(path).read_text())
        with self._lock:
            self._series.clear()
            for name, points in doc.get("series", {}).items():
                station_text, kind = name.split("/", 1)
                series = self._series.setdefault((int(station_text), kind), {})
                for p in points:
                    series[(p["timestamp"], p["seq"])] = p["value"]


def create_app(store: PlatformStore, snapshot_path: "str | Path | None" = None):
    """HTTP facade: JSON everywhere except the CSV export.

    When snapshot_path is given, the store is dumped there on shutdown
    (uvicorn re-raises termination signals after its graceful stop, so
    persistence has to happen in the lifespan hook, not around run()).
    """
    from contextlib import asynccontextmanager

    from fastapi import FastAPI, HTTPException, Query, Request
    from fastapi.responses import PlainTextResponse

    @asynccontextmanager
    async def lifespan(_app):
        yield
        if snapshot_path is not None:
            store.save(snapshot_path)

    app = FastAPI(title="agrotelem mock platform", lifespan=lifespan)
    app.state.store = store

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/v1/ingest")
    async def ingest(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="body is not valid JSON")
        if not isinstance(body, dict) or "points" not in body:
            raise HTTPException(status_code=400, detail="body must be {\"points\": [...]}")
        try:
            accepted, duplicates = store.ingest(body["points"])
        except BadBatch as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except ServiceUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        return {"accepted": accepted, "duplicates": duplicates}

    @app.get("/api/v1/series/{station}/{kind}")
    def series(
        station: int,
        kind: str,
        t_from: int = Query(default=0, alias="from"),
        t_to: int = Query(default=2**62, alias="to"),
    ):
        try:
            points = store.query(station, kind, t_from, t_to)
        except UnknownSeries as exc:
            raise HTTPException(status_code=404, detail=str(exc.args[0]))
        return {
            "station": station,
            "kind": kind,
            "points": [
                {"timestamp": p.timestamp, "value": p.value, "seq": p.seq} for p in points
            ],
        }

    @app.get("/api/v1/series/{station}/{kind}/export.csv")
    def export(
        station: int,
        kind: str,
        t_from: int = Query(default=0, alias="from"),
        t_to: int = Query(default=2**62, alias="to"),
    ):
        try:
            csv_text = store.export_csv(station, kind, t_from, t_to)
        except UnknownSeries as exc:
            raise HTTPException(status_code=404, detail=str(exc.args[0]))
        return PlainTextResponse(csv_text, media_type="text/csv")

    @app.post("/admin/outage")
    async def outage(request: Request):
        try:
            body = await request.json()
            until_ms = int(body["until_ms"])
        except Exception:
            raise HTTPException(status_code=400, detail="body must be {\"until_ms\": <int>}")
        store.set_outage(until_ms)
        return {"status": "ok", "until_ms": until_ms}

    return app
