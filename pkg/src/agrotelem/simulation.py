"""Deterministic end-to-end simulation: remotes, lossy links, gateway, platform.

One discrete-event loop on a simulated millisecond clock drives everything,
so a 24-hour run takes a fraction of a wall second and two runs with the
same config and seeds produce byte-identical reports and platform state.

After the configured duration the loop enters a drain phase: remotes stop
sampling but keep retransmitting, and the gateway keeps uploading, until all
in-flight work settles (or a drain cap expires). Completeness is judged only
after draining, which is what lets a lossy-but-live channel still deliver
every sample exactly once.
"""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .gateway import Gateway, HttpPlatformClient, LocalPlatformClient
from .model import Sample
from .platform_api import PlatformStore
from .radio import ChannelConfig, LossyChannel
from .remote import RemoteConfig, RemoteStation
from .sensors import default_models, models_from_json

DEFAULT_START_TIME = 1_690_070_400  # a midnight UTC, so diurnal cycles align with the run


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class EventLoop:
    """Priority-queue scheduler over integer simulated milliseconds."""

    def __init__(self):
        self.now_ms = 0
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._order = 0

    def schedule(self, at_ms: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._heap, (max(at_ms, self.now_ms), self._order, fn))
        self._order += 1

    def run_until(
        self, end_ms: int, stop: Callable[[], bool] | None = None, inclusive: bool = False
    ) -> None:
        """Process events with time < end_ms (<= end_ms when inclusive)."""
        if stop is not None and stop():
            return
        while self._heap:
            at_ms = self._heap[0][0]
            if at_ms > end_ms or (at_ms == end_ms and not inclusive):
                break
            _, _, fn = heapq.heappop(self._heap)
            self.now_ms = at_ms
            fn()
            if stop is not None and stop():
                return
        self.now_ms = max(self.now_ms, end_ms)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return doc[key]


def _as_int(value, where: str, minimum: int | None = None, maximum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(where, f"expected integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(where, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(where, f"must be <= {maximum}, got {value}")
    return value


def _as_prob(value, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not 0 <= value <= 1:
        raise ConfigError(where, f"expected probability in [0, 1], got {value!r}")
    return float(value)


def _as_section(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(where, f"expected an object, got {value!r}")
    return value


def default_config() -> dict:
    """One remote over a perfect link for a simulated day; artifacts under ./agrotelem_run."""
    return {
        "duration_s": 86400,
        "start_time": DEFAULT_START_TIME,
        "seed": 42,
        "remotes": [
            {
                "station": 1,
                "sample_period_s": 300,
                "max_retries": None,
                "ack_timeout_ms": 5000,
                "buffer_capacity": 512,
                "sensors": None,
            }
        ],
        "channel": {
            "loss_probability": 0.0,
            "duplicate_probability": 0.0,
            "max_delay_ms": 50,
            "seed": 7,
        },
        "gateway": {
            "log_path": "agrotelem_run/gateway.log",
            "cursor_path": "agrotelem_run/gateway.cursor",
            "upload_period_s": 300,
            "batch_size": 100,
        },
        "platform": {"url": None, "snapshot_path": None, "outages": []},
        "report_path": "agrotelem_run/report.json",
    }


@dataclass
class _RemoteSetup:
    station: RemoteStation
    channel: LossyChannel
    remote_endpoint: object
    base_endpoint: object


@dataclass
class SimulationResult:
    report: dict
    store: PlatformStore | None
    exit_code: int = 0
    samples: list[tuple[int, str, int]] = field(default_factory=list)


class SimulationRunner:
    """Wire up and run one simulation from a validated config dict."""

    def __init__(self, config: dict, seed_override: int | None = None):
        self.config = config
        self.loop = EventLoop()
        self.duration_ms = _as_int(_require(config, "duration_s", ""), "duration_s", minimum=1) * 1000
        self.start_time = _as_int(config.get("start_time", DEFAULT_START_TIME), "start_time", minimum=0)
        self.seed = seed_override if seed_override is not None else _as_int(config.get("seed", 0), "seed")
        self.drain_cap_ms = _as_int(config.get("drain_cap_s", 86400), "drain_cap_s", minimum=0) * 1000
        self.ledger: list[tuple[int, str, int]] = []  # (station, kind name, timestamp)

        platform_cfg = _as_section(config.get("platform"), "platform")
        self.platform_url = platform_cfg.get("url")
        self.snapshot_path = platform_cfg.get("snapshot_path")
        if self.platform_url:
            self.store = None
            client = HttpPlatformClient(self.platform_url)
        else:
            self.store = PlatformStore(clock_ms=lambda: self.loop.now_ms)
            client = LocalPlatformClient(self.store)
        self.client = client

        outages = platform_cfg.get("outages") or []
        self.outages = []
        for i, o in enumerate(outages):
            o = _as_section(o, f"platform.outages[{i}]")
            at_s = _as_int(_require(o, "at_s", f"platform.outages[{i}]"), f"platform.outages[{i}].at_s", minimum=0)
            until_s = _as_int(
                _require(o, "until_s", f"platform.outages[{i}]"), f"platform.outages[{i}].until_s", minimum=at_s
            )
            if self.store is None:
                raise ConfigError(f"platform.outages[{i}]", "outage injection needs the in-process platform")
            self.outages.append((at_s * 1000, until_s * 1000))

        gw = _as_section(config.get("gateway"), "gateway")
        log_path = _require(gw, "log_path", "gateway")
        cursor_path = _require(gw, "cursor_path", "gateway")
        self.upload_period_ms = _as_int(gw.get("upload_period_s", 300), "gateway.upload_period_s", minimum=1) * 1000
        batch_size = _as_int(gw.get("batch_size", 100), "gateway.batch_size", minimum=1, maximum=1000)
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        self.gateway = Gateway(log_path, cursor_path, client, batch_size=batch_size)

        channel_cfg = _as_section(config.get("channel"), "channel")
        self.channel_loss = _as_prob(channel_cfg.get("loss_probability", 0.0), "channel.loss_probability")
        channel_dup = _as_prob(channel_cfg.get("duplicate_probability", 0.0), "channel.duplicate_probability")
        channel_delay = _as_int(channel_cfg.get("max_delay_ms", 0), "channel.max_delay_ms", minimum=0)
        channel_seed = channel_cfg.get("seed", self.seed)
        if seed_override is not None:
            channel_seed = seed_override
        channel_seed = _as_int(channel_seed, "channel.seed")

        remotes_cfg = config.get("remotes") or []
        if not remotes_cfg:
            raise ConfigError("remotes", "at least one remote station is required")
        self.remotes: list[_RemoteSetup] = []
        self.all_unbounded_retries = True
        seen_stations: set[int] = set()
        for i, rc in enumerate(remotes_cfg):
            where = f"remotes[{i}]"
            rc = _as_section(rc, where)
            station_id = _as_int(_require(rc, "station", where), f"{where}.station", minimum=1, maximum=255)
            if station_id in seen_stations:
                raise ConfigError(f"{where}.station", f"duplicate station id {station_id}")
            seen_stations.add(station_id)
            period = _as_int(rc.get("sample_period_s", 300), f"{where}.sample_period_s", minimum=1)
            max_retries = rc.get("max_retries", None)
            if max_retries is not None:
                max_retries = _as_int(max_retries, f"{where}.max_retries", minimum=0)
                self.all_unbounded_retries = False
            ack_timeout = _as_int(rc.get("ack_timeout_ms", 5000), f"{where}.ack_timeout_ms", minimum=1)
            capacity = _as_int(rc.get("buffer_capacity", 512), f"{where}.buffer_capacity", minimum=1)
            sensors_doc = rc.get("sensors")
            if sensors_doc is None:
                models = default_models(self.seed)
            else:
                try:
                    models = models_from_json(sensors_doc, self.seed)
                except (KeyError, ValueError, TypeError) as exc:
                    raise ConfigError(f"{where}.sensors", str(exc)) from exc
            # distinct per-remote channel seed keeps links statistically independent
            channel = LossyChannel(
                ChannelConfig(self.channel_loss, channel_dup, channel_delay, channel_seed + station_id)
            )
            remote_ep, base_ep = channel.endpoints()
            station = RemoteStation(
                RemoteConfig(station_id, period, max_retries, ack_timeout, capacity),
                models,
                remote_ep,
                self.start_time,
                sample_listener=self._record_samples,
            )
            self.remotes.append(_RemoteSetup(station, channel, remote_ep, base_ep))

    # -- ledger --

    def _record_samples(self, samples: list[Sample]) -> None:
        for s in samples:
            self.ledger.append((s.station, s.kind.name, s.timestamp))

    # -- event handlers --

    def _cycle(self, setup: _RemoteSetup) -> None:
        setup.station.run_cycle(self.loop.now_ms)
        self._pump_later(setup)
        self.loop.schedule(
            self.loop.now_ms + setup.station.config.sample_period_s * 1000,
            lambda: self._cycle(setup),
        )

    def _pump_later(self, setup: _RemoteSetup) -> None:
        base_due = setup.base_endpoint.next_due()
        if base_due is not None:
            self.loop.schedule(base_due, lambda: self._pump_base(setup))
        remote_due = setup.remote_endpoint.next_due()
        if remote_due is not None:
            self.loop.schedule(remote_due, lambda: self._pump_remote(setup))

    def _pump_base(self, setup: _RemoteSetup) -> None:
        while (payload := setup.base_endpoint.poll(self.loop.now_ms)) is not None:
            self.gateway.on_frame(payload, self.loop.now_ms, reply=setup.base_endpoint)
        self._pump_later(setup)

    def _pump_remote(self, setup: _RemoteSetup) -> None:
        setup.station.drain_inbox(self.loop.now_ms)
        self._pump_later(setup)

    def _flush(self) -> None:
        report = self.gateway.flush_pending(self.loop.now_ms)
        next_at = self.loop.now_ms + self.upload_period_ms
        if report.failed:
            next_at = min(next_at, self.gateway.next_attempt_ms)
        self.loop.schedule(next_at, self._flush)

    # -- main entry --

    def _quiescent(self) -> bool:
        return (
            all(r.station.buffer_size() == 0 for r in self.remotes)
            and all(r.channel.pending() == 0 for r in self.remotes)
            and self.gateway.pending_records() == 0
        )

    def run(self) -> SimulationResult:
        wall_start = time.monotonic()
        for setup in self.remotes:
            self.loop.schedule(0, (lambda s: lambda: self._cycle(s))(setup))
        self.loop.schedule(self.upload_period_ms, self._flush)
        for at_ms, until_ms in self.outages:
            self.loop.schedule(at_ms, (lambda u: lambda: self.store.set_outage(u))(until_ms))

        self.loop.run_until(self.duration_ms)
        for setup in self.remotes:
            setup.station.draining = True
        self.loop.run_until(self.duration_ms + self.drain_cap_ms, stop=self._quiescent, inclusive=True)
        drained_at_ms = self.loop.now_ms

        report = self._build_report(drained_at_ms)
        report["wall_time_s"] = round(time.monotonic() - wall_start, 6)
        exit_code = 0
        if (
            report["completeness"] < 1.0
            and self.channel_loss < 1.0
            and self.all_unbounded_retries
        ):
            exit_code = 1
        if self.snapshot_path and self.store is not None:
            Path(self.snapshot_path).parent.mkdir(parents=True, exist_ok=True)
            self.store.save(self.snapshot_path)
        self.gateway.close()
        return SimulationResult(report=report, store=self.store, exit_code=exit_code, samples=self.ledger)

    def _build_report(self, drained_at_ms: int) -> dict:
        found = 0
        platform_points = 0
        expected = set(self.ledger)
        by_series: dict[tuple[int, str], set[int]] = {}
        for station, kind, ts in expected:
            by_series.setdefault((station, kind), set()).add(ts)
        for (station, kind), timestamps in sorted(by_series.items()):
            points = self.client.query(station, kind, 0, 2**62)
            platform_points += len(points)
            stored = {ts for ts, _seq, _v in points}
            found += len(timestamps & stored)
        completeness = found / len(expected) if expected else 1.0

        remote_counters = {
            str(r.station.config.station): dict(r.station.counters) for r in self.remotes
        }
        channel_counters = {
            str(r.station.config.station): {
                "transmissions": r.channel.transmissions,
                "lost": r.channel.lost,
                "duplicated": r.channel.duplicated,
            }
            for r in self.remotes
        }
        report = {
            "duration_s": self.duration_ms // 1000,
            "drained_at_s": drained_at_ms / 1000,
            "seed": self.seed,
            "samples_generated": len(self.ledger),
            "remotes": remote_counters,
            "channels": channel_counters,
            "gateway": dict(self.gateway.counters),
            "platform_points": platform_points,
            "completeness": completeness,
        }
        if self.store is not None:
            report["platform_accepted"] = self.store.accepted_total
            report["duplicates_absorbed"] = self.store.duplicates_total
        return report


def format_report(report: dict) -> str:
    """Human-readable run summary for the console."""
    gw = report["gateway"]
    lines = [
        f"simulated duration : {report['duration_s']} s (drained at {report['drained_at_s']} s)",
        f"samples generated  : {report['samples_generated']}",
        f"records logged     : {gw['records_logged']}",
        f"records uploaded   : {gw['records_uploaded']} in {gw['upload_batches']} batches"
        f" ({gw['upload_failures']} failed attempts)",
        f"crc errors         : {gw['crc_errors']}",
        f"platform points    : {report['platform_points']}"
        + (
            f" (duplicates absorbed: {report['duplicates_absorbed']})"
            if "duplicates_absorbed" in report
            else ""
        ),
        f"completeness       : {report['completeness']:.6f}",
    ]
    for station, counters in sorted(report["remotes"].items()):
        lines.append(
            f"remote {station:>3}         : {counters['frames_sent']} frames sent,"
            f" {counters['retries']} retries, {counters['acks']} acks,"
            f" {counters['evictions']} evictions"
        )
    return "\n".join(lines)


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
