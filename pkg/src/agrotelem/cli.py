"""Command-line entry point: simulate, serve, stats, export.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .model import FactorKind
from .simulation import (
    ConfigError,
    SimulationRunner,
    default_config,
    format_report,
    report_to_json,
)
from . import stats as stats_mod

CONFIG_ENV_VAR = "AGROTELEM_CONFIG"


def _load_config(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return default_config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", "top-level document must be an object")
    return doc


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    runner = SimulationRunner(config, seed_override=args.seed)
    result = runner.run()
    report_path = config.get("report_path")
    if report_path:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(report_to_json(result.report))
    print(format_report(result.report))
    return result.exit_code


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .platform_api import PlatformStore, create_app

    store = PlatformStore()
    if args.snapshot and Path(args.snapshot).exists():
        store.load(args.snapshot)
    app = create_app(store, snapshot_path=args.snapshot)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _groups_from_csv(path: str) -> tuple[list[str], list[list[float]]]:
    labels: list[str] = []
    groups: dict[str, list[float]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["group", "score"]:
            raise ValueError(f"{path}: expected CSV header 'group,score'")
        for row in reader:
            label = row["group"].strip()
            if label not in groups:
                labels.append(label)
                groups[label] = []
            groups[label].append(float(row["score"]))
    return labels, [groups[label] for label in labels]


def _parse_summary(text: str) -> stats_mod.GroupSummary:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"summary {text!r} must be 'n,mean,sd'")
    return stats_mod.GroupSummary(n=int(parts[0]), mean=float(parts[1]), sd=float(parts[2]))


def cmd_stats(args: argparse.Namespace) -> int:
    if bool(args.csv_path) == bool(args.summary):
        raise ValueError("provide either a CSV path or --summary triples, not both")
    if args.summary:
        summaries = [_parse_summary(s) for s in args.summary]
        table = stats_mod.anova_from_summary(summaries)
        descriptive = None
    else:
        labels, groups = _groups_from_csv(args.csv_path)
        table = stats_mod.anova_from_raw(groups)
        pooled = [x for g in groups for x in g]
        descriptive = stats_mod.format_descriptives(
            labels + ["Sample"], [stats_mod.describe(g) for g in groups] + [stats_mod.describe(pooled)]
        )
    if args.json:
        print(json.dumps(table.as_dict(), sort_keys=True, indent=2))
        return 0
    if descriptive is not None:
        print(descriptive)
        print()
    print(stats_mod.format_anova_table(table))
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    if args.kind not in FactorKind.__members__:
        raise ValueError(
            f"unknown kind {args.kind!r}; expected one of: "
            + ", ".join(FactorKind.__members__)
        )
    import requests

    url = f"{args.url.rstrip('/')}/api/v1/series/{args.station}/{args.kind}/export.csv"
    resp = requests.get(url, params={"from": args.from_ts, "to": args.to_ts}, timeout=30)
    if resp.status_code != 200:
        raise ValueError(f"export failed with HTTP {resp.status_code}: {resp.text.strip()}")
    sys.stdout.write(resp.text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agrotelem",
        description="Garden/compost telemetry simulator, mock platform, and ANOVA tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run an end-to-end simulated telemetry run")
    p_sim.add_argument("--config", help=f"config JSON path (default: ${CONFIG_ENV_VAR} or built-in)")
    p_sim.add_argument("--seed", type=int, help="override every seed in the config")
    p_sim.set_defaults(fn=cmd_simulate)

    p_serve = sub.add_parser("serve", help="serve the mock IoT platform over HTTP")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--snapshot", help="load/save the store from this JSON file")
    p_serve.set_defaults(fn=cmd_serve)

    p_stats = sub.add_parser("stats", help="descriptive stats and one-way ANOVA")
    p_stats.add_argument("csv_path", nargs="?", help="CSV with header 'group,score'")
    p_stats.add_argument(
        "--summary", nargs="+", metavar="N,MEAN,SD", help="group summaries instead of raw scores"
    )
    p_stats.add_argument("--json", action="store_true", help="emit the ANOVA table as JSON")
    p_stats.set_defaults(fn=cmd_stats)

    p_export = sub.add_parser("export", help="export one series as CSV from a running platform")
    p_export.add_argument("--station", type=int, required=True)
    p_export.add_argument("--kind", required=True)
    p_export.add_argument("--from", dest="from_ts", type=int, default=0)
    p_export.add_argument("--to", dest="to_ts", type=int, default=2**62)
    p_export.add_argument("--url", default="http://127.0.0.1:8765")
    p_export.set_defaults(fn=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, stats_mod.StatsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
