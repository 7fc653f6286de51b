"""Command-line entry point.

Verbs: ``serve`` a live session, ``simulate`` agent sessions (single seed
or batches), ``analyze`` a log into a metrics report, ``replay`` a log to
check its determinism, and ``export-figures`` for the per-period CSV
series. This module is a thin adapter: no market or metric arithmetic
lives here.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from . import agents, analytics
from .events import read_log, write_log, write_trades_csv
from .server import BindFailure, ExchangeServer, ServerOptions
from .session import CorruptLog, ReplayMismatch, SessionAborted, SessionConfig, verify_replay

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marketlab", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    serve = sub.add_parser("serve", help="run a live session server")
    serve.add_argument("--config", default="default", help="config JSON path, or 'default'")
    serve.add_argument("--bind", default="127.0.0.1:0", help="host:port to listen on")
    serve.add_argument("--log", required=True, help="event log output path")
    serve.add_argument("--pacing", choices=("real", "ping"), default="real")
    serve.add_argument("--tokens", nargs="*", help="seat join tokens (default seat-1..N)")

    sim = sub.add_parser("simulate", help="run agent-based sessions")
    sim.add_argument("--config", default="default")
    sim.add_argument("--roster", default="all-fundamentalist", help="preset name or roster JSON path")
    group = sim.add_mutually_exclusive_group()
    group.add_argument("--seed", type=int, default=None)
    group.add_argument("--seeds", help="inclusive seed range A..B")
    sim.add_argument("--ticks", type=int, default=agents.DEFAULT_TICKS_PER_PERIOD)
    sim.add_argument("--out", default=".", help="output directory for event logs")
    sim.add_argument("--no-questionnaires", action="store_true")

    ana = sub.add_parser("analyze", help="compute the metrics report for a log")
    ana.add_argument("--log", required=True)
    ana.add_argument("--out", help="directory for report.json and trades.csv")
    ana.add_argument("--per-trade", action="store_true", help="decompose per trade, not per trader")

    rep = sub.add_parser("replay", help="verify a log reproduces itself deterministically")
    rep.add_argument("--log", required=True)

    fig = sub.add_parser("export-figures", help="write figure1.csv / figure2.csv for a log")
    fig.add_argument("--log", required=True)
    fig.add_argument("--out", default=".")
    return parser


def _load_config(spec: str) -> SessionConfig:
    if spec == "default":
        return SessionConfig()
    with open(spec, encoding="utf-8") as handle:
        return SessionConfig.from_dict(json.load(handle))


def _load_roster(spec: str, n_traders: int) -> list[agents.AgentPolicy]:
    if spec in agents.PRESET_ROSTERS:
        return agents.preset_roster(spec, n_traders)
    with open(spec, encoding="utf-8") as handle:
        return agents.load_roster(json.load(handle))


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        lo, _, hi = args.seeds.partition("..")
        return list(range(int(lo), int(hi) + 1))
    return [args.seed if args.seed is not None else 0]


def _cmd_serve(args) -> int:
    config = _load_config(args.config)
    host, _, port = args.bind.rpartition(":")
    options = ServerOptions(
        host=host or "127.0.0.1",
        port=int(port),
        pacing=args.pacing,
        tokens=args.tokens or None,
        log_path=args.log,
    )
    server = ExchangeServer(config, options)

    async def run():
        return await server.serve()

    try:
        asyncio.run(run())
    except (BindFailure, SessionAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    print(f"session complete; log written to {args.log}")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    roster = _load_roster(args.roster, config.n_traders)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _parse_seeds(args)
    batch = len(seeds) > 1
    reports = {}
    for seed in seeds:
        records = agents.run_simulation(
            config,
            roster,
            seed=seed,
            ticks_per_period=args.ticks,
            questionnaires=not args.no_questionnaires,
        )
        path = out_dir / f"{config.session_id}-seed{seed}.jsonl"
        write_log(records, path)
        print(f"seed {seed}: {len(records)} events -> {path}")
        if batch:
            report = analytics.build_report(records, validate=False)
            reports[seed] = report
            report_path = out_dir / f"{config.session_id}-seed{seed}-report.json"
            report_path.write_text(report.to_json(), encoding="utf-8")
    if batch:
        aggregate = analytics.aggregate_reports(reports)
        aggregate_path = out_dir / "aggregate.json"
        aggregate_path.write_text(
            json.dumps(aggregate, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(f"{len(seeds)} sessions with reports written to {out_dir}")
        for name, value in aggregate["summary"].items():
            print(f"  {name:30s} {'n/a' if value is None else f'{value:.4f}'}")
    return 0


_SUMMARY_FIELDS = (
    "haessel_r2_trading",
    "haessel_r2_declared",
    "napd",
    "amplitude",
    "mean_common_share",
    "common_share_trend",
    "declared_grand_mean",
)


def _cmd_analyze(args) -> int:
    try:
        records = read_log(args.log)
        report = analytics.build_report(records, per_trade=args.per_trade)
    except (OSError, ValueError, KeyError, CorruptLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    print(f"session {report.session_id}: {report.n_periods} periods")
    for name in _SUMMARY_FIELDS:
        value = getattr(report, name)
        print(f"  {name:22s} {'n/a' if value is None else f'{value:.4f}'}")
    for group, alpha in report.cronbach_alpha.items():
        print(f"  cronbach_alpha[{group}] {'n/a' if alpha is None else f'{alpha:.4f}'}")
    if report.overconfidence is not None:
        print(f"  overconfidence_pooled  {report.overconfidence.pooled_mean:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        write_trades_csv(records, out / "trades.csv")
        print(f"report.json and trades.csv written to {out}")
    return 0


def _cmd_replay(args) -> int:
    try:
        records = read_log(args.log)
        verify_replay(records)
    except (OSError, ValueError, KeyError, CorruptLog, ReplayMismatch) as exc:
        print(f"replay FAILED: {exc}", file=sys.stderr)
        return DATA_ERROR
    print("replay OK")
    return 0


def _cmd_export_figures(args) -> int:
    try:
        records = read_log(args.log)
        report = analytics.build_report(records)
        fig1, fig2 = analytics.export_figure_data(report, args.out)
    except (OSError, ValueError, KeyError, CorruptLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    print(f"wrote {fig1} and {fig2}")
    return 0


_COMMANDS = {
    "serve": _cmd_serve,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "replay": _cmd_replay,
    "export-figures": _cmd_export_figures,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    return _COMMANDS[args.verb](args)


if __name__ == "__main__":
    raise SystemExit(main())
