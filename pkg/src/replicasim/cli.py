"""Command-line entry point: simulate, analyze, replay, paper-check.

Exit codes: 0 success, 1 check failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from replicasim.metrics import count_errors, errors_from_log, block_times, session_row, weighted_total
from replicasim.netsim import derive_seed
from replicasim.plant import load_routing_table
from replicasim.report import (
    ALL_MEASURES,
    ReportError,
    analyze_rows,
    read_metrics_csv,
    render_markdown,
    render_results_csv,
    render_svg_histogram,
    run_reference_checks,
    write_metrics_csv,
)
from replicasim.scenario import (
    Condition,
    LogError,
    OperatorProfile,
    PlanError,
    build_default_plan,
    default_model,
    default_profiles,
    default_routing_table,
    load_plan,
    run_session,
    session_log_from_jsonl,
    session_log_to_jsonl,
    validate_session_log,
    valve_registry,
)
from replicasim.scene import DescriptorError, load_model_file

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

SEED_ENV_VAR = "REPLICA_SYNC_SEED"


class CliError(Exception):
    pass


def _parse_sessions(value: str) -> dict[Condition, int]:
    """``N`` applies to both conditions; ``T:H`` sets tablet and hmd counts."""
    parts = value.split(":")
    try:
        if len(parts) == 1:
            n = int(parts[0])
            counts = {Condition.TABLET: n, Condition.HMD: n}
        elif len(parts) == 2:
            counts = {Condition.TABLET: int(parts[0]), Condition.HMD: int(parts[1])}
        else:
            raise ValueError(value)
    except ValueError:
        raise CliError(f"--sessions expects N or TABLET:HMD, got {value!r}") from None
    if any(n < 1 for n in counts.values()):
        raise CliError("sessions per condition must be at least 1")
    return counts


def _default_seed() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return 0


def _load_profiles(path: str | None) -> dict[Condition, OperatorProfile]:
    if path is None:
        return default_profiles()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return {Condition(name): OperatorProfile.from_dict(profile) for name, profile in doc.items()}
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load profiles from {path!r}: {exc}") from None


def cmd_simulate(args: argparse.Namespace) -> int:
    counts = _parse_sessions(args.sessions)
    if args.condition != "both":
        only = Condition(args.condition)
        counts = {only: counts[only]}
    seed = args.seed if args.seed is not None else _default_seed()
    model = load_model_file(args.model) if args.model else default_model()
    routing = load_routing_table(args.routing) if args.routing else default_routing_table()
    plan = load_plan(args.plan) if args.plan else build_default_plan(valve_registry(model))
    profiles = _load_profiles(args.profile)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for condition in sorted(counts, key=lambda c: c.value, reverse=True):  # tablet first
        profile = profiles[condition]
        for i in range(counts[condition]):
            session_seed = derive_seed(seed, f"session:{condition.value}:{i}")
            log = run_session(plan, condition, profile, seed=session_seed, model=model, routing=routing)
            session_id = f"{condition.value}-{i:03d}"
            (outdir / f"session_{session_id}.jsonl").write_text(session_log_to_jsonl(log), encoding="utf-8")
            rows.append(session_row(session_id, log))
    write_metrics_csv(str(outdir / "metrics.csv"), rows)
    print(f"wrote {len(rows)} session logs and metrics.csv to {outdir}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    rows = read_metrics_csv(args.csv)
    report = analyze_rows(rows)
    outdir = Path(args.out) if args.out else Path(args.csv).parent
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.md").write_text(render_markdown(report), encoding="utf-8")
    (outdir / "report.csv").write_text(render_results_csv(report), encoding="utf-8")
    if args.histograms:
        for measure in ALL_MEASURES:
            values = {}
            for cond in report.conditions:
                values[cond] = [float(r[measure]) for r in rows if r["condition"] == cond]
            if all(vals for vals in values.values()):
                svg = render_svg_histogram(values, measure)
                (outdir / f"hist_{measure}.svg").write_text(svg, encoding="utf-8")
    print(render_markdown(report))
    print(f"report written to {outdir}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    for path in args.logs:
        text = Path(path).read_text(encoding="utf-8")
        log = session_log_from_jsonl(text)
        validate_session_log(log)
        timing = block_times(log)
        counts = count_errors(errors_from_log(log))
        print(f"{path}: condition={log.condition.value} seed={log.seed}")
        print(f"  total {timing.total_s:.1f}s | 1-handed {timing.totals_by_kind['OneHanded']:.1f}s"
              f" | 2-handed {timing.totals_by_kind['TwoHanded']:.1f}s")
        for b in timing.blocks:
            print(f"  block {b.block} ({b.kind}): {b.duration_s:.1f}s")
        print(f"  errors: simple={counts.simple} critical={counts.critical}"
              f" repetition={counts.repetition} weighted={weighted_total(counts)}")
    return EXIT_OK


def cmd_paper_check(args: argparse.Namespace) -> int:
    constants = None
    if args.constants:
        with open(args.constants, encoding="utf-8") as fh:
            constants = json.load(fh)
    results = run_reference_checks(constants)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status}  {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} reference checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replicasim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded sessions and write logs + metrics CSV")
    sim.add_argument("--condition", choices=["tablet", "hmd", "both"], default="both")
    sim.add_argument("--sessions", default="19:20", help="N per condition, or TABLET:HMD (default 19:20)")
    sim.add_argument("--seed", type=int, default=None, help=f"master seed (falls back to ${SEED_ENV_VAR}, then 0)")
    sim.add_argument("--plan", help="inspection plan JSON (default: built-in two-part plan)")
    sim.add_argument("--profile", help="operator profiles JSON (default: calibrated profiles)")
    sim.add_argument("--routing", help="routing/effectiveness table JSON")
    sim.add_argument("--model", help="scene model descriptor JSON")
    sim.add_argument("--out", default="out", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="analyze a metrics CSV and write a report")
    ana.add_argument("csv", help="metrics CSV produced by simulate")
    ana.add_argument("--out", help="report output directory (default: CSV directory)")
    ana.add_argument("--histograms", action="store_true", help="also write SVG histograms")
    ana.set_defaults(func=cmd_analyze)

    rep = sub.add_parser("replay", help="validate session logs and print timings/errors")
    rep.add_argument("logs", nargs="+", help="session JSONL log files")
    rep.set_defaults(func=cmd_replay)

    chk = sub.add_parser("paper-check", help="recompute embedded reference values; exit 0 iff all pass")
    chk.add_argument("--constants", help="override constants JSON (testing hook)")
    chk.set_defaults(func=cmd_paper_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ReportError, PlanError, LogError, DescriptorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
