import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from zoprolab.errors import ZoproError, exit_code_for
from zoprolab.harness import (
    analyze_run,
    build_scenario,
    compare_algorithms,
    load_experiment,
    load_run_config,
    replay,
    run_experiment,
    run_single,
)
from zoprolab.harness.spec import ALGORITHMS
from zoprolab.log import configure_logging

logger = logging.getLogger(__name__)


def _run(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    algorithm = args.algo or run.algorithm
    seed = run.seed if args.seed is None else args.seed
    scenario = build_scenario(run.scenario, seed)
    record = run_single(scenario, run.algo, algorithm, seed, args.out)
    logger.info("%s: %d iterations, final avg error %.3e", algorithm, record.n_iterations, record.avg_error[-1])
    return 0


def _sweep(args: argparse.Namespace) -> int:
    spec = load_experiment(args.spec)
    if args.full:
        spec = replace(spec, early_stop=False)
    if args.compare:
        table = compare_algorithms(spec, args.out, args.workers)
        failed = sum(not r.success for r in table.metrics.results)
    else:
        metrics = run_experiment(spec, args.out, args.workers)
        failed = sum(not r.success for r in metrics.results)
    if failed:
        logger.warning("%d scenario runs failed, see runs.csv", failed)
    return 0


def _analyze(args: argparse.Namespace) -> int:
    report = analyze_run(args.run, seeds=args.seeds)
    if report.error:
        logger.error("analysis incomplete: %s", report.error)
        return 3
    return 0


def _replay(args: argparse.Namespace) -> int:
    out = args.out or Path(args.manifest).parent / "replay"
    replay(args.manifest, out, args.workers)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zoprolab", description="Decentralized zeroth-order proximal experiments")
    parser.add_argument("--log-level", default=None, help="overrides ZOPROLAB_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single scenario")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--algo", choices=ALGORITHMS, default=None)
    run.add_argument("--out", type=Path, default=Path("out/run"))
    run.set_defaults(handler=_run)

    sweep = sub.add_parser("sweep", help="run an experiment sweep")
    sweep.add_argument("--spec", required=True, type=Path)
    sweep.add_argument("--out", type=Path, default=Path("out/sweep"))
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument("--full", action="store_true", help="disable early stopping")
    sweep.add_argument("--compare", action="store_true", help="write the ZoPro/SoPro comparison table")
    sweep.set_defaults(handler=_sweep)

    analyze = sub.add_parser("analyze", help="theorem constants and envelope report for a run directory")
    analyze.add_argument("--run", required=True, type=Path)
    analyze.add_argument("--seeds", type=int, default=10)
    analyze.set_defaults(handler=_analyze)

    rep = sub.add_parser("replay", help="re-run a sweep from its manifest")
    rep.add_argument("--manifest", required=True, type=Path)
    rep.add_argument("--out", type=Path, default=None)
    rep.add_argument("--workers", type=int, default=None)
    rep.set_defaults(handler=_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ZoproError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
