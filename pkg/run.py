#!/usr/bin/env python3
"""
Command-line entry point: distill, eval, verify, bench and ablate
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import pandas as pd

from ablation import run_ablation, stability_windows, summarize
from checkpoint import load_checkpoint
from config import LOG_FORMAT, LOG_LEVEL, OUTPUT_ROOT, load_config, write_run_info, write_verify_info
from data import generate
from distill import run
from errors import EXIT_IO, EXIT_NUMERIC, EXIT_OK, NCFMError
from evaluation import compare_sources, complexity_bench, reports_frame
from verification import SUITES, run_suites, summary_frame

logger = logging.getLogger(__name__)


def _guarded(command: Callable[[], int]) -> int:
    """Run a command, turning package and I/O errors into exit codes"""
    try:
        return command()
    except NCFMError as e:
        print(f"❌ {e}")
        logger.debug("command failed", exc_info=True)
        return e.exit_code
    except OSError as e:
        print(f"❌ I/O error: {e}")
        return EXIT_IO


def cmd_distill(config_path: str) -> int:
    def command() -> int:
        config = load_config(config_path)
        out_dir = config.output_path()
        real = generate(config.dataset.train_spec(), config.dataset.n_per_class)
        write_run_info(out_dir, config, config.distill.seed)
        result = run(real, config.distill, config.features, out_dir, config_text=config.text)
        stability = stability_windows(result.log, window=min(500, config.distill.iterations))
        print(f"✅ Checkpoint written to {result.checkpoint_path}")
        print(f"📉 Final CFD {result.log.cfd_values()[-1]:.5f}; "
              f"max window increase {100 * stability.max_relative_increase:.1f}%")
        return EXIT_OK

    return _guarded(command)


def cmd_eval(checkpoint_path: str, config_path: str) -> int:
    def command() -> int:
        checkpoint = load_checkpoint(checkpoint_path)
        config = load_config(config_path)
        out_dir = config.output_path()
        real = generate(config.dataset.train_spec(), config.dataset.n_per_class)
        test = generate(config.dataset.test_spec(), config.dataset.n_test_per_class)
        reports = compare_sources(
            checkpoint.synthetic.as_data(), real, test, config.eval.classifier, config.eval.seeds
        )
        write_run_info(out_dir, config, checkpoint.seed)
        reports_frame(reports).to_csv(out_dir / "eval_report.csv", index=False)
        for report in reports:
            print(f"📊 {report.train_source:>13}: accuracy {report.mean:.4f} ± {report.std:.4f}")
        print(f"✅ Report written to {out_dir / 'eval_report.csv'}")
        return EXIT_OK

    return _guarded(command)


def cmd_verify(suites: Sequence[str], seed: int = 0, epsilon_sqrt: float = 1e-12,
               out_dir: Optional[str] = None) -> int:
    if not suites:
        print("ℹ️  No verify suites selected; nothing to do")
        return EXIT_OK

    def command() -> int:
        results = run_suites(list(suites), seed=seed, epsilon_sqrt=epsilon_sqrt)
        target = Path(out_dir) if out_dir else Path(OUTPUT_ROOT or ".") / "runs" / "verify"
        target.mkdir(parents=True, exist_ok=True)
        summary_frame(results).to_csv(target / "verify_summary.csv", index=False)
        write_verify_info(target, list(suites), seed, epsilon_sqrt)
        for result in results:
            print(f"{'✅' if result.passed else '❌'} {result.name}: {result.detail}")
        return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC

    return _guarded(command)


def cmd_bench(config_path: str) -> int:
    def command() -> int:
        config = load_config(config_path)
        bench = config.bench
        out_dir = config.output_path()
        reports = complexity_bench(bench.sizes, bench.q, bench.repeats, bench.mmd_sizes, bench.dim, bench.seed)
        write_run_info(out_dir, config, bench.seed)
        for report in reports:
            report.to_frame().to_csv(out_dir / f"bench_{report.method}.csv", index=False)
            print(f"⏱️  {report.method}: log-log slope {report.slope:.3f} over n = {report.sizes}")
        print(f"✅ Benchmark written to {out_dir}")
        return EXIT_OK

    return _guarded(command)


def cmd_ablate(config_path: str) -> int:
    def command() -> int:
        config = load_config(config_path)
        out_dir = config.output_path()
        real = generate(config.dataset.train_spec(), config.dataset.n_per_class)
        test = generate(config.dataset.test_spec(), config.dataset.n_test_per_class)
        ablation = config.ablation
        runs = run_ablation(real, test, config.distill, config.features, ablation.axis,
                            ablation.values, ablation.seeds, config.eval.classifier)
        summary = summarize(runs)
        write_run_info(out_dir, config, config.distill.seed)
        runs.to_csv(out_dir / "ablation_runs.csv", index=False)
        summary.to_csv(out_dir / "ablation_summary.csv", index=False)
        with pd.option_context("display.precision", 4):
            print(summary.to_string(index=False))
        print(f"✅ Ablation written to {out_dir}")
        return EXIT_OK

    return _guarded(command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncfm", description="Characteristic-function dataset distillation")
    commands = parser.add_subparsers(dest="command", required=True)

    distill = commands.add_parser("distill", help="Distill a dataset described by a config file")
    distill.add_argument("config")

    evaluate = commands.add_parser("eval", help="Compare a checkpoint against random-subset and full-data training")
    evaluate.add_argument("checkpoint")
    evaluate.add_argument("config")

    verify = commands.add_parser("verify", help="Run numerical verification suites")
    for suite in SUITES:
        verify.add_argument(f"--{suite}", action="store_true", help=f"run the {suite} suite")
    verify.add_argument("--all", action="store_true", help="run every suite")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--epsilon-sqrt", type=float, default=1e-12)
    verify.add_argument("--out", default=None, help="directory for verify_summary.csv")

    bench = commands.add_parser("bench", help="Time CFD against exact MMD")
    bench.add_argument("config")

    ablate = commands.add_parser("ablate", help="Sampler, alpha or frequency-count ablation")
    ablate.add_argument("config")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and dispatch to a command; returns the exit code"""
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)

    if args.command == "distill":
        return cmd_distill(args.config)
    if args.command == "eval":
        return cmd_eval(args.checkpoint, args.config)
    if args.command == "verify":
        selected = list(SUITES) if args.all else [s for s in SUITES if getattr(args, s)]
        return cmd_verify(selected, args.seed, args.epsilon_sqrt, args.out)
    if args.command == "bench":
        return cmd_bench(args.config)
    return cmd_ablate(args.config)


if __name__ == "__main__":
    sys.exit(main())
