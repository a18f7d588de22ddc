"""Command-line entry point: ``scai run|list-scenarios|validate|summarize``."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from scai.game import ConfigError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("scai")


def _fmt(x) -> str:
    return "" if x is None else f"{x:.3f}"


def print_summary(summary, out=None) -> None:
    """Tab-separated per-epoch table followed by test and convergence lines."""
    out = out or sys.stdout
    print("epoch\tseries\tmean\tci_low\tci_high\tn", file=out)
    for name, s in (("users", summary.users), ("assistant", summary.assistant)):
        for i, epoch in enumerate(summary.epochs):
            print(f"{epoch}\t{name}\t{_fmt(s.mean[i])}\t{_fmt(s.ci_low[i])}\t{_fmt(s.ci_high[i])}\t{s.n[i]}", file=out)
    for currency, t in summary.test.items():
        print(f"test\t{currency}\t{_fmt(t['mean'])}\t{_fmt(t['ci_low'])}\t{_fmt(t['ci_high'])}\t{t['n']}", file=out)
    dist = " ".join(f"{k}={v:.2f}" for k, v in summary.converged_distribution.items())
    print(f"# completed {summary.n_completed}/{summary.n_simulations}  converged policies: {dist}", file=out)


def cmd_run(args) -> int:
    from scai.harness.config import load_scenario, validate
    from scai.harness.export import write_batch
    from scai.harness.plots import render_figures
    from scai.harness.runner import run_batch

    overrides = {}
    if args.sims is not None:
        overrides["n_simulations"] = args.sims
    if args.epochs is not None:
        overrides["n_epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.backend is not None:
        overrides["backend"] = args.backend
    try:
        cfg = load_scenario(args.scenario)
        cfg = cfg.with_overrides(**overrides) if overrides else cfg
        validate(cfg)
        remote = None
        if cfg.backend == "remote":
            from scai.lm import RemoteBackend

            remote = RemoteBackend.from_env()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    t0 = time.perf_counter()
    try:
        summary, results = run_batch(cfg, workers=args.workers, remote=remote)
    except Exception as exc:  # anything escaping the runner is a runtime failure
        log.exception("batch failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("ran %d simulations in %.2fs", len(results), time.perf_counter() - t0)

    paths = write_batch(args.out, cfg, summary, results)
    if not args.no_figures:
        paths.update({p.stem: p for p in render_figures(summary, args.out, cfg.name)})
    print_summary(summary)
    for name, p in paths.items():
        print(f"# wrote {name}: {p}")
    if summary.n_failed:
        print(f"error: {summary.n_failed} simulation(s) failed; partial results written", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_list(args) -> int:
    from scai.harness.config import bundled_scenarios

    for name, desc in bundled_scenarios().items():
        print(f"{name}\t{desc}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from scai.harness.config import load_scenario

    try:
        cfg = load_scenario(args.scenario)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {cfg.name} ({cfg.group_size} users, {cfg.n_simulations} sims x {cfg.n_epochs} epochs)")
    return EXIT_OK


def cmd_summarize(args) -> int:
    from scai.harness.export import summarize_dir

    try:
        summary = summarize_dir(args.indir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError) as exc:
        print(f"error: malformed results: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print_summary(summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scai", description="Norm-learning assistant in the ultimatum game.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a batch of simulations")
    r.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    r.add_argument("--sims", type=int)
    r.add_argument("--epochs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--backend", choices=("stub", "remote"))
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    r.set_defaults(func=cmd_run)

    sub.add_parser("list-scenarios", help="list bundled scenarios").set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("summarize", help="recompute the summary from a results directory")
    s.add_argument("--in", dest="indir", required=True)
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
