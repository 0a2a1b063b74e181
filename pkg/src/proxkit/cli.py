"""Command-line interface.

Exit codes: 0 success, 1 usage error or failed verification, 2 reference
optimum not certified tightly enough for the requested accuracy, 3 I/O error.
"""

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__, backend, datagen, harness, models, problems, verify
from .errors import NonCertifiedError, ProxkitError
from .models import StepSchedule
from .rng import RngStream


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; keep 2 for NonCertified
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_dataset_args(p, with_trial_defaults=False):
    p.add_argument("--family", required=True, choices=problems.FAMILIES)
    p.add_argument("--m", type=int, default=1000, help="number of samples")
    p.add_argument("--n", type=int, default=40, help="feature dimension")
    p.add_argument("--kappa", type=float, default=1.0, help="design condition number")
    p.add_argument("--sigma", type=float, default=0.0, help="additive noise level")
    p.add_argument("--flip", type=float, default=0.0, metavar="P",
                   help="label flip/resample probability")
    p.add_argument("--classes", type=int, default=0, help="class count (hinge only)")
    p.add_argument("--seed", type=int, default=0)


def _spec_from_args(args) -> datagen.GenSpec:
    return datagen.GenSpec(family=args.family, m=args.m, n=args.n,
                           kappa=args.kappa, sigma=args.sigma, p=args.flip,
                           K=args.classes, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxkit",
                     description="Model-based stochastic subgradient toolkit")
    parser.add_argument("--version", action="version",
                        version=f"proxkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a stepsize-robustness sweep",
                           description="Run the alpha-grid x model x trial sweep "
                                       "described by a JSON config and write "
                                       "records.csv, summary.csv and metadata.json.")
    sweep.add_argument("--config", required=True,
                       help="JSON run config; a previous metadata.json also works")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sweep.add_argument("--quiet", action="store_true")

    trial = sub.add_parser("trial", help="run a single trial with timing")
    _add_dataset_args(trial)
    trial.add_argument("--model", required=True, choices=models.MODEL_NAMES)
    trial.add_argument("--alpha0", type=float, default=1.0)
    trial.add_argument("--beta", type=float, default=0.6)
    trial.add_argument("--epsilon", type=float, default=0.05)
    trial.add_argument("--k-max", type=int, default=50_000)
    trial.add_argument("--eval-stride", type=int, default=10)
    trial.add_argument("--trial", type=int, default=0, help="trial index (seeds the sample stream)")
    trial.add_argument("--track-average", action="store_true")
    trial.add_argument("--engine", choices=("auto", "kernel", "python"), default="auto")

    ver = sub.add_parser("verify", help="run the verification suites")
    ver.add_argument("--fast", action="store_true",
                     help="shrink the statistical runs (seconds instead of minutes)")
    ver.add_argument("--json", dest="json_out", default=None,
                     help="also write results as JSON to this path")

    demo = sub.add_parser("demo-divergence",
                          help="show subgradient blow-up vs stable proximal runs")
    demo.add_argument("--steps", type=int, default=8,
                      help="trajectory entries to print per demo")

    gen = sub.add_parser("gen", help="generate a dataset and save it to disk")
    _add_dataset_args(gen)
    gen.add_argument("--out", required=True, help="output file path")

    bench = sub.add_parser("bench",
                           help="compare the compiled and pure-numpy engines")
    bench.add_argument("--family", default="LeastSquares", choices=problems.FAMILIES)
    bench.add_argument("--model", default="Truncated", choices=models.MODEL_NAMES)
    bench.add_argument("--k-max", type=int, default=20_000)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--m", type=int, default=1000)
    bench.add_argument("--n", type=int, default=40)
    return parser


def _load_config(path: str) -> harness.RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict) and isinstance(raw.get("config"), dict):
        raw = raw["config"]  # accept a previous run's metadata.json
    return harness.RunConfig.from_dict(raw)


def cmd_sweep(args) -> int:
    try:
        config = _load_config(args.config)
    except json.JSONDecodeError as e:
        print(f"proxkit: error: malformed JSON in {args.config} at line "
              f"{e.lineno} column {e.colno}: {e.msg}", file=sys.stderr)
        return 1
    except (KeyError, TypeError, ValueError) as e:
        print(f"proxkit: error: bad config {args.config}: {e}", file=sys.stderr)
        return 1
    started = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    t0 = time.perf_counter()

    def progress(done, total):
        print(f"\r  cells {done}/{total}", end="", file=sys.stderr, flush=True)
        if done == total:
            print(file=sys.stderr)

    records, summaries = harness.run_sweep(
        config, workers=max(1, args.workers),
        progress=None if args.quiet else progress)
    os.makedirs(args.out, exist_ok=True)
    harness.emit_csv(records, os.path.join(args.out, "records.csv"))
    harness.emit_csv(summaries, os.path.join(args.out, "summary.csv"))
    meta = {
        "config": config.to_dict(),
        "version": __version__,
        "started_at": started,
        "seeds": {"master": config.master_seed},
        "engine": backend.engine_name(),
    }
    with open(os.path.join(args.out, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not args.quiet:
        print(f"{'family':<16}{'model':<11}{'alpha0':>12}{'median':>10}"
              f"{'p5':>10}{'p95':>10}{'conv':>7}")
        for row in summaries:
            print(f"{row.family:<16}{row.model:<11}{row.alpha0:>12.4g}"
                  f"{row.median:>10.0f}{row.p5:>10.0f}{row.p95:>10.0f}"
                  f"{row.converged_fraction:>7.2f}")
    elapsed = time.perf_counter() - t0
    print(f"wrote {len(records)} records to {args.out} "
          f"(experiment {config.experiment_id()}, {elapsed:.1f}s, "
          f"engine {backend.engine_name()})")
    return 0


def cmd_trial(args) -> int:
    spec = _spec_from_args(args)
    ds = datagen.generate(spec)
    schedule = StepSchedule(args.alpha0, args.beta)
    stream = RngStream(args.seed).derive(f"samples/{args.model}/a0", args.trial)
    rec = harness.run_trial(ds, args.model, schedule, args.epsilon, args.k_max,
                            args.eval_stride, stream,
                            track_average=args.track_average,
                            collect_timing=True, engine=args.engine,
                            trial=args.trial)
    engine_used = ("python" if args.engine == "python"
                   or not backend.numba_enabled() else "numba")
    out = {
        "family": rec.family, "model": rec.model, "alpha0": rec.alpha0,
        "beta": rec.beta, "trial": rec.trial, "hit_time": rec.hit_time,
        "converged": rec.converged, "diverged": rec.diverged,
        "final_gap": rec.final_gap, "wall_nanos": rec.wall_nanos,
        "f_star": ds.f_star, "f_star_tolerance": ds.f_star_tolerance,
        "engine": engine_used,
    }
    if args.track_average:
        out["avg_gap"] = rec.avg_gap
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    checks = verify.run_all_checks(fast=args.fast)
    width = max(len(c.name) for c in checks)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        line = (f"{c.name:<{width}}  {status}  measured={c.measured:.6g} "
                f"threshold={c.threshold:.6g}")
        if c.detail:
            line += f"  ({c.detail})"
        print(line)
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump([c.to_dict() for c in checks], fh, indent=2, sort_keys=True)
            fh.write("\n")
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(checks)} checks passed")
    return 0


def _fmt_traj(vals, steps):
    shown = " ".join(f"{v:.4g}" for v in vals[:steps])
    return shown + (" ..." if len(vals) > steps else "")


def cmd_demo(args) -> int:
    sgm_q, prox_q, growth_q, stable_q = verify.divergence_demo_quartic()
    sgm_2, prox_2, growth_2, stable_2 = verify.divergence_demo_quadratic()
    print("f(x) = x^4 / 4, x_1 = 2, alpha_k = 1")
    print(f"  subgradient: {_fmt_traj(sgm_q, args.steps)}")
    print(f"    doubles every step, past 1e100 after {len(sgm_q) - 1} steps"
          f" [{'ok' if growth_q else 'VIOLATED'}]")
    print(f"  proximal (alpha_k = 1/k): {_fmt_traj(prox_q, args.steps)}")
    print(f"    bounded and non-increasing [{'ok' if stable_q else 'VIOLATED'}]")
    print("f(x) = x^2 / 2, x_1 = 1, alpha_k = 48 / k")
    print(f"  subgradient: {_fmt_traj(sgm_2, args.steps)}")
    print(f"    |x| at least doubles for 16 steps [{'ok' if growth_2 else 'VIOLATED'}]")
    print(f"  proximal: {_fmt_traj(prox_2, args.steps)}")
    print(f"    strictly decreasing [{'ok' if stable_2 else 'VIOLATED'}]")
    ok = growth_q and stable_q and growth_2 and stable_2
    if not ok:
        return 1
    print("any positive stepsize sends the subgradient method off to infinity "
          "on the quartic; the proximal versions never leave [0, x_1]")
    return 0


def cmd_gen(args) -> int:
    spec = _spec_from_args(args)
    ds = datagen.generate(spec)
    problems.save_dataset(ds, args.out)
    fs = "deferred" if ds.f_star is None else f"{ds.f_star!r}"
    print(f"wrote {ds.family} dataset ({ds.m} x {ds.n}) to {args.out}, f_star {fs}")
    return 0


def cmd_bench(args) -> int:
    # sigma keeps the gap floor above epsilon so every trial runs k_max steps;
    # hinge stays noiseless to dodge the slow long-horizon reference solver
    hinge = args.family == "MulticlassHinge"
    spec = datagen.GenSpec(family=args.family, m=args.m, n=args.n,
                           sigma=0.0 if hinge else 0.5, K=3 if hinge else 0,
                           p=0.1 if args.family == "Logistic" else 0.0, seed=11)
    ds = datagen.generate(spec)
    problems.ensure_reference(ds)
    epsilon = max(1e-9, 20.0 * ds.f_star_tolerance)
    engines = ["python"]
    if backend.numba_enabled():
        engines.insert(0, "kernel")
    else:
        print("numba disabled (PROXKIT_NUMBA=0 or not installed); "
              "timing the numpy path only")
    root = RngStream(29)
    schedule = StepSchedule(0.1, 0.6)
    nanos = {}
    for engine in engines:
        # first call absorbs compilation; timed repeats follow
        harness.run_trial(ds, args.model, schedule, epsilon, min(args.k_max, 200),
                          args.k_max, root.derive("warm"), engine=engine)
        best = None
        steps = args.k_max
        for r in range(args.repeats):
            rec = harness.run_trial(ds, args.model, schedule, epsilon, args.k_max,
                                    args.k_max, root.derive("bench", r),
                                    collect_timing=True, engine=engine)
            if best is None or rec.wall_nanos < best:
                best, steps = rec.wall_nanos, rec.hit_time
        nanos[engine] = best
        label = "numba kernels" if engine == "kernel" else "pure numpy   "
        print(f"{label}  {args.model:<10} {args.family:<16} "
              f"{best / 1e6:9.2f} ms total, {best / steps:8.1f} ns/step "
              f"({steps} steps, best of {args.repeats})")
    if len(engines) == 2:
        print(f"speedup: {nanos['python'] / nanos['kernel']:.1f}x")
    return 0


_COMMANDS = {
    "sweep": cmd_sweep,
    "trial": cmd_trial,
    "verify": cmd_verify,
    "demo-divergence": cmd_demo,
    "gen": cmd_gen,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NonCertifiedError as e:
        print(f"proxkit: reference optimum not certified: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"proxkit: i/o error: {e}", file=sys.stderr)
        return 3
    except ProxkitError as e:
        print(f"proxkit: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
