"""Command-line front end.

Exit codes: 0 success, 2 invalid input (including missing files), 3 numerical
failure. Sweeps write CSV files, a ``manifest.json`` and optional SVG plots
into ``--output``; ``--config manifest.json`` replays a previous run.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from statistics import median
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .estimation import EstimatorConfig, estimate_pseudo_spectral_gap
from .exceptions import NumericalFailure, ValidationError
from .experiments import (
    SweepConfig,
    random_pair_check,
    run_ar1_study,
    run_bound_sweep,
    run_coverage_study,
    run_gap_estimation_sweep,
    run_mse_study,
)
from .io import csv_text, read_kernel, read_scenario, read_trajectory
from .pacbayes import (
    BoundParams,
    MixingInputs,
    bound_finite_erm,
    bound_finite_erm_empirical,
    bound_markov,
    bound_markov_empirical,
    bound_rio_general,
    phi_mixing_bound,
)
from .plotting import line_plot
from .spectral import pseudo_spectral_gap

GAP_COLUMNS = ("t", "n", "seed", "gamma_true", "gamma_hat", "argmax_k")
BOUND_COLUMNS = ("t", "n", "seed", "bound_theory", "bound_empirical", "risk_true", "risk_emp",
                 "valid_theory", "valid_empirical")
MSE_COLUMNS = ("t", "n", "replications", "mse")
COVERAGE_COLUMNS = ("t", "n", "bound", "delta", "replications", "coverage", "wilson_lo", "wilson_hi")
AR1_COLUMNS = ("a", "n", "seed", "gamma_true", "gamma_hat", "eps_radius", "within")
PAIR_COLUMNS = ("d", "pair", "gamma_base", "gamma_pair", "abs_diff")

# flags that describe where and how a run executes, not what it computes
RUNTIME_KEYS = {"output", "threads", "config", "command", "func"}


def _int_list(text: str) -> List[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def default_threads() -> int:
    env = os.environ.get("PACBAYES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def warn_k_epsilon(K: int, eps: float) -> None:
    need = math.ceil(2.0 / eps) if eps > 0 else math.inf
    if K < need:
        print(f"warning: K={K} is below ceil(2/eps)={need}; the relative-accuracy guarantee for "
              f"eps={eps} needs K >= {need}", file=sys.stderr)


# worker pool

@contextmanager
def worker_map(threads: int):
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads) as ex:
        def pmap(fn, items):
            items = list(items)
            return ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads)))

        yield pmap


# output handling

class OutputSet:
    """Collects artifacts as temporary files and publishes them together."""

    def __init__(self, directory: Optional[str]):
        self.dir = Path(directory or ".")
        self.pending: Dict[Path, Path] = {}

    def add(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        final = self.dir / name
        tmp = self.dir / f".{name}.tmp"
        tmp.write_text(text)
        self.pending[final] = tmp
        return final

    def commit(self) -> List[str]:
        for final, tmp in self.pending.items():
            os.replace(tmp, final)
        return [str(p) for p in self.pending]

    def discard(self) -> None:
        for tmp in self.pending.values():
            tmp.unlink(missing_ok=True)


def resolved_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in RUNTIME_KEYS}


def _finish(args, outputs: OutputSet, started: float) -> None:
    paths = sorted(str(p) for p in outputs.pending)
    manifest = {
        "command": args.command,
        "config": resolved_config(args),
        "master_seed": args.seed,
        "version": __version__,
        "outputs": paths,
        "threads": args.threads,
        "duration_s": round(time.monotonic() - started, 3),
    }
    outputs.add("manifest.json", json.dumps(manifest, indent=2) + "\n")
    for p in outputs.commit():
        print(p)


def _sweep_config(args, **extra) -> SweepConfig:
    scen = read_scenario(args.scenario) if getattr(args, "scenario", None) else {}
    d = scen.get("d", args.d)
    kw = dict(
        d=d,
        n_list=tuple(args.n),
        t_list=tuple(scen["t"]) if isinstance(scen.get("t"), list) else
        (scen["t"],) if "t" in scen else tuple(args.t),
        master_seed=args.seed,
        estimator=EstimatorConfig(args.K, args.alpha),
        epsilon=args.eps,
        a=args.a,
        p=scen.get("p", args.p),
        q=scen.get("q", args.q),
        label_probs=tuple(scen["label_probs"]) if "label_probs" in scen else None,
        base_kernel=tuple(map(tuple, scen["kernel"])) if "kernel" in scen else None,
    )
    kw.update(extra)
    if kw["base_kernel"] is None and d < 4:
        raise ValidationError(f"the benchmark family needs d >= 4, got {d}")
    return SweepConfig(**kw)


def _by_n_series(rows, y, n_key="n", x_key="t", agg=median) -> Dict[str, list]:
    out: Dict[str, Dict[float, list]] = {}
    for r in rows:
        out.setdefault(f"n={r[n_key]}", {}).setdefault(r[x_key], []).append(float(r[y]))
    return {k: [(x, agg(v)) for x, v in sorted(pts.items())] for k, pts in out.items()}


# subcommands

def cmd_gap(args) -> int:
    if args.eps is not None:
        warn_k_epsilon(args.K, args.eps)
    if (args.kernel is None) == (args.trajectory is None):
        raise ValidationError("give exactly one of --kernel or --trajectory")
    if args.kernel is not None:
        P = read_kernel(args.kernel)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = pseudo_spectral_gap(P, args.K)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        print(f"gamma_ps {res.value:.15g} argmax_k {res.argmax_k}")
        return 0
    traj = read_trajectory(args.trajectory, args.d)
    d = args.d if args.d is not None else int(traj.states.max()) + 1
    est = estimate_pseudo_spectral_gap(traj, d, EstimatorConfig(args.K, args.alpha))
    print(f"gamma_ps_hat {est.value:.15g} argmax_k {est.argmax_k}")
    return 0


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(f"formula {args.formula} needs {', '.join(missing)}")


def _mixing_inputs(path, n) -> MixingInputs:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    deltas = data.get("deltas", [1.0] * n)
    return MixingInputs(deltas, gamma_matrix=data.get("gamma_matrix"), phi=data.get("phi"))


def compute_bound(args):
    if args.delta is None:
        raise ValidationError("--delta is required (no default confidence level)")
    p = BoundParams(n=args.n, delta=args.delta, c=args.c, lam=args.lam, epsilon=args.eps, a=args.a)
    f = args.formula
    if f == "markov":
        _need(args, "gamma", "kl")
        return bound_markov(p, args.gamma, args.kl, args.emp_risk)
    if f == "markov-empirical":
        _need(args, "gamma", "kl")
        return bound_markov_empirical(p, args.gamma, args.kl, args.emp_risk)
    if f == "finite-erm":
        _need(args, "gamma", "M")
        return bound_finite_erm(p, args.gamma, args.M, empirical_risk=args.emp_risk)
    if f == "finite-erm-empirical":
        _need(args, "gamma", "M")
        return bound_finite_erm_empirical(p, args.gamma, args.M, empirical_risk=args.emp_risk)
    if f == "phi-mixing":
        _need(args, "gamma", "pi_star", "kl")
        return phi_mixing_bound(p, args.gamma, args.pi_star, args.kl, args.emp_risk)
    if f == "rio":
        _need(args, "mixing", "kl")
        return bound_rio_general(p, _mixing_inputs(args.mixing, args.n), args.kl, args.emp_risk)
    raise ValidationError(f"unknown formula {f}")


def cmd_bound(args) -> int:
    try:
        rep = compute_bound(args)
    except ValidationError as exc:
        if not args.allow_invalid or type(exc).__name__ != "LambdaTooLarge":
            raise
        rec = {"formula": args.formula, "rhs": None, "valid": False, "reason": str(exc), "delta": args.delta}
        print(json.dumps(rec, indent=2))
        return 0
    rec = rep.to_record()
    rec["rhs_increment"] = rep.increment
    if not rep.valid and not args.allow_invalid:
        print(f"error: {rep.reason} (vacuous regime: rhs-increment {rep.increment:.6g}; "
              f"pass --allow-invalid to emit the report)", file=sys.stderr)
        return 2
    print(json.dumps(rec, indent=2, default=float))
    return 0


def cmd_sweep(args) -> int:
    started = time.monotonic()
    if args.delta is None:
        raise ValidationError("--delta is required (no default confidence level)")
    warn_k_epsilon(args.K, args.eps)
    cfg = _sweep_config(args, seeds=tuple(range(args.seeds)), delta=args.delta)
    out = OutputSet(args.output)
    try:
        with worker_map(args.threads) as m:
            gap_rows = run_gap_estimation_sweep(cfg, m)
            bound_rows = run_bound_sweep(cfg, m)
        out.add("gap_sweep.csv", csv_text(gap_rows, GAP_COLUMNS))
        out.add("bound_sweep.csv", csv_text(bound_rows, BOUND_COLUMNS))
        if args.plot:
            series = _by_n_series(gap_rows, "gamma_hat")
            series = {f"estimate {k}": v for k, v in series.items()}
            series["exact"] = sorted({(r["t"], r["gamma_true"]) for r in gap_rows})
            out.add("gap_sweep.svg", line_plot(series, "pseudo-spectral gap", "t", "gamma_ps"))
            bseries = {}
            for col, label in (("bound_theory", "exact-gap bound"), ("bound_empirical", "estimated-gap bound"),
                               ("risk_true", "true risk")):
                for k, v in _by_n_series(bound_rows, col).items():
                    bseries[f"{label} {k}"] = v
            out.add("bound_sweep.svg", line_plot(bseries, "risk bounds", "t", "risk"))
        _finish(args, out, started)
    except BaseException:
        out.discard()
        raise
    return 0


def cmd_mse(args) -> int:
    started = time.monotonic()
    cfg = _sweep_config(args, replications=args.replications)
    out = OutputSet(args.output)
    try:
        with worker_map(args.threads) as m:
            rows = run_mse_study(cfg, m)
        out.add("mse.csv", csv_text(rows, MSE_COLUMNS))
        if args.plot:
            out.add("mse.svg", line_plot(_by_n_series(rows, "mse"), "estimator MSE", "t", "MSE"))
        _finish(args, out, started)
    except BaseException:
        out.discard()
        raise
    return 0


def cmd_coverage(args) -> int:
    started = time.monotonic()
    if args.delta is None:
        raise ValidationError("--delta is required (no default confidence level)")
    cfg = _sweep_config(args, replications=args.replications, delta=args.delta)
    out = OutputSet(args.output)
    try:
        with worker_map(args.threads) as m:
            rows = run_coverage_study(cfg, m)
        out.add("coverage.csv", csv_text(rows, COVERAGE_COLUMNS))
        if args.plot:
            series = {}
            for r in rows:
                series.setdefault(f"{r['bound']} n={r['n']}", []).append((r["t"], r["coverage"]))
            series["1 - delta"] = [(min(cfg.t_list), 1 - args.delta), (max(cfg.t_list), 1 - args.delta)]
            out.add("coverage.svg", line_plot(series, "coverage", "t", "fraction", dashed=("1 - delta",)))
        _finish(args, out, started)
    except BaseException:
        out.discard()
        raise
    return 0


def cmd_ar1(args) -> int:
    started = time.monotonic()
    if args.delta is None:
        raise ValidationError("--delta is required (no default confidence level)")
    out = OutputSet(args.output)
    try:
        with worker_map(args.threads) as m:
            rows = run_ar1_study(args.a, args.n, range(args.seeds), args.delta, args.seed, m)
        out.add("ar1.csv", csv_text(rows, AR1_COLUMNS))
        for a in args.a:
            for n in args.n:
                cell = [r["within"] for r in rows if r["a"] == a and r["n"] == n]
                print(f"a={a:g} n={n} within-radius fraction {sum(cell) / len(cell):.4f}", file=sys.stderr)
        if args.plot:
            series = {}
            for a in args.a:
                for n in args.n:
                    cell = [r["within"] for r in rows if r["a"] == a and r["n"] == n]
                    series.setdefault(f"a={a:g}", []).append((math.log10(n), sum(cell) / len(cell)))
            out.add("ar1.svg", line_plot(series, "AR(1) radius coverage", "log10 n", "fraction"))
        _finish(args, out, started)
    except BaseException:
        out.discard()
        raise
    return 0


def cmd_pair_check(args) -> int:
    rows = random_pair_check(tuple(args.d), args.pairs, args.K, args.seed)
    worst = max(r["abs_diff"] for r in rows)
    print(f"pairs checked {len(rows)} max |gamma_pair - gamma_base| {worst:.3g}")
    if args.output:
        out = OutputSet(args.output)
        out.add("pair_check.csv", csv_text(rows, PAIR_COLUMNS))
        out.commit()
    if worst > args.tol:
        raise NumericalFailure(f"pair-chain gap differs from the base gap by {worst:.3g} > {args.tol}")
    return 0


# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $PACBAYES_THREADS or available CPUs)")
    common.add_argument("--output", "-o", default=None, help="output directory")
    common.add_argument("--plot", action="store_true", help="also write SVG plots")
    common.add_argument("--config", default=None, help="JSON config or manifest supplying defaults")

    est = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    est.add_argument("--K", type=int, default=20, help="largest power in the pseudo-gap maximum")
    est.add_argument("--alpha", type=float, default=1.0, help="count smoothing")

    grid = argparse.ArgumentParser(add_help=False, allow_abbrev=False, parents=[est])
    grid.add_argument("--d", type=int, default=20)
    grid.add_argument("--n", type=_int_list, default=[10, 100, 1000, 10000])
    grid.add_argument("--t", type=_float_list, default=[k / 20 for k in range(21)])
    grid.add_argument("--p", type=float, default=0.01)
    grid.add_argument("--q", type=float, default=0.001)
    grid.add_argument("--eps", type=float, default=0.1)
    grid.add_argument("--a", type=float, default=0.1)
    grid.add_argument("--scenario", default=None, help="scenario JSON {d, kernel, label_probs, p, q, t}")

    ap = argparse.ArgumentParser(prog="markov-pacbayes", description=__doc__.splitlines()[0],
                                 allow_abbrev=False)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gap", allow_abbrev=False, parents=[common, est], help="exact or estimated pseudo-spectral gap")
    g.add_argument("--kernel")
    g.add_argument("--trajectory")
    g.add_argument("--exact", action="store_true", help="exact gap of --kernel (the default for kernels)")
    g.add_argument("--d", type=int, default=None)
    g.add_argument("--eps", type=float, default=None, help="target relative accuracy, for the K check")
    g.set_defaults(func=cmd_gap)

    b = sub.add_parser("bound", allow_abbrev=False, parents=[common], help="evaluate one PAC-Bayes bound")
    b.add_argument("--formula", required=True,
                   choices=["markov", "markov-empirical", "finite-erm", "finite-erm-empirical", "phi-mixing", "rio"])
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--delta", type=float, default=None)
    b.add_argument("--c", type=float, default=1.0)
    b.add_argument("--lambda", dest="lam", type=float, default=None)
    b.add_argument("--gamma", type=float, default=None, help="gap, or estimated gap for empirical formulas")
    b.add_argument("--kl", type=float, default=None)
    b.add_argument("--M", type=int, default=None)
    b.add_argument("--eps", type=float, default=0.1)
    b.add_argument("--a", type=float, default=0.1)
    b.add_argument("--emp-risk", type=float, default=0.0)
    b.add_argument("--pi-star", type=float, default=None)
    b.add_argument("--mixing", default=None, help="JSON {deltas, phi | gamma_matrix}")
    b.add_argument("--allow-invalid", action="store_true")
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("sweep", allow_abbrev=False, parents=[common, grid], help="gap and bound sweeps over (t, n, seed)")
    s.add_argument("--seeds", type=int, default=1, help="number of seeds per cell")
    s.add_argument("--delta", type=float, default=None)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("mse", allow_abbrev=False, parents=[common, grid], help="estimator MSE over replications")
    m.add_argument("--replications", type=int, default=100)
    m.set_defaults(func=cmd_mse, n=[1000])

    c = sub.add_parser("coverage", allow_abbrev=False, parents=[common, grid], help="Monte Carlo coverage of the bounds")
    c.add_argument("--replications", type=int, default=100)
    c.add_argument("--delta", type=float, default=None)
    c.set_defaults(func=cmd_coverage)

    r = sub.add_parser("ar1", allow_abbrev=False, parents=[common], help="AR(1) gap estimation study")
    r.add_argument("--a", type=_float_list, required=True)
    r.add_argument("--n", type=_int_list, required=True)
    r.add_argument("--seeds", type=int, default=100)
    r.add_argument("--delta", type=float, default=None)
    r.set_defaults(func=cmd_ar1)

    pc = sub.add_parser("pair-check", allow_abbrev=False, parents=[common], help="compare pair-chain and base-chain gaps")
    pc.add_argument("--d", type=_int_list, default=[2, 3, 4])
    pc.add_argument("--pairs", type=int, default=25)
    pc.add_argument("--K", type=int, default=20)
    pc.add_argument("--tol", type=float, default=1e-8)
    pc.set_defaults(func=cmd_pair_check)
    return ap


def _config_defaults(argv: Sequence[str]):
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return None, {}
    data = json.loads(Path(known.config).read_text())
    if "config" in data and "command" in data:
        cfg = dict(data["config"])
        if "master_seed" in data:
            cfg.setdefault("seed", data["master_seed"])
        return data["command"], cfg
    return data.pop("command", None), data


def parse_args(argv: Optional[Sequence[str]] = None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    command, defaults = _config_defaults(argv)
    subs = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    if command is not None:
        if command not in subs.choices:
            raise ValidationError(f"config names unknown command {command!r}")
        if not any(a in subs.choices for a in argv):
            argv = [command] + argv
        sp = subs.choices[command]
        known = {a.dest for a in sp._actions}
        unknown = set(defaults) - known
        if unknown:
            raise ValidationError(f"config has unknown keys {sorted(unknown)}")
        sp.set_defaults(**defaults)
        # values from the config satisfy options the parser marks as required
        for a in sp._actions:
            if a.dest in defaults:
                a.required = False
    args = ap.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        return args.func(args)
    except (ValidationError, FileNotFoundError, IsADirectoryError, PermissionError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
