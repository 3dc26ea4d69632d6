"""Command-line front end.

Subcommands: `bench` (sample-complexity sweep to CSV), `theorem1`
(approximation-bound sandwich check), `potentials` (derivative and Sobolev
diagnostics), `kernel-sgd` (stochastic dual solver against the Sinkhorn
oracle). Every command honors --seed and is reproducible; --threads never
changes outputs. Exit codes: 0 success, 1 usage/config error, 2 numerical
failure in a check command.
"""

from __future__ import annotations

import argparse
import configparser
import io
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import bench as bench_mod
from . import block_approx, exact_ot, potentials as pot_mod, rkhs
from .measures import (
    Domain,
    Sampler,
    cost_matrix,
    l1_cost,
    sample,
    squared_euclidean_cost,
)
from .sinkhorn import SinkhornConfig, sinkhorn_solve

__all__ = ["Config", "main"]

ENV_THREADS = "SINKHORN_LAB_THREADS"


@dataclass(frozen=True)
class Config:
    """Flat benchmark/solver configuration; serializes to INI-style sections."""

    dims: tuple = (2,)
    epsilons: tuple = (1.0,)
    n_values: tuple = (32, 64, 128, 256, 512, 1024, 2048, 4096)
    reps: int = 100
    seed: int = 0
    dist: str = "uniform"
    cost: str = "sqeuclidean"
    cube_side: float = 1.0
    tolerance: float = 1e-6
    max_iterations: int = 10_000
    overrelaxation: float = 1.7
    threads: int = 1


_LAYOUT = {
    "grid": ("dims", "epsilons", "n_values", "reps", "seed"),
    "sampler": ("dist", "cube_side"),
    "cost": ("cost",),
    "solver": ("tolerance", "max_iterations", "overrelaxation"),
    "run": ("threads",),
}
_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _fmt_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name: str, text: str):
    text = text.strip()
    if name in ("dims", "n_values"):
        return tuple(int(x) for x in text.split(","))
    if name == "epsilons":
        return tuple(float(x) for x in text.split(","))
    if name in ("reps", "seed", "max_iterations", "threads"):
        return int(text)
    if name in ("cube_side", "tolerance", "overrelaxation"):
        return float(text)
    return text


def config_to_text(cfg: Config) -> str:
    cp = configparser.ConfigParser()
    for section, names in _LAYOUT.items():
        cp[section] = {name: _fmt_value(getattr(cfg, name)) for name in names}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_from_text(text: str) -> Config:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    values = {}
    for section in cp.sections():
        if section not in _LAYOUT:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            if key not in _LAYOUT[section]:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
            values[key] = _parse_value(key, raw)
    return Config(**values)


def load_config(path: str) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def save_config(cfg: Config, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_text(cfg))


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str):
    return tuple(int(x) for x in text.split(","))


def _float_list(text: str):
    return tuple(float(x) for x in text.split(","))


def _build_parser() -> _Parser:
    p = _Parser(prog="sinkhornlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file; explicit flags win")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out-dir", default=".")

    b = sub.add_parser("bench", help="sample-complexity sweep; writes results.csv and slopes.csv")
    common(b)
    b.add_argument("--dims", type=_int_list, default=None)
    b.add_argument("--epsilons", type=_float_list, default=None)
    b.add_argument("--n", type=_int_list, default=None, dest="n_values")
    b.add_argument("--reps", type=int, default=None)
    b.add_argument("--dist", choices=("uniform", "normal"), default=None)
    b.add_argument("--cost", choices=("sqeuclidean", "l1"), default=None)
    b.add_argument("--cube-side", type=float, default=None)
    b.add_argument("--tolerance", type=float, default=None)
    b.add_argument("--max-iter", type=int, default=None, dest="max_iterations")
    b.add_argument("--overrelax", type=float, default=None, dest="overrelaxation")
    b.add_argument("--force-identical", action="store_true",
                   help="draw the second sample identical to the first (self-divergence check)")

    t = sub.add_parser("theorem1", help="exact-vs-regularized sandwich check")
    common(t)
    t.add_argument("--dims", type=_int_list, default=(2,))
    t.add_argument("--epsilons", type=_float_list, default=(0.02, 0.1, 0.5))
    t.add_argument("--n", type=int, default=32)
    t.add_argument("--instances", type=int, default=10)

    q = sub.add_parser("potentials", help="1D potential derivative and Sobolev diagnostics")
    common(q)
    q.add_argument("--dim", type=int, default=1)
    q.add_argument("--atoms", type=int, default=24)
    q.add_argument("--epsilons", type=_float_list, default=(0.01, 0.0215, 0.0464, 0.1, 1.0, 100.0, 1000.0))
    q.add_argument("--order", type=int, default=2)
    q.add_argument("--nodes", type=int, default=2048)

    k = sub.add_parser("kernel-sgd", help="stochastic dual ascent vs the Sinkhorn oracle")
    common(k)
    k.add_argument("--n", type=int, default=20)
    k.add_argument("--eps", type=float, default=0.5)
    k.add_argument("--iterations", type=int, default=100_000)
    k.add_argument("--runs", type=int, default=5)
    k.add_argument("--lam", type=float, default=None)
    return p


def _merge_config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    updates = {}
    for name in (
        "dims", "epsilons", "n_values", "reps", "seed", "dist", "cost",
        "cube_side", "tolerance", "max_iterations", "overrelaxation", "threads",
    ):
        val = getattr(args, name, None)
        if val is not None:
            updates[name] = val
    if "threads" not in updates and args.threads is None:
        env = os.environ.get(ENV_THREADS)
        if env:
            updates["threads"] = int(env)
    return replace(cfg, **updates)


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def slopes_to_csv(fits, rate_constants=None) -> str:
    """slopes.csv schema; a theory_rate_constant column is appended when the
    domain is bounded (rate envelope is that constant divided by sqrt(n))."""
    header = ("d,epsilon,slope,intercept,residual,n_points,n_min,n_max,"
              "excluded_nonconverged,excluded_nonpositive")
    if rate_constants is not None:
        header += ",theory_rate_constant"
    lines = [header]
    for f in fits:
        row = [
            _fmt(f.d), _fmt(float(f.epsilon)), _fmt(f.slope), _fmt(f.intercept),
            _fmt(f.residual), _fmt(f.n_points), _fmt(f.n_min), _fmt(f.n_max),
            _fmt(f.excluded_nonconverged), _fmt(f.excluded_nonpositive),
        ]
        if rate_constants is not None:
            row.append(_fmt(rate_constants[(f.d, f.epsilon)]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    try:
        cfg = _merge_config(args)
        grid = bench_mod.ExperimentGrid(
            dims=cfg.dims,
            epsilons=cfg.epsilons,
            n_values=cfg.n_values,
            repetitions=cfg.reps,
            sampler=cfg.dist,
            cost=cfg.cost,
            cube_side=cfg.cube_side,
            master_seed=cfg.seed,
            marginal_tolerance=cfg.tolerance,
            max_iterations=cfg.max_iterations,
            overrelaxation=cfg.overrelaxation,
            force_identical=bool(getattr(args, "force_identical", False)),
        )
    except (ValueError, OSError) as exc:
        print(f"sinkhornlab bench: {exc}", file=sys.stderr)
        return 1
    records = bench_mod.run_grid(grid, threads=cfg.threads)
    fits = bench_mod.fit_slopes(records)
    rate_constants = None
    if cfg.dist == "uniform":
        rate_constants = {}
        for d in cfg.dims:
            dom = grid.domain(d)
            kern = rkhs.matern_for_dimension(d)
            for eps in cfg.epsilons:
                tc = rkhs.theory_constants(dom, grid.ground_cost(d), eps, kern)
                rate_constants[(d, eps)] = tc.theorem3_rate(1)
    else:
        print("warning: unbounded domain, theory bound columns omitted", file=sys.stderr)
    os.makedirs(args.out_dir, exist_ok=True)
    _write(os.path.join(args.out_dir, "results.csv"), bench_mod.records_to_csv(records))
    _write(os.path.join(args.out_dir, "slopes.csv"), slopes_to_csv(fits, rate_constants))
    print(f"wrote {len(records)} records and {len(fits)} slope fits to {args.out_dir}")
    return 0


def cmd_theorem1(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rows = []
    all_pass = True
    for d in args.dims:
        dom = Domain.unit_cube(d)
        cost = squared_euclidean_cost(dom)
        L, D = cost.lipschitz, dom.diameter
        for inst in range(args.instances):
            a = sample(Sampler.uniform_cube(d, seed), args.n, 0, inst)
            b = sample(Sampler.uniform_cube(d, seed), args.n, 1, inst)
            C = cost_matrix(cost, a, b)
            exact = exact_ot.solve_exact(C, a.weights, b.weights)
            if args.n <= exact_ot.BRUTE_CAP:
                brute = exact_ot.brute_force_exact(C)
                if abs(brute - exact.cost) > 1e-10:
                    print(f"FAIL d={d} inst={inst}: assignment {exact.cost!r} != brute {brute!r}")
                    all_pass = False
            for eps in args.epsilons:
                scfg = SinkhornConfig(
                    epsilon=eps, max_iterations=200_000, overrelaxation=1.5
                )
                res = sinkhorn_solve(C, a, b, scfg)
                gap = res.primal_value - exact.cost
                bound = block_approx.theorem1_bound(eps, d, L, D)
                ok = -1e-9 <= gap <= bound + 1e-6
                all_pass &= ok
                rows.append((d, eps, args.n, inst, exact.cost, res.primal_value, gap, bound, ok))
                print(
                    f"d={d} eps={eps:g} n={args.n} inst={inst}: W={exact.cost:.6f} "
                    f"W_eps={res.primal_value:.6f} gap={gap:.3e} bound={bound:.3e} "
                    f"{'PASS' if ok else 'FAIL'}"
                )
    os.makedirs(args.out_dir, exist_ok=True)
    lines = ["d,epsilon,n,instance,W,W_eps,gap,bound,pass"]
    for r in rows:
        lines.append(",".join(_fmt(x if not isinstance(x, np.floating) else float(x)) for x in r))
    _write(os.path.join(args.out_dir, "theorem1.csv"), "\n".join(lines) + "\n")
    print("theorem1:", "PASS" if all_pass else "FAIL")
    return 0 if all_pass else 2


def cmd_potentials(args) -> int:
    if args.dim != 1:
        print("potential derivative checks are one-dimensional (use --dim 1)", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else 0
    dom = Domain.unit_cube(1)
    cost = squared_euclidean_cost(dom)
    a = sample(Sampler.uniform_cube(1, seed), args.atoms, 0)
    b = sample(Sampler.uniform_cube(1, seed), args.atoms, 1)
    grid = np.linspace(0.02, 0.98, 241)
    h = 1e-5
    print("eps  max|u'-fd|/scale  max|u''-fd2|/scale  max|u'|  L  max|sum(gamma b)-1|")
    rows = []
    for eps in args.epsilons:
        dual = pot_mod.semidiscrete_potential(
            b, cost, eps, against=a,
            cfg=SinkhornConfig(epsilon=eps, max_iterations=200_000, overrelaxation=1.5),
        )
        rec = pot_mod.potential_derivative(dual, max(2, args.order), grid)
        fd1 = (dual.u(grid + h) - dual.u(grid - h)) / (2 * h)
        h2 = 1e-4
        fd2 = (dual.u(grid + h2) - 2 * dual.u(grid) + dual.u(grid - h2)) / h2**2
        s1 = max(1.0, float(np.abs(rec.derivatives[0]).max()))
        s2 = max(1.0, float(np.abs(rec.derivatives[1]).max()))
        r1 = float(np.abs(rec.derivatives[0] - fd1).max()) / s1
        r2 = float(np.abs(rec.derivatives[1] - fd2).max()) / s2
        sup1 = float(np.abs(rec.derivatives[0]).max())
        norm_gap = float(np.abs(dual.gamma_weights(grid).sum(axis=1) - 1.0).max())
        rows.append((eps, r1, r2, sup1, cost.lipschitz, norm_gap))
        print(f"{eps:8.4g}  {r1:.3e}  {r2:.3e}  {sup1:.4f}  {cost.lipschitz:.4f}  {norm_gap:.2e}")
    scaling = pot_mod.sobolev_scaling_experiment(
        args.epsilons, 2, a, b, cost, num_nodes=args.nodes
    )
    print("\neps vs H^2 norm (fitted small-eps slope "
          f"{scaling.fit_slope:.3f} over {scaling.fit_range}):")
    for e, nrm in zip(scaling.eps_values, scaling.norms):
        print(f"  eps={e:10.4g}  norm={nrm:.6f}")
    os.makedirs(args.out_dir, exist_ok=True)
    lines = ["eps,uprime_resid,usecond_resid,uprime_sup,lipschitz,gamma_norm_gap"]
    for r in rows:
        lines.append(",".join(_fmt(float(x)) for x in r))
    lines.append("")
    lines.append("eps,h2_norm")
    for e, nrm in zip(scaling.eps_values, scaling.norms):
        lines.append(f"{_fmt(float(e))},{_fmt(float(nrm))}")
    _write(os.path.join(args.out_dir, "potentials.csv"), "\n".join(lines) + "\n")
    return 0


def cmd_kernel_sgd(args) -> int:
    seed = args.seed if args.seed is not None else 0
    dom = Domain.unit_cube(1)
    cost = squared_euclidean_cost(dom)
    a = sample(Sampler.uniform_cube(1, seed), args.n, 0)
    b = sample(Sampler.uniform_cube(1, seed), args.n, 1)
    C = cost_matrix(cost, a, b)
    oracle = sinkhorn_solve(C, a, b, SinkhornConfig(epsilon=args.eps))
    kern = rkhs.matern_for_dimension(1)
    lam = args.lam if args.lam is not None else rkhs.calibrate_ball_radius(oracle, a, b, kern)
    gaps = []
    trace_lines = ["run,iteration,objective"]
    failed = False
    for run in range(args.runs):
        res = rkhs.kernel_sgd_dual(
            a, b, cost, args.eps, kern, lam, iterations=args.iterations, seed=seed + run
        )
        for it, obj in res.trace:
            trace_lines.append(f"{run},{int(it)},{_fmt(float(obj))}")
        if res.diverged:
            print(f"run {run}: FAIL (diverged)")
            failed = True
            continue
        gap = abs(res.final_objective - oracle.dual_value) / abs(oracle.dual_value)
        gaps.append(gap)
        print(f"run {run}: sgd={res.final_objective:.6f} oracle={oracle.dual_value:.6f} "
              f"rel gap={gap:.3%}")
    os.makedirs(args.out_dir, exist_ok=True)
    _write(os.path.join(args.out_dir, "kernel_sgd_trace.csv"), "\n".join(trace_lines) + "\n")
    if gaps:
        print(f"mean relative gap over {len(gaps)} runs: {float(np.mean(gaps)):.3%} (lam={lam:.4f})")
    if failed:
        print("kernel-sgd: FAIL")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "bench": cmd_bench,
        "theorem1": cmd_theorem1,
        "potentials": cmd_potentials,
        "kernel-sgd": cmd_kernel_sgd,
    }
    try:
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"sinkhornlab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
