"""Configuration-driven experiment runner.

Usage: ``sg-heat <study> --config <path> [--set key=value ...] --out <dir>``
with study one of sg-refine, sg-spacetime, mc-run, compare.  Configs are flat
``key = value`` text files; ``--set`` overrides individual keys.  Each study
writes a CSV with a frozen column contract plus a JSON run manifest.

Exit codes: 0 success, 1 solver failure (partial CSV flushed), 2 bad config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

STUDIES = ("sg-refine", "sg-spacetime", "mc-run", "compare")

SG_REFINE_COLUMNS = [
    "p_xi", "N_xi", "E_full_L2", "E_full_H1", "E_mean_L2", "E_mean_H1",
    "E_var_L2", "E_var_H1", "r_p_full", "r_xi_full", "E_trunc", "N_SG_slab",
    "avg_fgmres", "vmult_calls", "prec_calls",
    "wall_s", "solve_s", "apply_s", "prec_s", "W",
]
SG_SPACETIME_COLUMNS = [
    "level", "N_x", "N_slabs", "tau", "E_full_L2", "E_full_H1",
    "E_mean_L2", "E_mean_H1", "r_L2", "r_H1",
    "avg_fgmres", "vmult_calls", "prec_calls",
    "wall_s", "solve_s", "apply_s", "prec_s", "W",
]
MC_COLUMNS = [
    "N_mc", "E_tot_mean_L2", "r_tot_mean", "E_ex_mean_L2", "r_ex_mean",
    "E_tot_var_L2", "r_tot_var", "E_ex_var_L2", "r_ex_var",
    "E_disc_mean_L2", "E_disc_mean_H1", "E_disc_var_L2", "E_disc_var_H1",
    "wall_s",
]
COMPARE_COLUMNS = [
    "method", "resolution", "stoch_size", "E_mean_L2", "E_var_L2", "wall_s",
]


class ConfigError(Exception):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get(cfg: dict, key: str, cast, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config field: {key}")
        return default
    try:
        return cast(cfg[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid value for {key}: {cfg[key]!r} ({exc})") from exc


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.replace(",", " ").split()]


def _positive(name: str, value):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _fmt(value) -> str:
    """Round-tripping cell format so derived columns recompute exactly."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_row(writer, fh, columns, row: dict) -> None:
    writer.writerow([_fmt(row.get(c)) for c in columns])
    fh.flush()


def _solver_config(cfg: dict):
    from .krylov import FgmresConfig

    return FgmresConfig(
        rel_tol=_get(cfg, "rel_tol", float, 1e-10),
        abs_tol=_get(cfg, "abs_tol", float, 1e-14),
        max_iter=_get(cfg, "max_iter", int, 500),
    )


def _problem(cfg: dict):
    """Shared benchmark/space/time setup from config keys."""
    from . import benchmark, spatial_fem, time_slab

    M = _positive("M", _get(cfg, "M", int, 2))
    q = _get(cfg, "q", int)
    if q < 0:
        raise ConfigError(f"q must be >= 0, got {q}")
    eta = _positive("eta", _get(cfg, "eta", float, 0.35))
    d_min = _positive("d_min", _get(cfg, "d_min", float, 0.2))
    T = _positive("T", _get(cfg, "T", float, 1.0))
    level = _positive("level", _get(cfg, "level", int, 3))
    k = _positive("k", _get(cfg, "k", int, 2))
    r = _get(cfg, "r", int, 1)
    if r < 0:
        raise ConfigError(f"r must be >= 0, got {r}")
    n_slabs = _positive("n_slabs", _get(cfg, "n_slabs", int, 8))

    bench = benchmark.make_benchmark(M=M, q=q, eta=eta, d_min=d_min, T=T)
    # refinement level l = uniform mesh with 2^(l+1) cells per side
    mesh = spatial_fem.QuadMesh(2 ** (level + 1))
    space = spatial_fem.FeSpace(mesh, k)
    timebasis = time_slab.build_basis(r, T / n_slabs)
    return bench, space, timebasis, n_slabs, level


def run_sg_refine(cfg: dict, out_dir: Path) -> int:
    from . import benchmark, sg_system
    from .chaos import enumerate_basis

    bench, space, timebasis, n_slabs, _ = _problem(cfg)
    p_min = _get(cfg, "p_min", int, 0)
    p_max = _get(cfg, "p_max", int)
    if p_max < p_min or p_min < 0:
        raise ConfigError(f"need 0 <= p_min <= p_max, got [{p_min}, {p_max}]")
    solver = _solver_config(cfg)

    path = out_dir / "sg_refine.csv"
    prev = None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SG_REFINE_COLUMNS)
        fh.flush()
        for p in range(p_min, p_max + 1):
            basis = enumerate_basis(bench.M, p)
            trajectory, stats = sg_system.march(
                space, timebasis, basis, bench, n_slabs, solver
            )
            rep = benchmark.evaluate_errors(trajectory, bench, basis, space, timebasis)
            r_p = r_xi = None
            if prev is not None and prev[0] > 0 and rep.full_l2 > 0:
                r_p = math.log(prev[0] / rep.full_l2)
                r_xi = r_p / math.log(rep.n_xi / prev[1])
            prev = (rep.full_l2, rep.n_xi)
            _write_row(writer, fh, SG_REFINE_COLUMNS, {
                "p_xi": p,
                "N_xi": rep.n_xi,
                "E_full_L2": rep.full_l2,
                "E_full_H1": rep.full_h1,
                "E_mean_L2": rep.mean_l2,
                "E_mean_H1": rep.mean_h1,
                "E_var_L2": rep.var_l2,
                "E_var_H1": rep.var_h1,
                "r_p_full": r_p,
                "r_xi_full": r_xi,
                "E_trunc": benchmark.truncation_error(bench, p),
                "N_SG_slab": stats.n_sg_slab,
                "avg_fgmres": stats.avg_fgmres,
                "vmult_calls": stats.vmult_calls,
                "prec_calls": stats.prec_calls,
                "wall_s": stats.wall_s,
                "solve_s": stats.solve_s,
                "apply_s": stats.apply_s,
                "prec_s": stats.prec_s,
                "W": stats.work,
            })
    return 0


def run_sg_spacetime(cfg: dict, out_dir: Path) -> int:
    from . import benchmark, sg_system, spatial_fem, time_slab
    from .chaos import enumerate_basis

    bench, _, _, base_slabs, base_level = _problem(cfg)
    levels = _get(cfg, "levels", _int_list, None) if "levels" in cfg else None
    if levels is None:
        levels = [base_level, base_level + 1]
    if not levels:
        raise ConfigError("levels must be non-empty")
    p = _get(cfg, "p", int, bench.q)
    k = _positive("k", _get(cfg, "k", int, 2))
    r = _get(cfg, "r", int, 1)
    solver = _solver_config(cfg)
    basis = enumerate_basis(bench.M, p)

    path = out_dir / "sg_spacetime.csv"
    prev = None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SG_SPACETIME_COLUMNS)
        fh.flush()
        for i, level in enumerate(levels):
            if level < 1:
                raise ConfigError(f"mesh level must be >= 1, got {level}")
            # halve h and tau together: slabs double with each level step
            n_slabs = base_slabs * 2 ** (level - levels[0])
            mesh = spatial_fem.QuadMesh(2 ** (level + 1))
            space = spatial_fem.FeSpace(mesh, k)
            timebasis = time_slab.build_basis(r, bench.T / n_slabs)
            trajectory, stats = sg_system.march(
                space, timebasis, basis, bench, n_slabs, solver
            )
            rep = benchmark.evaluate_errors(trajectory, bench, basis, space, timebasis)
            r_l2 = r_h1 = None
            if prev is not None:
                e0_l2, e0_h1 = prev
                if e0_l2 > 0 and rep.full_l2 > 0:
                    r_l2 = math.log2(e0_l2 / rep.full_l2)
                if e0_h1 > 0 and rep.full_h1 > 0:
                    r_h1 = math.log2(e0_h1 / rep.full_h1)
            prev = (rep.full_l2, rep.full_h1)
            _write_row(writer, fh, SG_SPACETIME_COLUMNS, {
                "level": level,
                "N_x": space.n_dofs_total,
                "N_slabs": n_slabs,
                "tau": timebasis.tau,
                "E_full_L2": rep.full_l2,
                "E_full_H1": rep.full_h1,
                "E_mean_L2": rep.mean_l2,
                "E_mean_H1": rep.mean_h1,
                "r_L2": r_l2,
                "r_H1": r_h1,
                "avg_fgmres": stats.avg_fgmres,
                "vmult_calls": stats.vmult_calls,
                "prec_calls": stats.prec_calls,
                "wall_s": stats.wall_s,
                "solve_s": stats.solve_s,
                "apply_s": stats.apply_s,
                "prec_s": stats.prec_s,
                "W": stats.work,
            })
    return 0


def run_mc(cfg: dict, out_dir: Path) -> int:
    from . import monte_carlo

    bench, space, timebasis, n_slabs, _ = _problem(cfg)
    milestones = _get(cfg, "milestones", _int_list)
    if milestones != sorted(milestones) or len(set(milestones)) != len(milestones):
        raise ConfigError(f"milestones must be strictly increasing: {milestones}")
    seed = _get(cfg, "seed", int, 0)
    solve = _get(cfg, "mc_solve", lambda s: s.lower() in ("1", "true", "yes"), True)
    solver = _solver_config(cfg)

    reports = monte_carlo.run_ensemble(
        bench, space, timebasis, n_slabs, seed, milestones, solver, solve=solve
    )
    path = out_dir / "mc_run.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MC_COLUMNS)
        fh.flush()
        for rep in reports:
            _write_row(writer, fh, MC_COLUMNS, {
                "N_mc": rep.n_samples,
                "E_tot_mean_L2": rep.tot_mean_l2,
                "r_tot_mean": rep.rate_tot_mean,
                "E_ex_mean_L2": rep.mc_mean_l2,
                "r_ex_mean": rep.rate_mc_mean,
                "E_tot_var_L2": rep.tot_var_l2,
                "r_tot_var": rep.rate_tot_var,
                "E_ex_var_L2": rep.mc_var_l2,
                "r_ex_var": rep.rate_mc_var,
                "E_disc_mean_L2": rep.disc_mean_l2,
                "E_disc_mean_H1": rep.disc_mean_h1,
                "E_disc_var_L2": rep.disc_var_l2,
                "E_disc_var_H1": rep.disc_var_h1,
                "wall_s": rep.wall_s,
            })
    return 0


def run_compare(cfg: dict, out_dir: Path) -> int:
    from . import benchmark, monte_carlo, sg_system
    from .chaos import enumerate_basis

    bench, space, timebasis, n_slabs, _ = _problem(cfg)
    p_max = _get(cfg, "p_max", int)
    milestones = _get(cfg, "milestones", _int_list)
    seed = _get(cfg, "seed", int, 0)
    solver = _solver_config(cfg)

    path = out_dir / "compare.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARE_COLUMNS)
        fh.flush()
        for p in range(p_max + 1):
            basis = enumerate_basis(bench.M, p)
            trajectory, stats = sg_system.march(
                space, timebasis, basis, bench, n_slabs, solver
            )
            rep = benchmark.evaluate_errors(trajectory, bench, basis, space, timebasis)
            _write_row(writer, fh, COMPARE_COLUMNS, {
                "method": "sg",
                "resolution": f"p{p}",
                "stoch_size": rep.n_xi,
                "E_mean_L2": rep.mean_l2,
                "E_var_L2": rep.var_l2,
                "wall_s": stats.wall_s,
            })
        mc_reports = monte_carlo.run_ensemble(
            bench, space, timebasis, n_slabs, seed, milestones, solver
        )
        for rep in mc_reports:
            _write_row(writer, fh, COMPARE_COLUMNS, {
                "method": "mc",
                "resolution": f"N{rep.n_samples}",
                "stoch_size": rep.n_samples,
                "E_mean_L2": rep.tot_mean_l2,
                "E_var_L2": rep.tot_var_l2,
                "wall_s": rep.wall_s,
            })
    return 0


_RUNNERS = {
    "sg-refine": run_sg_refine,
    "sg-spacetime": run_sg_spacetime,
    "mc-run": run_mc,
    "compare": run_compare,
}


def _apply_threads_env() -> None:
    threads = os.environ.get("SG_HEAT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sg-heat", description="Space-time stochastic Galerkin study runner"
    )
    parser.add_argument("study", choices=STUDIES)
    parser.add_argument("--config", required=True, help="flat key=value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key",
    )
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    _apply_threads_env()
    t_start = time.perf_counter()
    try:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise ConfigError(f"config file not found: {cfg_path}")
        cfg = parse_config_text(cfg_path.read_text())
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            cfg[key.strip()] = value.strip()
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        status = _RUNNERS[args.study](cfg, out_dir)
    except ConfigError as exc:
        print(f"sg-heat: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"sg-heat: solver error: {exc}", file=sys.stderr)
        return 1

    manifest = {
        "study": args.study,
        "config": cfg,
        "total_wall_s": time.perf_counter() - t_start,
        "versions": _versions(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return status


def _versions() -> dict[str, str]:
    import numpy
    import scipy

    from . import __version__

    return {
        "sgheat": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


if __name__ == "__main__":
    sys.exit(main())
