"""Command-line front end.

Subcommands: simulate | stationary | mfpt | committor | spectrum |
convergence | colloid.  Runs are configured by a flat INI file whose keys
are mirrored by flags; the resolved configuration is echoed next to the
outputs so every run is reproducible from its artifacts.
"""

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bench, spectral
from .errors import (CtrwError, DomainViolation, InadmissibleDiffusion,
                     InvalidParams, NotDiagonallyDominant, ParseError,
                     RealizabilityViolation, StepBudgetExceeded,
                     UnknownProblem, ValidationError)
from .generator import SCHEME_IDS, build_generator
from .mesh import log_mesh_1d, log_mesh_2d, periodic_mesh_2d, uniform_mesh_1d, Mesh2D
from .model import PROBLEM_NAMES, linear_flow_matrix, make_problem
from .ssa import RngStream, simulate, write_trajectory_csv
from .tridiag import Tridiag1D, committor, invariant_density, mfpt

EXIT_CONFIG, EXIT_REALIZABILITY, EXIT_NUMERICAL, EXIT_BUDGET = 2, 3, 4, 5

_CONFIG_ERRORS = (ParseError, ValidationError, UnknownProblem, InvalidParams,
                  ValueError)
_REALIZABILITY_ERRORS = (RealizabilityViolation, NotDiagonallyDominant,
                         InadmissibleDiffusion, DomainViolation)


@dataclass
class RunConfig:
    subcommand: str
    problem: str = "cubic_oscillator"
    problem_params: dict = field(default_factory=dict)
    scheme: str = "c1d"
    h: float = 0.25
    e_star: float = 0.0
    x0: tuple = (1.0,)
    t_final: float = 1.0
    n_paths: int = 100
    seed: int = None
    step_budget: int = 10 ** 9
    study: str = "density"
    interval: tuple = (0.0, 2.0)
    h_list: tuple = ()
    out: str = "out"
    threads: int = 1


def _coerce(text):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if "," in text:
        return tuple(_coerce(t) for t in text.split(","))
    return text


def parse_config(path=None, overrides=None, subcommand="simulate"):
    """Read the INI config, apply flag overrides, validate everything."""
    cfg = RunConfig(subcommand=subcommand)
    if path:
        parser = configparser.ConfigParser()
        try:
            read = parser.read(path)
        except configparser.Error as exc:
            raise ParseError(f"{path}: {exc}") from exc
        if not read:
            raise ParseError(f"config file {path} not found")
        for section in parser.sections():
            for key, raw in parser.items(section):
                val = _coerce(raw)
                if section == "problem":
                    if key == "name":
                        cfg.problem = str(val)
                    else:
                        cfg.problem_params[key] = val
                elif section == "scheme":
                    if key == "id":
                        cfg.scheme = str(val)
                    elif key == "h":
                        cfg.h = float(val)
                    elif key == "h_list":
                        cfg.h_list = val if isinstance(val, tuple) else (val,)
                    elif key == "e_star":
                        cfg.e_star = float(val)
                    else:
                        cfg.problem_params[key] = val
                elif section == "run":
                    _apply_run_key(cfg, key, val)
                elif section == "output":
                    if key in ("dir", "out"):
                        cfg.out = str(val)
                else:
                    raise ParseError(f"unknown config section [{section}]")
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        setattr(cfg, key, val)
    _validate(cfg)
    return cfg


def _apply_run_key(cfg, key, val):
    if key == "x0":
        cfg.x0 = val if isinstance(val, tuple) else (float(val),)
    elif key in ("t", "t_final"):
        cfg.t_final = float(val)
    elif key in ("paths", "n_paths"):
        cfg.n_paths = int(val)
    elif key == "seed":
        cfg.seed = int(val)
    elif key == "step_budget":
        cfg.step_budget = int(val)
    elif key == "study":
        cfg.study = str(val)
    elif key == "interval":
        cfg.interval = tuple(float(v) for v in val)
    else:
        raise ParseError(f"unknown [run] key {key!r}")


def _validate(cfg):
    if cfg.problem not in PROBLEM_NAMES:
        raise ValidationError(
            f"problem: unknown name {cfg.problem!r}; valid: {PROBLEM_NAMES}")
    if cfg.scheme not in SCHEME_IDS:
        raise ValidationError(
            f"scheme: unknown id {cfg.scheme!r}; valid: {SCHEME_IDS}")
    if cfg.seed is None:
        raise ValidationError("seed: required (no silent nondeterminism)")
    if cfg.h <= 0:
        raise ValidationError("h: must be positive")
    if cfg.t_final <= 0:
        raise ValidationError("t_final: must be positive")
    cfg.threads = int(os.environ.get("CTRW_THREADS", "1"))


def echo_config(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    parser = configparser.ConfigParser()
    parser["problem"] = {"name": cfg.problem,
                         **{k: _ini(v) for k, v in sorted(cfg.problem_params.items())}}
    parser["scheme"] = {"id": cfg.scheme, "h": _ini(cfg.h)}
    if cfg.h_list:
        parser["scheme"]["h_list"] = _ini(cfg.h_list)
    if cfg.e_star:
        parser["scheme"]["e_star"] = _ini(cfg.e_star)
    parser["run"] = {"x0": _ini(cfg.x0), "t_final": _ini(cfg.t_final),
                     "n_paths": str(cfg.n_paths), "seed": str(cfg.seed),
                     "study": cfg.study, "interval": _ini(cfg.interval),
                     "step_budget": str(cfg.step_budget)}
    parser["output"] = {"dir": cfg.out}
    with open(os.path.join(cfg.out, "resolved_config.ini"), "w",
              newline="\n") as fh:
        parser.write(fh)


def _ini(v):
    if isinstance(v, tuple):
        return ",".join(_ini(x) for x in v)
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def build_sim_mesh(problem, cfg):
    """Mesh matched to the problem domain, anchored at the initial state."""
    x0 = cfg.x0
    if problem.dim == 1:
        if problem.domain.kind == "positive_orthant":
            return log_mesh_1d(cfg.h, np.log(x0[0]))
        return uniform_mesh_1d(x0[0], cfg.h)
    if problem.dim == 2:
        if problem.domain.periodic:
            lo, hi = problem.domain.lower[0], problem.domain.upper[0]
            return periodic_mesh_2d(lo, hi, cfg.h)
        if problem.lattice_m0 is not None:
            m0 = problem.lattice_m0
            mesh = log_mesh_2d((m0[0, 0], m0[0, 1], m0[1, 1]), cfg.h,
                               anchors=(np.log(x0[0]), np.log(x0[-1])))
            return mesh
        return Mesh2D(mx=uniform_mesh_1d(x0[0], cfg.h),
                      my=uniform_mesh_1d(x0[-1], cfg.h))
    return None     # gridless schemes carry their own step field


def _cmd_simulate(cfg):
    problem = make_problem(cfg.problem, cfg.problem_params)
    x0 = np.full(problem.dim, cfg.x0[0]) if len(cfg.x0) == 1 \
        else np.asarray(cfg.x0, dtype=float)
    if cfg.scheme in ("u1d", "c1d", "fv1d", "milestone1d", "u2d", "c2d"):
        mesh = build_sim_mesh(problem, cfg)
        gen = build_generator(problem, cfg.scheme, mesh=mesh)
    else:
        gen = build_generator(problem, cfg.scheme, h=cfg.h, seed=cfg.seed)
    traj = simulate(gen, x0, cfg.t_final, RngStream(cfg.seed, 0),
                    step_budget=cfg.step_budget)
    write_trajectory_csv(os.path.join(cfg.out, "trajectory.csv"), traj)
    return 0


def _tridiag_for(cfg, problem, window=None):
    mesh = build_sim_mesh(problem, cfg)
    if window is None:
        window, tri = bench.density_window(problem, mesh, cfg.scheme,
                                           *bench._initial_window(problem, mesh))
        return mesh, window, tri
    tri = Tridiag1D.from_scheme(problem, mesh, cfg.scheme, window)
    return mesh, window, tri


def _cmd_stationary(cfg):
    problem = make_problem(cfg.problem, cfg.problem_params)
    _, window, tri = _tridiag_for(cfg, problem)
    nu = invariant_density(tri, normalize="sum")
    rows = [(i, x, v) for i, x, v in zip(window, tri.x, nu)]
    bench.write_csv(os.path.join(cfg.out, "stationary.csv"), "i,x,nu", rows)
    return 0


def _cmd_bvp(cfg):
    problem = make_problem(cfg.problem, cfg.problem_params)
    a, b = cfg.interval
    n = round((b - a) / cfg.h)
    mesh = uniform_mesh_1d(a, cfg.h)
    tri = Tridiag1D.from_scheme(problem, mesh, cfg.scheme, range(0, n + 1))
    nu = invariant_density(tri, normalize="sum")
    q = committor(tri)
    u = mfpt(tri)
    rows = [(i, tri.x[i], nu[i], q[i], u[i]) for i in range(n + 1)]
    bench.write_csv(os.path.join(cfg.out, "bvp.csv"), "i,x,nu,q,u", rows)
    return 0


def _cmd_spectrum(cfg):
    problem = make_problem(cfg.problem, cfg.problem_params)
    mesh = build_sim_mesh(problem, cfg)
    e_star = cfg.e_star or 4.0
    half = int(np.ceil(2.0 * e_star / cfg.h)) + 2
    window = (range(-half, half + 1), range(-half, half + 1))
    tq = spectral.assemble(problem, mesh, cfg.scheme, e_star, window)
    vals = spectral.leading_eigenvalues(tq, k=20)
    ref = np.full(20, np.nan, dtype=complex)
    if problem.reference is not None and problem.reference.spectrum is not None:
        ref = spectral.pair_eigenvalues(vals, problem.reference.spectrum(20))
    rows = [(cfg.h, k, vals[k].real, vals[k].imag, ref[k].real, ref[k].imag)
            for k in range(len(vals))]
    bench.write_csv(os.path.join(cfg.out, "spectrum.csv"),
                    "h,k,re,im,re_ref,im_ref", rows)
    return 0


def _cmd_convergence(cfg):
    spec = bench.StudySpec(
        study=cfg.study, problem=cfg.problem, params=cfg.problem_params,
        scheme=cfg.scheme, h_list=cfg.h_list or (0.4, 0.2, 0.1, 0.05),
        t_final=cfg.t_final, n_paths=cfg.n_paths, seed=cfg.seed,
        x0=cfg.x0[0], interval=cfg.interval, out=cfg.out)
    if cfg.study == "density":
        bench.run_density_study(spec)
    elif cfg.study in ("mfpt", "committor"):
        bench.run_bvp_study(spec, kind=cfg.study)
    elif cfg.study == "weak":
        bench.run_weak_study(spec)
    elif cfg.study == "complexity":
        bench.run_complexity_study(spec)
    elif cfg.study == "holding":
        bench.run_holding_time_study(spec)
    elif cfg.study == "lv":
        bench.run_lv_study(spec)
    else:
        raise ValidationError(f"study: unknown study {cfg.study!r}")
    return 0


def _cmd_colloid(cfg):
    spec = bench.StudySpec(
        study="colloid", problem="colloid_cluster", params=cfg.problem_params,
        scheme="c_nd", h_list=cfg.h_list or (0.32,), t_final=cfg.t_final,
        n_paths=cfg.n_paths, seed=cfg.seed, out=cfg.out)
    bench.run_colloid_study(spec)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "stationary": _cmd_stationary,
    "mfpt": _cmd_bvp,
    "committor": _cmd_bvp,
    "spectrum": _cmd_spectrum,
    "convergence": _cmd_convergence,
    "colloid": _cmd_colloid,
}


def dispatch(cfg):
    """Run the configured subcommand; returns the process exit status."""
    try:
        echo_config(cfg)
        return _COMMANDS[cfg.subcommand](cfg)
    except _CONFIG_ERRORS as exc:
        print(f"error_category=config {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _REALIZABILITY_ERRORS as exc:
        print(f"error_category=realizability {exc}", file=sys.stderr)
        return EXIT_REALIZABILITY
    except StepBudgetExceeded as exc:
        print(f"error_category=budget {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (CtrwError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error_category=numerical {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ctrw",
        description="Realizable SDE discretizations simulated exactly with the SSA")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--h", type=float, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--T", type=float, default=None)
    parser.add_argument("--scheme", default=None)
    parser.add_argument("--problem", default=None)
    parser.add_argument("--study", default=None)
    parser.add_argument("--x0", default=None)
    args = parser.parse_args(argv)
    overrides = {"out": args.out, "seed": args.seed, "h": args.h,
                 "n_paths": args.paths, "t_final": args.T,
                 "scheme": args.scheme, "problem": args.problem,
                 "study": args.study}
    if args.x0 is not None:
        val = _coerce(args.x0)
        overrides["x0"] = val if isinstance(val, tuple) else (float(val),)
    try:
        cfg = parse_config(args.config, overrides, subcommand=args.subcommand)
    except _CONFIG_ERRORS as exc:
        print(f"error_category=config {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
