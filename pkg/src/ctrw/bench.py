"""Benchmark harness: convergence studies, holding-time asymptotics,
complexity scaling, Lotka-Volterra regimes and the colloid collapse.

Every study returns a result object and, when an output directory is given,
writes raw CSV plus a machine-checkable JSON summary; re-running with the
same seed reproduces the files byte-for-byte.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import colloid as colloid_mod
from .ensemble import run_logmesh2d_occupation, run_mesh1d_ensemble
from .errors import InsufficientPaths, NonNormalizable
from .generator import build_generator
from .mesh import log_mesh_1d, log_mesh_2d, uniform_mesh_1d
from .model import lv_extinct_marginal, make_problem
from .ssa import RngStream, ssa_step
from .tridiag import (Tridiag1D, cell_average_density, committor,
                      exact_committor_profile, exact_mfpt_profile,
                      invariant_density, is_normalizable, mfpt,
                      normalized_masses, ode_transit_time)

SLOPE_RESIDUAL_LIMIT = 0.15     # log10 units; larger flags a non-asymptotic fit


@dataclass(frozen=True)
class StudySpec:
    study: str
    problem: str
    params: dict = field(default_factory=dict)
    scheme: str = "c1d"
    h_list: tuple = (0.4, 0.2, 0.1, 0.05)
    t_final: float = 1.0
    n_paths: int = 1000
    seed: int = 1
    x0: float = 1.0
    interval: tuple = (0.0, 2.0)
    out: str = ""

    def __post_init__(self):
        hs = tuple(self.h_list)
        if len(hs) >= 2 and any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("h_list must be strictly decreasing")


@dataclass
class ConvergenceResult:
    study: str
    h: np.ndarray
    errors: np.ndarray
    slope: float
    residual: float
    rows: list = field(default_factory=list)
    passed: bool = True

    def summary(self):
        return {"study": self.study, "slope": round(self.slope, 6),
                "residual": round(self.residual, 6),
                "pass": bool(self.passed and self.residual <= SLOPE_RESIDUAL_LIMIT)}


def fit_loglog(h, err):
    """Least-squares slope of log10(err) vs log10(h) and the max residual."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = err > 0
    lh, le = np.log10(h[keep]), np.log10(err[keep])
    slope, intercept = np.polyfit(lh, le, 1)
    resid = float(np.max(np.abs(slope * lh + intercept - le)))
    return float(slope), resid


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_summary(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(spec, result, header, rows, extra_summary=None):
    if not spec.out:
        return
    os.makedirs(spec.out, exist_ok=True)
    base = os.path.join(spec.out, spec.study)
    write_csv(base + ".csv", header, rows)
    payload = result.summary() if isinstance(result, ConvergenceResult) else dict(result)
    payload["params"] = {k: _jsonable(v) for k, v in spec.params.items()}
    payload.update({"problem": spec.problem, "scheme": spec.scheme,
                    "seed": spec.seed})
    if extra_summary:
        payload.update(extra_summary)
    write_summary(base + ".json", payload)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# window construction


def density_window(problem, mesh, scheme, i_lo, i_hi, tol=1e-12, chunk=8,
                   max_grow=400):
    """Grow the index window until the edge cell masses drop below
    tol * total (truncation-immaterial windows for density studies)."""
    for _ in range(max_grow):
        tri = Tridiag1D.from_scheme(problem, mesh, scheme, range(i_lo, i_hi + 1))
        w = invariant_density(tri, normalize="sum")
        grow_left = w[0] > tol
        grow_right = w[-1] > tol
        if not grow_left and not grow_right and is_normalizable(tri):
            return range(i_lo, i_hi + 1), tri
        if grow_left:
            i_lo -= chunk
        if grow_right:
            i_hi += chunk
    raise NonNormalizable("window growth did not terminate; check the problem")


def _density_mesh(problem, h):
    if problem.domain.kind == "positive_orthant":
        return log_mesh_1d(h, 0.0)
    return uniform_mesh_1d(0.0, h)


# ---------------------------------------------------------------------------
# studies


def run_density_study(spec):
    """l1 stationary-density error against the cell-averaged reference."""
    problem = make_problem(spec.problem, spec.params)
    if problem.reference is None or problem.reference.log_stationary_density is None:
        raise ValueError("density study needs a reference stationary density")
    rows, errs = [], []
    for h in spec.h_list:
        mesh = _density_mesh(problem, h)
        window, tri = density_window(problem, mesh, spec.scheme,
                                     *_initial_window(problem, mesh))
        num = normalized_masses(tri)
        ref = cell_average_density(problem, mesh, window)
        err = float(np.abs(num - ref).sum())
        rows.append((h, err, len(num)))
        errs.append(err)
    slope, resid = fit_loglog(spec.h_list, errs)
    result = ConvergenceResult(spec.study, np.array(spec.h_list),
                               np.array(errs), slope, resid, rows)
    _emit(spec, result, "h,l1_error,n_states", rows)
    return result


def _initial_window(problem, mesh):
    if problem.domain.kind == "positive_orthant":
        return mesh.locate(0.3), mesh.locate(3.0)
    return mesh.locate(-1.0), mesh.locate(1.0)


def run_bvp_study(spec, kind="mfpt"):
    """Sup-norm error of the closed-form solution against the quadrature
    oracle on the interval spec.interval."""
    problem = make_problem(spec.problem, spec.params)
    a, b = spec.interval
    rows, errs = [], []
    for h in spec.h_list:
        n = round((b - a) / h)
        if not np.isclose(n * h, b - a):
            raise ValueError(f"h={h} does not divide the interval ({a},{b})")
        mesh = uniform_mesh_1d(a, h)
        tri = Tridiag1D.from_scheme(problem, mesh, spec.scheme, range(0, n + 1))
        xs = tri.x[1:-1]
        if kind == "mfpt":
            num = mfpt(tri)[1:-1]
            ref = exact_mfpt_profile(problem, a, b, xs)
        elif kind == "committor":
            num = committor(tri)[1:-1]
            ref = exact_committor_profile(problem, a, b, xs)
        else:
            raise ValueError(f"unknown bvp kind {kind!r}")
        err = float(np.max(np.abs(num - ref)))
        rows.append((h, err, n))
        errs.append(err)
    slope, resid = fit_loglog(spec.h_list, errs)
    result = ConvergenceResult(spec.study, np.array(spec.h_list),
                               np.array(errs), slope, resid, rows)
    _emit(spec, result, "h,sup_error,n_cells", rows)
    return result


def run_weak_study(spec, observable="square"):
    """|MC estimate - closed-form moment| per step size, slope fitted where
    the bias is resolvable above Monte Carlo noise."""
    problem = make_problem(spec.problem, spec.params)
    ref_fn = problem.reference.moments.get(observable)
    if ref_fn is None:
        raise ValueError(f"no moment reference {observable!r}")
    ref = float(ref_fn(spec.t_final, spec.x0))
    rows = []
    for h in spec.h_list:
        mesh = log_mesh_1d(h, np.log(spec.x0)) \
            if problem.domain.kind == "positive_orthant" \
            else uniform_mesh_1d(spec.x0, h)
        res = run_mesh1d_ensemble(problem, mesh, spec.scheme, spec.x0,
                                  spec.t_final, spec.n_paths, spec.seed)
        vals = res.final_x ** 2 if observable == "square" else res.final_x
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / np.sqrt(spec.n_paths))
        bias = abs(mean - ref)
        rows.append((h, mean, stderr, bias, float(res.jumps.mean())))
    resolved = [(h, bias) for h, _, stderr, bias, _ in rows if bias > 3.0 * stderr]
    if len(resolved) < 2:
        raise InsufficientPaths(
            "bias indistinguishable from MC noise; increase paths or h")
    hs, errs = zip(*resolved)
    slope, resid = fit_loglog(hs, errs)
    result = ConvergenceResult(spec.study, np.array(hs), np.array(errs),
                               slope, resid, rows)
    _emit(spec, result, "h,mean,stderr,bias,n_jumps_mean", rows,
          extra_summary={"reference": ref, "n_paths": spec.n_paths,
                         "resolved_points": len(resolved)})
    return result


def run_complexity_study(spec):
    """Mean jump count and holding time over [0, T] per step size."""
    problem = make_problem(spec.problem, spec.params)
    rows = []
    for h in spec.h_list:
        mesh = log_mesh_1d(h, 0.0) \
            if problem.domain.kind == "positive_orthant" \
            else uniform_mesh_1d(spec.x0, h)
        res = run_mesh1d_ensemble(problem, mesh, spec.scheme, spec.x0,
                                  spec.t_final, spec.n_paths, spec.seed)
        nbar = float(res.jumps.mean())
        rows.append((h, nbar, spec.t_final / nbar))
    hs = [r[0] for r in rows]
    slope_n, resid_n = fit_loglog(hs, [r[1] for r in rows])
    slope_t, resid_t = fit_loglog(hs, [r[2] for r in rows])
    result = ConvergenceResult(spec.study, np.array(hs),
                               np.array([r[1] for r in rows]),
                               slope_n, resid_n, rows)
    _emit(spec, result, "h,n_jumps_mean,mean_holding", rows,
          extra_summary={"holding_slope": slope_t,
                         "holding_residual": resid_t})
    return result, slope_t


def holding_time_table(problem, h, x_list):
    """Rows (x, t_star, t_exact, t_upwind, t_central) of holding times.

    t_star = h/|mu|; t_exact integrates the drift ODE over the uphill
    neighbor cell; t_upwind and t_central are the mean holding times of the
    first- and second-order schemes on a uniform mesh.
    """
    rows = []
    for x in x_list:
        mu = float(problem.drift(np.array([float(x)]))[0])
        m = float(problem.diffusion_scalar(float(x)))
        t_star = h / abs(mu)
        t_up = h ** 2 / (2.0 * m + abs(mu) * h)
        t_c = h ** 2 / (2.0 * m) / np.cosh(mu * h / (2.0 * m))
        if mu < 0:
            t_e = ode_transit_time(problem, x - h, x)
        else:
            t_e = ode_transit_time(problem, x, x + h)
        rows.append((float(x), t_star, t_e, t_up, t_c))
    return rows


def run_holding_time_study(spec):
    problem = make_problem(spec.problem, spec.params)
    h = spec.h_list[0]
    xs = spec.params.get("x_list", (5.0, 10.0, 20.0))
    rows = holding_time_table(problem, h, xs)
    gaps = [(x, abs(tu - ts) / ts, abs(tc - ts) / ts, abs(te - ts) / ts)
            for x, ts, te, tu, tc in rows]
    payload = {"study": spec.study, "h": h,
               "rel_gap_upwind": [g[1] for g in gaps],
               "rel_gap_central": [g[2] for g in gaps],
               "rel_gap_exact": [g[3] for g in gaps]}
    if spec.out:
        os.makedirs(spec.out, exist_ok=True)
        write_csv(os.path.join(spec.out, spec.study + ".csv"),
                  "x,t_star,t_exact,t_upwind,t_central", rows)
        write_summary(os.path.join(spec.out, spec.study + ".json"), payload)
    return rows, payload


# ---------------------------------------------------------------------------
# Lotka-Volterra regimes


def lv_mesh(problem, eps=0.1):
    m0 = problem.lattice_m0
    return log_mesh_2d((m0[0, 0], m0[0, 1], m0[1, 1]), eps)


def run_lv_study(spec, eps=0.1, burn_in=None, n_buckets=4):
    """Occupation statistics of the Lotka-Volterra walk in its regime.

    interior: fraction of holding time in the interior of the histogram box.
    extinction: l1 distance of the x1 marginal to the closed-form marginal,
    plus the decay of time spent with x2 above the smallest histogram level.
    """
    problem = make_problem("lotka_volterra", spec.params)
    regime = problem.boundary
    mesh = lv_mesh(problem, eps)
    dxi, deta = mesh.mx.dxi, mesh.my.dxi
    x_lo, x_hi = 1e-3, 30.0
    i_range = range(mesh.mx.locate(x_lo), mesh.mx.locate(x_hi) + 1)
    j_range = range(mesh.my.locate(x_lo), mesh.my.locate(x_hi) + 1)
    if burn_in is None:
        burn_in = 0.05 * spec.t_final
    res = run_logmesh2d_occupation(
        problem, mesh, np.array([spec.x0, spec.x0]), spec.t_final,
        spec.n_paths, spec.seed, i_range, j_range, burn_in=burn_in,
        n_buckets=n_buckets, j_floor=mesh.my.locate(0.01))
    occ = res.occ
    total = occ.sum() + res.outside
    band = 2
    interior_mass = occ[band:-band, band:-band].sum() / total
    report = {"study": spec.study, "regime": regime,
              "interior_mass": float(interior_mass),
              "outside_mass": float(res.outside / total)}
    if regime == "extinction":
        marg = occ.sum(axis=1)
        marg = marg / marg.sum()
        log_f = lv_extinct_marginal(problem)
        ii = np.asarray(list(i_range))
        x1 = np.exp(mesh.mx.xi0 + ii * dxi)
        lo_edge = np.exp(mesh.mx.xi0 + (ii - 0.5) * dxi)
        hi_edge = np.exp(mesh.mx.xi0 + (ii + 0.5) * dxi)
        ref = _cell_masses_logmesh(log_f, lo_edge, hi_edge)
        report["marginal_l1"] = float(np.abs(marg - ref).sum())
        above = res.above_floor / np.maximum(res.bucket_total, 1e-300)
        report["above_floor_fractions"] = [float(a) for a in above]
        report["occupancy_decays"] = bool(above[-1] < above[0])
    if spec.out:
        os.makedirs(spec.out, exist_ok=True)
        rows = [(i, j, occ[a, b])
                for a, i in enumerate(i_range) for b, j in enumerate(j_range)
                if occ[a, b] > 0]
        write_csv(os.path.join(spec.out, spec.study + ".csv"),
                  "i,j,holding_time", rows)
        write_summary(os.path.join(spec.out, spec.study + ".json"), report)
    return report


def _cell_masses_logmesh(log_f, lo_edge, hi_edge):
    """Cell masses of exp(log_f) over logspace cells, mass-normalized."""
    from scipy.integrate import quad

    masses = np.empty(len(lo_edge))
    shift = float(np.max(log_f(np.sqrt(lo_edge * hi_edge))))
    for k in range(len(lo_edge)):
        f = lambda u: np.exp(float(log_f(np.exp(u))) - shift + u)
        masses[k], _ = quad(f, np.log(lo_edge[k]), np.log(hi_edge[k]),
                            epsrel=1e-10, limit=200)
    return masses / masses.sum()


# ---------------------------------------------------------------------------
# colloid collapse


def colloid_rg_path(problem, h, t_final, checkpoints, stream,
                    step_budget=10 ** 8):
    """One SSA path of the cluster; radius of gyration at checkpoint times."""
    gen = build_generator(problem, "c_nd", h=h)
    rng = stream.generator()
    q0 = colloid_mod.icosahedron_cluster(problem.params["edge"])
    state = gen.locate(q0)
    t, jumps = 0.0, 0
    out = np.empty(len(checkpoints))
    k = 0
    while k < len(checkpoints):
        ch = gen.channels(state)
        dt, nxt = ssa_step(ch, rng)
        t_next = t + dt
        while k < len(checkpoints) and checkpoints[k] <= t_next:
            out[k] = colloid_mod.radius_of_gyration(state)
            k += 1
        if t_next >= t_final and k >= len(checkpoints):
            break
        t = t_next
        state = nxt
        jumps += 1
        if not np.all(np.isfinite(state)):
            raise FloatingPointError("non-finite state in colloid path")
        if jumps > step_budget:
            raise RuntimeError("colloid path exceeded the step budget")
    return out, jumps


def run_colloid_study(spec, n_checkpoints=20, complexity_h=(0.64, 0.32, 0.16),
                      complexity_t_factor=2.0, complexity_paths=4):
    """Mean radius of gyration vs time with and without hydrodynamics, plus
    the jump-count scaling across step sizes."""
    params = colloid_mod.resolve_params(dict(spec.params))
    params.setdefault("edge", 8.08)
    t_b = params["t_brownian"]
    t_final = spec.t_final if spec.t_final > 0 else 20.0 * t_b
    checkpoints = np.linspace(0.0, t_final, n_checkpoints + 1)[1:]
    h = spec.h_list[0]
    report = {"study": spec.study, "t_brownian": t_b, "horizon": t_final,
              "h": h}
    curves = {}
    for flag in (True, False):
        prob = make_problem("colloid_cluster", dict(params, hydrodynamics=flag))
        rg = np.zeros(len(checkpoints))
        jumps = 0
        for k in range(spec.n_paths):
            stream = RngStream(spec.seed, (1 if flag else 1001) + k)
            path_rg, nj = colloid_rg_path(prob, h, t_final, checkpoints, stream)
            rg += path_rg
            jumps += nj
        rg /= spec.n_paths
        key = "hydro" if flag else "free_draining"
        curves[key] = rg
        report[f"rg_final_{key}"] = float(rg[-1])
        report[f"n_jumps_mean_{key}"] = jumps / spec.n_paths
    q0 = colloid_mod.icosahedron_cluster(params["edge"])
    report["rg_initial"] = colloid_mod.radius_of_gyration(q0)
    # complexity profile at a short horizon
    t_c = complexity_t_factor * t_b
    comp_rows = []
    prob = make_problem("colloid_cluster", dict(params, hydrodynamics=True))
    for hi, hh in enumerate(complexity_h):
        tot = 0
        for k in range(complexity_paths):
            stream = RngStream(spec.seed, 5001 + hi * complexity_paths + k)
            _, nj = colloid_rg_path(prob, hh, t_c, np.array([t_c]), stream)
            tot += nj
        comp_rows.append((hh, tot / complexity_paths))
    slope, resid = fit_loglog([r[0] for r in comp_rows],
                              [r[1] for r in comp_rows])
    report["complexity_slope"] = slope
    report["complexity_residual"] = resid
    if spec.out:
        os.makedirs(spec.out, exist_ok=True)
        rows = [(t, curves["hydro"][k], curves["free_draining"][k])
                for k, t in enumerate(checkpoints)]
        write_csv(os.path.join(spec.out, spec.study + ".csv"),
                  "t,rg_hydro,rg_free_draining", rows)
        write_csv(os.path.join(spec.out, spec.study + "_complexity.csv"),
                  "h,n_jumps_mean", comp_rows)
        write_summary(os.path.join(spec.out, spec.study + ".json"),
                      {k: _jsonable(v) for k, v in report.items()})
    return report
