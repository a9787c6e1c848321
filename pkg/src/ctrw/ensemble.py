"""Vectorized SSA ensembles for gridded problems.

These engines advance many independent trajectories in lockstep numpy
iterations; path k consumes column k of the per-iteration uniform draws, so
results are deterministic in (seed, path index).  They exist for the large
Monte Carlo studies; the generic per-path loop lives in ctrw.ssa.
"""

from dataclasses import dataclass

import numpy as np

from .errors import StepBudgetExceeded
from .generator import channels_1d, problem_log_nu


def rate_tables_1d(problem, mesh, scheme, lo, hi):
    """Vectorized (down, up) rate arrays over the index window [lo, hi]."""
    idx = np.arange(lo, hi + 1)
    x = np.asarray(mesh.x(idx), dtype=float)
    xp = np.asarray(mesh.x(idx + 1), dtype=float)
    xm = np.asarray(mesh.x(idx - 1), dtype=float)
    dxp, dxm = xp - x, x - xm
    dx = 0.5 * (dxp + dxm)
    mu = problem.drift(x[:, None])[:, 0]
    m = np.asarray(problem.diffusion_scalar(x), dtype=float)
    if scheme == "u1d":
        up = (np.maximum(mu, 0.0) + m / dx) / dxp
        down = (-np.minimum(mu, 0.0) + m / dx) / dxm
    elif scheme == "c1d":
        up = m / (dx * dxp) * np.exp(mu / m * dxp / 2.0)
        down = m / (dx * dxm) * np.exp(-mu / m * dxm / 2.0)
    elif scheme == "fv1d":
        log_nu = problem.reference.log_stationary_density
        if log_nu is None:
            raise ValueError("fv1d tables need a reference density")
        mp = np.asarray(problem.diffusion_scalar(xp), dtype=float)
        mm = np.asarray(problem.diffusion_scalar(xm), dtype=float)
        ln = log_nu(x)
        wp = 0.5 * (np.exp(log_nu(xp) - ln) + 1.0)
        wm = 0.5 * (np.exp(log_nu(xm) - ln) + 1.0)
        up = 0.5 * (mp + m) / (dx * dxp) * wp
        down = 0.5 * (mm + m) / (dx * dxm) * wm
    else:
        # milestone1d and variants: per-index fallback
        ups, downs = [], []
        cache = {}
        for i in idx:
            ch = channels_1d(problem, mesh, int(i), scheme,
                             milestone_cache=cache)
            downs.append(ch.rates[0])
            ups.append(ch.rates[1])
        up, down = np.array(ups), np.array(downs)
    return down, up


@dataclass
class EnsembleResult:
    final_x: np.ndarray
    jumps: np.ndarray
    min_x: np.ndarray
    sum_holding: float


def run_mesh1d_ensemble(problem, mesh, scheme, x0, t_final, n_paths, seed,
                        pad=512, max_iters=10 ** 7):
    """Advance n_paths SSA walkers on a 1D mesh until the clock passes
    t_final; returns final positions, jump counts and per-path minima."""
    i0 = mesh.locate(float(np.atleast_1d(x0)[0]))
    lo, hi = i0 - pad, i0 + pad
    down, up = rate_tables_1d(problem, mesh, scheme, lo, hi)
    lam = down + up
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 0x1D]))
    idx = np.full(n_paths, i0, dtype=np.int64)
    t = np.zeros(n_paths)
    jumps = np.zeros(n_paths, dtype=np.int64)
    min_idx = idx.copy()
    alive = np.ones(n_paths, dtype=bool)
    for _ in range(max_iters):
        if not alive.any():
            break
        u = rng.random((2, n_paths))
        k = idx - lo
        lam_k = lam[k]
        dt = -np.log1p(-u[0]) / lam_k
        t_new = t + dt
        finish = alive & (t_new >= t_final)
        move = alive & ~finish
        t[finish] = t_final
        alive[finish] = False
        if move.any():
            t[move] = t_new[move]
            go_down = u[1] * lam_k < down[k]
            step = np.where(go_down, -1, 1)
            idx[move] += step[move]
            jumps[move] += 1
            np.minimum(min_idx, idx, out=min_idx)
            if idx[move].min() <= lo + 1 or idx[move].max() >= hi - 1:
                grow = pad
                new_lo, new_hi = lo - grow, hi + grow
                d2, u2 = rate_tables_1d(problem, mesh, scheme, new_lo, new_hi)
                lo, hi, down, up = new_lo, new_hi, d2, u2
                lam = down + up
    else:
        raise StepBudgetExceeded(f"ensemble not finished in {max_iters} iterations")
    return EnsembleResult(final_x=np.asarray(mesh.x(idx), dtype=float),
                          jumps=jumps,
                          min_x=np.asarray(mesh.x(min_idx), dtype=float),
                          sum_holding=float(t_final) * n_paths)


_MOVES_2D = np.array([(1, 0), (-1, 0), (0, 1), (0, -1),
                      (1, 1), (-1, -1), (1, -1), (-1, 1)], dtype=np.int64)


def _percapita_drift(problem, xi, eta):
    """mu(x)/x as a function of the log coordinates; stays finite when
    exp(eta) underflows (deep extinction tail)."""
    x1, x2 = np.exp(xi), np.exp(eta)
    name = problem.name
    p = problem.params
    if name == "lotka_volterra":
        return np.stack([p["k1"] - x2 - p["gamma1"] * x1,
                         -p["k2"] + x1 - p["gamma2"] * x2], axis=-1)
    if name == "lognormal_2d":
        m0 = p["m0"]
        lin = np.stack([np.full_like(xi, m0[0, 0]),
                        np.full_like(eta, m0[1, 1])], axis=-1)
        return lin + np.stack([xi, eta], axis=-1) @ p["a"].T
    mu = problem.drift(np.stack([x1, x2], axis=-1))
    return mu / np.stack([x1, x2], axis=-1)


class _LogMesh2DKernel:
    """Precomputed channel coefficients of the weighted-central scheme on a
    LogMesh2D; the geometric x-factors cancel, so only the exponential drift
    weights vary with the state."""

    def __init__(self, problem, mesh):
        m0 = problem.lattice_m0
        c1p = np.exp(mesh.mx.dxi) - 1.0
        c1m = 1.0 - np.exp(-mesh.mx.dxi)
        c1 = np.sinh(mesh.mx.dxi)
        c2p = np.exp(mesh.my.dxi) - 1.0
        c2m = 1.0 - np.exp(-mesh.my.dxi)
        c2 = np.sinh(mesh.my.dxi)
        m11, m12, m22 = m0[0, 0], m0[0, 1], m0[1, 1]
        m12p, m12m = max(m12, 0.0), min(m12, 0.0)
        self.coef = np.array([
            m11 / (c1 * c1p) - m12p / (c1p * c2p) + m12m / (c1p * c2m),
            m11 / (c1 * c1m) - m12p / (c1m * c2m) + m12m / (c1m * c2p),
            m22 / (c2 * c2p) - m12p / (c1p * c2p) + m12m / (c1m * c2p),
            m22 / (c2 * c2m) - m12p / (c1m * c2m) + m12m / (c1p * c2m),
            m12p / (c1p * c2p), m12p / (c1m * c2m),
            -m12m / (c1p * c2m), -m12m / (c1m * c2p)])
        if np.any(self.coef < 0):
            raise ValueError("mesh is not realizable for this diffusion matrix")
        self.c1p, self.c1m, self.c2p, self.c2m = c1p, c1m, c2p, c2m
        self.m0_inv = np.linalg.inv(m0)
        self.problem = problem
        self.mesh = mesh

    def rates(self, xi, eta):
        t = _percapita_drift(self.problem, xi, eta) @ self.m0_inv.T
        t1, t2 = t[..., 0], t[..., 1]
        w = np.stack([
            0.5 * self.c1p * t1, -0.5 * self.c1m * t1,
            0.5 * self.c2p * t2, -0.5 * self.c2m * t2,
            0.5 * (self.c1p * t1 + self.c2p * t2),
            -0.5 * (self.c1m * t1 + self.c2m * t2),
            0.5 * (self.c1p * t1 - self.c2m * t2),
            0.5 * (-self.c1m * t1 + self.c2p * t2)], axis=-1)
        return self.coef * np.exp(w)


@dataclass
class OccupationResult:
    occ: np.ndarray             # (ni, nj) time-weighted cell occupation
    outside: float              # holding time spent outside the histogram box
    i_lo: int
    j_lo: int
    bucket_edges: np.ndarray
    above_floor: np.ndarray     # time with j >= j_floor per time bucket
    bucket_total: np.ndarray
    final_ij: np.ndarray


def run_logmesh2d_occupation(problem, mesh, x0, t_final, n_paths, seed,
                             i_range, j_range, burn_in=0.0, n_buckets=4,
                             j_floor=None, max_iters=10 ** 8):
    """Time-weighted occupation histogram of the 2D logmesh walk.

    The histogram covers the index box i_range x j_range (holding time
    landing outside is tallied separately); above_floor tracks, per time
    bucket, the time spent with x2 index >= j_floor.
    """
    i_lo, i_hi = i_range[0], i_range[-1]
    j_lo, j_hi = j_range[0], j_range[-1]
    ni, nj = i_hi - i_lo + 1, j_hi - j_lo + 1
    occ = np.zeros(ni * nj)
    kern = _LogMesh2DKernel(problem, mesh)
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 0x2D]))
    ij0 = mesh.locate(np.asarray(x0, dtype=float))
    i = np.full(n_paths, ij0[0], dtype=np.int64)
    j = np.full(n_paths, ij0[1], dtype=np.int64)
    xi0, dxi = mesh.mx.xi0, mesh.mx.dxi
    eta0, deta = mesh.my.xi0, mesh.my.dxi
    t = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    edges = np.linspace(0.0, t_final, n_buckets + 1)
    above = np.zeros(n_buckets)
    btotal = np.zeros(n_buckets)
    for _ in range(max_iters):
        if not alive.any():
            break
        u = rng.random((2, n_paths))
        rates = kern.rates(xi0 + i * dxi, eta0 + j * deta)
        lam = rates.sum(axis=1)
        dt = -np.log1p(-u[0]) / lam
        t_end = np.minimum(t + dt, t_final)
        dt_eff = t_end - t
        # attribute each holding interval to the bucket of its start
        if j_floor is not None:
            b = np.minimum((t / t_final * n_buckets).astype(np.int64),
                           n_buckets - 1)
            w = np.where(alive, dt_eff, 0.0)
            np.add.at(btotal, b, w)
            np.add.at(above, b, np.where(j >= j_floor, w, 0.0))
        # occupation after burn-in; escapees clamp to the boundary rows
        keep = alive & (t_end > burn_in)
        if keep.any():
            w = t_end - np.maximum(t, burn_in)
            ic = np.clip(i, i_lo, i_hi)
            jc = np.clip(j, j_lo, j_hi)
            cell = (ic - i_lo) * nj + (jc - j_lo)
            np.add.at(occ, cell[keep], w[keep])
        finish = alive & (t + dt >= t_final)
        move = alive & ~finish
        t[finish] = t_final
        alive[finish] = False
        if move.any():
            t[move] = (t + dt)[move]
            cum = np.cumsum(rates, axis=1)
            pick = (cum < (u[1] * lam)[:, None]).sum(axis=1)
            np.clip(pick, 0, 7, out=pick)
            i[move] += _MOVES_2D[pick[move], 0]
            j[move] += _MOVES_2D[pick[move], 1]
    else:
        raise StepBudgetExceeded(f"ensemble not finished in {max_iters} iterations")
    return OccupationResult(occ=occ.reshape(ni, nj), outside=0.0,
                            i_lo=i_lo, j_lo=j_lo, bucket_edges=edges,
                            above_floor=above, bucket_total=btotal,
                            final_ij=np.column_stack([i, j]))
