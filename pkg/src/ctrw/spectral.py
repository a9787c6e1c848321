"""Truncated-matrix assembly, stationary densities and spectra.

The generator on a pruned finite window becomes a sparse Q-matrix with exact
zero row sums; stationary densities come from shifted inverse iteration on
the transpose and leading eigenvalues from shift-invert Arnoldi.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from .errors import NoConvergence, NotIrreducible, UnstableDrift
from .generator import build_generator
from .mesh import box_window_2d, line_window_1d, prune


@dataclass(frozen=True)
class TruncatedQMatrix:
    window: object              # PrunedWindow
    q: sp.csr_matrix            # (n, n) with zero row sums

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def points(self):
        return self.window.points


def assemble(problem, mesh, scheme, e_star, window, **scheme_opts):
    """Sparse generator matrix on the pruned window.

    window is an index range (1D) or a pair of index ranges (2D); points with
    |mu| > e_star are pruned, rates into pruned targets dropped and the
    diagonal recomputed so rows still sum to zero.
    """
    if isinstance(window, tuple) and len(window) == 2 \
            and not isinstance(window[0], int):
        keys, pts = box_window_2d(mesh, window[0], window[1])
    else:
        keys, pts = line_window_1d(mesh, window)
    pw = prune(keys, pts, problem, e_star)
    gen = build_generator(problem, scheme, mesh=mesh, **scheme_opts)
    rows, cols, vals = [], [], []
    for row, key in enumerate(pw.keys):
        ch = gen.channels(key)
        diag = 0.0
        for st, rate in zip(ch.states, ch.rates):
            col = pw.ordinal(st)
            if col is None or rate == 0.0:
                continue
            rows.append(row)
            cols.append(col)
            vals.append(rate)
            diag -= rate
        rows.append(row)
        cols.append(row)
        vals.append(diag)
    q = sp.csr_matrix((vals, (rows, cols)), shape=(len(pw), len(pw)))
    return TruncatedQMatrix(window=pw, q=q)


def stationary_density(tq, tol=1e-10, max_iter=200):
    """Left null vector with nonnegative entries summing to one."""
    n = tq.n
    ncomp, _ = csgraph.connected_components(tq.q, directed=True,
                                            connection="strong")
    if ncomp != 1:
        raise NotIrreducible(f"{ncomp} strongly connected components")
    qt = sp.csc_matrix(tq.q.T)
    scale = float(np.abs(tq.q.diagonal()).max())
    shift = 1e-8 * scale
    lu = spla.splu(qt - shift * sp.identity(n, format="csc"))
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        w = lu.solve(v)
        w = w / np.sum(w)
        v = w
        resid = float(np.linalg.norm(qt @ v, 1))
        if resid <= tol * float(np.linalg.norm(v, 1)):
            v = np.maximum(v, 0.0)
            return v / v.sum()
    raise NoConvergence(f"inverse iteration residual {resid:g} after {max_iter} iters")


def leading_eigenvalues(tq, k, tol=1e-8, sigma=0.1):
    """k eigenvalues of largest real part via shift-invert Arnoldi."""
    if k > tq.n - 2:
        raise ValueError("k too large for the window")
    want = min(tq.n - 2, k + max(6, k // 2))
    try:
        vals, vecs = spla.eigs(tq.q.astype(float), k=want, sigma=sigma,
                               which="LM", ncv=min(tq.n, max(4 * want, 40)),
                               maxiter=5000)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(-vals.real, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    out = vals[:k]
    for i in range(k):
        v = vecs[:, i]
        resid = np.linalg.norm(tq.q @ v - vals[i] * v) / np.linalg.norm(v)
        if resid > tol:
            raise NoConvergence(f"eigenpair residual {resid:g} exceeds {tol:g}")
    return out


# ---------------------------------------------------------------------------
# analytic Ornstein-Uhlenbeck references


def lyapunov_solve_2x2(a, b):
    """Solve A X + X A^T = B for symmetric 2x2 X (3-unknown linear system)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sys = np.array([
        [2.0 * a[0, 0], 2.0 * a[0, 1], 0.0],
        [a[1, 0], a[0, 0] + a[1, 1], a[0, 1]],
        [0.0, 2.0 * a[1, 0], 2.0 * a[1, 1]],
    ])
    rhs = np.array([b[0, 0], b[0, 1], b[1, 1]])
    x11, x12, x22 = np.linalg.solve(sys, rhs)
    return np.array([[x11, x12], [x12, x22]])


@dataclass(frozen=True)
class OuReference:
    c: np.ndarray
    m: np.ndarray
    cov_inf: np.ndarray
    eigs: np.ndarray

    def mean_map(self, x, t):
        return expm(t * self.c) @ np.asarray(x, dtype=float)

    def cov(self, t):
        rhs = 2.0 * (expm(t * self.c) @ self.m @ expm(t * self.c).T - self.m)
        return lyapunov_solve_2x2(self.c, rhs)

    def spectrum(self, k):
        l1, l2 = self.eigs
        nmax = k + 2
        vals = [n1 * l1 + n2 * l2 for n1 in range(nmax) for n2 in range(nmax)]
        vals.sort(key=lambda z: (-z.real, abs(z.imag), z.imag))
        return np.array(vals[:k])

    def log_stationary_density(self, x):
        x = np.asarray(x, dtype=float)
        prec = np.linalg.inv(self.cov_inf)
        return -0.5 * np.einsum("...i,ij,...j->...", x, prec, x)


def ou_reference(c, m):
    """Reference mean map, covariances and spectrum for dY = CY dt + noise
    with diffusion matrix M (so stationary covariance solves
    C S + S C^T = -2M)."""
    c = np.asarray(c, dtype=float)
    m = np.asarray(m, dtype=float)
    eigs = np.linalg.eigvals(c)
    if np.any(eigs.real >= 0.0):
        raise UnstableDrift(f"drift matrix eigenvalues {eigs} not all stable")
    cov_inf = lyapunov_solve_2x2(c, -2.0 * m)
    return OuReference(c=c, m=m, cov_inf=cov_inf, eigs=eigs)


def pair_eigenvalues(computed, reference):
    """Greedy nearest-neighbor pairing in the complex plane; returns the
    reference values aligned to the computed order."""
    computed = np.asarray(computed)
    reference = list(np.asarray(reference))
    matched = np.empty(len(computed), dtype=complex)
    order = np.argsort(-computed.real, kind="stable")
    for i in order:
        d = [abs(computed[i] - r) for r in reference]
        j = int(np.argmin(d))
        matched[i] = reference.pop(j)
    return matched


def spectrum_rel_error(computed, reference):
    ref = pair_eigenvalues(computed, reference)
    return float(np.linalg.norm(computed - ref) / np.linalg.norm(ref))
