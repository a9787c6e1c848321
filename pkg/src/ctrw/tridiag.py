"""Closed-form solutions for 1D tridiagonal generators, plus exact
continuous-problem quadratures used as oracles and by the milestoning scheme.

All products and prefix sums run in log space: invariant densities of the
benchmark potentials span hundreds of orders of magnitude.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import NonNormalizable, QuadratureFailure, ZeroRate


@dataclass(frozen=True)
class Tridiag1D:
    """Rates of a tridiagonal generator on an index window [0..N].

    up[i] is the rate i -> i+1, down[i] the rate i -> i-1; the diagonal is
    implied by zero row sums.  dx holds the average spacings for
    mass-normalized comparisons.
    """

    x: np.ndarray
    up: np.ndarray
    down: np.ndarray
    dx: np.ndarray

    @property
    def n(self):
        return len(self.x) - 1

    @classmethod
    def from_scheme(cls, problem, mesh, scheme, window, **opts):
        from .generator import channels_1d

        idx = np.asarray(list(window))
        cache = {} if scheme == "milestone1d" else None
        if cache is not None:
            opts = dict(opts, milestone_cache=cache)
        ups, downs = [], []
        for i in idx:
            ch = channels_1d(problem, mesh, int(i), scheme, **opts)
            downs.append(ch.rates[0])
            ups.append(ch.rates[1])
        return cls(x=mesh.x(idx).astype(float), up=np.array(ups),
                   down=np.array(downs), dx=np.asarray(mesh.dx(idx), dtype=float))


def _check_c1(tri):
    if np.any(tri.up[:-1] <= 0.0) or np.any(tri.down[1:] <= 0.0):
        raise ZeroRate("all off-diagonal rates must be positive on the window")


def log_invariant_density(tri):
    """log of the telescoped invariant density, anchored at index 0."""
    _check_c1(tri)
    steps = np.log(tri.up[:-1]) - np.log(tri.down[1:])
    return np.concatenate([[0.0], np.cumsum(steps)])


def invariant_density(tri, normalize="anchor"):
    """Invariant density by the telescoping product.

    normalize: "anchor" (value 1 at index 0) or "sum" (point masses sum
    to 1).  On variable meshes the telescoped density already carries the
    cell-width factor, so the sum normalization is the one comparable to
    cell-averaged references.
    """
    log_nu = log_invariant_density(tri)
    if normalize == "anchor":
        return np.exp(log_nu)
    if normalize == "sum":
        w = np.exp(log_nu - log_nu.max())
        return w / w.sum()
    raise ValueError(f"unknown normalization {normalize!r}")


def is_normalizable(tri):
    """Ratio-test gate at the window edges."""
    right = tri.up[-2] / tri.down[-1]
    left = tri.down[1] / tri.up[0]
    return bool(right < 1.0 and left < 1.0)


def normalized_masses(tri, require_gate=True):
    """Point masses summing to 1; refuses non-normalizable windows."""
    if require_gate and not is_normalizable(tri):
        raise NonNormalizable("edge rate ratios do not pass the ratio test")
    return invariant_density(tri, normalize="sum")


def committor(tri):
    """Exit probabilities q with q_0 = 0, q_N = 1, from the closed form."""
    _check_c1(tri)
    log_nu = log_invariant_density(tri)
    # a_j = nu_1 down_1 / (nu_{j+1} down_{j+1}),  j = 0..N-1
    la = (log_nu[1] + np.log(tri.down[1])
          - log_nu[1:] - np.log(tri.down[1:]))
    a = np.exp(la - la.max())
    csum = np.concatenate([[0.0], np.cumsum(a)])
    return csum / csum[-1]


def mfpt(tri):
    """Mean first passage time to the window edges, zero boundary values."""
    _check_c1(tri)
    log_nu = log_invariant_density(tri)
    shift = log_nu.max()
    nu = np.exp(log_nu - shift)
    denom = nu[1:] * tri.down[1:]              # nu_{j+1} down_{j+1}, j=0..N-1
    a = nu[1] * tri.down[1] / denom
    w = np.concatenate([[0.0], np.cumsum(nu[1:-1])])   # sum_{i=1}^{j} nu_i
    b = w / denom
    s = np.cumsum(a)
    t = np.cumsum(b)
    u1 = t[-1] / s[-1]
    u = np.empty(len(tri.x))
    u[0] = 0.0
    u[1:] = u1 * s - t
    u[-1] = 0.0
    if not np.all(np.isfinite(u)):
        raise QuadratureFailure("mfpt closed form overflowed on this window")
    return u


# ---------------------------------------------------------------------------
# exact continuous-problem quadratures


class _DriftOverM:
    """Dense cumulative integral I(y) = int_a^y mu/M, via a stiff-safe ODE
    solve with dense output."""

    def __init__(self, problem, a, b, rel_tol=1e-12):
        self.problem = problem
        mu, m = problem.drift, problem.diffusion_scalar

        def rhs(s, _):
            return [float(mu(np.array([s]))[0]) / float(m(s))]

        sol = solve_ivp(rhs, (a, b), [0.0], method="DOP853", rtol=rel_tol,
                        atol=1e-14, dense_output=True)
        if not sol.success:
            raise QuadratureFailure(f"cumulative drift integral failed: {sol.message}")
        self._sol = sol
        self.a, self.b = a, b

    def __call__(self, y):
        return float(self._sol.sol(y)[0])


def _quad(f, lo, hi, rel_tol):
    try:
        val, err = quad(f, lo, hi, epsrel=rel_tol, epsabs=0.0, limit=200)
    except Exception as exc:
        raise QuadratureFailure(str(exc)) from exc
    if not np.isfinite(val):
        raise QuadratureFailure("non-finite quadrature value")
    return val


def exact_committor_profile(problem, a, b, xs, rel_tol=1e-10):
    """q(x) = int_a^x ds/(M nu) / int_a^b ds/(M nu) at each x in xs."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    cum = _DriftOverM(problem, a, b)
    m = problem.diffusion_scalar
    pts = np.concatenate([[a], np.sort(xs), [b]])
    shift = min(cum(p) for p in pts)    # g = exp(-(I - shift))/M stays bounded

    def g(y):
        return np.exp(-(cum(y) - shift)) / float(m(y))

    seg = np.array([_quad(g, lo, hi, rel_tol)
                    for lo, hi in zip(pts[:-1], pts[1:])])
    csum = np.concatenate([[0.0], np.cumsum(seg)])
    order = np.argsort(xs, kind="stable")
    q = np.empty_like(xs)
    q[order] = csum[1:-1] / csum[-1]
    return q


def exact_committor_quadrature(problem, a, b, x, rel_tol=1e-8):
    """Exit probability of hitting b before a starting from x."""
    return float(exact_committor_profile(problem, a, b, [x],
                                         rel_tol=min(rel_tol, 1e-10))[0])


def exact_mfpt_profile(problem, a, b, xs, rel_tol=1e-10):
    """Mean first passage time to {a, b} at each x in xs.

    Uses v(x) = int_a^x Phi - q(x) int_a^b Phi with
    Phi(y) = int_y^b exp(I(r) - I(y))/M(r) dr, or the mirrored form when the
    cumulative drift integral I increases over [a, b]; both are exact, the
    choice keeps the inner exponent nonpositive on downhill intervals.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    cum = _DriftOverM(problem, a, b)
    m = problem.diffusion_scalar
    q = exact_committor_profile(problem, a, b, xs, rel_tol=rel_tol)
    mirrored = cum(b) > cum(a)

    if mirrored:
        def inner(y):
            return _quad(lambda r: np.exp(cum(r) - cum(y)) / float(m(r)),
                         a, y, rel_tol)
    else:
        def inner(y):
            return _quad(lambda r: np.exp(cum(r) - cum(y)) / float(m(r)),
                         y, b, rel_tol)

    pts = np.concatenate([[a], np.sort(xs), [b]])
    seg = np.array([_quad(inner, lo, hi, rel_tol)
                    for lo, hi in zip(pts[:-1], pts[1:])])
    csum = np.concatenate([[0.0], np.cumsum(seg)])
    total = csum[-1]
    order = np.argsort(xs, kind="stable")
    v = np.empty_like(xs)
    if mirrored:
        v[order] = (total - csum[1:-1]) - (1.0 - q[order]) * total
    else:
        v[order] = csum[1:-1] - q[order] * total
    if np.any(v < -1e-9 * max(total, 1.0)):
        raise QuadratureFailure("negative mean first passage time")
    return np.maximum(v, 0.0)


def exact_mfpt_quadrature(problem, a, b, x, rel_tol=1e-8):
    return float(exact_mfpt_profile(problem, a, b, [x],
                                    rel_tol=min(rel_tol, 1e-10))[0])


def ode_transit_time(problem, lo, hi, rel_tol=1e-10):
    """Deterministic drift transit time int_lo^hi dx/|mu(x)|."""
    mu = problem.drift
    return _quad(lambda s: 1.0 / abs(float(mu(np.array([s]))[0])), lo, hi,
                 rel_tol)


# ---------------------------------------------------------------------------
# cell averages of a reference density


def cell_average_density(problem, mesh, window, rel_tol=1e-10):
    """Reference stationary density averaged over mesh cells, mass-normalized.

    Cells are [(x_{i-1}+x_i)/2, (x_i+x_{i+1})/2].  On positive domains the
    integrals substitute x = e^u, which absorbs integrable power-law
    singularities at the origin (CIR regular boundary).
    """
    ref = problem.reference
    if ref is None or ref.log_stationary_density is None:
        raise ValueError("problem has no reference stationary density")
    idx = np.asarray(list(window))
    x = np.asarray(mesh.x(idx), dtype=float)
    lo = np.asarray(mesh.x(idx - 1), dtype=float)
    hi = np.asarray(mesh.x(idx + 1), dtype=float)
    left = 0.5 * (lo + x)
    right = 0.5 * (x + hi)
    log_nu = ref.log_stationary_density
    shift = float(np.max(log_nu(x)))
    logspace = problem.domain.kind == "positive_orthant"
    masses = np.empty(len(idx))
    for k in range(len(idx)):
        if logspace:
            f = lambda u: np.exp(float(log_nu(np.exp(u))) - shift + u)
            masses[k] = _quad(f, np.log(left[k]), np.log(right[k]), rel_tol)
        else:
            f = lambda s: np.exp(float(log_nu(s)) - shift)
            masses[k] = _quad(f, left[k], right[k], rel_tol)
    total = masses.sum()
    if not (np.isfinite(total) and total > 0.0):
        raise QuadratureFailure("cell masses did not normalize")
    return masses / total
