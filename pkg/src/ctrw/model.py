"""SDE problem definitions and the benchmark catalog.

A problem is the tuple (domain, drift mu, diffusion M = sigma sigma^T) for

    dY = mu(Y) dt + sqrt(2) sigma(Y) dW,   Y(0) in Omega,

together with optional closed-form references (stationary density, moments,
spectrum) used by the convergence studies.  Drift and 1D/2D diffusion
callables are numpy-vectorized over a leading batch axis.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .errors import InvalidParams, QuadratureFailure, SingularDiffusion, UnknownProblem
from . import colloid


@dataclass(frozen=True)
class DomainSpec:
    """State-space domain with per-coordinate open interval limits."""

    kind: str                      # all_space | positive_orthant | box | product
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    periodic: bool = False

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "all_space":
            return bool(np.all(np.isfinite(x)))
        if self.kind == "positive_orthant":
            return bool(np.all(x > 0.0))
        lo = -np.inf if self.lower is None else self.lower
        hi = np.inf if self.upper is None else self.upper
        if self.periodic:
            return True
        return bool(np.all(x > lo) and np.all(x < hi))


@dataclass(frozen=True)
class ReferenceSolution:
    """Closed-form references attached to a catalog problem.

    stationary_density is unnormalized; log_stationary_density is preferred
    numerically (the density underflows far in the tails).
    moments maps an observable id to a callable (t, x0) -> value.
    spectrum maps k to the k generator eigenvalues of largest real part.
    """

    log_stationary_density: Optional[Callable] = None
    moments: dict = field(default_factory=dict)
    spectrum: Optional[Callable] = None

    def stationary_density(self, x):
        if self.log_stationary_density is None:
            raise ValueError("no stationary density attached")
        return np.exp(self.log_stationary_density(x))


@dataclass(frozen=True)
class SdeProblem:
    dim: int
    domain: DomainSpec
    drift: Callable                      # x -> (dim,) vector, batch-safe
    diffusion: Callable                  # x -> (dim, dim) SPD matrix
    noise_columns: Optional[Callable] = None   # x -> (dim, dim), columns sigma_i
    reference: Optional[ReferenceSolution] = None
    name: str = ""
    params: dict = field(default_factory=dict)
    growth_exponent: Optional[int] = None      # m in |mu| ~ |x|^{2m+1}
    transformed_drift_fn: Optional[Callable] = None  # analytic solve of M mut = mu
    diffusion_prime_1d: Optional[Callable] = None    # dM/dx for the averaged variants
    potential: Optional[Callable] = None       # U(x) for gradient-free rates
    flow: Optional[Callable] = None            # non-gradient drift part b(x)
    beta: Optional[float] = None               # inverse temperature where meaningful
    rate_style: str = "standard"               # standard | gradient_free
    boundary: Optional[str] = None             # catalog classification string
    lattice_m0: Optional[np.ndarray] = None    # M0 in M(x) = diag(x) M0 diag(x)

    def sigma(self, x):
        """Noise columns at x; Cholesky of M(x) when no closed form is set."""
        if self.noise_columns is not None:
            return self.noise_columns(x)
        m = np.atleast_2d(self.diffusion(x))
        try:
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise SingularDiffusion(f"M(x) not positive definite at {x}") from exc

    def diffusion_scalar(self, x):
        """M(x) as a float, 1D problems only (vectorized)."""
        if self.dim != 1:
            raise ValueError("diffusion_scalar is 1D only")
        return self._m1d(x)

    @property
    def _m1d(self):
        return self.params["_m1d"]


def transformed_drift(problem, x):
    """Solve M(x) mut = mu(x) for the transformed drift mut."""
    if problem.transformed_drift_fn is not None:
        return problem.transformed_drift_fn(x)
    x = np.asarray(x, dtype=float)
    m = np.atleast_2d(problem.diffusion(x))
    mu = np.atleast_1d(problem.drift(x))
    if np.linalg.cond(m) > 1e12:
        raise SingularDiffusion(f"diffusion numerically singular at {x}")
    mut = np.linalg.solve(m, mu)
    resid = np.linalg.norm(m @ mut - mu)
    if not resid <= 1e-10 * (1.0 + np.linalg.norm(mu)):
        raise SingularDiffusion(f"transformed drift residual {resid:g} at {x}")
    return mut


def conservative_form_1d(problem, anchor, x, rel_tol=1e-8):
    """Unnormalized invariant density nu(x) and free energy U(x) = -log nu.

    nu(x) = M(x)^{-1} exp( int_anchor^x mu/M ds ), by adaptive quadrature.
    """
    if problem.dim != 1:
        raise ValueError("conservative form is 1D only")
    mu, m = problem.drift, problem.diffusion_scalar

    def integrand(s):
        return float(mu(np.array([s]))[0]) / float(m(s))

    try:
        val, _ = quad(integrand, anchor, x, epsrel=rel_tol, limit=200)
    except Exception as exc:
        raise QuadratureFailure(str(exc)) from exc
    if not np.isfinite(val):
        raise QuadratureFailure(f"integral of mu/M non-finite on [{anchor}, {x}]")
    log_nu = val - np.log(float(m(x)))
    return np.exp(log_nu), -log_nu


def _scalar_problem(name, params, mu, m, log_nu=None, domain_kind="all_space",
                    moments=None, growth_exponent=None, m_prime=None,
                    boundary=None):
    """Assemble a 1D problem from scalar field callables (batch-safe)."""

    def drift(x):
        x = np.asarray(x, dtype=float)
        return mu(x[..., 0])[..., None]

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        return np.atleast_1d(m(x[..., 0]))[..., None, None] * np.ones((1, 1))

    def noise(x):
        return np.sqrt(diffusion(x))

    ref = None
    if log_nu is not None or moments:
        ref = ReferenceSolution(
            log_stationary_density=(None if log_nu is None
                                    else lambda x: log_nu(np.asarray(x, dtype=float))),
            moments=moments or {})
    kind = domain_kind
    dom = DomainSpec(kind=kind)
    params = dict(params)
    params["_m1d"] = lambda x: m(np.asarray(x, dtype=float))
    return SdeProblem(dim=1, domain=dom, drift=drift, diffusion=diffusion,
                      noise_columns=noise, reference=ref, name=name,
                      params=params, growth_exponent=growth_exponent,
                      diffusion_prime_1d=m_prime, boundary=boundary)


# ---------------------------------------------------------------------------
# planar potentials and flows


def linear_flow_matrix(flow, gamma):
    g = float(gamma)
    mats = {
        "flow_free": np.zeros((2, 2)),
        "rotational": np.array([[0.0, g], [-g, 0.0]]),
        "extensional": np.array([[0.0, g], [g, 0.0]]),
        "shear": np.array([[0.0, g], [0.0, 0.0]]),
    }
    if flow not in mats and flow != "nonlinear":
        raise InvalidParams(f"unknown flow {flow!r}")
    return mats.get(flow)


def _flow_field(flow, gamma):
    b_mat = linear_flow_matrix(flow, gamma)
    if b_mat is not None:
        return lambda x: np.asarray(x, dtype=float) @ b_mat.T
    g = float(gamma)

    def nonlinear(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = -g * x[..., 0] * x[..., 1] ** 2
        return out

    return nonlinear


def _planar_problem(name, params, u, grad_u, flow, gamma, beta, domain,
                    log_nu_flow_free=None, periodic=False):
    """Additive-noise planar problem dY = (b - DU) dt + sqrt(2/beta) dW."""
    beta = float(beta)
    b = _flow_field(flow, gamma)

    def drift(x):
        return b(x) - grad_u(x)

    def diffusion(x):
        return np.eye(2) / beta

    def noise(x):
        return np.eye(2) / np.sqrt(beta)

    ref = None
    spectrum = None
    if name == "planar_flow":
        c_mat = linear_flow_matrix(flow, gamma)
        if c_mat is not None:
            c_mat = c_mat - np.eye(2)
            eig = np.linalg.eigvals(c_mat)
            if np.all(eig.real < 0):
                spectrum = _ou_spectrum_fn(eig)
    if log_nu_flow_free is not None and (flow == "flow_free" or name != "planar_flow"):
        pass
    log_nu = None
    if flow == "flow_free" or (name == "square_well" and flow == "extensional") \
            or (name == "worm_like_chain" and flow == "extensional"):
        # gradient or known-invariant cases: nu = exp(-beta U) stays stationary
        log_nu = lambda x: -beta * u(x)
    if name == "planar_flow" and flow in ("flow_free", "rotational"):
        log_nu = lambda x: -beta * u(x)
    if log_nu is not None or spectrum is not None:
        ref = ReferenceSolution(log_stationary_density=log_nu, spectrum=spectrum)
    return SdeProblem(dim=2, domain=domain, drift=drift, diffusion=diffusion,
                      noise_columns=noise, reference=ref, name=name,
                      params=dict(params, flow=flow, gamma=gamma, beta=beta),
                      potential=u, flow=b, beta=beta,
                      rate_style="gradient_free" if name == "square_well" else "standard")


def _ou_spectrum_fn(eigs):
    l1, l2 = eigs

    def spectrum(k):
        nmax = int(np.ceil(np.sqrt(k))) + k
        vals = [n1 * l1 + n2 * l2 for n1 in range(nmax) for n2 in range(nmax)]
        vals.sort(key=lambda z: (-z.real, abs(z.imag)))
        return np.array(vals[:k])

    return spectrum


# ---------------------------------------------------------------------------
# catalog


def make_problem(name, params=None):
    """Build a catalog problem by name.

    Names: cubic_oscillator, lognormal_1d, cir, planar_flow, maier_stein,
    square_well, worm_like_chain, lognormal_2d, lotka_volterra,
    colloid_cluster.
    """
    params = dict(params or {})
    builder = _CATALOG.get(name)
    if builder is None:
        raise UnknownProblem(
            f"unknown problem {name!r}; valid names: {sorted(_CATALOG)}")
    return builder(params)


def _build_cubic(params):
    return _scalar_problem(
        "cubic_oscillator", params,
        mu=lambda x: -x ** 3,
        m=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        m_prime=lambda x: 0.0,
        log_nu=lambda x: -x ** 4 / 4.0,
        growth_exponent=1)


def _build_lognormal_1d(params):
    def moment_sq(t, x0):
        return np.exp(2.0 * np.exp(-t) * np.log(x0) + 2.0 * (1.0 - np.exp(-2.0 * t)))

    return _scalar_problem(
        "lognormal_1d", params,
        mu=lambda x: -x * np.log(x) + x,
        m=lambda x: x ** 2,
        m_prime=lambda x: 2.0 * x,
        log_nu=lambda x: -0.5 * np.log(x) ** 2 - np.log(x),
        domain_kind="positive_orthant",
        moments={"square": moment_sq})


def _build_cir(params):
    beta = float(params.get("beta", 1.0))
    alpha = float(params.get("alpha", 1.0))
    sigma = float(params.get("sigma", 1.0))
    if sigma <= 0:
        raise InvalidParams("CIR requires sigma > 0")
    c = 2.0 * beta * alpha / sigma ** 2
    if beta * alpha < 0:
        boundary = "absorbing"
    elif c >= 1.0:
        boundary = "natural"
    else:
        boundary = "regular"
    return _scalar_problem(
        "cir", dict(params, beta=beta, alpha=alpha, sigma=sigma, exponent=c),
        mu=lambda x: beta * (alpha - x),
        m=lambda x: 0.5 * sigma ** 2 * x,
        m_prime=lambda x: 0.5 * sigma ** 2,
        log_nu=lambda x: (c - 1.0) * np.log(x) - (2.0 * beta / sigma ** 2) * x,
        domain_kind="positive_orthant",
        boundary=boundary)


def _build_planar_flow(params):
    gamma = float(params.get("gamma", 0.5))
    beta = float(params.get("beta", 2.0))
    flow = params.get("flow", "flow_free")

    def u(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2)

    def grad_u(x):
        return np.asarray(x, dtype=float)

    return _planar_problem("planar_flow", params, u, grad_u, flow, gamma, beta,
                           DomainSpec(kind="all_space"))


def _build_maier_stein(params):
    gamma = float(params.get("gamma", 4.0))
    cpl = float(params.get("coupling", 2.0))
    beta = float(params.get("beta", 1.0))

    def u(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return x1 ** 4 / 4.0 - x1 ** 2 / 2.0 + cpl * (1.0 + x1 ** 2) * x2 ** 2 / 2.0

    def grad_u(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x1 ** 3 - x1 + cpl * x1 * x2 ** 2,
                         cpl * (1.0 + x1 ** 2) * x2], axis=-1)

    return _planar_problem("maier_stein", params, u, grad_u, "nonlinear",
                           gamma, beta, DomainSpec(kind="all_space"))


def _build_square_well(params):
    gamma = float(params.get("gamma", 2.0))
    beta = float(params.get("beta", 1.0))
    flow = params.get("flow", "flow_free")
    d1 = float(params.get("d1", 0.4))
    d2 = float(params.get("d2", -0.4))
    eps = float(params.get("eps", 1e-3))

    def u(x):
        x = np.asarray(x, dtype=float)
        s = np.maximum(x[..., 0], x[..., 1])
        return np.tanh((s - d1) / eps) - np.tanh((s - d2) / eps)

    def grad_u(x):
        # only used by generic code paths; the scheme for this problem uses
        # gradient-free rates, see rate_style
        x = np.asarray(x, dtype=float)
        s = np.maximum(x[..., 0], x[..., 1])
        ds = (1.0 - np.tanh((s - d1) / eps) ** 2) / eps \
            - (1.0 - np.tanh((s - d2) / eps) ** 2) / eps
        pick = (x[..., 0] >= x[..., 1]).astype(float)
        return np.stack([ds * pick, ds * (1.0 - pick)], axis=-1)

    dom = DomainSpec(kind="box", lower=np.array([-1.0, -1.0]),
                     upper=np.array([1.0, 1.0]), periodic=True)
    return _planar_problem("square_well", params, u, grad_u, flow, gamma,
                           beta, dom)


def _build_wlc(params):
    gamma = float(params.get("gamma", 5.0))
    beta = float(params.get("beta", 1.0))
    flow = params.get("flow", "flow_free")

    def u(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return x2 ** 2 / 2.0 + 1.0 / (1.0 - np.abs(x1)) - np.abs(x1) + 2.0 * x1 ** 2

    def grad_u(x):
        # sign(0) = 0: subgradient choice at the |x1| kink
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        s = np.sign(x1)
        return np.stack([s / (1.0 - np.abs(x1)) ** 2 - s + 4.0 * x1, x2], axis=-1)

    dom = DomainSpec(kind="box", lower=np.array([-1.0, -np.inf]),
                     upper=np.array([1.0, np.inf]))
    return _planar_problem("worm_like_chain", params, u, grad_u, flow,
                           gamma, beta, dom)


def _lattice_2d_problem(name, params, mu, m0, log_nu=None):
    """2D problem with diffusion diag(x) m0 diag(x) on the positive quadrant."""
    m0 = np.asarray(m0, dtype=float)

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        d = x[..., :, None] * x[..., None, :]
        return m0 * d

    def tdrift(x):
        x = np.asarray(x, dtype=float)
        m0_inv = np.linalg.inv(m0)
        return (m0_inv @ (mu(x) / x)[..., None])[..., 0] / x

    ref = ReferenceSolution(log_stationary_density=log_nu) if log_nu else None
    return SdeProblem(dim=2, domain=DomainSpec(kind="positive_orthant"),
                      drift=mu, diffusion=diffusion, reference=ref,
                      name=name, params=params, lattice_m0=m0,
                      transformed_drift_fn=tdrift)


def _build_lognormal_2d(params):
    m0 = np.asarray(params.get("m0", [[2.0, 1.0], [1.0, 2.0]]), dtype=float)
    a_mat = np.asarray(params.get("a", [[-1.0, 0.0], [0.0, -1.0]]), dtype=float)
    if np.any(np.linalg.eigvals(a_mat).real >= 0):
        raise InvalidParams("lognormal_2d needs a stable OU matrix a")
    # stationary covariance of the underlying OU: a S + S a^T = -2 m0
    from .spectral import lyapunov_solve_2x2
    cov = lyapunov_solve_2x2(a_mat, -2.0 * m0)
    cov_inv = np.linalg.inv(cov)

    def mu(x):
        x = np.asarray(x, dtype=float)
        lin = np.stack([m0[0, 0] * x[..., 0], m0[1, 1] * x[..., 1]], axis=-1)
        return lin + x * (np.log(x) @ a_mat.T)

    def log_nu(x):
        x = np.asarray(x, dtype=float)
        y = np.log(x)
        quad_form = np.einsum("...i,ij,...j->...", y, cov_inv, y)
        return -0.5 * quad_form - np.log(x[..., 0]) - np.log(x[..., 1])

    return _lattice_2d_problem("lognormal_2d",
                               dict(params, m0=m0, a=a_mat, cov=cov),
                               mu, m0, log_nu=log_nu)


def _build_lotka_volterra(params):
    k1 = float(params.get("k1", 2.0))
    k2 = float(params.get("k2", 1.0))
    g1 = float(params.get("gamma1", 1.0))
    g2 = float(params.get("gamma2", 1.0))
    m0 = np.asarray(params.get("m0", [[0.5, 0.2], [0.2, 0.5]]), dtype=float)
    m11, m22 = m0[0, 0], m0[1, 1]
    c1 = k1 - 0.5 * m11
    c2 = k2 + 0.5 * m22
    if c1 > g1 * c2:
        regime = "interior"
    elif c1 > 0:
        regime = "extinction"
    else:
        regime = "atomic at origin"

    def mu(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([k1 * x1 - x1 * x2 - g1 * x1 ** 2,
                         -k2 * x2 + x1 * x2 - g2 * x2 ** 2], axis=-1)

    # the quoted extinction marginal holds for the convention
    # dY = mu dt + sigma dW, i.e. effective diffusion m0/2 in our normal form
    prob = _lattice_2d_problem(
        "lotka_volterra",
        dict(params, k1=k1, k2=k2, gamma1=g1, gamma2=g2, m0=m0,
             c1=c1, c2=c2),
        mu, 0.5 * m0)
    object.__setattr__(prob, "boundary", regime)
    return prob


def lv_extinct_marginal(problem):
    """Log of the x1 marginal in the extinction regime (unnormalized)."""
    p = problem.params
    m11, c1 = p["m0"][0, 0], p["c1"]
    if not (p["gamma1"] * p["c2"] > c1 > 0):
        raise InvalidParams("parameters are not in the extinction regime")
    return lambda x: (2.0 * c1 / m11 - 1.0) * np.log(x) - 2.0 * x / m11


def _build_colloid(params):
    return colloid.build_problem(params)


_CATALOG = {
    "cubic_oscillator": _build_cubic,
    "lognormal_1d": _build_lognormal_1d,
    "cir": _build_cir,
    "planar_flow": _build_planar_flow,
    "maier_stein": _build_maier_stein,
    "square_well": _build_square_well,
    "worm_like_chain": _build_wlc,
    "lognormal_2d": _build_lognormal_2d,
    "lotka_volterra": _build_lotka_volterra,
    "colloid_cluster": _build_colloid,
}

PROBLEM_NAMES = tuple(sorted(_CATALOG))
