"""Realizable discretizations as local channel queries.

Every scheme answers one question: given a state, what are the jump targets
and nonnegative rates?  Mesh schemes use integer grid indices as internal
states; gridless schemes use coordinate vectors.  Rates in [-1e-12*lambda, 0)
are floating-point noise and are clamped to zero; anything more negative
means the mesh/diffusion pairing is inadmissible.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (DecompositionMismatch, DomainViolation,
                     NotDiagonallyDominant, RealizabilityViolation)
from .mesh import LogMesh2D, Mesh2D
from .model import transformed_drift

SCHEME_IDS = ("u1d", "c1d", "fv1d", "milestone1d", "u2d", "c2d",
              "c_nd", "u_nd", "uu_nd", "generalized", "diagdom", "gridless")

NEG_RATE_TOL = 1e-12


@dataclass(frozen=True)
class ChannelSet:
    """Local view of a generator at one state."""

    origin: np.ndarray          # (dim,)
    targets: np.ndarray         # (K, dim)
    rates: np.ndarray           # (K,), nonnegative
    states: Optional[tuple] = None   # internal target states, aligned with targets

    @property
    def total_rate(self):
        return float(np.sum(self.rates))

    @property
    def mean_holding_time(self):
        lam = self.total_rate
        return np.inf if lam == 0.0 else 1.0 / lam

    def __len__(self):
        return len(self.rates)


def _finalize(origin, targets, rates, states=None, error=RealizabilityViolation):
    origin = np.atleast_1d(np.asarray(origin, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    rates = np.asarray(rates, dtype=float)
    lam = float(np.sum(np.maximum(rates, 0.0)))
    floor = -NEG_RATE_TOL * max(lam, 1.0)
    if np.any(rates < floor):
        worst = float(rates.min())
        raise error(f"negative rate {worst:g} at state {origin}")
    rates = np.maximum(rates, 0.0)
    if not np.all(np.isfinite(rates)):
        raise error(f"non-finite rate at state {origin}")
    return ChannelSet(origin=origin, targets=targets, rates=rates,
                      states=None if states is None else tuple(states))


# ---------------------------------------------------------------------------
# 1D schemes


def problem_log_nu(problem, anchor=1.0):
    """Unnormalized log invariant density; quadrature fallback when no
    closed form is attached."""
    ref = problem.reference
    if ref is not None and ref.log_stationary_density is not None:
        f = ref.log_stationary_density
        return lambda x: float(f(np.asarray(x, dtype=float)))
    from .model import conservative_form_1d

    def log_nu(x):
        _, u_free = conservative_form_1d(problem, anchor, float(x))
        return -u_free

    return log_nu


def channels_1d(problem, mesh, i, scheme="c1d", averaged=False, log_nu=None,
                milestone_cache=None):
    """Two-channel set at grid point i for the 1D schemes.

    scheme: u1d (upwind, first order), c1d (weighted central, second order),
    fv1d (finite volume with nu-midpoint weights), milestone1d (exact mean
    holding time and exit probabilities).  averaged=True selects the
    neighbor-averaged-M variants of u1d/c1d.
    """
    i = int(i)
    xi = float(mesh.x(i))
    xp = float(mesh.x(i + 1))
    xm = float(mesh.x(i - 1))
    for tgt in (xm, xp):
        if not problem.domain.contains(np.array([tgt])):
            raise DomainViolation(f"neighbor {tgt} leaves the domain")
    dxp, dxm = xp - xi, xi - xm
    dx = 0.5 * (dxp + dxm)
    mu = float(problem.drift(np.array([xi]))[0])
    m = float(problem.diffusion_scalar(xi))
    if m <= 0:
        raise RealizabilityViolation(f"M({xi}) = {m} is not positive")

    if scheme == "u1d":
        if averaged:
            mprime = _m_prime(problem, xi)
            advect = mu - mprime
            mp = float(problem.diffusion_scalar(xp))
            mm = float(problem.diffusion_scalar(xm))
            up = (max(advect, 0.0) + (mp + m) / (2.0 * dx)) / dxp
            down = (-min(advect, 0.0) + (mm + m) / (2.0 * dx)) / dxm
        else:
            up = (max(mu, 0.0) + m / dx) / dxp
            down = (-min(mu, 0.0) + m / dx) / dxm
    elif scheme == "c1d":
        if averaged:
            mprime = _m_prime(problem, xi)
            uprime = (mprime - mu) / m
            mp = float(problem.diffusion_scalar(xp))
            mm = float(problem.diffusion_scalar(xm))
            up = 0.5 * (mp + m) / (dx * dxp) * np.exp(-uprime * dxp / 2.0)
            down = 0.5 * (mm + m) / (dx * dxm) * np.exp(uprime * dxm / 2.0)
        else:
            up = m / (dx * dxp) * np.exp(mu / m * dxp / 2.0)
            down = m / (dx * dxm) * np.exp(-mu / m * dxm / 2.0)
    elif scheme == "fv1d":
        if log_nu is None:
            log_nu = problem_log_nu(problem, anchor=xi)
        mp = float(problem.diffusion_scalar(xp))
        mm = float(problem.diffusion_scalar(xm))
        ln_i = log_nu(xi)
        wp = 0.5 * (np.exp(log_nu(xp) - ln_i) + 1.0)
        wm = 0.5 * (np.exp(log_nu(xm) - ln_i) + 1.0)
        up = 0.5 * (mp + m) / (dx * dxp) * wp
        down = 0.5 * (mm + m) / (dx * dxm) * wm
    elif scheme == "milestone1d":
        up, down = _milestone_rates(problem, xm, xi, xp, milestone_cache, i)
    else:
        raise ValueError(f"unknown 1D scheme {scheme!r}")
    return _finalize(xi, [[xm], [xp]], [down, up], states=(i - 1, i + 1))


def _m_prime(problem, x):
    if problem.diffusion_prime_1d is not None:
        return float(problem.diffusion_prime_1d(x))
    step = 1e-6 * (1.0 + abs(x))
    return (float(problem.diffusion_scalar(x + step))
            - float(problem.diffusion_scalar(x - step))) / (2.0 * step)


def _milestone_rates(problem, xm, xi, xp, cache, key):
    if cache is not None and key in cache:
        return cache[key]
    from .tridiag import exact_committor_quadrature, exact_mfpt_quadrature

    q_up = exact_committor_quadrature(problem, xm, xp, xi)
    hold = exact_mfpt_quadrature(problem, xm, xp, xi)
    rates = (q_up / hold, (1.0 - q_up) / hold)
    if cache is not None:
        cache[key] = rates
    return rates


# ---------------------------------------------------------------------------
# 2D schemes


def _spacings_2d(mesh, i, j):
    mx, my = mesh.mx, mesh.my
    return (float(mx.dxp(i)), float(mx.dxm(i)), float(mx.dx(i)),
            float(my.dxp(j)), float(my.dxm(j)), float(my.dx(j)))


def channels_2d(problem, mesh, ij, scheme="c2d", boundary_rule=None):
    """Up to eight channels at grid point (i, j).

    u2d upwinds the drift; c2d carries exponential drift weights on the
    transformed drift.  Mixed-derivative channels point diagonally for
    M12 > 0 and antidiagonally for M12 < 0.  boundary_rule: None (targets
    must stay in the domain), "zero" (exiting channels get rate 0), or
    "wrap" (periodic box).
    """
    i, j = ij
    if boundary_rule is None:
        boundary_rule = _default_boundary_rule(problem)
    xy = mesh.x((i, j))
    dxp, dxm, dx, dyp, dym, dy = _spacings_2d(mesh, i, j)
    mu = np.asarray(problem.drift(xy), dtype=float)
    mmat = np.atleast_2d(problem.diffusion(xy))
    m11, m12, m22 = mmat[0, 0], mmat[0, 1], mmat[1, 1]
    m12p, m12m = max(m12, 0.0), min(m12, 0.0)

    if problem.rate_style == "gradient_free" and scheme == "c2d":
        return _gradient_free_channels(problem, mesh, i, j, xy)

    # bracket coefficients shared by both schemes
    a_p = m11 / (dx * dxp) - m12p / (dxp * dyp) + m12m / (dxp * dym)
    a_m = m11 / (dx * dxm) - m12p / (dxm * dym) + m12m / (dxm * dyp)
    b_p = m22 / (dy * dyp) - m12p / (dxp * dyp) + m12m / (dxm * dyp)
    b_m = m22 / (dy * dym) - m12p / (dxm * dym) + m12m / (dxp * dym)
    c_p = m12p / (dxp * dyp)
    c_m = m12p / (dxm * dym)
    d_p = -m12m / (dxp * dym)
    d_m = -m12m / (dxm * dyp)

    if scheme == "u2d":
        r_xp = max(mu[0], 0.0) / dxp + a_p
        r_xm = -min(mu[0], 0.0) / dxm + a_m
        r_yp = max(mu[1], 0.0) / dyp + b_p
        r_ym = -min(mu[1], 0.0) / dym + b_m
        r_dp, r_dm, r_ap, r_am = c_p, c_m, d_p, d_m
    elif scheme == "c2d":
        mut = transformed_drift(problem, xy)
        r_xp = np.exp(0.5 * mut[0] * dxp) * a_p
        r_xm = np.exp(-0.5 * mut[0] * dxm) * a_m
        r_yp = np.exp(0.5 * mut[1] * dyp) * b_p
        r_ym = np.exp(-0.5 * mut[1] * dym) * b_m
        r_dp = np.exp(0.5 * (mut[0] * dxp + mut[1] * dyp)) * c_p
        r_dm = np.exp(-0.5 * (mut[0] * dxm + mut[1] * dym)) * c_m
        r_ap = np.exp(0.5 * (mut[0] * dxp - mut[1] * dym)) * d_p
        r_am = np.exp(0.5 * (-mut[0] * dxm + mut[1] * dyp)) * d_m
    else:
        raise ValueError(f"unknown 2D scheme {scheme!r}")

    moves = [((1, 0), r_xp), ((-1, 0), r_xm), ((0, 1), r_yp), ((0, -1), r_ym),
             ((1, 1), r_dp), ((-1, -1), r_dm), ((1, -1), r_ap), ((-1, 1), r_am)]
    return _collect_2d(problem, mesh, i, j, xy, moves, boundary_rule)


def _default_boundary_rule(problem):
    if problem.domain.periodic:
        return "wrap"
    if problem.domain.kind == "box":
        return "zero"
    return "none"


def _collect_2d(problem, mesh, i, j, xy, moves, boundary_rule):
    states, targets, rates = [], [], []
    for (di, dj), rate in moves:
        if rate == 0.0:
            continue
        key = (i + di, j + dj)
        if boundary_rule == "wrap":
            key = mesh.wrap(key)
        tgt = mesh.x(key)
        if not problem.domain.contains(tgt):
            if boundary_rule == "zero":
                continue
            if boundary_rule == "none":
                raise DomainViolation(f"target {tgt} leaves the domain")
        states.append(key)
        targets.append(tgt)
        rates.append(rate)
    return _finalize(xy, targets, rates, states=states)


def _gradient_free_channels(problem, mesh, i, j, xy):
    """Axis rates built from potential differences; avoids differentiating U."""
    beta = problem.beta
    h = float(mesh.mx.dxp(i))
    u0 = float(problem.potential(xy))
    b0 = np.asarray(problem.flow(xy), dtype=float)
    moves, targets, rates = [], [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        key = (i + di, j + dj)
        wrapped = mesh.wrap(key) if problem.domain.periodic else key
        disp = np.array([di * h, dj * h])
        tgt_eval = xy + disp
        u1 = float(problem.potential(tgt_eval))
        rate = (1.0 / (beta * h * h)) * np.exp(
            -0.5 * beta * (u1 - u0 - float(b0 @ disp)))
        moves.append(wrapped)
        targets.append(mesh.x(wrapped))
        rates.append(rate)
    return _finalize(xy, targets, rates, states=moves)


# ---------------------------------------------------------------------------
# nD schemes on gridless state spaces


@dataclass(frozen=True)
class StepField:
    """Forward/backward step sizes per channel direction, capped by h."""

    plus: Callable      # (x, i) -> h_i^+(x)
    minus: Callable     # (x, i) -> h_i^-(x)
    h: float

    @classmethod
    def uniform(cls, h):
        h = float(h)
        return cls(plus=lambda x, i: h, minus=lambda x, i: h, h=h)

    def mean(self, x, i):
        return 0.5 * (self.plus(x, i) + self.minus(x, i))


def channels_nd(problem, stepfield, x, scheme="c_nd"):
    """2n channels along the noise columns (c_nd, u_nd) or 4n channels with
    separate drift moves along the coordinate axes (uu_nd)."""
    x = np.asarray(x, dtype=float)
    n = problem.dim
    sig = np.atleast_2d(problem.sigma(x))
    targets, rates = [], []
    if scheme in ("c_nd", "u_nd"):
        mut = transformed_drift(problem, x)
        for i in range(n):
            hp, hm = stepfield.plus(x, i), stepfield.minus(x, i)
            hbar = 0.5 * (hp + hm)
            g = float(mut @ sig[:, i])
            if scheme == "c_nd":
                up = np.exp(0.5 * hp * g) / (hp * hbar)
                down = np.exp(-0.5 * hm * g) / (hm * hbar)
            else:
                up = max(g, 0.0) / hp + 1.0 / (hp * hbar)
                down = -min(g, 0.0) / hm + 1.0 / (hm * hbar)
            targets += [x + hp * sig[:, i], x - hm * sig[:, i]]
            rates += [up, down]
    elif scheme == "uu_nd":
        mu = np.asarray(problem.drift(x), dtype=float)
        for i in range(n):
            hp, hm = stepfield.plus(x, i), stepfield.minus(x, i)
            hbar = 0.5 * (hp + hm)
            e = np.zeros(n)
            e[i] = 1.0
            targets += [x + hp * e, x - hm * e,
                        x + hp * sig[:, i], x - hm * sig[:, i]]
            rates += [max(mu[i], 0.0) / hp, -min(mu[i], 0.0) / hm,
                      1.0 / (hp * hbar), 1.0 / (hm * hbar)]
    else:
        raise ValueError(f"unknown nD scheme {scheme!r}")
    return _finalize(x, targets, rates)


def channels_generalized(problem, weights, directions, stepfield, x):
    """Channels along user directions eta_i with weights w_i >= 0 summing to
    M(x) as sum_i w_i eta_i eta_i^T."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights(x) if callable(weights) else weights, dtype=float)
    eta = np.atleast_2d(np.asarray(directions(x) if callable(directions)
                                   else directions, dtype=float))
    if np.any(w < 0):
        raise DecompositionMismatch("weights must be nonnegative")
    m = np.atleast_2d(problem.diffusion(x))
    recon = np.einsum("s,si,sj->ij", w, eta, eta)
    if np.linalg.norm(recon - m) > 1e-8 * (1.0 + np.linalg.norm(m)):
        raise DecompositionMismatch(
            f"sum w_i eta_i eta_i^T does not reconstruct M at {x}")
    mut = transformed_drift(problem, x)
    targets, rates = [], []
    for i in range(len(w)):
        hp, hm = stepfield.plus(x, i), stepfield.minus(x, i)
        hbar = 0.5 * (hp + hm)
        g = float(mut @ eta[i])
        targets += [x + hp * eta[i], x - hm * eta[i]]
        rates += [w[i] / (hp * hbar) * np.exp(0.5 * hp * g),
                  w[i] / (hm * hbar) * np.exp(-0.5 * hm * g)]
    return _finalize(x, targets, rates)


def diagdom_steps(problem, h, x):
    """Per-axis steps Delta_i = h / P_ii with P scaling M to unit diagonal."""
    m = np.atleast_2d(problem.diffusion(x))
    return h * np.sqrt(np.diag(m))


def channels_diagdom(problem, delta, x):
    """Gridded channels for weakly diagonally dominant diffusion matrices:
    axis moves plus diagonal/antidiagonal moves in each ij-plane."""
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    n = problem.dim
    m = np.atleast_2d(problem.diffusion(x))
    mut = transformed_drift(problem, x)
    targets, rates = [], []

    def add(disp, coef):
        if coef == 0.0:
            return
        y = x + disp
        targets.append(y)
        rates.append(coef * np.exp(0.5 * float(mut @ disp)))

    for i in range(n):
        coef = m[i, i] / delta[i] ** 2 - sum(
            abs(m[i, j]) / (delta[i] * delta[j]) for j in range(n) if j != i)
        if coef < -NEG_RATE_TOL * (np.trace(m) / np.min(delta) ** 2):
            raise NotDiagonallyDominant(
                f"axis coefficient {coef:g} negative at {x}")
        e = np.zeros(n)
        e[i] = delta[i]
        add(e, max(coef, 0.0))
        add(-e, max(coef, 0.0))
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = delta[i]
            ej[j] = delta[j]
            c_diag = max(m[i, j], 0.0) / (delta[i] * delta[j])
            c_anti = -min(m[i, j], 0.0) / (delta[i] * delta[j])
            add(ei + ej, c_diag)
            add(-(ei + ej), c_diag)
            add(ei - ej, c_anti)
            add(-(ei - ej), c_anti)
    return _finalize(x, targets, rates, error=NotDiagonallyDominant)


# --- deterministic smooth pseudo-random step field -------------------------


def _hash_unit(seed, cell):
    """Deterministic value in [0, 1) from (seed, integer lattice cell)."""
    z = np.uint64(seed) ^ np.uint64(0x9E3779B97F4A7C15)
    with np.errstate(over="ignore"):
        for c in cell:
            z = (z + np.uint64(np.int64(c))) * np.uint64(0xBF58476D1CE4E5B9)
            z ^= z >> np.uint64(27)
            z = z * np.uint64(0x94D049BB133111EB)
            z ^= z >> np.uint64(31)
    return float(z) / float(2 ** 64)


def _smooth5(t):
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def xi_field(seed, h):
    """Smooth lattice-noise field with values in [1/2, 1].

    Per-cell hashed values blended with a C^2 kernel across cells of side h;
    deterministic in (seed, x).  seed=None gives the constant field 1.
    """
    if seed is None:
        return lambda x: 1.0

    def xi(x):
        x = np.asarray(x, dtype=float) / h
        base = np.floor(x).astype(np.int64)
        frac = x - base
        w = _smooth5(frac)
        n = len(base)
        val = 0.0
        for corner in range(1 << n):
            offs = [(corner >> k) & 1 for k in range(n)]
            weight = 1.0
            for k in range(n):
                weight *= w[k] if offs[k] else (1.0 - w[k])
            val += weight * _hash_unit(seed, base + np.array(offs))
        return 0.5 + 0.5 * val

    return xi


def channels_gridless(problem, h, seed, x, xi=None):
    """Random-environment axis channels with a confining mollifier.

    Rates (xi^2 h^2)^{-1} exp(+-(xi h / 2) mu_i) exp(-xi^2 h^2 |x|^{2r}),
    r = m + 1 with m the declared polynomial-growth exponent of the drift.
    """
    if problem.growth_exponent is None:
        raise ValueError("problem must declare growth_exponent for gridless")
    x = np.asarray(x, dtype=float)
    r = problem.growth_exponent + 1
    if xi is None:
        xi = xi_field(seed, h)
    s = float(xi(x))
    step = s * h
    mu = np.asarray(problem.drift(x), dtype=float)
    moll = np.exp(-step ** 2 * float(np.linalg.norm(x)) ** (2 * r))
    targets, rates = [], []
    n = problem.dim
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        targets += [x + e, x - e]
        base = moll / step ** 2
        rates += [base * np.exp(0.5 * step * mu[i]),
                  base * np.exp(-0.5 * step * mu[i])]
    return _finalize(x, targets, rates)


# ---------------------------------------------------------------------------
# Lyapunov diagnostic


def polynomial_lyapunov(a, m):
    """log V for V(x) = exp(a * sum_i |x_i|^(2m+2))."""
    p = 2 * m + 2

    def log_v(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return a * float(np.sum(np.abs(x) ** p))

    return log_v


def lyapunov_drift_ratio(channelset, log_v):
    """QV(x)/V(x) = sum_j rate_j (V(y_j)/V(x) - 1), evaluated in log space."""
    lv0 = log_v(channelset.origin)
    out = 0.0
    for tgt, rate in zip(channelset.targets, channelset.rates):
        out += rate * np.expm1(log_v(tgt) - lv0)
    return float(out)


# ---------------------------------------------------------------------------
# generator objects binding (problem, scheme, mesh/step parameters)


class Mesh1DGenerator:
    """Jump generator on a 1D mesh; internal states are grid indices."""

    def __init__(self, problem, mesh, scheme, averaged=False):
        self.problem = problem
        self.mesh = mesh
        self.scheme = scheme
        self.averaged = averaged
        self.dim = 1
        self._log_nu = problem_log_nu(problem) if scheme == "fv1d" else None
        self._milestones = {} if scheme == "milestone1d" else None

    def channels(self, i):
        return channels_1d(self.problem, self.mesh, i, self.scheme,
                           averaged=self.averaged, log_nu=self._log_nu,
                           milestone_cache=self._milestones)

    def position(self, i):
        return np.array([float(self.mesh.x(i))])

    def locate(self, x0):
        return self.mesh.locate(np.atleast_1d(x0)[0])


class Mesh2DGenerator:
    def __init__(self, problem, mesh, scheme, boundary_rule=None):
        self.problem = problem
        self.mesh = mesh
        self.scheme = scheme
        self.boundary_rule = boundary_rule
        self.dim = 2

    def channels(self, ij):
        return channels_2d(self.problem, self.mesh, ij, self.scheme,
                           boundary_rule=self.boundary_rule)

    def position(self, ij):
        return self.mesh.x(ij)

    def locate(self, x0):
        return self.mesh.locate(np.asarray(x0, dtype=float))


class GridlessGenerator:
    """Jump generator whose states are coordinate vectors."""

    def __init__(self, problem, scheme, stepfield=None, h=None, seed=None,
                 weights=None, directions=None, delta=None):
        self.problem = problem
        self.scheme = scheme
        self.stepfield = stepfield or (StepField.uniform(h) if h else None)
        self.h = h
        self.seed = seed
        self.weights = weights
        self.directions = directions
        self.delta = delta
        self.dim = problem.dim
        self._xi = xi_field(seed, h) if scheme == "gridless" else None

    def channels(self, x):
        if self.scheme in ("c_nd", "u_nd", "uu_nd"):
            return channels_nd(self.problem, self.stepfield, x, self.scheme)
        if self.scheme == "generalized":
            return channels_generalized(self.problem, self.weights,
                                        self.directions, self.stepfield, x)
        if self.scheme == "diagdom":
            delta = self.delta
            if delta is None:
                delta = diagdom_steps(self.problem, self.h, x)
            return channels_diagdom(self.problem, delta, x)
        if self.scheme == "gridless":
            return channels_gridless(self.problem, self.h, self.seed, x,
                                     xi=self._xi)
        raise ValueError(f"unknown scheme {self.scheme!r}")

    def position(self, x):
        return np.asarray(x, dtype=float)

    def locate(self, x0):
        return np.asarray(x0, dtype=float)


def build_generator(problem, scheme, mesh=None, stepfield=None, h=None,
                    seed=None, weights=None, directions=None, delta=None,
                    averaged=False, boundary_rule=None):
    """Bind a problem and a scheme id into a jump generator."""
    if scheme not in SCHEME_IDS:
        raise ValueError(f"unknown scheme id {scheme!r}; valid: {SCHEME_IDS}")
    if scheme in ("u1d", "c1d", "fv1d", "milestone1d"):
        if mesh is None:
            raise ValueError("1D schemes need a mesh")
        return Mesh1DGenerator(problem, mesh, scheme, averaged=averaged)
    if scheme in ("u2d", "c2d"):
        if mesh is None:
            raise ValueError("2D schemes need a mesh")
        return Mesh2DGenerator(problem, mesh, scheme, boundary_rule=boundary_rule)
    return GridlessGenerator(problem, scheme, stepfield=stepfield, h=h,
                             seed=seed, weights=weights,
                             directions=directions, delta=delta)
