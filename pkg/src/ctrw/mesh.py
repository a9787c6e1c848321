"""Gridded state spaces.

Meshes are lazy index -> point maps over the whole integer lattice; finite
windows are only materialized for matrix assembly.  Spacing accessors follow
the forward/backward/average convention

    dxp_i = x_{i+1} - x_i,   dxm_i = x_i - x_{i-1},   dx_i = (dxp_i + dxm_i)/2.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindow, InadmissibleDiffusion


@dataclass(frozen=True)
class Mesh1D:
    """Base class for 1D meshes; use uniform_mesh_1d / log_mesh_1d."""

    def x(self, i):
        raise NotImplementedError

    def dxp(self, i):
        raise NotImplementedError

    def dxm(self, i):
        raise NotImplementedError

    def dx(self, i):
        return 0.5 * (self.dxp(i) + self.dxm(i))

    def points(self, window):
        return self.x(np.asarray(list(window)))

    def locate(self, x0):
        """Index of the grid point nearest x0."""
        raise NotImplementedError


@dataclass(frozen=True)
class UniformMesh1D(Mesh1D):
    x0: float
    h: float

    def x(self, i):
        return self.x0 + np.asarray(i) * self.h

    def dxp(self, i):
        return np.broadcast_to(self.h, np.shape(i)).astype(float) if np.ndim(i) else self.h

    def dxm(self, i):
        return self.dxp(i)

    def locate(self, x0):
        return int(round((x0 - self.x0) / self.h))


@dataclass(frozen=True)
class LogMesh1D(Mesh1D):
    """Image of an evenly spaced grid in logspace: x_i = exp(xi0 + i*dxi)."""

    xi0: float
    dxi: float

    def x(self, i):
        return np.exp(self.xi0 + np.asarray(i) * self.dxi)

    def dxp(self, i):
        return (np.exp(self.dxi) - 1.0) * self.x(i)

    def dxm(self, i):
        return (1.0 - np.exp(-self.dxi)) * self.x(i)

    def dx(self, i):
        return np.sinh(self.dxi) * self.x(i)

    def locate(self, x0):
        if x0 <= 0:
            raise ValueError("log mesh covers (0, inf) only")
        return int(round((np.log(x0) - self.xi0) / self.dxi))


def uniform_mesh_1d(x0, h, window=None):
    """Evenly spaced grid x_i = x0 + i*h anchored so that x0 is a grid point."""
    if h <= 0:
        raise ValueError("h must be positive")
    return UniformMesh1D(x0=float(x0), h=float(h))


def log_mesh_1d(dxi, xi0=0.0, window=None):
    """Grid with fixed logspace step dxi; refines toward the origin."""
    if dxi <= 0:
        raise ValueError("dxi must be positive")
    return LogMesh1D(xi0=float(xi0), dxi=float(dxi))


@dataclass(frozen=True)
class PeriodicUniformMesh1D(Mesh1D):
    """Cell-centered grid on [lo, hi) with n cells; indices wrap mod n."""

    lo: float
    hi: float
    n: int

    @property
    def h(self):
        return (self.hi - self.lo) / self.n

    def x(self, i):
        return self.lo + (np.asarray(i) % self.n + 0.5) * self.h

    def dxp(self, i):
        return np.broadcast_to(self.h, np.shape(i)).astype(float) if np.ndim(i) else self.h

    def dxm(self, i):
        return self.dxp(i)

    def wrap(self, i):
        return int(i) % self.n

    def locate(self, x0):
        return int(np.floor((x0 - self.lo) / self.h)) % self.n


@dataclass(frozen=True)
class Mesh2D:
    """Tensor product of two 1D meshes; indices are (i, j) pairs."""

    mx: Mesh1D
    my: Mesh1D

    def x(self, ij):
        i, j = ij
        return np.array([self.mx.x(i), self.my.x(j)], dtype=float)

    def wrap(self, ij):
        i, j = ij
        if isinstance(self.mx, PeriodicUniformMesh1D):
            i = self.mx.wrap(i)
        if isinstance(self.my, PeriodicUniformMesh1D):
            j = self.my.wrap(j)
        return (i, j)

    def locate(self, x0):
        return (self.mx.locate(x0[0]), self.my.locate(x0[1]))


def periodic_mesh_2d(lo, hi, h):
    """Cell-centered periodic box grid; h must divide the box evenly."""
    n = round((hi - lo) / h)
    if not np.isclose(n * h, hi - lo):
        raise ValueError("h must divide the box length")
    m1 = PeriodicUniformMesh1D(lo=float(lo), hi=float(hi), n=int(n))
    return Mesh2D(mx=m1, my=m1)


@dataclass(frozen=True)
class LogMesh2D(Mesh2D):
    """Realizable logspace grid for diffusion fields diag(x) M0 diag(x).

    alpha is the horizontal/vertical logspace ratio (dxi = alpha*eps,
    deta = eps); built by log_mesh_2d so that the weighted-central 2D scheme
    has nonnegative rates for the declared M0.
    """

    alpha: float = 1.0
    eps: float = 1.0


def _log_grid_conditions(m11, m12, m22, alpha, eps):
    am = abs(m12)
    upper = np.sinh(alpha * eps) / (1.0 - np.exp(-eps)) <= m11 / am
    lower = (1.0 - np.exp(-alpha * eps)) / np.sinh(eps) >= am / m22
    return upper and lower


def log_mesh_2d(m_coeffs, eps, anchors=(0.0, 0.0), max_halvings=60):
    """Construct the logspace grid on which the 2D central scheme is realizable.

    Parameters
    ----------
    m_coeffs : (M11, M12, M22)
        Entries of the constant matrix M0 in M(x) = diag(x) M0 diag(x).
    eps : float
        Initial vertical logspace step; halved until the sufficient
        realizability inequalities hold.
    anchors : (xi0, eta0)
        Logspace anchors of the two axes.
    """
    m11, m12, m22 = map(float, m_coeffs)
    if m12 == 0.0 or m11 * m22 - m12 * m12 <= 0.0 or m11 + m22 <= 0.0:
        raise InadmissibleDiffusion(
            f"need M12 != 0, det > 0 and positive trace, got {m_coeffs}")
    lo, hi = abs(m12) / m22, m11 / abs(m12)
    alpha = 0.5 * (lo + hi)
    eps = float(eps)
    for _ in range(max_halvings):
        if _log_grid_conditions(m11, m12, m22, alpha, eps):
            break
        eps *= 0.5
    else:
        raise InadmissibleDiffusion(
            f"no admissible eps found for M = {m_coeffs}")
    return LogMesh2D(
        mx=LogMesh1D(xi0=float(anchors[0]), dxi=alpha * eps),
        my=LogMesh1D(xi0=float(anchors[1]), dxi=eps),
        alpha=alpha, eps=eps)


@dataclass(frozen=True)
class PrunedWindow:
    """Finite retained index set with a state <-> ordinal bijection."""

    keys: tuple                 # retained index keys, in enumeration order
    points: np.ndarray          # (n, dim) coordinates of retained keys
    e_star: float
    index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {k: n for n, k in enumerate(self.keys)})

    def __len__(self):
        return len(self.keys)

    def ordinal(self, key):
        return self.index.get(key)


def prune(keys, points, problem, e_star):
    """Retain grid points with |mu(x)| <= e_star.

    Parameters
    ----------
    keys : sequence of index keys (ints or (i, j) tuples)
    points : (n, dim) array of the corresponding coordinates
    problem : SdeProblem
    e_star : positive float (np.inf disables pruning)
    """
    if not e_star > 0:
        raise ValueError("e_star must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    keep_keys, keep_pts = [], []
    for key, pt in zip(keys, points):
        if np.linalg.norm(problem.drift(pt)) <= e_star:
            keep_keys.append(key)
            keep_pts.append(pt)
    if not keep_keys:
        raise EmptyWindow(f"no grid point satisfies |mu| <= {e_star}")
    return PrunedWindow(keys=tuple(keep_keys),
                        points=np.array(keep_pts), e_star=float(e_star))


def box_window_2d(mesh, i_range, j_range):
    """Enumerate (keys, points) of a rectangular index box of a 2D mesh."""
    keys = [(i, j) for i in i_range for j in j_range]
    ii = np.array([k[0] for k in keys])
    jj = np.array([k[1] for k in keys])
    pts = np.column_stack([mesh.mx.x(ii), mesh.my.x(jj)])
    return keys, pts


def line_window_1d(mesh, i_range):
    keys = list(i_range)
    pts = mesh.x(np.asarray(keys))[:, None]
    return keys, pts
