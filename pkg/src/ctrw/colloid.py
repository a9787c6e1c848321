"""Colloidal cluster: pair potential, RPY mobility, initial condition.

13 spherical particles in 3D (39 degrees of freedom) with a steep soft-core
repulsion plus a short-range depletion attraction, optionally coupled through
the Rotne-Prager-Yamakawa mobility tensor.  The Brownian dynamics SDE in the
package normal form dY = mu dt + sqrt(2) sigma dW reads

    mu = -M_mob grad(E),    sigma sigma^T = M_mob / beta,

with div(M_mob) = 0 for RPY, so the transformed drift is -beta grad(E).
"""

import numpy as np

from .errors import FactorizationFailure, Overlap

DEFAULTS = {
    "n": 13,
    "eta_s": 1.0,
    "beta_inv": 12.3,
    "a": 3.2,
    "eps_sc": 10.0,
    "d1_over_a": 2.245,
    "d2_over_a": 2.694,
    "c_ao_times_a3": 58.5,
    "hydrodynamics": True,
    "zeta0": None,          # no-HI friction; defaults to 6 pi eta_s a
}


def resolve_params(params=None):
    if isinstance(params, dict) and params.get("_resolved"):
        return params
    p = dict(DEFAULTS)
    p.update(params or {})
    p["d1"] = p["d1_over_a"] * p["a"]
    p["d2"] = p["d2_over_a"] * p["a"]
    p["c_ao"] = p["c_ao_times_a3"] / p["a"] ** 3
    if p["zeta0"] is None:
        p["zeta0"] = 6.0 * np.pi * p["eta_s"] * p["a"]
    p["beta"] = 1.0 / p["beta_inv"]
    # Brownian time beta * eta_s * a^3
    p["t_brownian"] = p["beta"] * p["eta_s"] * p["a"] ** 3
    p["_resolved"] = True
    return p


def pair_potential(r, p):
    """U(r) = soft core + attractive tail; tail fixed so U -> 0 at infinity."""
    r = np.asarray(r, dtype=float)
    a, eps, c = p["a"], p["eps_sc"], p["c_ao"]
    d1, d2 = p["d1"], p["d2"]
    u_sc = eps * (2.0 * a / r) ** 24

    def tail_mid(s):
        return -c * (2.0 / 3.0 * d2 ** 3 - d2 ** 2 * s + s ** 3 / 3.0)

    u_ao = np.where(r >= d2, 0.0,
                    np.where(r >= d1, tail_mid(r),
                             tail_mid(d1) - c * (d2 ** 2 - d1 ** 2) * (d1 - r)))
    return u_sc + u_ao


def pair_force(r, p):
    """Radial force -U'(r); positive values push the pair apart."""
    r = np.asarray(r, dtype=float)
    a, eps, c = p["a"], p["eps_sc"], p["c_ao"]
    d1, d2 = p["d1"], p["d2"]
    f_sc = 24.0 * eps * (2.0 * a) ** 24 / r ** 25
    f_ao = np.where(r >= d2, 0.0,
                    np.where(r >= d1, c * (d2 ** 2 - r ** 2),
                             c * (d2 ** 2 - d1 ** 2)))
    return f_sc - f_ao


def energy_force(q, params=None):
    """Total energy and force -grad(E) for a 3N configuration vector."""
    p = resolve_params(params)
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    n = q.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    dq = q[iu] - q[ju]
    r = np.linalg.norm(dq, axis=1)
    if np.any(r < 1e-12 * p["a"]):
        raise Overlap("pair distance below 1e-12 * a")
    energy = float(np.sum(pair_potential(r, p)))
    fmag = pair_force(r, p)
    fvec = (fmag / r)[:, None] * dq
    force = np.zeros_like(q)
    np.add.at(force, iu, fvec)
    np.add.at(force, ju, -fvec)
    return energy, force.ravel()


def rpy_mobility(q, params=None):
    """RPY mobility matrix (3N x 3N) and its noise columns.

    With hydrodynamics off (R_hydro = 0) the matrix is identity over the
    friction zeta0 and the noise columns are scaled coordinate axes.
    Returns (M, B) with B B^T = M.
    """
    p = resolve_params(params)
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    n = q.shape[0]
    if not p["hydrodynamics"]:
        m = np.eye(3 * n) / p["zeta0"]
        return m, np.eye(3 * n) / np.sqrt(p["zeta0"])
    rh = p["a"]
    zeta = 6.0 * np.pi * p["eta_s"] * rh
    blocks = np.zeros((n, n, 3, 3))
    idx = np.arange(n)
    blocks[idx, idx] = np.eye(3) / zeta
    iu, ju = np.triu_indices(n, k=1)
    dq = q[iu] - q[ju]
    r = np.linalg.norm(dq, axis=1)
    far = r > 2.0 * rh
    s = rh / r
    c1 = np.where(far, 0.75 * s + 0.5 * s ** 3, 1.0 - (9.0 / 32.0) / s)
    c2 = np.where(far, 0.75 * s - 1.5 * s ** 3, (3.0 / 32.0) / s)
    e = dq / r[:, None]
    outer = e[:, :, None] * e[:, None, :]
    off = (c1[:, None, None] * np.eye(3) + c2[:, None, None] * outer) / zeta
    blocks[iu, ju] = off
    blocks[ju, iu] = off
    m = blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    try:
        b = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(
            "RPY matrix not positive definite; check parameters") from exc
    return m, b


def icosahedron_cluster(edge):
    """12 icosahedron vertices plus the center, edge length as given."""
    phi = 0.5 * (1.0 + np.sqrt(5.0))
    base = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            base.append((0.0, s1, s2 * phi))
            base.append((s1, s2 * phi, 0.0))
            base.append((s2 * phi, 0.0, s1))
    verts = np.array(base) * (edge / 2.0)
    return np.vstack([verts, np.zeros(3)]).ravel()


def radius_of_gyration(q):
    """Root-mean-square particle distance from the cluster centroid."""
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    centered = q - q.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(centered ** 2, axis=1))))


def build_problem(params=None):
    from .model import DomainSpec, SdeProblem

    p = resolve_params(params)
    n3 = 3 * p["n"]
    beta = p["beta"]

    def drift(x):
        _, force = energy_force(x, p)
        m, _ = rpy_mobility(x, p)
        return m @ force

    def diffusion(x):
        m, _ = rpy_mobility(x, p)
        return m / beta

    def noise(x):
        _, b = rpy_mobility(x, p)
        return b / np.sqrt(beta)

    def tdrift(x):
        _, force = energy_force(x, p)
        return beta * force

    return SdeProblem(dim=n3, domain=DomainSpec(kind="all_space"),
                      drift=drift, diffusion=diffusion, noise_columns=noise,
                      name="colloid_cluster", params=p,
                      transformed_drift_fn=tdrift)
