"""Derivatives of the BA residuals and cost, plus finite-difference oracles.

Per-observation derivatives are taken with respect to the nine local
variables ``(s, alpha, beta, gamma, t0, t1, X, Y, Z)`` and scattered into the
dense global layout of :mod:`tiltba.params`.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParametersError
from .model import Dataset, cost, project_many, residual_vector
from .params import CAMERA_DIM, POINT_DIM, check_params, pack, param_dim, unpack

__all__ = [
    "pack",
    "unpack",
    "param_dim",
    "projection_derivatives",
    "linearize",
    "jacobian",
    "gradient",
    "hessian",
    "fd_gradient",
    "fd_hessian",
    "fd_jacobian",
]

HESSIAN_KINDS = ("exact", "gauss_newton")


def projection_derivatives(cams: np.ndarray, pts: np.ndarray, second: bool = False):
    """Projection ``h`` with its first (and optionally second) derivatives.

    Returns ``h`` (N, 2), ``dh`` (N, 2, 9) and, when ``second`` is set,
    ``d2h`` (N, 2, 9, 9).
    """
    N = cams.shape[0]
    s = cams[:, 0]
    ca, sa = np.cos(cams[:, 1]), np.sin(cams[:, 1])
    cb, sb = np.cos(cams[:, 2]), np.sin(cams[:, 2])
    cg, sg = np.cos(cams[:, 3]), np.sin(cams[:, 3])
    X, Y, Z = pts[:, 0], pts[:, 1], pts[:, 2]

    # q = P R_beta R_alpha X, with w = R_alpha X
    w1 = ca * Y + sa * Z
    w2 = -sa * Y + ca * Z
    q = np.stack([cb * X - sb * w2, w1], axis=1)

    dq = np.zeros((N, 2, 9))
    dq[:, 0, 1] = sb * w1
    dq[:, 0, 2] = -sb * X - cb * w2
    dq[:, 0, 6] = cb
    dq[:, 0, 7] = sb * sa
    dq[:, 0, 8] = -sb * ca
    dq[:, 1, 1] = w2
    dq[:, 1, 7] = ca
    dq[:, 1, 8] = sa

    inv_s = 1.0 / s
    p = q * inv_s[:, None] - cams[:, 4:6]
    dp = dq * inv_s[:, None, None]
    dp[:, :, 0] = -q * (inv_s**2)[:, None]
    dp[:, 0, 4] = -1.0
    dp[:, 1, 5] = -1.0

    # h = G p with G = R_gamma^T
    G = np.empty((N, 2, 2))
    G[:, 0, 0], G[:, 0, 1], G[:, 1, 0], G[:, 1, 1] = cg, -sg, sg, cg
    dG = np.empty((N, 2, 2))
    dG[:, 0, 0], dG[:, 0, 1], dG[:, 1, 0], dG[:, 1, 1] = -sg, -cg, cg, -sg

    # value from the model itself so residuals agree bit for bit
    h = project_many(cams, pts)
    dh = np.einsum("nab,nbv->nav", G, dp)
    dGp = np.einsum("nab,nb->na", dG, p)
    dh[:, :, 3] = dGp
    if not second:
        return h, dh

    d2q = np.zeros((N, 2, 9, 9))

    def sym(c, i, j, val):
        d2q[:, c, i, j] = val
        d2q[:, c, j, i] = val

    sym(0, 1, 1, sb * w2)
    sym(0, 1, 2, cb * w1)
    sym(0, 2, 2, -q[:, 0])
    sym(0, 1, 7, sb * ca)
    sym(0, 1, 8, sb * sa)
    sym(0, 2, 6, -sb)
    sym(0, 2, 7, cb * sa)
    sym(0, 2, 8, -cb * ca)
    sym(1, 1, 1, -w1)
    sym(1, 1, 7, -sa)
    sym(1, 1, 8, ca)

    d2p = d2q * inv_s[:, None, None, None]
    cross_s = -dq * (inv_s**2)[:, None, None]
    d2p[:, :, 0, :] = cross_s
    d2p[:, :, :, 0] = cross_s
    d2p[:, :, 0, 0] = 2.0 * q * (inv_s**3)[:, None]

    d2h = np.einsum("nab,nbvw->navw", G, d2p)
    dG_dp = np.einsum("nab,nbv->nav", dG, dp)
    d2h[:, :, 3, :] = dG_dp
    d2h[:, :, :, 3] = dG_dp
    d2h[:, :, 3, 3] = -h
    return h, dh, d2h


def _local_columns(dataset: Dataset, rows: np.ndarray) -> np.ndarray:
    """Global column indices of the 9 local variables for each observation row."""
    cam0 = CAMERA_DIM * dataset.image[rows]
    pt0 = CAMERA_DIM * dataset.m + POINT_DIM * dataset.marker[rows]
    return np.concatenate(
        [cam0[:, None] + np.arange(CAMERA_DIM), pt0[:, None] + np.arange(POINT_DIM)], axis=1
    )


def _evaluate(dataset: Dataset, params, second: bool = False):
    x = check_params(params, dataset.m, dataset.n)
    cams, pts = unpack(x, dataset.m, dataset.n)
    rows = dataset.visible_rows
    out = projection_derivatives(cams[dataset.image[rows]], pts[dataset.marker[rows]], second)
    e = dataset.uv[rows] - out[0]
    return (e, _local_columns(dataset, rows)) + tuple(out[1:])


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise InvalidParametersError(f"{what} has non-finite entries")
    return a


def linearize(dataset: Dataset, params) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector and its Jacobian at ``params`` in a single pass."""
    e, cols, dh = _evaluate(dataset, params)
    n_obs = len(e)
    J = np.zeros((2 * n_obs, dataset.dim))
    r = np.arange(2 * n_obs).reshape(n_obs, 2)
    # phi = z - h, so the Jacobian is -dh
    J[r[:, :, None], cols[:, None, :]] = -dh
    return _finite(e.ravel(), "residual vector"), _finite(J, "Jacobian")


def jacobian(dataset: Dataset, params) -> np.ndarray:
    return linearize(dataset, params)[1]


def gradient(dataset: Dataset, params) -> np.ndarray:
    """Cost gradient ``J^T phi``, assembled per observation."""
    e, cols, dh = _evaluate(dataset, params)
    g = np.zeros(dataset.dim)
    np.add.at(g, cols, -np.einsum("na,nav->nv", e, dh))
    return _finite(g, "gradient")


def hessian(dataset: Dataset, params, kind: str = "exact") -> np.ndarray:
    """Cost Hessian: ``exact`` includes residual curvature, ``gauss_newton`` is ``J^T J``."""
    if kind not in HESSIAN_KINDS:
        raise ValueError(f"unknown Hessian kind {kind!r}; expected one of {HESSIAN_KINDS}")
    if kind == "gauss_newton":
        e, cols, dh = _evaluate(dataset, params)
        blocks = np.einsum("nav,naw->nvw", dh, dh)
    else:
        e, cols, dh, d2h = _evaluate(dataset, params, second=True)
        # sum_r phi_r * d2(phi_r) with d2(phi) = -d2h
        blocks = np.einsum("nav,naw->nvw", dh, dh) - np.einsum("na,navw->nvw", e, d2h)
    H = np.zeros((dataset.dim, dataset.dim))
    np.add.at(H, (cols[:, :, None], cols[:, None, :]), blocks)
    H = 0.5 * (H + H.T)
    return _finite(H, "Hessian")


def _steps(x: np.ndarray, h_rel: float) -> np.ndarray:
    if not h_rel > 0:
        raise ValueError("h_rel must be positive")
    return h_rel * (1.0 + np.abs(x))


def fd_gradient(dataset: Dataset, params, h_rel: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of :func:`tiltba.model.cost`."""
    x = np.array(params, dtype=float)
    steps = _steps(x, h_rel)
    g = np.empty_like(x)
    for i, h in enumerate(steps):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (cost(dataset, xp) - cost(dataset, xm)) / (2 * h)
    return g


def fd_hessian(dataset: Dataset, params, h_rel: float = 1e-6) -> np.ndarray:
    """Symmetrized central differences of the analytic gradient."""
    x = np.array(params, dtype=float)
    steps = _steps(x, h_rel)
    H = np.empty((len(x), len(x)))
    for i, h in enumerate(steps):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        H[:, i] = (gradient(dataset, xp) - gradient(dataset, xm)) / (2 * h)
    return 0.5 * (H + H.T)


def fd_jacobian(dataset: Dataset, params, h_rel: float = 1e-6) -> np.ndarray:
    """Central differences of the stacked residual vector."""
    x = np.array(params, dtype=float)
    steps = _steps(x, h_rel)
    cols = []
    for i, h in enumerate(steps):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((residual_vector(dataset, xp) - residual_vector(dataset, xm)) / (2 * h))
    return np.stack(cols, axis=1)
