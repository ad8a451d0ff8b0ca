"""Packing of camera and point parameters into one optimization vector.

Layout: ``6`` entries per image ``(s, alpha, beta, gamma, t0, t1)`` in image
order, followed by ``3`` entries per marker ``(X, Y, Z)`` in marker order.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParametersError, PackingError

CAMERA_DIM = 6
POINT_DIM = 3


def param_dim(m: int, n: int) -> int:
    return CAMERA_DIM * m + POINT_DIM * n


def pack(cameras, points) -> np.ndarray:
    cams = np.asarray(cameras, dtype=float)
    pts = np.asarray(points, dtype=float)
    if cams.ndim != 2 or cams.shape[1] != CAMERA_DIM:
        raise PackingError(f"cameras must have shape (m, 6), got {cams.shape}")
    if pts.ndim != 2 or pts.shape[1] != POINT_DIM:
        raise PackingError(f"points must have shape (n, 3), got {pts.shape}")
    return np.concatenate([cams.ravel(), pts.ravel()])


def unpack(params, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a parameter vector into ``(cameras (m, 6), points (n, 3))`` views."""
    x = np.asarray(params, dtype=float)
    expected = param_dim(m, n)
    if x.ndim != 1 or x.shape[0] != expected:
        raise PackingError(
            f"parameter vector has shape {x.shape}, expected ({expected},) for m={m}, n={n}"
        )
    split = CAMERA_DIM * m
    return x[:split].reshape(m, CAMERA_DIM), x[split:].reshape(n, POINT_DIM)


def check_params(params, m: int, n: int) -> np.ndarray:
    """Validate dimension, finiteness and positive scale; return as float array."""
    cams, _ = unpack(params, m, n)
    x = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidParametersError("parameter vector contains non-finite entries")
    if np.any(cams[:, 0] <= 0):
        raise InvalidParametersError("camera scale s must be positive")
    return x
