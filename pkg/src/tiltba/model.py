"""Tilt-series projection model, reprojection residuals and the BA cost.

Conventions: marker index ``i`` (0..n-1), image index ``j`` (0..m-1); angles
in radians; coordinates in pixels relative to the image / volume center.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import InvalidParametersError
from .params import check_params, param_dim, unpack


class CameraParams(NamedTuple):
    s: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    t0: float = 0.0
    t1: float = 0.0


class Point3(NamedTuple):
    X: float
    Y: float
    Z: float


class Observation2D(NamedTuple):
    marker_index: int
    image_index: int
    u: float
    v: float
    visible: bool


def rotation_matrices(camera) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(R_alpha, R_beta, R_gamma)`` for one camera."""
    _, alpha, beta, gamma, _, _ = (float(c) for c in camera)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    r_alpha = np.array([[1.0, 0.0, 0.0], [0.0, ca, sa], [0.0, -sa, ca]])
    r_beta = np.array([[cb, 0.0, -sb], [0.0, 1.0, 0.0], [sb, 0.0, cb]])
    r_gamma = np.array([[cg, sg], [-sg, cg]])
    return r_alpha, r_beta, r_gamma


_P = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def project(camera, point) -> np.ndarray:
    """Project one 3D point through one camera; returns ``(u, v)``.

    Computes ``R_gamma^T ((1/s) P R_beta R_alpha X - t)``.
    """
    cam = np.asarray(camera, dtype=float)
    if not cam[0] > 0:
        raise InvalidParametersError(f"camera scale must be positive, got {cam[0]}")
    r_alpha, r_beta, r_gamma = rotation_matrices(cam)
    q = _P @ r_beta @ r_alpha @ np.asarray(point, dtype=float)
    uv = r_gamma.T @ (q / cam[0] - cam[4:6])
    if not np.all(np.isfinite(uv)):
        raise InvalidParametersError(f"projection is non-finite for camera {tuple(cam)}")
    return uv


def project_many(cams: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Row-wise projection: ``cams`` (N, 6) with ``pts`` (N, 3) -> (N, 2)."""
    s, alpha, beta, gamma = cams[:, 0], cams[:, 1], cams[:, 2], cams[:, 3]
    X, Y, Z = pts[:, 0], pts[:, 1], pts[:, 2]
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    w1 = ca * Y + sa * Z
    w2 = -sa * Y + ca * Z
    p0 = (cb * X - sb * w2) / s - cams[:, 4]
    p1 = w1 / s - cams[:, 5]
    return np.stack([cg * p0 - sg * p1, sg * p0 + cg * p1], axis=1)


def residual(obs: Observation2D, camera, point) -> np.ndarray:
    """Reprojection error ``z - h`` for a single visible observation."""
    if not obs.visible:
        raise ValueError(
            f"observation (marker={obs.marker_index}, image={obs.image_index}) is not visible"
        )
    return np.array([obs.u, obs.v], dtype=float) - project(camera, point)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Cameras, points and the observation table of one alignment problem.

    Observations are stored column-wise (``marker``, ``image``, ``uv``,
    ``visible``). Invisible rows may hold arbitrary ``uv`` values.
    """

    cameras: np.ndarray
    points: np.ndarray
    marker: np.ndarray
    image: np.ndarray
    uv: np.ndarray
    visible: np.ndarray
    image_size: tuple[int, int] = (1024, 1024)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cams = np.asarray(self.cameras, dtype=float).reshape(-1, 6)
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        marker = np.asarray(self.marker, dtype=np.int64).ravel()
        image = np.asarray(self.image, dtype=np.int64).ravel()
        uv = np.asarray(self.uv, dtype=float).reshape(-1, 2)
        visible = np.asarray(self.visible, dtype=bool).ravel()
        m, n = cams.shape[0], pts.shape[0]
        if m < 1 or n < 1:
            raise ValueError("dataset needs at least one camera and one point")
        if not (len(marker) == len(image) == len(uv) == len(visible)):
            raise ValueError("observation columns have inconsistent lengths")
        if np.any((marker < 0) | (marker >= n)):
            raise ValueError(f"observation marker index out of range [0, {n})")
        if np.any((image < 0) | (image >= m)):
            raise ValueError(f"observation image index out of range [0, {m})")
        pairs = marker * m + image
        if len(np.unique(pairs)) != len(pairs):
            raise ValueError("duplicate observation for a (marker, image) pair")
        if not visible.any():
            raise ValueError("dataset has no visible observation")
        if not np.all(np.isfinite(uv[visible])):
            raise ValueError("visible observation with non-finite coordinates")

        # canonical residual order: image-major, then marker
        vis_rows = np.flatnonzero(visible)
        order = np.lexsort((marker[vis_rows], image[vis_rows]))
        vis_rows = vis_rows[order]

        set_ = object.__setattr__
        set_(self, "cameras", _frozen(cams))
        set_(self, "points", _frozen(pts))
        set_(self, "marker", _frozen(marker))
        set_(self, "image", _frozen(image))
        set_(self, "uv", _frozen(uv))
        set_(self, "visible", _frozen(visible))
        set_(self, "image_size", tuple(int(v) for v in self.image_size))
        set_(self, "metadata", dict(self.metadata))
        set_(self, "_vis_rows", _frozen(vis_rows))

    @classmethod
    def from_observations(cls, cameras, points, observations: Iterable[Observation2D], **kw):
        obs = list(observations)
        return cls(
            cameras=cameras,
            points=points,
            marker=[o.marker_index for o in obs],
            image=[o.image_index for o in obs],
            uv=[(o.u, o.v) for o in obs] if obs else np.empty((0, 2)),
            visible=[o.visible for o in obs],
            **kw,
        )

    @property
    def m(self) -> int:
        return self.cameras.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def n_visible(self) -> int:
        return len(self._vis_rows)

    @property
    def dim(self) -> int:
        return param_dim(self.m, self.n)

    @property
    def visible_rows(self) -> np.ndarray:
        """Indices of visible observations in canonical residual order."""
        return self._vis_rows

    def observations(self) -> list[Observation2D]:
        return [
            Observation2D(int(i), int(j), float(u), float(v), bool(vis))
            for i, j, (u, v), vis in zip(self.marker, self.image, self.uv, self.visible)
        ]

    def camera(self, j: int) -> CameraParams:
        return CameraParams(*(float(c) for c in self.cameras[j]))

    def point(self, i: int) -> Point3:
        return Point3(*(float(c) for c in self.points[i]))

    def initial_params(self) -> np.ndarray:
        return np.concatenate([self.cameras.ravel(), self.points.ravel()])

    def with_initial(self, cameras=None, points=None) -> "Dataset":
        return Dataset(
            cameras=self.cameras if cameras is None else cameras,
            points=self.points if points is None else points,
            marker=self.marker,
            image=self.image,
            uv=self.uv,
            visible=self.visible,
            image_size=self.image_size,
            metadata=self.metadata,
        )


def residual_vector(dataset: Dataset, params) -> np.ndarray:
    """Stacked residuals ``z - h`` of visible observations, shape ``(2 N_vis,)``."""
    x = check_params(params, dataset.m, dataset.n)
    cams, pts = unpack(x, dataset.m, dataset.n)
    rows = dataset.visible_rows
    h = project_many(cams[dataset.image[rows]], pts[dataset.marker[rows]])
    return (dataset.uv[rows] - h).ravel()


def cost(dataset: Dataset, params) -> float:
    """Half the sum of squared reprojection errors over visible observations."""
    phi = residual_vector(dataset, params)
    return 0.5 * float(phi @ phi)


def l1_residual(dataset: Dataset, params, mode: str = "visible") -> float:
    """Average absolute reprojection error per coordinate.

    ``mode="all"`` divides by ``2 m n``; ``mode="visible"`` divides by
    ``2 N_vis``.
    """
    phi = residual_vector(dataset, params)
    total = float(np.abs(phi).sum())
    if mode == "visible":
        return total / (2 * dataset.n_visible)
    if mode == "all":
        return total / (2 * dataset.m * dataset.n)
    raise ValueError(f"unknown L1 mode {mode!r}; expected 'visible' or 'all'")
