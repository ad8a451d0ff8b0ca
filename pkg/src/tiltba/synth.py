"""Synthetic tilt-series datasets with controlled noise.

Draw order from the single seeded generator (``numpy.random.default_rng``):

1. marker positions, uniform in the centered volume;
2. invisible fraction, then a permutation of all (marker, image) pairs;
3. 2D Gaussian noise for every pair (applied to visible ones only);
4. camera perturbations, image-major ``(m, 6)``;
5. outlier selection among visible observations, then their signs, then
   their magnitudes ``(k, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GenerationError, TriangulationError
from .model import Dataset, project_many

MIN_VIEWS = 3

# fallback magnitudes for parameters whose true mean is 0: s, angles (rad), shifts (px)
_UNIT_REFERENCE = np.array([1.0, math.pi / 36, math.pi / 36, math.pi / 36, 10.0, 10.0])


def tilt_schedule(kind: str, m: Optional[int] = None) -> list[float]:
    """Named tilt schedules in degrees.

    ``veev21`` is -50..50 step 5, ``centriole64`` is -61..65 step 2 and
    ``uniform`` spreads ``m`` angles evenly over [-60, 60].
    """
    if kind == "veev21":
        return [float(a) for a in range(-50, 51, 5)]
    if kind == "centriole64":
        return [float(a) for a in range(-61, 66, 2)]
    if kind == "uniform":
        if m is None or m < 2:
            raise ValueError("uniform schedule needs m >= 2")
        return [float(a) for a in np.linspace(-60.0, 60.0, m)]
    raise ValueError(f"unknown tilt schedule {kind!r}")


def default_schedule(m: int) -> list[float]:
    if m == 21:
        return tilt_schedule("veev21")
    if m == 64:
        return tilt_schedule("centriole64")
    return tilt_schedule("uniform", m)


@dataclass(frozen=True)
class SynthConfig:
    m: int = 21
    n: int = 20
    image_size: tuple[int, int] = (1024, 1024)
    volume: tuple[float, float, float] = (800.0, 800.0, 400.0)
    tilt_schedule: Optional[Union[str, Sequence[float]]] = None
    noise_a: float = 0.2
    noise_b: float = 5.0
    invisible_range: tuple[float, float] = (0.05, 0.30)
    outlier_frac: float = 0.05
    outlier_mean: float = 0.01 * 1024
    outlier_std: float = 0.04 * 1024
    seed: int = 0

    def __post_init__(self):
        if self.m < 2 or self.n < 3:
            raise ValueError("need m >= 2 images and n >= 3 markers")
        lo, hi = self.invisible_range
        if not (0 <= lo <= hi < 1):
            raise ValueError("invisible_range must satisfy 0 <= lo <= hi < 1")
        if not 0 <= self.outlier_frac < 1:
            raise ValueError("outlier_frac must lie in [0, 1)")
        if self.noise_a < 0 or self.noise_b < 0 or self.outlier_std < 0:
            raise ValueError("noise parameters must be non-negative")

    def tilts_deg(self) -> list[float]:
        sched = self.tilt_schedule
        if sched is None:
            tilts = default_schedule(self.m)
        elif isinstance(sched, str):
            tilts = tilt_schedule(sched, self.m)
        else:
            tilts = [float(a) for a in sched]
        if len(tilts) != self.m:
            raise ValueError(f"tilt schedule has {len(tilts)} angles but m={self.m}")
        return tilts

    def label(self) -> str:
        return f"m{self.m} n{self.n} a{self.noise_a:g} b{self.noise_b:g} seed{self.seed}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        d["volume"] = list(self.volume)
        d["invisible_range"] = list(self.invisible_range)
        if d["tilt_schedule"] is not None and not isinstance(d["tilt_schedule"], str):
            d["tilt_schedule"] = list(d["tilt_schedule"])
        return d


@dataclass(frozen=True, eq=False)
class GroundTruth:
    cameras: np.ndarray
    points: np.ndarray
    projections: np.ndarray  # (n*m, 2), pre-noise, same row order as the dataset


def triangulate(uv, cameras) -> np.ndarray:
    """Least-squares 3D point from its observations in several images.

    ``uv`` is ``(k, 2)`` and ``cameras`` the matching ``(k, 6)`` rows. Each
    view gives two equations linear in the point:
    ``P R_beta R_alpha X = s (R_gamma z + t)``.
    """
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    cams = np.atleast_2d(np.asarray(cameras, dtype=float))
    if len(uv) < 2:
        raise TriangulationError(f"need at least 2 views, got {len(uv)}")
    s, alpha, beta, gamma = cams[:, 0], cams[:, 1], cams[:, 2], cams[:, 3]
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    k = len(uv)
    A = np.empty((k, 2, 3))
    A[:, 0] = np.stack([cb, sb * sa, -sb * ca], axis=1)
    A[:, 1] = np.stack([np.zeros(k), ca, sa], axis=1)
    rhs0 = cg * uv[:, 0] + sg * uv[:, 1] + cams[:, 4]
    rhs1 = -sg * uv[:, 0] + cg * uv[:, 1] + cams[:, 5]
    b = s[:, None] * np.stack([rhs0, rhs1], axis=1)
    A = A.reshape(2 * k, 3)
    b = b.reshape(2 * k)
    AtA = A.T @ A
    eig = np.linalg.eigvalsh(AtA)
    if eig[0] <= 1e-10 * eig[-1]:
        raise TriangulationError("views do not constrain depth (rank-deficient system)")
    return np.linalg.solve(AtA, A.T @ b)


def _mark_invisible(rng, n: int, m: int, count: int) -> np.ndarray:
    visible = np.ones((n, m), dtype=bool)
    per_marker = np.full(n, m)
    marked = 0
    for pair in rng.permutation(n * m):
        if marked == count:
            break
        i = pair // m
        if per_marker[i] > MIN_VIEWS:
            visible[i, pair % m] = False
            per_marker[i] -= 1
            marked += 1
    if marked < count:
        raise GenerationError(
            f"cannot hide {count} of {n * m} observations while keeping {MIN_VIEWS} views per marker"
        )
    return visible


def generate(config: SynthConfig) -> tuple[Dataset, GroundTruth]:
    """Build a noisy dataset and its ground truth from ``config``."""
    if config.m < MIN_VIEWS:
        raise GenerationError(f"need at least {MIN_VIEWS} images, got m={config.m}")
    m, n = config.m, config.n
    rng = np.random.default_rng(config.seed)
    tilts = np.radians(config.tilts_deg())

    half = np.asarray(config.volume, dtype=float) / 2
    true_points = rng.uniform(-half, half, size=(n, 3))
    true_cams = np.zeros((m, 6))
    true_cams[:, 0] = 1.0
    true_cams[:, 2] = tilts

    # observation table: marker-major rows, row = i * m + j
    marker = np.repeat(np.arange(n), m)
    image = np.tile(np.arange(m), n)
    clean = project_many(true_cams[image], true_points[marker])

    # step 1: visibility
    lo, hi = config.invisible_range
    frac = rng.uniform(lo, hi)
    visible = _mark_invisible(rng, n, m, int(round(frac * n * m))).ravel()

    # step 2: 2D Gaussian noise
    sigma = config.noise_a / 100 * config.image_size[0]
    noise = rng.normal(0.0, 1.0, size=(n * m, 2)) * sigma
    uv = clean + np.where(visible[:, None], noise, 0.0)

    # step 3: camera perturbation scaled by the mean magnitude of each parameter
    avg = np.abs(true_cams).mean(axis=0)
    avg = np.where(avg > 0, avg, _UNIT_REFERENCE)
    scale = config.noise_b / 100 * avg
    cams0 = true_cams + rng.uniform(-1.0, 1.0, size=(m, 6)) * scale

    # step 4: outliers among visible observations
    vis_rows = np.flatnonzero(visible)
    n_out = int(round(config.outlier_frac * len(vis_rows)))
    if n_out:
        rows = np.sort(rng.choice(vis_rows, size=n_out, replace=False))
        signs = rng.choice([-1.0, 1.0], size=n_out)
        bumps = rng.normal(0.0, config.outlier_std, size=(n_out, 2))
        uv[rows] += signs[:, None] * config.outlier_mean + bumps

    points0 = np.empty((n, 3))
    for i in range(n):
        sel = np.flatnonzero((marker == i) & visible)
        points0[i] = triangulate(uv[sel], cams0[image[sel]])

    dataset = Dataset(
        cameras=cams0,
        points=points0,
        marker=marker,
        image=image,
        uv=uv,
        visible=visible,
        image_size=config.image_size,
        metadata={"generator": config.to_dict(), "seed": config.seed},
    )
    truth = GroundTruth(true_cams, true_points, clean)
    return dataset, truth
