"""JSON dataset files.

Schema (``format_version`` 1)::

    {
      "format_version": 1,
      "image_size": [w, h],
      "cameras": [{"s", "alpha_deg", "beta_deg", "gamma_deg", "t0", "t1"}, ...],
      "points": [{"x", "y", "z"}, ...],
      "observations": [{"marker", "image", "u", "v", "visible"}, ...],
      "ground_truth": {"cameras": [...], "points": [...], "projections": [[u, v], ...]},
      "metadata": {...}
    }

``ground_truth`` is optional. Unknown keys are rejected. Angles are written
in degrees with enough decimal digits that converting back to radians
recovers the in-memory double exactly.
"""

from __future__ import annotations

import json
import math
import re
from decimal import Context, Decimal
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DatasetFormatError
from .model import Dataset
from .synth import GroundTruth

FORMAT_VERSION = 1

_CTX = Context(prec=60)
_PI = Decimal("3.141592653589793238462643383279502884197169399375105820974944592")
_RAW = "\x00raw:"
_RAW_RE = re.compile(r'"\\u0000raw:([^"]*)"')

_TOP_KEYS = {"format_version", "image_size", "cameras", "points", "observations", "metadata"}
_OPTIONAL_TOP = {"ground_truth"}
_CAMERA_KEYS = ("s", "alpha_deg", "beta_deg", "gamma_deg", "t0", "t1")
_POINT_KEYS = ("x", "y", "z")
_OBS_KEYS = ("marker", "image", "u", "v", "visible")
_GT_KEYS = {"cameras", "points", "projections"}


def _deg_text(rad: float) -> str:
    if rad == 0 or not math.isfinite(rad):
        return json.dumps(float(np.degrees(rad)))
    deg = _CTX.divide(_CTX.multiply(Decimal(rad), Decimal(180)), _PI)
    return f"{deg:.25g}"


def _rad(value) -> float:
    if isinstance(value, float):
        return float(np.radians(value))
    return float(_CTX.divide(_CTX.multiply(Decimal(value), _PI), Decimal(180)))


def _num(x: float):
    return float(x)


def _camera_records(cams: np.ndarray) -> list[dict]:
    out = []
    for s, a, b, g, t0, t1 in cams:
        out.append({
            "s": _num(s),
            "alpha_deg": _RAW + _deg_text(a),
            "beta_deg": _RAW + _deg_text(b),
            "gamma_deg": _RAW + _deg_text(g),
            "t0": _num(t0),
            "t1": _num(t1),
        })
    return out


def _point_records(pts: np.ndarray) -> list[dict]:
    return [{"x": _num(x), "y": _num(y), "z": _num(z)} for x, y, z in pts]


def _plain(obj):
    """Convert metadata to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def dumps_dataset(dataset: Dataset, ground_truth: Optional[GroundTruth] = None) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "image_size": list(dataset.image_size),
        "cameras": _camera_records(dataset.cameras),
        "points": _point_records(dataset.points),
        "observations": [
            {"marker": int(i), "image": int(j), "u": _num(u), "v": _num(v), "visible": bool(vis)}
            for i, j, (u, v), vis in zip(dataset.marker, dataset.image, dataset.uv, dataset.visible)
        ],
    }
    if ground_truth is not None:
        doc["ground_truth"] = {
            "cameras": _camera_records(ground_truth.cameras),
            "points": _point_records(ground_truth.points),
            "projections": [[_num(u), _num(v)] for u, v in ground_truth.projections],
        }
    doc["metadata"] = _plain(dataset.metadata)
    text = json.dumps(doc, indent=1)
    return _RAW_RE.sub(r"\1", text) + "\n"


def save_dataset(dataset: Dataset, path, ground_truth: Optional[GroundTruth] = None) -> None:
    Path(path).write_text(dumps_dataset(dataset, ground_truth))


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise DatasetFormatError(f"{self.source}: {where}: {msg}")

    def keys(self, obj, where: str, required, optional=()):
        if not isinstance(obj, dict):
            self.fail(where, f"expected an object, got {type(obj).__name__}")
        missing = [k for k in required if k not in obj]
        if missing:
            self.fail(where, f"missing field {missing[0]!r}")
        unknown = sorted(set(obj) - set(required) - set(optional))
        if unknown:
            self.fail(where, f"unknown field {unknown[0]!r}")

    def list(self, obj, where: str) -> list:
        if not isinstance(obj, list):
            self.fail(where, f"expected an array, got {type(obj).__name__}")
        return obj

    def number(self, value, where: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float, Decimal)):
            self.fail(where, f"expected a number, got {value!r}")
        return float(value)

    def angle(self, value, where: str) -> float:
        self.number(value, where)
        if isinstance(value, float):  # NaN / Infinity constants
            return value
        return _rad(value)

    def integer(self, value, where: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(where, f"expected an integer, got {value!r}")
        return value

    def cameras(self, arr, where: str) -> np.ndarray:
        rows = []
        for j, cam in enumerate(self.list(arr, where)):
            w = f"{where}[{j}]"
            self.keys(cam, w, _CAMERA_KEYS)
            rows.append([
                self.number(cam["s"], f"{w}.s"),
                self.angle(cam["alpha_deg"], f"{w}.alpha_deg"),
                self.angle(cam["beta_deg"], f"{w}.beta_deg"),
                self.angle(cam["gamma_deg"], f"{w}.gamma_deg"),
                self.number(cam["t0"], f"{w}.t0"),
                self.number(cam["t1"], f"{w}.t1"),
            ])
        return np.array(rows, dtype=float).reshape(-1, 6)

    def points(self, arr, where: str) -> np.ndarray:
        rows = []
        for i, pt in enumerate(self.list(arr, where)):
            w = f"{where}[{i}]"
            self.keys(pt, w, _POINT_KEYS)
            rows.append([self.number(pt[k], f"{w}.{k}") for k in _POINT_KEYS])
        return np.array(rows, dtype=float).reshape(-1, 3)


def _to_native(obj):
    if isinstance(obj, Decimal):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _to_native(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_to_native(v) for v in obj]
    return obj


def loads_dataset(text: str, source: str = "<string>") -> tuple[Dataset, Optional[GroundTruth]]:
    rd = _Reader(source)
    try:
        doc = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{source}: invalid JSON: {exc}") from exc
    rd.keys(doc, "document", _TOP_KEYS, _OPTIONAL_TOP)
    version = doc["format_version"]
    if version != FORMAT_VERSION:
        rd.fail("format_version", f"unsupported version {version!r} (expected {FORMAT_VERSION})")

    size = rd.list(doc["image_size"], "image_size")
    if len(size) != 2:
        rd.fail("image_size", "expected [width, height]")
    image_size = tuple(rd.integer(v, "image_size") for v in size)

    cameras = rd.cameras(doc["cameras"], "cameras")
    points = rd.points(doc["points"], "points")
    m, n = len(cameras), len(points)

    obs = rd.list(doc["observations"], "observations")
    marker, image, uv, visible = [], [], [], []
    for r, o in enumerate(obs):
        w = f"observations[{r}]"
        rd.keys(o, w, _OBS_KEYS)
        i = rd.integer(o["marker"], f"{w}.marker")
        j = rd.integer(o["image"], f"{w}.image")
        if not 0 <= i < n:
            rd.fail(f"{w}.marker", f"index {i} out of range [0, {n})")
        if not 0 <= j < m:
            rd.fail(f"{w}.image", f"index {j} out of range [0, {m})")
        if not isinstance(o["visible"], bool):
            rd.fail(f"{w}.visible", f"expected true/false, got {o['visible']!r}")
        marker.append(i)
        image.append(j)
        uv.append((rd.number(o["u"], f"{w}.u"), rd.number(o["v"], f"{w}.v")))
        visible.append(o["visible"])

    metadata = doc["metadata"]
    if not isinstance(metadata, dict):
        rd.fail("metadata", "expected an object")
    try:
        dataset = Dataset(
            cameras=cameras,
            points=points,
            marker=np.array(marker, dtype=np.int64),
            image=np.array(image, dtype=np.int64),
            uv=np.array(uv, dtype=float).reshape(-1, 2),
            visible=np.array(visible, dtype=bool),
            image_size=image_size,
            metadata=_to_native(metadata),
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{source}: {exc}") from exc

    truth = None
    if "ground_truth" in doc:
        gt = doc["ground_truth"]
        rd.keys(gt, "ground_truth", _GT_KEYS)
        gt_cams = rd.cameras(gt["cameras"], "ground_truth.cameras")
        gt_pts = rd.points(gt["points"], "ground_truth.points")
        proj = []
        for r, row in enumerate(rd.list(gt["projections"], "ground_truth.projections")):
            w = f"ground_truth.projections[{r}]"
            if not isinstance(row, list) or len(row) != 2:
                rd.fail(w, "expected [u, v]")
            proj.append([rd.number(row[0], w), rd.number(row[1], w)])
        if gt_cams.shape != cameras.shape or gt_pts.shape != points.shape or len(proj) != len(obs):
            rd.fail("ground_truth", "dimensions do not match the dataset")
        truth = GroundTruth(gt_cams, gt_pts, np.array(proj, dtype=float).reshape(-1, 2))
    return dataset, truth


def load_dataset(path) -> tuple[Dataset, Optional[GroundTruth]]:
    path = Path(path)
    return loads_dataset(path.read_text(), source=str(path))
