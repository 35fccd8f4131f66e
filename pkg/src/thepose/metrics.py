"""Oriented-box IoU and symmetry-aware pose error metrics.

IoU uses an exact axis-aligned path when the two rotations agree and a
seeded Monte-Carlo estimate otherwise. Rotation errors quotient out the
category's declared symmetry: closed form for bodies of revolution, a
two-element group for mirror-symmetric categories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import Error
from .geometry import Pose, geodesic_angle, rot_z
from .shapes import CategorySpec

IOU_THRESHOLDS = (0.25, 0.50, 0.75)
CELL_ORDER = ("IoU50", "IoU75", "5d2cm", "5d5cm", "10d2cm", "10d5cm",
              "IoU25", "5d", "10d", "2cm", "5cm")


@dataclass(frozen=True)
class PoseError:
    rotation_err: float  # degrees, symmetry-quotiented
    translation_err: float  # centimeters
    iou: float

    def __post_init__(self):
        if not (0.0 <= self.rotation_err <= 180.0 and self.translation_err >= 0):
            raise Error("shape", "pose error out of range")


def _volume(pose: Pose) -> float:
    return float(np.prod(pose.size))


def axis_aligned_iou(a: Pose, b: Pose) -> float:
    """Exact IoU when both boxes share one rotation (interval overlap)."""
    if np.abs(a.rotation - b.rotation).max() >= 1e-9:
        raise Error("shape", "axis_aligned_iou needs equal rotations")
    ca = a.rotation.T @ a.translation
    cb = a.rotation.T @ b.translation
    # per-axis overlap written so coincident boxes give exactly their size
    gap = np.abs(ca - cb)
    overlap = np.minimum((a.size + b.size) / 2 - gap,
                         np.minimum(a.size, b.size))
    inter = float(np.prod(np.maximum(overlap, 0.0)))
    union = _volume(a) + _volume(b) - inter
    return float(np.clip(inter / union, 0.0, 1.0)) if union > 0 else 0.0


def monte_carlo_iou(a: Pose, b: Pose, n_mc: int = 10_000, seed: int = 0) -> float:
    """Membership-test IoU estimate on n_mc uniform samples per box,
    averaged both ways; deterministic for a fixed seed."""
    if n_mc < 10_000:
        raise Error("shape", "n_mc must be at least 1e4")
    vol_a, vol_b = _volume(a), _volume(b)
    rng = np.random.default_rng(seed)
    inter_each = []
    for src, dst, vol in ((a, b, vol_a), (b, a, vol_b)):
        local = (rng.random((n_mc, 3)) - 0.5) * src.size
        world = local @ src.rotation.T + src.translation
        q = (world - dst.translation) @ dst.rotation
        inside = np.all(np.abs(q) <= dst.size / 2, axis=1)
        inter_each.append(vol * inside.mean())
    inter = float(np.mean(inter_each))
    union = vol_a + vol_b - inter
    return float(np.clip(inter / union, 0.0, 1.0)) if union > 0 else 0.0


def box_iou_3d(a: Pose, b: Pose, n_mc: int = 10_000, seed: int = 0) -> float:
    """IoU of two oriented boxes: exact for shared rotations, seeded
    Monte-Carlo otherwise; 0 for boxes separated beyond their diagonals."""
    if n_mc < 10_000:
        raise Error("shape", "n_mc must be at least 1e4")
    sep = np.linalg.norm(a.translation - b.translation)
    if sep > (np.linalg.norm(a.size) + np.linalg.norm(b.size)) / 2.0:
        return 0.0
    if np.abs(a.rotation - b.rotation).max() < 1e-9:
        return axis_aligned_iou(a, b)
    return monte_carlo_iou(a, b, n_mc, seed)


def _axis_angle_deg(u, v) -> float:
    c = float(np.clip(np.dot(u, v), -1.0, 1.0))
    return float(np.degrees(np.arccos(c)))


def symmetric_rotation_error(R_pred, R_gt, symmetry: str) -> float:
    """Min geodesic angle over the category's symmetry group, degrees.

    For revolution symmetry the minimum over all axis rotations reduces in
    closed form to the angle between the two up axes.
    """
    if symmetry == "revolution":
        return _axis_angle_deg(R_pred[:, 2], R_gt[:, 2])
    if symmetry == "mirror":
        return min(geodesic_angle(R_pred, R_gt),
                   geodesic_angle(R_pred, R_gt @ rot_z(np.pi)))
    return geodesic_angle(R_pred, R_gt)


def _aligned_gt_rotation(R_pred, R_gt) -> np.ndarray:
    """gt rotation spun about its axis to best match pred (revolution)."""
    A = R_pred.T @ R_gt
    phi = np.arctan2(A[0, 1] - A[1, 0], A[0, 0] + A[1, 1])
    return R_gt @ rot_z(phi)


def pose_errors(pred: Pose, gt: Pose, spec: CategorySpec, n_mc: int = 10_000,
                seed: int = 0) -> PoseError:
    """Symmetry-aware rotation (deg), translation (cm) and box IoU."""
    trans_cm = float(np.linalg.norm(pred.translation - gt.translation) * 100.0)
    rot = symmetric_rotation_error(pred.rotation, gt.rotation, spec.symmetry)
    if spec.symmetry == "revolution":
        gt_eval = Pose(_aligned_gt_rotation(pred.rotation, gt.rotation),
                       gt.translation, gt.size)
        iou = box_iou_3d(pred, gt_eval, n_mc, seed)
    elif spec.symmetry == "mirror":
        flipped = Pose(gt.rotation @ rot_z(np.pi), gt.translation, gt.size)
        iou = max(box_iou_3d(pred, gt, n_mc, seed),
                  box_iou_3d(pred, flipped, n_mc, seed))
    else:
        iou = box_iou_3d(pred, gt, n_mc, seed)
    return PoseError(rotation_err=rot, translation_err=trans_cm, iou=iou)


@dataclass(frozen=True)
class MetricsReport:
    per_category: dict  # category -> {cell -> percentage}
    mean: dict  # cell -> percentage

    def to_json(self) -> str:
        return json.dumps({"per_category": self.per_category,
                           "mean": self.mean}, indent=2, sort_keys=True)

    def to_table(self) -> str:
        header = f"{'category':10s}" + "".join(f"{c:>8s}" for c in CELL_ORDER)
        lines = [header]
        for cat in sorted(self.per_category):
            row = self.per_category[cat]
            lines.append(f"{cat:10s}"
                         + "".join(f"{row[c]:8.1f}" for c in CELL_ORDER))
        lines.append(f"{'mean':10s}"
                     + "".join(f"{self.mean[c]:8.1f}" for c in CELL_ORDER))
        return "\n".join(lines)


def _cells(err: PoseError) -> dict:
    r, t, iou = err.rotation_err, err.translation_err, err.iou
    return {
        "IoU25": iou > 0.25, "IoU50": iou > 0.50, "IoU75": iou > 0.75,
        "5d2cm": r < 5 and t < 2, "5d5cm": r < 5 and t < 5,
        "10d2cm": r < 10 and t < 2, "10d5cm": r < 10 and t < 5,
        "5d": r < 5, "10d": r < 10, "2cm": t < 2, "5cm": t < 5,
    }


def aggregate(errors) -> MetricsReport:
    """errors: iterable of (PoseError, category). Strict thresholds; cells
    are percentages per category, mean is unweighted across categories."""
    errors = list(errors)
    if not errors:
        raise Error("shape", "no pose errors to aggregate")
    by_cat = {}
    for err, cat in errors:
        by_cat.setdefault(cat, []).append(_cells(err))
    per_category = {}
    for cat, rows in by_cat.items():
        per_category[cat] = {
            cell: 100.0 * np.mean([row[cell] for row in rows])
            for cell in rows[0]
        }
    mean = {
        cell: float(np.mean([per_category[c][cell] for c in per_category]))
        for cell in next(iter(per_category.values()))
    }
    return MetricsReport(per_category=per_category, mean=mean)


def evaluate(store, samples, cfg, n_mc: int = 10_000, seed: int = 0):
    """Run inference on every sample and aggregate symmetry-aware errors."""
    from .head import predict
    from .shapes import category_spec

    pairs = []
    for i, sample in enumerate(samples):
        pred = predict(store, sample, cfg)
        err = pose_errors(pred, sample.gt, category_spec(sample.category),
                          n_mc=n_mc, seed=seed + i)
        pairs.append((err, sample.category))
    return aggregate(pairs), pairs
