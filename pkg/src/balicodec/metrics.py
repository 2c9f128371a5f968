"""Landmark evaluation: normalized mean error, AUC of the error CDF, failure rate."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geometry import LandmarkSet, eye_indices

__all__ = [
    "NormKind",
    "Normalization",
    "EvalReport",
    "nme",
    "auc",
    "failure_rate",
    "evaluate",
]


class NormKind(Enum):
    INTERPUPIL = "interpupil"
    INTEROCULAR = "interocular"
    BOX_GEOMEAN = "box_geomean"
    BOX_DIAG = "box_diag"


@dataclass(frozen=True)
class Normalization:
    """Which face-scale distance divides the raw landmark error.

    Box kinds require an explicit ``(x, y, w, h)`` bounding box; eye kinds
    require a scheme with eye landmark tables.
    """

    kind: NormKind
    box: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.kind in (NormKind.BOX_GEOMEAN, NormKind.BOX_DIAG):
            if self.box is None:
                raise ValidationError(f"{self.kind.value} normalization requires a bounding box")
            x, y, w, h = self.box
            if w <= 0 or h <= 0:
                raise ValidationError(f"bounding box must have positive size, got w={w}, h={h}")
            object.__setattr__(self, "box", (float(x), float(y), float(w), float(h)))

    def distance(self, gt: LandmarkSet) -> float:
        if self.kind is NormKind.BOX_GEOMEAN:
            return float(np.sqrt(self.box[2] * self.box[3]))
        if self.kind is NormKind.BOX_DIAG:
            return float(np.hypot(self.box[2], self.box[3]))
        eyes = eye_indices(gt.scheme)
        if self.kind is NormKind.INTEROCULAR:
            a, b = eyes["outer_eye_corners"]
            return float(np.linalg.norm(gt.points[a] - gt.points[b]))
        left = gt.points[eyes["left_eye"]].mean(axis=0)
        right = gt.points[eyes["right_eye"]].mean(axis=0)
        return float(np.linalg.norm(left - right))


@dataclass(frozen=True)
class EvalReport:
    """Per-sample NME values plus their aggregates at threshold ``tau``."""

    per_sample_nme: tuple[float, ...]
    mean_nme: float
    auc: float
    fr: float
    tau: float

    @classmethod
    def from_errors(cls, errors: Sequence[float], tau: float) -> "EvalReport":
        errs = tuple(float(e) for e in errors)
        return cls(errs, float(np.mean(errs)), auc(errs, tau), failure_rate(errs, tau), tau)


def nme(pred: LandmarkSet, gt: LandmarkSet, norm: Normalization) -> float:
    """Mean Euclidean landmark error divided by the normalization distance."""
    if len(pred) != len(gt):
        raise ValidationError(f"landmark counts differ: {len(pred)} vs {len(gt)}")
    d = norm.distance(gt)
    if d <= 1e-9:
        raise ValidationError(f"degenerate normalization distance {d}")
    err = np.linalg.norm(pred.points - gt.points, axis=1)
    return float(err.mean() / d)


def auc(errors: Sequence[float], tau: float) -> float:
    """Area under the empirical error CDF on [0, tau], divided by tau.

    Exact step-function integration: each error contributes
    ``max(0, tau - e) / tau`` of CDF area, so no binning is involved.
    """
    errs = np.asarray(errors, float)
    if errs.size == 0:
        raise ValidationError("cannot integrate an empty error list")
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    return float(np.mean(np.clip(1.0 - errs / tau, 0.0, 1.0)))


def failure_rate(errors: Sequence[float], tau: float) -> float:
    """Fraction of errors strictly above ``tau``."""
    errs = np.asarray(errors, float)
    if errs.size == 0:
        raise ValidationError("cannot compute a failure rate over an empty error list")
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    return float(np.mean(errs > tau))


def evaluate(
    preds: Sequence[LandmarkSet],
    gts: Sequence[LandmarkSet],
    norm: Normalization | Sequence[Normalization],
    tau: float = 0.08,
) -> EvalReport:
    """Batch NME plus AUC/FR aggregates.

    ``norm`` may be a single normalization (shared eye-based kinds) or one per
    sample (required for per-sample bounding boxes).
    """
    if len(preds) != len(gts):
        raise ValidationError(f"pred/gt length mismatch: {len(preds)} vs {len(gts)}")
    if len(preds) == 0:
        raise ValidationError("cannot evaluate an empty sample list")
    norms = [norm] * len(preds) if isinstance(norm, Normalization) else list(norm)
    if len(norms) != len(preds):
        raise ValidationError("need one normalization per sample")
    errors = [nme(p, g, n) for p, g, n in zip(preds, gts, norms)]
    return EvalReport.from_errors(errors, tau)
