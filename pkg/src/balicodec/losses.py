"""Training-objective family over caller-supplied tensors.

Everything here is a pure function of numpy arrays; no gradients are
computed.  Heatmap channels are compared as probability distributions via the
Jensen-Shannon divergence (natural log); offset-plane crops are shifted to be
nonnegative before normalization; coordinates are compared in grid-normalized
[0, 1] units.  Squared-Frobenius variants of the paired-image losses are
provided for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .disturb import Disturbance, transfer_heatmap
from .errors import ValidationError
from .field import BaliField, nearest_cell
from .geometry import FlipPermutation, LandmarkSet
from .heatmap import HeatmapKind, HeatmapStack

__all__ = [
    "EPS",
    "LossWeights",
    "StageOutputs",
    "SupervisedSample",
    "OverallLoss",
    "normalize",
    "js_divergence",
    "stack_js",
    "field_crop_js",
    "loss_org",
    "loss_scl",
    "loss_coor",
    "loss_overall",
    "loss_semi",
    "l2_losses",
    "attention_gate",
]

EPS = 1e-8  # distribution floor; guarantees no log(0) on any finite input


@dataclass(frozen=True)
class LossWeights:
    """Weights of the overall objective; defaults are the reported balance."""

    lambda1: float = 1.0
    lambda2: float = 16.0
    gamma: float = 40.0
    eta: float = 4.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "gamma", "eta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be a finite nonnegative real, got {v}")


@dataclass(frozen=True)
class StageOutputs:
    """Per-stage landmark and boundary stacks plus the final-stage field.

    Index ``t`` runs 0..T-1 with T-1 the final stage; earlier stages may live
    on a coarser grid.  ``field`` may be None when no offset planes exist
    (heatmap-only ablations).
    """

    landmark_stages: tuple[HeatmapStack, ...]
    boundary_stages: tuple[HeatmapStack, ...]
    field: BaliField | None = None

    def __post_init__(self):
        ls = tuple(self.landmark_stages)
        bs = tuple(self.boundary_stages)
        if len(ls) < 1 or len(ls) != len(bs):
            raise ValidationError("need T >= 1 landmark stages matching boundary stages")
        for s in ls:
            if s.kind is not HeatmapKind.LANDMARK:
                raise ValidationError("landmark_stages must hold LANDMARK stacks")
        for s in bs:
            if s.kind is not HeatmapKind.BOUNDARY:
                raise ValidationError("boundary_stages must hold BOUNDARY stacks")
        if len({s.n_channels for s in ls}) != 1 or len({s.n_channels for s in bs}) != 1:
            raise ValidationError("channel counts must agree across stages")
        object.__setattr__(self, "landmark_stages", ls)
        object.__setattr__(self, "boundary_stages", bs)

    @property
    def n_stages(self) -> int:
        return len(self.landmark_stages)


@dataclass(frozen=True)
class SupervisedSample:
    """Everything the overall loss consumes for one labeled paired sample."""

    pred: tuple[StageOutputs, StageOutputs]  # (alpha, beta)
    gt: tuple[StageOutputs, StageOutputs]
    pred_landmarks: tuple[LandmarkSet, LandmarkSet]
    gt_landmarks: tuple[LandmarkSet, LandmarkSet]
    disturbance: Disturbance


@dataclass(frozen=True)
class OverallLoss:
    total: float
    breakdown: dict[str, float]


def normalize(h: np.ndarray) -> np.ndarray:
    """Turn a nonnegative map into a distribution: ``(h + eps) / sum``.

    Negative entries (possible in raw network output) are clamped to zero
    first so the result is a valid distribution for any finite input.
    """
    h = np.asarray(h, float)
    if not np.isfinite(h).all():
        raise ValidationError("map must be finite")
    h = np.maximum(h, 0.0) + EPS
    return h / h.sum()


def _kl_sum(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / m[mask])))


def js_divergence(p: np.ndarray, q: np.ndarray, validate: bool = True) -> float:
    """Jensen-Shannon divergence in nats; symmetric, bounded by ln 2."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape != q.shape:
        raise ValidationError(f"shape mismatch: {p.shape} vs {q.shape}")
    if validate:
        for name, a in (("p", p), ("q", q)):
            if a.min() < 0:
                raise ValidationError(f"{name} has negative entries")
            if abs(a.sum() - 1.0) > 1e-6:
                raise ValidationError(f"{name} does not sum to 1 (sum={a.sum():.8f})")
    m = 0.5 * (p + q)
    return 0.5 * _kl_sum(p, m) + 0.5 * _kl_sum(q, m)


def stack_js(pred: HeatmapStack | np.ndarray, gt: HeatmapStack | np.ndarray) -> float:
    """Sum of per-channel JS divergences between two (C, H, W) stacks."""
    p = pred.channels if isinstance(pred, HeatmapStack) else np.asarray(pred, float)
    q = gt.channels if isinstance(gt, HeatmapStack) else np.asarray(gt, float)
    if p.shape != q.shape:
        raise ValidationError(f"stack shape mismatch: {p.shape} vs {q.shape}")
    p = np.maximum(p, 0.0) + EPS
    q = np.maximum(q, 0.0) + EPS
    p = p / p.sum(axis=(-2, -1), keepdims=True)
    q = q / q.sum(axis=(-2, -1), keepdims=True)
    m = 0.5 * (p + q)
    return 0.5 * _kl_sum(p, m) + 0.5 * _kl_sum(q, m)


def field_crop_js(
    pred_field: BaliField, gt_field: BaliField, centers: LandmarkSet, r_crop: int = 3
) -> float:
    """JS between offset-plane crops around each ground-truth landmark.

    Each ``(2r+1)`` crop of the u and v planes is shifted to be nonnegative
    (subtract its minimum) and normalized before comparison.  Landmarks whose
    crop misses the grid contribute nothing.
    """
    if pred_field.grid != gt_field.grid:
        raise ValidationError("fields must share a grid")
    if pred_field.n_channels != gt_field.n_channels or pred_field.n_channels != len(centers):
        raise ValidationError("field channel counts must match the landmark count")
    grid = gt_field.grid
    total = 0.0
    for phi, point in enumerate(centers.points):
        ci, cj = nearest_cell(point)
        i0, i1 = max(0, ci - r_crop), min(grid.width, ci + r_crop + 1)
        j0, j1 = max(0, cj - r_crop), min(grid.height, cj + r_crop + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        for pred_plane, gt_plane in (
            (pred_field.u_offsets[phi], gt_field.u_offsets[phi]),
            (pred_field.v_offsets[phi], gt_field.v_offsets[phi]),
        ):
            a = pred_plane[j0:j1, i0:i1]
            b = gt_plane[j0:j1, i0:i1]
            total += js_divergence(normalize(a - a.min()), normalize(b - b.min()), validate=False)
    return total


def _stage_pairs(pred: StageOutputs, gt: StageOutputs):
    if pred.n_stages != gt.n_stages:
        raise ValidationError("prediction and ground truth must have the same stage count")
    return zip(pred.landmark_stages, gt.landmark_stages, pred.boundary_stages, gt.boundary_stages)


def _supervised_terms(pred: StageOutputs, gt: StageOutputs) -> tuple[float, float]:
    """(final-stage JS sum, intermediate-stage JS sum) for one member."""
    final = 0.0
    inter = 0.0
    t_final = pred.n_stages - 1
    for t, (ph, gh, pb, gb) in enumerate(_stage_pairs(pred, gt)):
        term = stack_js(ph, gh) + stack_js(pb, gb)
        if t == t_final:
            final += term
        else:
            inter += term
    return final, inter


def loss_org(
    pred: tuple[StageOutputs, StageOutputs],
    gt: tuple[StageOutputs, StageOutputs],
    weights: LossWeights,
    gt_landmarks: tuple[LandmarkSet, LandmarkSet],
    r_crop: int = 3,
) -> float:
    """Supervised loss over both pair members.

    Final-stage heatmap terms carry ``lambda1``, intermediate stages ``eta``,
    offset-plane crops ``lambda2``.
    """
    if len(pred) != 2 or len(gt) != 2:
        raise ValidationError("loss_org needs both pair members (alpha, beta)")
    total = 0.0
    for k in range(2):
        final, inter = _supervised_terms(pred[k], gt[k])
        total += weights.lambda1 * final + weights.eta * inter
        if weights.lambda2 > 0:
            if pred[k].field is None or gt[k].field is None:
                raise ValidationError("lambda2 > 0 requires offset fields on both sides")
            total += weights.lambda2 * field_crop_js(
                pred[k].field, gt[k].field, gt_landmarks[k], r_crop
            )
    return total


def loss_scl(
    pred_alpha: StageOutputs,
    pred_beta: StageOutputs,
    d: Disturbance,
    include_final: bool = True,
    landmark_perm: FlipPermutation | None = None,
    boundary_perm: FlipPermutation | None = None,
) -> float:
    """Self-calibrated consistency between a sample and its disturbed twin.

    Per stage: JS(D(H_alpha) || H_beta) plus the boundary analogue, where D is
    the disturbance transfer (identity for texture kinds).  ``include_final``
    selects stages 1..T versus 1..T-1.
    """
    if pred_alpha.n_stages != pred_beta.n_stages:
        raise ValidationError("pair members must have the same stage count")
    t_stop = pred_alpha.n_stages if include_final else pred_alpha.n_stages - 1
    total = 0.0
    for t in range(t_stop):
        warped_h = transfer_heatmap(d, pred_alpha.landmark_stages[t], flip_perm=landmark_perm)
        warped_b = transfer_heatmap(d, pred_alpha.boundary_stages[t], flip_perm=boundary_perm)
        total += stack_js(warped_h, pred_beta.landmark_stages[t])
        total += stack_js(warped_b, pred_beta.boundary_stages[t])
    return total


def loss_coor(
    pred: tuple[LandmarkSet, LandmarkSet] | LandmarkSet,
    gt: tuple[LandmarkSet, LandmarkSet] | LandmarkSet,
) -> float:
    """Squared coordinate error in grid-normalized [0, 1] units."""
    preds = (pred,) if isinstance(pred, LandmarkSet) else tuple(pred)
    gts = (gt,) if isinstance(gt, LandmarkSet) else tuple(gt)
    if len(preds) != len(gts):
        raise ValidationError("prediction and ground-truth member counts differ")
    total = 0.0
    for p, g in zip(preds, gts):
        if len(p) != len(g):
            raise ValidationError(f"landmark counts differ: {len(p)} vs {len(g)}")
        span = np.array([p.grid.width - 1, p.grid.height - 1], float)
        diff = (p.points - g.points) / span
        total += float(np.sum(diff * diff))
    return total


def loss_overall(
    sample: SupervisedSample,
    weights: LossWeights = LossWeights(),
    r_crop: int = 3,
    scl_include_final: bool = False,
    landmark_perm: FlipPermutation | None = None,
    boundary_perm: FlipPermutation | None = None,
) -> OverallLoss:
    """Weighted combination of all objective terms, with a labeled breakdown.

    The self-calibrated term runs over intermediate stages by default
    (``scl_include_final=False``) and is weighted by ``eta``.
    """
    final = inter = crop = 0.0
    for k in range(2):
        f, i = _supervised_terms(sample.pred[k], sample.gt[k])
        final += f
        inter += i
        if weights.lambda2 > 0:
            if sample.pred[k].field is None or sample.gt[k].field is None:
                raise ValidationError("lambda2 > 0 requires offset fields on both sides")
            crop += field_crop_js(
                sample.pred[k].field, sample.gt[k].field, sample.gt_landmarks[k], r_crop
            )
    coor = loss_coor(sample.pred_landmarks, sample.gt_landmarks)
    scl = loss_scl(
        sample.pred[0],
        sample.pred[1],
        sample.disturbance,
        include_final=scl_include_final,
        landmark_perm=landmark_perm,
        boundary_perm=boundary_perm,
    )
    breakdown = {
        "lambda1_final_heatmaps": weights.lambda1 * final,
        "eta_intermediate_heatmaps": weights.eta * inter,
        "lambda2_field_crops": weights.lambda2 * crop,
        "gamma_coordinates": weights.gamma * coor,
        "eta_self_calibrated": weights.eta * scl,
    }
    return OverallLoss(float(sum(breakdown.values())), breakdown)


def loss_semi(
    labeled: Sequence[SupervisedSample],
    unlabeled: Sequence[tuple[StageOutputs, StageOutputs, Disturbance]],
    weights: LossWeights = LossWeights(),
    r_crop: int = 3,
    landmark_perm: FlipPermutation | None = None,
    boundary_perm: FlipPermutation | None = None,
) -> float:
    """Overall loss on labeled samples plus unweighted intermediate-stage
    consistency on unlabeled pairs."""
    total = 0.0
    for sample in labeled:
        total += loss_overall(
            sample,
            weights,
            r_crop=r_crop,
            landmark_perm=landmark_perm,
            boundary_perm=boundary_perm,
        ).total
    for alpha, beta, d in unlabeled:
        total += loss_scl(
            alpha,
            beta,
            d,
            include_final=False,
            landmark_perm=landmark_perm,
            boundary_perm=boundary_perm,
        )
    return total


def _frob2(a: HeatmapStack, b: HeatmapStack) -> float:
    if a.channels.shape != b.channels.shape:
        raise ValidationError(f"stack shape mismatch: {a.channels.shape} vs {b.channels.shape}")
    diff = a.channels - b.channels
    return float(np.sum(diff * diff))


def l2_losses(
    pred: Sequence[StageOutputs],
    gt: Sequence[StageOutputs],
    pairs: Sequence[tuple[StageOutputs, StageOutputs, Disturbance]],
    eta: float = 4.0,
    lam: float = 1.0,
    landmark_perm: FlipPermutation | None = None,
    boundary_perm: FlipPermutation | None = None,
) -> tuple[float, float, float]:
    """Squared-Frobenius variants: (supervised, self-calibrated, combined).

    The combined value is ``eta * scl + lam * org``; with ``lam = 0`` the
    result depends only on the paired predictions, never on ground truth.
    """
    if len(pred) != len(gt):
        raise ValidationError("prediction and ground-truth member counts differ")
    org = 0.0
    for p, g in zip(pred, gt):
        for ph, gh, pb, gb in _stage_pairs(p, g):
            org += _frob2(ph, gh) + _frob2(pb, gb)
    scl = 0.0
    for alpha, beta, d in pairs:
        if alpha.n_stages != beta.n_stages:
            raise ValidationError("pair members must have the same stage count")
        for t in range(alpha.n_stages):
            warped_h = transfer_heatmap(d, alpha.landmark_stages[t], flip_perm=landmark_perm)
            warped_b = transfer_heatmap(d, alpha.boundary_stages[t], flip_perm=boundary_perm)
            scl += _frob2(warped_h, beta.landmark_stages[t])
            scl += _frob2(warped_b, beta.boundary_stages[t])
    return org, scl, eta * scl + lam * org


def attention_gate(q: np.ndarray, mask_logits: np.ndarray) -> np.ndarray:
    """Residual sigmoid gate: ``sigmoid(logits) * q + q``."""
    q = np.asarray(q, float)
    logits = np.asarray(mask_logits, float)
    if q.shape != logits.shape:
        raise ValidationError(f"shape mismatch: {q.shape} vs {logits.shape}")
    mask = np.empty_like(logits)
    pos = logits >= 0
    mask[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ex = np.exp(logits[~pos])
    mask[~pos] = ex / (1.0 + ex)
    return mask * q + q
