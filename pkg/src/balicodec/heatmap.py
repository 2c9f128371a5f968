"""Ground-truth heatmap synthesis.

Landmark heatmaps place a radial kernel peak at each landmark; boundary
heatmaps transform the exact Euclidean distance to a densified boundary
polyline.  Boundary values use ``exp(-Dist / (2 sigma^2))`` with the distance
to the *first* power by default; a ``squared`` switch selects the conventional
``Dist^2`` form.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .geometry import BoundaryScheme, GridSpec, LandmarkSet, frozen_array

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "HeatmapKind",
    "HeatmapStack",
    "kernel_value",
    "render_landmark_heatmaps",
    "interpolate_boundary",
    "rasterize_polyline",
    "distance_transform",
    "render_boundary_heatmaps",
]

# Kernel values below this are flushed to zero for sparse storage; the decode
# crop sits well inside the surviving support.
VALUE_CUTOFF = 1e-4


class KernelFamily(Enum):
    GAUSSIAN = "gaussian"
    GED = "ged"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class KernelSpec:
    """Radial peak profile; value is exactly 1 at radius 0 for every family.

    GED's shape parameter ``d`` recovers the Gaussian at ``d = 0``; Student-t's
    ``df`` recovers it as ``df -> inf``.
    """

    family: KernelFamily
    sigma: float
    d: float | None = None
    df: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError(f"sigma must be a positive real, got {self.sigma}")
        if self.family is KernelFamily.GED:
            if self.d is None or not np.isfinite(self.d) or self.d <= -1:
                raise ValidationError(f"GED requires shape parameter d > -1, got {self.d}")
        elif self.family is KernelFamily.STUDENT_T:
            if self.df is None or not np.isfinite(self.df) or self.df <= 0:
                raise ValidationError(f"Student-t requires df > 0, got {self.df}")

    @classmethod
    def gaussian(cls, sigma: float = 1.5) -> "KernelSpec":
        return cls(KernelFamily.GAUSSIAN, sigma)

    @classmethod
    def ged(cls, d: float, sigma: float = 1.5) -> "KernelSpec":
        return cls(KernelFamily.GED, sigma, d=d)

    @classmethod
    def student_t(cls, df: float, sigma: float = 1.5) -> "KernelSpec":
        return cls(KernelFamily.STUDENT_T, sigma, df=df)


class HeatmapKind(Enum):
    LANDMARK = "landmark"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class HeatmapStack:
    """C channels of height x width confidence maps in [0, 1].

    ``degenerate`` lists boundary channels that collapsed to the floor value
    because their boundary had fewer than two usable landmarks.
    """

    channels: np.ndarray  # (C, H, W)
    grid: GridSpec
    kind: HeatmapKind
    degenerate: tuple[int, ...] = ()

    def __post_init__(self):
        ch = frozen_array(self.channels)
        if ch.ndim != 3 or ch.shape[0] == 0 or ch.shape[1:] != self.grid.shape:
            raise ValidationError(
                f"channels must have shape (C >= 1, {self.grid.height}, {self.grid.width}), got {ch.shape}"
            )
        if not np.isfinite(ch).all():
            raise ValidationError("heatmap values must be finite")
        if ch.min() < 0 or ch.max() > 1 + 1e-9:
            raise ValidationError("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "degenerate", tuple(self.degenerate))

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


def kernel_value(r2, spec: KernelSpec):
    """Peak-normalized kernel value at squared radius ``r2`` (px^2)."""
    r2 = np.asarray(r2, float)
    if np.any(r2 < 0):
        raise ValidationError("squared radius must be nonnegative")
    u = r2 / (spec.sigma ** 2)
    if spec.family is KernelFamily.GAUSSIAN:
        out = np.exp(-0.5 * u)
    elif spec.family is KernelFamily.GED:
        out = np.exp(-0.5 * np.power(u, 1.0 / (1.0 + spec.d)))
    else:
        out = np.power(1.0 + u / spec.df, -(spec.df + 1.0) / 2.0)
    return out if out.ndim else float(out)


def render_landmark_heatmaps(
    l: LandmarkSet, spec: KernelSpec, grid: GridSpec | None = None
) -> HeatmapStack:
    """One kernel-peak channel per landmark; sub-cutoff values stored as 0."""
    grid = grid or l.grid
    if grid != l.grid:
        raise ValidationError("landmark set and requested grid disagree")
    ii = np.arange(grid.width, dtype=float)
    jj = np.arange(grid.height, dtype=float)
    du2 = (ii[None, :] - l.points[:, 0:1]) ** 2  # (n, W)
    dv2 = (jj[None, :] - l.points[:, 1:2]) ** 2  # (n, H)
    r2 = dv2[:, :, None] + du2[:, None, :]  # (n, H, W)
    values = kernel_value(r2, spec)
    values[values < VALUE_CUTOFF] = 0.0
    values.flags.writeable = False
    return HeatmapStack(values, grid, HeatmapKind.LANDMARK)


def interpolate_boundary(
    l: LandmarkSet, boundary: tuple[int, ...], step: float = 0.25
) -> np.ndarray:
    """Densify one boundary into a polyline with vertex spacing <= ``step``.

    The chain through the boundary's landmarks is resampled uniformly by arc
    length, so collinear interior landmarks do not move the vertices.  Returns
    an (m, 2) array; boundaries with fewer than two finite landmarks yield an
    empty (0, 2) array.
    """
    if step <= 0 or step > 0.5:
        raise ValidationError(f"step must lie in (0, 0.5] px, got {step}")
    pts = l.points[list(boundary)]
    pts = pts[np.isfinite(pts).all(axis=1)]
    if len(pts) < 2:
        return np.zeros((0, 2))
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(arc[-1])
    if total == 0.0:
        return pts[:1].copy()
    n_seg = max(1, int(np.ceil(total / step)))
    s = np.linspace(0.0, total, n_seg + 1)
    u = np.interp(s, arc, pts[:, 0])
    v = np.interp(s, arc, pts[:, 1])
    return np.column_stack([u, v])


def rasterize_polyline(polyline: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Mark the nearest cell of every vertex; off-grid vertices are dropped."""
    raster = np.zeros(grid.shape, dtype=bool)
    if len(polyline) == 0:
        return raster
    i = np.rint(polyline[:, 0]).astype(int)
    j = np.rint(polyline[:, 1]).astype(int)
    keep = (i >= 0) & (i < grid.width) & (j >= 0) & (j < grid.height)
    raster[j[keep], i[keep]] = True
    return raster


def distance_transform(raster: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from every cell to the nearest set cell.

    Separable two-pass scheme: a vertical scan produces per-column nearest
    set-cell distances, then each row takes the exact lower envelope
    ``min_x (i - x)^2 + g(x)^2`` by full evaluation.  Exact, O(H*W*W), fully
    vectorized.
    """
    raster = np.asarray(raster, bool)
    if raster.ndim != 2:
        raise ValidationError(f"raster must be 2-D, got shape {raster.shape}")
    if not raster.any():
        raise ValidationError("raster has no set cell; boundary is absent")
    h, w = raster.shape
    inf = float(h + w + 1)

    # Vertical pass: g[j, i] = distance along the column to the nearest set cell.
    g = np.full((h, w), inf)
    g[raster] = 0.0
    for j in range(1, h):
        np.minimum(g[j], g[j - 1] + 1.0, out=g[j])
    for j in range(h - 2, -1, -1):
        np.minimum(g[j], g[j + 1] + 1.0, out=g[j])

    # Horizontal pass: squared distance is the envelope over source columns.
    cols = np.arange(w, dtype=float)
    dx2 = (cols[:, None] - cols[None, :]) ** 2  # (w, w): [target, source]
    g2 = g ** 2
    d2 = np.empty((h, w))
    block = max(1, (1 << 22) // (w * w))  # cap the (rows, w, w) workspace
    for j0 in range(0, h, block):
        j1 = min(h, j0 + block)
        d2[j0:j1] = np.min(dx2[None, :, :] + g2[j0:j1, None, :], axis=2)
    return np.sqrt(d2)


def render_boundary_heatmaps(
    l: LandmarkSet,
    scheme: BoundaryScheme,
    sigma: float = 1.5,
    xi: float = 0.0,
    grid: GridSpec | None = None,
    exponent: str = "linear",
    step: float = 0.25,
) -> HeatmapStack:
    """Distance-transform boundary confidence channels.

    Inside the strict ``Dist < 2 sigma`` band the value is
    ``exp(-Dist^p / (2 sigma^2))`` with ``p = 1`` (``linear``) or ``p = 2``
    (``squared``); outside it is the floor ``xi``.  A boundary whose polyline
    degenerates renders as an all-``xi`` channel and is flagged.
    """
    grid = grid or l.grid
    if grid != l.grid:
        raise ValidationError("landmark set and requested grid disagree")
    if len(l) != scheme.n_points:
        raise ValidationError(
            f"boundary scheme indexes {scheme.n_points} landmarks, set has {len(l)}"
        )
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if exponent not in ("linear", "squared"):
        raise ValidationError(f"exponent must be 'linear' or 'squared', got {exponent!r}")
    # xi must sit below the smallest in-band value so the floor region stays
    # distinguishable: exp(-(2 sigma)^p / (2 sigma^2)) at the band edge.
    power = 1 if exponent == "linear" else 2
    in_band_min = float(np.exp(-((2.0 * sigma) ** power) / (2.0 * sigma ** 2)))
    if not (0.0 <= xi < in_band_min):
        raise ValidationError(f"xi must lie in [0, {in_band_min:.6g}), got {xi}")

    channels = np.full((scheme.k,) + grid.shape, xi)
    degenerate = []
    band = 2.0 * sigma
    for k, boundary in enumerate(scheme.boundaries):
        poly = interpolate_boundary(l, boundary, step=step)
        raster = rasterize_polyline(poly, grid)
        if not raster.any():
            degenerate.append(k)
            continue
        dist = distance_transform(raster)
        inside = dist < band
        channels[k][inside] = np.exp(-(dist[inside] ** power) / (2.0 * sigma ** 2))
    channels.flags.writeable = False
    return HeatmapStack(channels, grid, HeatmapKind.BOUNDARY, degenerate=tuple(degenerate))
