"""Offset-field encoding.

Each landmark owns a pair of ``(u, v)`` offset planes supported on the
``(2R+1) x (2R+1)`` square of cells around it.  On support the offset stored
at cell ``(i, j)`` is exactly ``(u_hat - i, v_hat - j)``, so adding the cell
index back recovers the landmark coordinate bit-for-bit; off support both
planes are zero.  The composite bundles these planes with the boundary
heatmap stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import BoundaryScheme, GridSpec, LandmarkSet, frozen_array
from .heatmap import (
    HeatmapKind,
    HeatmapStack,
    KernelSpec,
    render_boundary_heatmaps,
    render_landmark_heatmaps,
)

__all__ = ["BaliField", "BaliComposite", "encode_field", "encode_composite", "nearest_cell"]


def nearest_cell(point: np.ndarray) -> tuple[int, int]:
    """Grid cell nearest a sub-pixel point, rounding halves up per axis."""
    return (int(np.floor(point[0] + 0.5)), int(np.floor(point[1] + 0.5)))


@dataclass(frozen=True)
class BaliField:
    """Per-landmark offset planes plus their binary support masks.

    Freshly encoded fields satisfy the reconstruction identity
    ``offset + cell == landmark`` on support; fields produced by warping or by
    a network are carried by the same type without that guarantee.
    ``empty_support`` flags channels whose support square missed the grid
    entirely (off-grid landmarks).
    """

    u_offsets: np.ndarray  # (n, H, W)
    v_offsets: np.ndarray  # (n, H, W)
    support: np.ndarray  # (n, H, W) bool
    r_support: int  # support half-width R
    grid: GridSpec
    empty_support: tuple[int, ...] = ()

    def __post_init__(self):
        u = frozen_array(self.u_offsets)
        v = frozen_array(self.v_offsets)
        s = frozen_array(self.support, dtype=bool)
        shape = (u.shape[0],) + self.grid.shape
        if u.shape != shape or v.shape != shape or s.shape != shape:
            raise ValidationError(
                f"field planes must share shape (n, {self.grid.height}, {self.grid.width})"
            )
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValidationError("field offsets must be finite")
        if self.r_support < 1:
            raise ValidationError(f"support half-width must be >= 1, got {self.r_support}")
        object.__setattr__(self, "u_offsets", u)
        object.__setattr__(self, "v_offsets", v)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "empty_support", tuple(self.empty_support))

    @property
    def n_channels(self) -> int:
        return self.u_offsets.shape[0]


@dataclass(frozen=True)
class BaliComposite:
    """Boundary confidence stack plus the offset field, on one grid."""

    boundary: HeatmapStack
    field: BaliField

    def __post_init__(self):
        if self.boundary.kind is not HeatmapKind.BOUNDARY:
            raise ValidationError("composite boundary stack must have BOUNDARY kind")
        if self.boundary.grid != self.field.grid:
            raise ValidationError("boundary stack and field must share a grid")


def encode_field(l: LandmarkSet, r_support: int = 5, grid: GridSpec | None = None) -> BaliField:
    """Encode ground-truth offsets on square supports around each landmark."""
    grid = grid or l.grid
    if grid != l.grid:
        raise ValidationError("landmark set and requested grid disagree")
    if r_support < 1:
        raise ValidationError(f"support half-width must be >= 1, got {r_support}")
    n = len(l)
    u = np.zeros((n,) + grid.shape)
    v = np.zeros((n,) + grid.shape)
    support = np.zeros((n,) + grid.shape, dtype=bool)
    empty = []
    for phi, point in enumerate(l.points):
        ci, cj = nearest_cell(point)
        i0, i1 = max(0, ci - r_support), min(grid.width - 1, ci + r_support)
        j0, j1 = max(0, cj - r_support), min(grid.height - 1, cj + r_support)
        if i0 > i1 or j0 > j1:
            empty.append(phi)
            continue
        ii = np.arange(i0, i1 + 1, dtype=float)
        jj = np.arange(j0, j1 + 1, dtype=float)
        u[phi, j0 : j1 + 1, i0 : i1 + 1] = point[0] - ii[None, :]
        v[phi, j0 : j1 + 1, i0 : i1 + 1] = point[1] - jj[:, None]
        support[phi, j0 : j1 + 1, i0 : i1 + 1] = True
    for arr in (u, v, support):
        arr.flags.writeable = False
    return BaliField(u, v, support, r_support, grid, empty_support=tuple(empty))


def encode_composite(
    l: LandmarkSet,
    scheme: BoundaryScheme,
    kernel: KernelSpec | None = None,
    boundary_sigma: float = 1.5,
    xi: float = 0.0,
    r_support: int = 5,
    grid: GridSpec | None = None,
    boundary_exponent: str = "linear",
) -> tuple[HeatmapStack, BaliComposite]:
    """Ground-truth encoding of one sample: landmark heatmaps plus composite."""
    grid = grid or l.grid
    kernel = kernel or KernelSpec.gaussian()
    landmark_stack = render_landmark_heatmaps(l, kernel, grid)
    boundary_stack = render_boundary_heatmaps(
        l, scheme, sigma=boundary_sigma, xi=xi, grid=grid, exponent=boundary_exponent
    )
    field = encode_field(l, r_support=r_support, grid=grid)
    return landmark_stack, BaliComposite(boundary_stack, field)
