"""Shared geometric vocabulary: grids, landmark sets, boundary schemes, affine maps.

Coordinate convention used everywhere in this package: a point is ``(u, v)``
with ``u`` the column and ``v`` the row, origin at the center of the top-left
cell.  A map stored as a numpy array of shape ``(height, width)`` therefore
holds the value for point ``(i, j)`` at ``array[j, i]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ValidationError

__all__ = [
    "GridSpec",
    "Scheme",
    "LandmarkSet",
    "BoundaryScheme",
    "AffineTransform",
    "FlipPermutation",
    "apply_affine",
    "flip_landmarks",
    "default_boundary_scheme",
    "default_flip_permutation",
    "default_boundary_mirror",
    "eye_indices",
    "frozen_array",
]

_MIN_GRID = 8


def frozen_array(values, dtype=float, shape_suffix: tuple[int, ...] | None = None) -> np.ndarray:
    """Copy ``values`` into a read-only contiguous array (skips the copy when
    the input is already locked)."""
    arr = np.asarray(values, dtype=dtype)
    if arr.flags.writeable or not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
    if shape_suffix is not None and arr.shape[len(arr.shape) - len(shape_suffix):] != shape_suffix:
        raise ValidationError(f"expected trailing shape {shape_suffix}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Output grid dimensions in pixels."""

    width: int
    height: int

    def __post_init__(self):
        if not (isinstance(self.width, (int, np.integer)) and isinstance(self.height, (int, np.integer))):
            raise ValidationError("grid dimensions must be integers")
        if self.width < _MIN_GRID or self.height < _MIN_GRID:
            raise ValidationError(
                f"grid must be at least {_MIN_GRID}x{_MIN_GRID}, got {self.width}x{self.height}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(height, width)``."""
        return (self.height, self.width)

    @property
    def center(self) -> tuple[float, float]:
        """Geometric center ``(u, v)`` of the cell lattice."""
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of points at least ``margin`` px inside the grid."""
        pts = np.asarray(points, float)
        return (
            (pts[..., 0] >= margin)
            & (pts[..., 0] <= self.width - 1 - margin)
            & (pts[..., 1] >= margin)
            & (pts[..., 1] <= self.height - 1 - margin)
        )


class Scheme(Enum):
    """Known landmark layouts; CUSTOM admits any point count."""

    IBUG68 = "ibug68"
    WFLW98 = "wflw98"
    AFLW19 = "aflw19"
    CUSTOM = "custom"

    @property
    def n_points(self) -> int | None:
        return {"ibug68": 68, "wflw98": 98, "aflw19": 19}.get(self.value)


def scheme_from_count(n: int) -> Scheme:
    """Infer the scheme from a point count (68/98/19 map to named schemes)."""
    return {68: Scheme.IBUG68, 98: Scheme.WFLW98, 19: Scheme.AFLW19}.get(n, Scheme.CUSTOM)


@lru_cache(maxsize=None)
def _scheme_table(scheme: Scheme) -> dict:
    name = f"scheme_{scheme.value}.json"
    try:
        text = resources.files("balicodec.data").joinpath(name).read_text()
    except FileNotFoundError:
        raise ValidationError(f"no data table for scheme {scheme.value}") from None
    return json.loads(text)


@dataclass(frozen=True)
class LandmarkSet:
    """An ordered set of named 2-D points on a grid.

    Coordinates are sub-pixel and may lie outside the grid (occluded or
    cropped landmarks are legal; encoders simply produce empty support).
    """

    scheme: Scheme
    points: np.ndarray  # (n, 2) float64, columns (u, v)
    grid: GridSpec

    def __post_init__(self):
        pts = frozen_array(self.points, shape_suffix=(2,))
        if pts.ndim != 2 or len(pts) == 0:
            raise ValidationError(f"points must be a non-empty (n, 2) array, got shape {pts.shape}")
        expected = self.scheme.n_points
        if expected is not None and len(pts) != expected:
            raise ValidationError(
                f"scheme {self.scheme.value} requires {expected} points, got {len(pts)}"
            )
        if not np.isfinite(pts).all():
            raise ValidationError("landmark coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points: np.ndarray) -> "LandmarkSet":
        return LandmarkSet(self.scheme, points, self.grid)


@dataclass(frozen=True)
class BoundaryScheme:
    """Partition of landmark indices into ordered boundary curves."""

    boundaries: tuple[tuple[int, ...], ...]
    n_points: int

    def __post_init__(self):
        bs = tuple(tuple(int(i) for i in b) for b in self.boundaries)
        covered: set[int] = set()
        for b in bs:
            if len(b) < 2:
                raise ValidationError("every boundary needs at least 2 landmark indices")
            for i in b:
                if not 0 <= i < self.n_points:
                    raise ValidationError(f"boundary index {i} out of range 0..{self.n_points - 1}")
            covered.update(b)
        if covered != set(range(self.n_points)):
            missing = sorted(set(range(self.n_points)) - covered)
            raise ValidationError(f"landmarks {missing} appear in no boundary")
        object.__setattr__(self, "boundaries", bs)

    @property
    def k(self) -> int:
        return len(self.boundaries)


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping source ``(u, v, 1)`` to destination ``(u', v')``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = frozen_array(self.matrix)
        if m.shape != (2, 3):
            raise ValidationError(f"affine matrix must be 2x3, got {m.shape}")
        if abs(float(np.linalg.det(m[:, :2]))) < 1e-12:
            raise ValidationError("affine transform is not invertible")
        object.__setattr__(self, "matrix", m)

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def offset(self) -> np.ndarray:
        return self.matrix[:, 2]

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, float)
        return pts @ self.linear.T + self.offset

    def inverse(self) -> "AffineTransform":
        a_inv = np.linalg.inv(self.linear)
        return AffineTransform(np.column_stack([a_inv, -a_inv @ self.offset]))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Transform applying ``inner`` first, then ``self``."""
        a = self.linear @ inner.linear
        b = self.linear @ inner.offset + self.offset
        return AffineTransform(np.column_stack([a, b]))

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, _IDENTITY_2X3))

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(_IDENTITY_2X3)

    @classmethod
    def translation(cls, du: float, dv: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, du], [0.0, 1.0, dv]]))

    @classmethod
    def rotation(cls, degrees: float, center: tuple[float, float]) -> "AffineTransform":
        th = np.deg2rad(degrees)
        c, s = np.cos(th), np.sin(th)
        a = np.array([[c, -s], [s, c]])
        b = np.asarray(center, float) - a @ np.asarray(center, float)
        return cls(np.column_stack([a, b]))

    @classmethod
    def scaling(cls, factor: float, center: tuple[float, float]) -> "AffineTransform":
        if factor == 0:
            raise ValidationError("scale factor must be nonzero")
        a = np.eye(2) * float(factor)
        b = np.asarray(center, float) - a @ np.asarray(center, float)
        return cls(np.column_stack([a, b]))

    @classmethod
    def mirror_u(cls, width: int) -> "AffineTransform":
        """Horizontal mirror ``u' = (width - 1) - u``."""
        return cls(np.array([[-1.0, 0.0, float(width - 1)], [0.0, 1.0, 0.0]]))


_IDENTITY_2X3 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_IDENTITY_2X3.flags.writeable = False


@dataclass(frozen=True)
class FlipPermutation:
    """Index permutation pairing left/right landmarks; must be an involution."""

    perm: tuple[int, ...]

    def __post_init__(self):
        p = tuple(int(i) for i in self.perm)
        n = len(p)
        if sorted(p) != list(range(n)):
            raise ValidationError("flip permutation must be a permutation of 0..n-1")
        for i in range(n):
            if p[p[i]] != i:
                raise ValidationError(f"flip permutation is not an involution at index {i}")
        object.__setattr__(self, "perm", p)

    def __len__(self) -> int:
        return len(self.perm)


def apply_affine(t: AffineTransform, l: LandmarkSet) -> LandmarkSet:
    """Map every landmark through ``t``; scheme and count are unchanged."""
    return l.with_points(t.apply(l.points))


def flip_landmarks(l: LandmarkSet, p: FlipPermutation, grid: GridSpec | None = None) -> LandmarkSet:
    """Mirror ``u`` about the grid's vertical centerline, then reorder by ``p``."""
    grid = grid or l.grid
    if len(p) != len(l):
        raise ValidationError(f"permutation length {len(p)} does not match {len(l)} landmarks")
    pts = l.points.copy()
    pts[:, 0] = (grid.width - 1) - pts[:, 0]
    return l.with_points(pts[list(p.perm)])


def default_flip_permutation(scheme: Scheme) -> FlipPermutation:
    """Standard left/right mirror table for a named scheme (from data files)."""
    if scheme is Scheme.CUSTOM:
        raise ValidationError("CUSTOM schemes have no default flip permutation")
    return FlipPermutation(tuple(_scheme_table(scheme)["mirror"]))


def default_boundary_scheme(scheme: Scheme) -> BoundaryScheme:
    """The 13-boundary partition of the 68-point layout.

    Only IBUG68 ships a boundary table; other schemes are rejected.
    """
    table = _scheme_table(scheme) if scheme is not Scheme.CUSTOM else {}
    if "boundaries" not in table:
        raise ValidationError(
            f"no boundary scheme for {scheme.value}; supported schemes: ibug68"
        )
    return BoundaryScheme(tuple(tuple(b) for b in table["boundaries"]), table["n_points"])


def default_boundary_mirror(scheme: Scheme) -> FlipPermutation:
    """Boundary-channel permutation under a horizontal mirror."""
    table = _scheme_table(scheme) if scheme is not Scheme.CUSTOM else {}
    if "boundary_mirror" not in table:
        raise ValidationError(f"no boundary mirror table for {scheme.value}")
    return FlipPermutation(tuple(table["boundary_mirror"]))


def eye_indices(scheme: Scheme) -> dict[str, list[int]]:
    """Eye landmark groups used by metric normalizations."""
    table = _scheme_table(scheme) if scheme is not Scheme.CUSTOM else {}
    if "left_eye" not in table:
        raise ValidationError(f"scheme {scheme.value} defines no eye landmarks")
    return {
        "left_eye": list(table["left_eye"]),
        "right_eye": list(table["right_eye"]),
        "outer_eye_corners": list(table["outer_eye_corners"]),
    }
