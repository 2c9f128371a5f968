"""Synthetic landmark sets for self-tests and round-trip experiments."""

from __future__ import annotations

import numpy as np

from .geometry import GridSpec, LandmarkSet, Scheme

__all__ = ["random_landmarks", "synthetic_face"]

# Plausible 68-point layout in a unit box, roughly left/right symmetric.
# Jaw 0-16 on a semi-ellipse; the rest placed by hand.
_JAW_T = np.linspace(np.pi, 2.0 * np.pi, 17)
_JAW = np.column_stack([0.5 + 0.42 * np.cos(_JAW_T), 0.32 - 0.64 * np.sin(_JAW_T)])

_FACE_68 = np.array(
    [
        *_JAW,
        # left brow 17-21
        (0.17, 0.26), (0.23, 0.23), (0.30, 0.22), (0.37, 0.23), (0.43, 0.26),
        # right brow 22-26
        (0.57, 0.26), (0.63, 0.23), (0.70, 0.22), (0.77, 0.23), (0.83, 0.26),
        # nose bridge 27-30
        (0.50, 0.33), (0.50, 0.40), (0.50, 0.47), (0.50, 0.54),
        # nose bottom 31-35
        (0.42, 0.60), (0.46, 0.615), (0.50, 0.625), (0.54, 0.615), (0.58, 0.60),
        # left eye 36-41
        (0.22, 0.36), (0.27, 0.335), (0.33, 0.335), (0.38, 0.36), (0.33, 0.385), (0.27, 0.385),
        # right eye 42-47
        (0.62, 0.36), (0.67, 0.335), (0.73, 0.335), (0.78, 0.36), (0.73, 0.385), (0.67, 0.385),
        # outer lips 48-59
        (0.35, 0.76), (0.40, 0.735), (0.46, 0.72), (0.50, 0.725), (0.54, 0.72),
        (0.60, 0.735), (0.65, 0.76), (0.60, 0.81), (0.54, 0.84), (0.50, 0.845),
        (0.46, 0.84), (0.40, 0.81),
        # inner lips 60-67
        (0.38, 0.765), (0.45, 0.755), (0.50, 0.76), (0.55, 0.755), (0.62, 0.765),
        (0.55, 0.785), (0.50, 0.79), (0.45, 0.785),
    ]
)
assert _FACE_68.shape == (68, 2)


def random_landmarks(
    rng: np.random.Generator,
    grid: GridSpec,
    n_points: int = 68,
    margin: float = 6.0,
    scheme: Scheme | None = None,
) -> LandmarkSet:
    """Uniform random sub-pixel landmarks at least ``margin`` px inside the grid."""
    u = rng.uniform(margin, grid.width - 1 - margin, size=n_points)
    v = rng.uniform(margin, grid.height - 1 - margin, size=n_points)
    if scheme is None:
        scheme = {68: Scheme.IBUG68, 98: Scheme.WFLW98, 19: Scheme.AFLW19}.get(
            n_points, Scheme.CUSTOM
        )
    return LandmarkSet(scheme, np.column_stack([u, v]), grid)


def synthetic_face(
    rng: np.random.Generator,
    grid: GridSpec,
    size: float | None = None,
    jitter: float = 0.5,
) -> LandmarkSet:
    """A face-shaped 68-point set centered on the grid.

    ``size`` is the face box side in px (default 55% of the smaller grid
    side, which keeps every landmark inside the grid under any rotation
    about the center).  ``jitter`` adds per-landmark uniform noise.
    """
    side = min(grid.width, grid.height)
    size = size if size is not None else 0.55 * side
    pts = (_FACE_68 - 0.5) * size
    pts = pts * rng.uniform(0.9, 1.1)
    pts = pts + rng.uniform(-jitter, jitter, size=pts.shape)
    pts = pts + np.asarray(grid.center)
    return LandmarkSet(Scheme.IBUG68, pts, grid)
