"""Sub-pixel landmark recovery from a heatmap channel plus offset planes.

Coarse stage takes the argmax cell; fine stage crops a ``(2r+1)`` square
around it and averages each cell's vote ``offset + cell`` with the heatmap
values as weights.  On a freshly encoded composite every vote inside the
support square equals the ground-truth landmark, which makes the round trip
exact.  ``HEATMAP_SOFT_ARGMAX`` zeroes the offsets and serves as the
heatmap-only baseline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NoMassError, ValidationError
from .field import BaliField
from .geometry import GridSpec, LandmarkSet, Scheme, scheme_from_count
from .heatmap import HeatmapKind, HeatmapStack

__all__ = [
    "DecodeMode",
    "DecodeConfig",
    "DecodeResult",
    "coarse_argmax",
    "crop_region",
    "decode_landmark",
    "decode_all",
]

NO_PEAK = "no peak"
NO_MASS = "no mass"


class DecodeMode(Enum):
    FIELD_WEIGHTED = "field_weighted"
    HEATMAP_SOFT_ARGMAX = "heatmap_soft_argmax"


@dataclass(frozen=True)
class DecodeConfig:
    r_crop: int = 3
    mode: DecodeMode = DecodeMode.FIELD_WEIGHTED

    def __post_init__(self):
        if self.r_crop < 0:
            raise ValidationError(f"crop half-width must be >= 0, got {self.r_crop}")


@dataclass(frozen=True)
class DecodeResult:
    """Decoded landmarks plus one warning slot per channel (None = clean)."""

    landmarks: LandmarkSet
    warnings: tuple[str | None, ...]

    @property
    def clean(self) -> bool:
        return all(w is None for w in self.warnings)


def coarse_argmax(channel: np.ndarray) -> tuple[int, int]:
    """Cell of the channel maximum; ties break to the smallest (j, then i)."""
    channel = np.asarray(channel)
    if channel.ndim != 2 or channel.size == 0:
        raise ValidationError(f"expected a non-empty 2-D channel, got shape {channel.shape}")
    flat = int(np.argmax(channel))
    j, i = divmod(flat, channel.shape[1])
    return (i, j)


def crop_region(peak: tuple[int, int], r_crop: int, grid: GridSpec) -> tuple[slice, slice]:
    """Column and row slices of the (2r+1) square around ``peak``, clipped."""
    i, j = peak
    return (
        slice(max(0, i - r_crop), min(grid.width, i + r_crop + 1)),
        slice(max(0, j - r_crop), min(grid.height, j + r_crop + 1)),
    )


def _crop_votes(
    channel: np.ndarray,
    u_plane: np.ndarray | None,
    v_plane: np.ndarray | None,
    peak: tuple[int, int],
    r_crop: int,
    grid: GridSpec,
) -> tuple[float, float]:
    si, sj = crop_region(peak, r_crop, grid)
    w = channel[sj, si]
    total = float(w.sum())
    if total <= 1e-12:
        raise NoMassError(-1)
    ii = np.arange(si.start, si.stop, dtype=float)[None, :]
    jj = np.arange(sj.start, sj.stop, dtype=float)[:, None]
    if u_plane is None:
        mean_u = float((w * ii).sum() / total)
        mean_v = float((w * jj).sum() / total)
    else:
        mean_u = float((w * (u_plane[sj, si] + ii)).sum() / total)
        mean_v = float((w * (v_plane[sj, si] + jj)).sum() / total)
    return (mean_u, mean_v)


def decode_landmark(
    channel: np.ndarray,
    field: BaliField | None,
    cfg: DecodeConfig = DecodeConfig(),
    channel_index: int = 0,
) -> tuple[float, float]:
    """Decode one channel; field planes are taken at ``channel_index``.

    Raises :class:`NoMassError` when the crop carries no heatmap mass and
    :class:`ValidationError` on an all-zero channel (no peak).
    """
    channel = np.asarray(channel, float)
    if cfg.mode is DecodeMode.FIELD_WEIGHTED and field is None:
        raise ValidationError("FIELD_WEIGHTED decoding requires an offset field")
    if channel.max() <= 0:
        raise ValidationError(f"channel {channel_index}: no peak (all values <= 0)")
    grid = GridSpec(channel.shape[1], channel.shape[0])
    peak = coarse_argmax(channel)
    use_field = cfg.mode is DecodeMode.FIELD_WEIGHTED
    try:
        return _crop_votes(
            channel,
            field.u_offsets[channel_index] if use_field else None,
            field.v_offsets[channel_index] if use_field else None,
            peak,
            cfg.r_crop,
            grid,
        )
    except NoMassError:
        raise NoMassError(channel_index) from None


def decode_all(
    h: HeatmapStack,
    field: BaliField | None,
    cfg: DecodeConfig = DecodeConfig(),
    scheme: Scheme | None = None,
) -> DecodeResult:
    """Decode every channel; per-channel failures degrade to flagged fallbacks.

    An all-zero channel falls back to the grid center ("no peak"); a crop with
    no mass falls back to the coarse peak cell ("no mass").  The whole set is
    never aborted for one bad channel.
    """
    if h.kind is not HeatmapKind.LANDMARK:
        raise ValidationError("decode_all expects a LANDMARK heatmap stack")
    use_field = cfg.mode is DecodeMode.FIELD_WEIGHTED
    if use_field:
        if field is None:
            raise ValidationError("FIELD_WEIGHTED decoding requires an offset field")
        if field.grid != h.grid:
            raise ValidationError("heatmap stack and field must share a grid")
        if field.n_channels != h.n_channels:
            raise ValidationError(
                f"{h.n_channels} heatmap channels vs {field.n_channels} field channels"
            )
        if cfg.r_crop > field.r_support:
            warnings.warn(
                f"crop half-width {cfg.r_crop} exceeds field support {field.r_support}; "
                "round-trip exactness is not guaranteed",
                stacklevel=2,
            )
    points = np.empty((h.n_channels, 2))
    flags: list[str | None] = []
    center = h.grid.center
    for phi in range(h.n_channels):
        channel = h.channels[phi]
        if channel.max() <= 0:
            points[phi] = center
            flags.append(NO_PEAK)
            continue
        peak = coarse_argmax(channel)
        try:
            points[phi] = _crop_votes(
                channel,
                field.u_offsets[phi] if use_field else None,
                field.v_offsets[phi] if use_field else None,
                peak,
                cfg.r_crop,
                h.grid,
            )
            flags.append(None)
        except NoMassError:
            points[phi] = peak
            flags.append(NO_MASS)
    landmarks = LandmarkSet(scheme or scheme_from_count(h.n_channels), points, h.grid)
    return DecodeResult(landmarks, tuple(flags))
