"""PNG rendering of heatmap stacks and offset fields.

Confidence maps use a frozen sequential RGB lookup table; signed offsets use
a diverging table centered on zero with a fixed scale of ``R + 0.5`` px so
renders of the same field are comparable across runs.  Optional extras: an
alpha blend onto a background image and an arrow overlay for fields.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .field import BaliField
from .heatmap import HeatmapStack

__all__ = [
    "colormap",
    "render_heatmap_png",
    "render_field_png",
    "load_image",
    "save_image",
]


@lru_cache(maxsize=None)
def colormap(name: str) -> np.ndarray:
    """256x3 uint8 lookup table loaded from the shipped data files."""
    try:
        text = resources.files("balicodec.data").joinpath(f"colormap_{name}.txt").read_text()
    except FileNotFoundError:
        raise ValidationError(f"unknown colormap {name!r}") from None
    rows = [line.split() for line in text.splitlines() if line and not line.startswith("#")]
    lut = np.asarray(rows, dtype=np.uint8)
    if lut.shape != (256, 3):
        raise ValidationError(f"colormap {name!r} table must be 256x3, got {lut.shape}")
    return lut


def _apply_lut(values01: np.ndarray, lut: np.ndarray) -> np.ndarray:
    idx = np.clip(np.rint(values01 * 255.0), 0, 255).astype(np.uint8)
    return lut[idx]


def _blend(rgb: np.ndarray, background: np.ndarray | None, alpha: float) -> np.ndarray:
    if background is None:
        return rgb
    bg = np.asarray(background, float)
    if bg.ndim == 2:
        bg = np.repeat(bg[:, :, None], 3, axis=2)
    if bg.shape[:2] != rgb.shape[:2]:
        raise ValidationError(
            f"background shape {bg.shape[:2]} does not match render shape {rgb.shape[:2]}"
        )
    if bg.max() > 1.5:  # accept 0..255 backgrounds
        bg = bg / 255.0
    out = (1.0 - alpha) * bg * 255.0 + alpha * rgb.astype(float)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _save_png(rgb: np.ndarray, path: str | Path) -> None:
    from PIL import Image

    try:
        Image.fromarray(rgb, mode="RGB").save(str(path), format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write PNG to {path}: {exc}") from exc


def render_heatmap_png(
    stack: HeatmapStack,
    path: str | Path,
    channel: int | None = None,
    background: np.ndarray | None = None,
    alpha: float = 0.6,
) -> None:
    """Render one channel, or the max-composite over channels when ``channel``
    is None."""
    values = stack.channels[channel] if channel is not None else stack.channels.max(axis=0)
    rgb = _apply_lut(values, colormap("sequential"))
    _save_png(_blend(rgb, background, alpha), path)


def render_field_png(
    field: BaliField,
    path: str | Path,
    plane: str = "u",
    channel: int | None = None,
    background: np.ndarray | None = None,
    alpha: float = 0.6,
    arrows: bool = False,
    arrow_stride: int = 4,
) -> None:
    """Render a signed offset plane on the diverging colormap.

    With ``channel`` None the per-cell value is taken from whichever channel
    supports that cell (supports are disjoint in freshly encoded fields).
    Offsets map to colors on a fixed [-R-0.5, R+0.5] scale; zero is the
    center color.  ``arrows`` overlays offset vectors on supported cells.
    """
    if plane not in ("u", "v"):
        raise ValidationError(f"plane must be 'u' or 'v', got {plane!r}")
    planes = field.u_offsets if plane == "u" else field.v_offsets
    if channel is not None:
        values = planes[channel]
        support = field.support[channel]
    else:
        values = planes.sum(axis=0)  # supports rarely overlap: sum picks the owner
        support = field.support.any(axis=0)
    scale = field.r_support + 0.5
    rgb = _apply_lut((np.clip(values, -scale, scale) + scale) / (2.0 * scale), colormap("diverging"))
    out = _blend(rgb, background, alpha)

    if arrows:
        from PIL import Image, ImageDraw

        img = Image.fromarray(out, mode="RGB")
        draw = ImageDraw.Draw(img)
        u_plane = field.u_offsets[channel] if channel is not None else field.u_offsets.sum(axis=0)
        v_plane = field.v_offsets[channel] if channel is not None else field.v_offsets.sum(axis=0)
        js, is_ = np.nonzero(support)
        for j, i in zip(js, is_):
            if (i % arrow_stride) or (j % arrow_stride):
                continue
            draw.line(
                [(i, j), (i + float(u_plane[j, i]), j + float(v_plane[j, i]))],
                fill=(255, 255, 255),
                width=1,
            )
        out = np.asarray(img)
    _save_png(out, path)


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as (H, W, 3) float in [0, 1]."""
    from PIL import Image

    with Image.open(str(path)) as img:
        return np.asarray(img.convert("RGB"), dtype=float) / 255.0


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Write an (H, W[, 3]) float image in [0, 1] as PNG."""
    arr = np.clip(np.asarray(image, float), 0.0, 1.0)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    _save_png(np.rint(arr * 255.0).astype(np.uint8), path)
