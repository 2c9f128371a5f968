"""Paired-sample generation and the transfer operator for every disturbance.

A :class:`Disturbance` is a declarative record of one perturbation.  Spatial
kinds (rotate/scale/flip) induce an affine action that must be applied
consistently to images, landmarks, heatmaps and offset fields; texture kinds
(occlusion, blur, noise) change pixels only, so their transfer on landmarks
and tensors is the identity.  Runs of consecutive spatial parts are fused
into a single affine so composed warps resample once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .field import BaliField
from .geometry import (
    AffineTransform,
    FlipPermutation,
    GridSpec,
    LandmarkSet,
    Scheme,
    default_boundary_mirror,
    default_flip_permutation,
    scheme_from_count,
)
from .heatmap import HeatmapKind, HeatmapStack

__all__ = [
    "DisturbKind",
    "Disturbance",
    "DisturbancePolicy",
    "PairedSample",
    "sample_disturbance",
    "apply_to_image",
    "transfer_landmarks",
    "transfer_heatmap",
    "transfer_field",
    "make_pair",
    "warp_bilinear",
]

BLUR_FACTORS = (2, 4, 8, 16)
ROTATE_LIMITS = (-60.0, 60.0)
SCALE_LIMITS = (0.5, 1.0)


class DisturbKind(Enum):
    ROTATE = "rotate"
    SCALE = "scale"
    FLIP = "flip"
    OCCLUDE_BLACK = "occlude_black"
    OCCLUDE_SELF = "occlude_self"
    BLUR = "blur"
    NOISE_GAUSSIAN = "noise_gaussian"
    NOISE_SALT = "noise_salt"
    COMPOSE = "compose"


_SPATIAL = {DisturbKind.ROTATE, DisturbKind.SCALE, DisturbKind.FLIP}
_TEXTURE = {
    DisturbKind.OCCLUDE_BLACK,
    DisturbKind.OCCLUDE_SELF,
    DisturbKind.BLUR,
    DisturbKind.NOISE_GAUSSIAN,
    DisturbKind.NOISE_SALT,
}


def _check_rect(rect, name: str) -> tuple[int, int, int, int]:
    if rect is None or len(rect) != 4:
        raise ValidationError(f"{name} must be an (x, y, w, h) 4-tuple")
    x, y, w, h = (int(r) for r in rect)
    if w <= 0 or h <= 0:
        raise ValidationError(f"{name} has zero area: w={w}, h={h}")
    return (x, y, w, h)


@dataclass(frozen=True)
class Disturbance:
    """One perturbation plus everything needed to reproduce and transfer it."""

    kind: DisturbKind
    angle_deg: float | None = None
    scale: float | None = None
    rect: tuple[int, int, int, int] | None = None  # destination rect (x, y, w, h)
    src_rect: tuple[int, int, int, int] | None = None
    blur_factor: int | None = None
    noise_sigma: float | None = None
    salt_prob: float | None = None
    parts: tuple["Disturbance", ...] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        k = self.kind
        if k is DisturbKind.ROTATE:
            if self.angle_deg is None or not ROTATE_LIMITS[0] <= self.angle_deg <= ROTATE_LIMITS[1]:
                raise ValidationError(f"rotation angle must lie in {ROTATE_LIMITS}, got {self.angle_deg}")
        elif k is DisturbKind.SCALE:
            if self.scale is None or not SCALE_LIMITS[0] <= self.scale <= SCALE_LIMITS[1]:
                raise ValidationError(f"scale must lie in {SCALE_LIMITS}, got {self.scale}")
        elif k is DisturbKind.OCCLUDE_BLACK:
            object.__setattr__(self, "rect", _check_rect(self.rect, "occlusion rect"))
        elif k is DisturbKind.OCCLUDE_SELF:
            src = _check_rect(self.src_rect, "source rect")
            dst = _check_rect(self.rect, "destination rect")
            if src[2:] != dst[2:]:
                raise ValidationError("source and destination rects must share w and h")
            object.__setattr__(self, "src_rect", src)
            object.__setattr__(self, "rect", dst)
        elif k is DisturbKind.BLUR:
            if self.blur_factor not in BLUR_FACTORS:
                raise ValidationError(f"blur factor must be one of {BLUR_FACTORS}, got {self.blur_factor}")
        elif k is DisturbKind.NOISE_GAUSSIAN:
            if self.noise_sigma is None or self.noise_sigma < 0:
                raise ValidationError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        elif k is DisturbKind.NOISE_SALT:
            if self.salt_prob is None or not 0.0 <= self.salt_prob <= 1.0:
                raise ValidationError(f"salt probability must lie in [0, 1], got {self.salt_prob}")
        elif k is DisturbKind.COMPOSE:
            if not self.parts:
                raise ValidationError("compose needs at least one part")
            for p in self.parts:
                if p.kind is DisturbKind.COMPOSE:
                    raise ValidationError("compose parts cannot nest another compose")
            object.__setattr__(self, "parts", tuple(self.parts))

    # -- constructors -------------------------------------------------------
    @classmethod
    def rotate(cls, angle_deg: float, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.ROTATE, angle_deg=float(angle_deg), rng_seed=seed)

    @classmethod
    def rescale(cls, scale: float, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.SCALE, scale=float(scale), rng_seed=seed)

    @classmethod
    def flip(cls, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.FLIP, rng_seed=seed)

    @classmethod
    def occlude_black(cls, rect, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.OCCLUDE_BLACK, rect=tuple(rect), rng_seed=seed)

    @classmethod
    def occlude_self(cls, src_rect, dst_rect, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.OCCLUDE_SELF, src_rect=tuple(src_rect), rect=tuple(dst_rect), rng_seed=seed)

    @classmethod
    def blur(cls, factor: int, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.BLUR, blur_factor=int(factor), rng_seed=seed)

    @classmethod
    def noise_gaussian(cls, sigma: float = 0.05, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.NOISE_GAUSSIAN, noise_sigma=float(sigma), rng_seed=seed)

    @classmethod
    def noise_salt(cls, prob: float = 0.02, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.NOISE_SALT, salt_prob=float(prob), rng_seed=seed)

    @classmethod
    def compose(cls, parts, seed: int = 0) -> "Disturbance":
        return cls(DisturbKind.COMPOSE, parts=tuple(parts), rng_seed=seed)

    # -- structure ----------------------------------------------------------
    @property
    def flat_parts(self) -> tuple["Disturbance", ...]:
        return self.parts if self.kind is DisturbKind.COMPOSE else (self,)

    @property
    def is_spatial(self) -> bool:
        """True when any part moves pixels (carries a non-identity affine)."""
        return any(p.kind in _SPATIAL for p in self.flat_parts)

    def spatial_action(self, grid: GridSpec) -> tuple[AffineTransform, int]:
        """Fused affine of all spatial parts plus the number of flips."""
        total = AffineTransform.identity()
        flips = 0
        for p in self.flat_parts:
            if p.kind is DisturbKind.ROTATE:
                t = AffineTransform.rotation(p.angle_deg, grid.center)
            elif p.kind is DisturbKind.SCALE:
                t = AffineTransform.scaling(p.scale, grid.center)
            elif p.kind is DisturbKind.FLIP:
                t = AffineTransform.mirror_u(grid.width)
                flips += 1
            else:
                continue
            total = t.compose(total)
        return total, flips

    # -- serialization ------------------------------------------------------
    def _params(self) -> dict:
        k = self.kind
        if k is DisturbKind.ROTATE:
            return {"angle_deg": self.angle_deg}
        if k is DisturbKind.SCALE:
            return {"scale": self.scale}
        if k is DisturbKind.FLIP:
            return {}
        if k is DisturbKind.OCCLUDE_BLACK:
            return {"rect": list(self.rect)}
        if k is DisturbKind.OCCLUDE_SELF:
            return {"src_rect": list(self.src_rect), "rect": list(self.rect)}
        if k is DisturbKind.BLUR:
            return {"blur_factor": self.blur_factor}
        if k is DisturbKind.NOISE_GAUSSIAN:
            return {"noise_sigma": self.noise_sigma}
        if k is DisturbKind.NOISE_SALT:
            return {"salt_prob": self.salt_prob}
        return {"parts": [json.loads(p.to_json()) for p in self.parts]}

    def to_json(self) -> str:
        """Single-line JSON record: kind, params, seed."""
        record = {"kind": self.kind.value, "params": self._params(), "seed": self.rng_seed}
        return json.dumps(record, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Disturbance":
        try:
            record = json.loads(text)
            kind = DisturbKind(record["kind"])
            params = dict(record["params"])
            seed = int(record.get("seed", 0))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ValidationError(f"malformed disturbance record: {exc}") from None
        if kind is DisturbKind.COMPOSE:
            parts = tuple(cls.from_json(json.dumps(p)) for p in params["parts"])
            return cls.compose(parts, seed=seed)
        fields = {}
        for key in ("angle_deg", "scale", "blur_factor", "noise_sigma", "salt_prob"):
            if key in params:
                fields[key] = params[key]
        if "rect" in params:
            fields["rect"] = tuple(params["rect"])
        if "src_rect" in params:
            fields["src_rect"] = tuple(params["src_rect"])
        return cls(kind, rng_seed=seed, **fields)


@dataclass(frozen=True)
class DisturbancePolicy:
    """Enabled kinds and their sampling ranges."""

    kinds: tuple[str, ...] = (
        "rotate",
        "scale",
        "flip",
        "occlude_black",
        "occlude_self",
        "blur",
        "noise_gaussian",
        "noise_salt",
        "compose",
    )
    rotate_range: tuple[float, float] = ROTATE_LIMITS
    scale_range: tuple[float, float] = SCALE_LIMITS
    blur_factors: tuple[int, ...] = BLUR_FACTORS
    occlude_frac_range: tuple[float, float] = (0.2, 0.5)
    noise_sigma: float = 0.05
    salt_prob: float = 0.02
    image_size: tuple[int, int] = (256, 256)  # (width, height) for rect placement

    def __post_init__(self):
        if not self.kinds:
            raise ValidationError("disturbance policy enables no kinds")
        unknown = [k for k in self.kinds if k not in {d.value for d in DisturbKind}]
        if unknown:
            raise ValidationError(f"unknown disturbance kinds in policy: {unknown}")
        lo, hi = self.rotate_range
        if not (ROTATE_LIMITS[0] <= lo <= hi <= ROTATE_LIMITS[1]):
            raise ValidationError(f"rotate range must sit inside {ROTATE_LIMITS}")
        lo, hi = self.scale_range
        if not (SCALE_LIMITS[0] <= lo <= hi <= SCALE_LIMITS[1]):
            raise ValidationError(f"scale range must sit inside {SCALE_LIMITS}")
        if any(f not in BLUR_FACTORS for f in self.blur_factors):
            raise ValidationError(f"blur factors must come from {BLUR_FACTORS}")
        lo, hi = self.occlude_frac_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValidationError("occlusion fraction range must sit inside (0, 1]")


def _sample_rect(rng: np.random.Generator, policy: DisturbancePolicy) -> tuple[int, int, int, int]:
    iw, ih = policy.image_size
    lo, hi = policy.occlude_frac_range
    w = max(1, int(round(rng.uniform(lo, hi) * iw)))
    h = max(1, int(round(rng.uniform(lo, hi) * ih)))
    x = int(rng.integers(0, max(1, iw - w + 1)))
    y = int(rng.integers(0, max(1, ih - h + 1)))
    return (x, y, w, h)


def _sample_kind(rng: np.random.Generator, kind: DisturbKind, policy: DisturbancePolicy) -> Disturbance:
    seed = int(rng.integers(0, 2**31 - 1))
    if kind is DisturbKind.ROTATE:
        return Disturbance.rotate(float(rng.uniform(*policy.rotate_range)), seed=seed)
    if kind is DisturbKind.SCALE:
        return Disturbance.rescale(float(rng.uniform(*policy.scale_range)), seed=seed)
    if kind is DisturbKind.FLIP:
        return Disturbance.flip(seed=seed)
    if kind is DisturbKind.OCCLUDE_BLACK:
        return Disturbance.occlude_black(_sample_rect(rng, policy), seed=seed)
    if kind is DisturbKind.OCCLUDE_SELF:
        src = _sample_rect(rng, policy)
        iw, ih = policy.image_size
        dx = int(rng.integers(0, max(1, iw - src[2] + 1)))
        dy = int(rng.integers(0, max(1, ih - src[3] + 1)))
        return Disturbance.occlude_self(src, (dx, dy, src[2], src[3]), seed=seed)
    if kind is DisturbKind.BLUR:
        return Disturbance.blur(int(rng.choice(policy.blur_factors)), seed=seed)
    if kind is DisturbKind.NOISE_GAUSSIAN:
        return Disturbance.noise_gaussian(policy.noise_sigma, seed=seed)
    if kind is DisturbKind.NOISE_SALT:
        return Disturbance.noise_salt(policy.salt_prob, seed=seed)
    raise ValidationError(f"cannot sample kind {kind}")


def sample_disturbance(seed: int, policy: DisturbancePolicy = DisturbancePolicy()) -> Disturbance:
    """Uniform draw of one disturbance from the policy; deterministic in seed.

    ``compose`` draws one spatial and one texture part (spatial applied
    first), matching the paired-sample recipe of combining both families.
    """
    rng = np.random.default_rng(seed)
    kind = DisturbKind(str(rng.choice(list(policy.kinds))))
    if kind is not DisturbKind.COMPOSE:
        return _sample_kind(rng, kind, policy)
    spatial = [k for k in policy.kinds if DisturbKind(k) in _SPATIAL]
    texture = [k for k in policy.kinds if DisturbKind(k) in _TEXTURE]
    if not spatial or not texture:
        raise ValidationError("compose sampling needs both a spatial and a texture kind enabled")
    part_s = _sample_kind(rng, DisturbKind(str(rng.choice(spatial))), policy)
    part_t = _sample_kind(rng, DisturbKind(str(rng.choice(texture))), policy)
    return Disturbance.compose((part_s, part_t), seed=int(rng.integers(0, 2**31 - 1)))


# ---------------------------------------------------------------------------
# warping machinery
# ---------------------------------------------------------------------------

def warp_bilinear(image: np.ndarray, transform: AffineTransform) -> np.ndarray:
    """Inverse-map bilinear warp with zero (black) out-of-bounds fill.

    ``image`` is (H, W) or (H, W, C); the output shares its shape.  Sampling
    positions that land exactly on the lattice are reproduced bit-for-bit, so
    pure mirrors and identities are exact.
    """
    image = np.asarray(image, float)
    squeeze = image.ndim == 2
    img = image[:, :, None] if squeeze else image
    h, w = img.shape[:2]
    m = transform.inverse().matrix
    ii = np.arange(w, dtype=float)[None, :]
    jj = np.arange(h, dtype=float)[:, None]
    sx = m[0, 0] * ii + m[0, 1] * jj + m[0, 2]
    sy = m[1, 0] * ii + m[1, 1] * jj + m[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros_like(img)
    for dy in (0, 1):
        for dx in (0, 1):
            wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            xs = x0 + dx
            ys = y0 + dy
            valid = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
            vals = img[np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1)]
            out += np.where(valid, wgt, 0.0)[:, :, None] * vals
    return out[:, :, 0] if squeeze else out


def _warp_stack(stack: np.ndarray, transform: AffineTransform) -> np.ndarray:
    # (C, H, W) -> warp every channel at once by moving C to the last axis
    return np.moveaxis(warp_bilinear(np.moveaxis(stack, 0, -1), transform), -1, 0)


# ---------------------------------------------------------------------------
# texture operations on images
# ---------------------------------------------------------------------------

def _resize_bicubic(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    from PIL import Image

    squeeze = img.ndim == 2
    planes = img[:, :, None] if squeeze else img
    out = np.stack(
        [
            np.asarray(
                Image.fromarray(planes[:, :, c].astype(np.float32), mode="F").resize(
                    size, Image.BICUBIC
                ),
                dtype=float,
            )
            for c in range(planes.shape[2])
        ],
        axis=-1,
    )
    return out[:, :, 0] if squeeze else out


def _clip_rect(rect, w: int, h: int) -> tuple[int, int, int, int]:
    x, y, rw, rh = rect
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(w, x + rw), min(h, y + rh)
    return (x0, y0, max(0, x1 - x0), max(0, y1 - y0))


def _apply_texture(img: np.ndarray, d: Disturbance) -> np.ndarray:
    h, w = img.shape[:2]
    out = img.copy()
    if d.kind is DisturbKind.OCCLUDE_BLACK:
        x, y, rw, rh = _clip_rect(d.rect, w, h)
        out[y : y + rh, x : x + rw] = 0.0
    elif d.kind is DisturbKind.OCCLUDE_SELF:
        sx, sy, rw, rh = _clip_rect(d.src_rect, w, h)
        dx, dy, dw, dh = _clip_rect(d.rect, w, h)
        cw, ch = min(rw, dw), min(rh, dh)
        if cw > 0 and ch > 0:
            out[dy : dy + ch, dx : dx + cw] = img[sy : sy + ch, sx : sx + cw]
    elif d.kind is DisturbKind.BLUR:
        f = d.blur_factor
        low = _resize_bicubic(img, (max(1, w // f), max(1, h // f)))
        out = np.clip(_resize_bicubic(low, (w, h)), 0.0, 1.0)
    elif d.kind is DisturbKind.NOISE_GAUSSIAN:
        rng = np.random.default_rng(d.rng_seed)
        out = np.clip(img + rng.normal(0.0, d.noise_sigma, img.shape), 0.0, 1.0)
    elif d.kind is DisturbKind.NOISE_SALT:
        rng = np.random.default_rng(d.rng_seed)
        mask = rng.random((h, w)) < d.salt_prob
        out[mask] = 1.0
    return out


def apply_to_image(d: Disturbance, image: np.ndarray) -> np.ndarray:
    """Apply the disturbance to an (H, W[, C]) float image in [0, 1]."""
    img = np.asarray(image, float)
    if img.ndim not in (2, 3):
        raise ValidationError(f"image must be (H, W) or (H, W, C), got shape {img.shape}")
    grid = GridSpec(img.shape[1], img.shape[0])
    pending = AffineTransform.identity()
    for part in d.flat_parts:
        if part.kind in _SPATIAL:
            t, _ = part.spatial_action(grid)
            pending = t.compose(pending)
            continue
        if not pending.is_identity:
            img = warp_bilinear(img, pending)
            pending = AffineTransform.identity()
        img = _apply_texture(img, part)
    if not pending.is_identity:
        img = warp_bilinear(img, pending)
    return img


# ---------------------------------------------------------------------------
# transfer operators on landmarks and tensors
# ---------------------------------------------------------------------------

def _landmark_perm(n: int, provided: FlipPermutation | None) -> FlipPermutation:
    if provided is not None:
        return provided
    scheme = scheme_from_count(n)
    if scheme is Scheme.CUSTOM:
        raise ValidationError(
            f"no default flip permutation for {n} channels; pass one explicitly"
        )
    return default_flip_permutation(scheme)


def _boundary_perm(n: int, provided: FlipPermutation | None) -> FlipPermutation:
    if provided is not None:
        return provided
    ibug = default_boundary_mirror(Scheme.IBUG68)
    if n != len(ibug):
        raise ValidationError(
            f"no default boundary mirror for {n} channels; pass one explicitly"
        )
    return ibug


def transfer_landmarks(
    d: Disturbance, l: LandmarkSet, flip_perm: FlipPermutation | None = None
) -> LandmarkSet:
    """Exact action of the disturbance on landmark coordinates and order."""
    total, flips = d.spatial_action(l.grid)
    pts = total.apply(l.points)
    if flips % 2:
        perm = _landmark_perm(len(l), flip_perm)
        if len(perm) != len(l):
            raise ValidationError("flip permutation length does not match landmark count")
        pts = pts[list(perm.perm)]
    return l.with_points(pts)


def transfer_heatmap(
    d: Disturbance, h: HeatmapStack, flip_perm: FlipPermutation | None = None
) -> HeatmapStack:
    """Warp every channel under the disturbance's spatial action.

    Texture disturbances return the stack unchanged.  A flip also permutes
    channels: landmark stacks by the scheme mirror table, boundary stacks by
    the boundary mirror table (inferred for standard channel counts).
    """
    total, flips = d.spatial_action(h.grid)
    if total.is_identity and flips % 2 == 0:
        return h
    warped = _warp_stack(h.channels, total)
    np.clip(warped, 0.0, 1.0, out=warped)
    degenerate = h.degenerate
    if flips % 2:
        perm = (
            _landmark_perm(h.n_channels, flip_perm)
            if h.kind is HeatmapKind.LANDMARK
            else _boundary_perm(h.n_channels, flip_perm)
        )
        order = list(perm.perm)
        warped = warped[order]
        degenerate = tuple(sorted(order.index(k) for k in h.degenerate))
    warped = np.ascontiguousarray(warped)
    warped.flags.writeable = False
    return HeatmapStack(warped, h.grid, h.kind, degenerate=degenerate)


def transfer_field(
    d: Disturbance, f: BaliField, flip_perm: FlipPermutation | None = None
) -> BaliField:
    """Covariant action on the offset field.

    Plane values are resampled like heatmaps; the sampled offset vectors are
    then mapped through the linear part of the affine (rotations rotate them,
    scales rescale them, flips negate the u component).  Support masks warp
    and re-threshold at 0.5.
    """
    total, flips = d.spatial_action(f.grid)
    if total.is_identity and flips % 2 == 0:
        return f
    u = _warp_stack(f.u_offsets, total)
    v = _warp_stack(f.v_offsets, total)
    support = _warp_stack(f.support.astype(float), total) >= 0.5
    a = total.linear
    u, v = a[0, 0] * u + a[0, 1] * v, a[1, 0] * u + a[1, 1] * v
    if flips % 2:
        perm = _landmark_perm(f.n_channels, flip_perm)
        order = list(perm.perm)
        u, v, support = u[order], v[order], support[order]
    empty = tuple(phi for phi in range(f.n_channels) if not support[phi].any())
    for arr in (u, v, support):
        arr.flags.writeable = False
    return BaliField(u, v, support, f.r_support, f.grid, empty_support=empty)


@dataclass(frozen=True)
class PairedSample:
    """An original image and its disturbed twin (labels optional)."""

    image_alpha: np.ndarray
    image_beta: np.ndarray
    landmarks_alpha: LandmarkSet | None
    landmarks_beta: LandmarkSet | None
    disturbance: Disturbance


def make_pair(
    image: np.ndarray,
    landmarks: LandmarkSet | None,
    d: Disturbance,
    flip_perm: FlipPermutation | None = None,
) -> PairedSample:
    """Disturb an image and, when labels exist, carry them along exactly."""
    img = np.asarray(image, float)
    if img.ndim not in (2, 3):
        raise ValidationError(f"image must be (H, W) or (H, W, C), got shape {img.shape}")
    beta = apply_to_image(d, img)
    lm_beta = None
    if landmarks is not None:
        if landmarks.grid.shape != img.shape[:2]:
            raise ValidationError(
                f"landmark grid {landmarks.grid.shape} does not match image shape {img.shape[:2]}"
            )
        lm_beta = transfer_landmarks(d, landmarks, flip_perm=flip_perm)
    return PairedSample(img, beta, landmarks, lm_beta, d)
