"""Run configuration: every tunable in one flat ``key = value`` text file.

Defaults reproduce the reported operating point: 128x128 output grid,
sigma 1.5, R = 5 training support, r = 3 test crop, loss weights
(lambda1, lambda2, gamma, eta) = (1, 16, 40, 4), rotation within +-60 degrees
and scaling within [0.5, 1].  The environment variable ``BALI_CODEC_CONFIG``
supplies a default config path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .disturb import DisturbancePolicy
from .errors import ValidationError
from .geometry import GridSpec
from .heatmap import KernelFamily, KernelSpec
from .losses import LossWeights
from .metrics import NormKind

__all__ = ["RunConfig", "load_config", "ENV_CONFIG"]

ENV_CONFIG = "BALI_CODEC_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    grid_width: int = 128
    grid_height: int = 128
    kernel_family: str = "gaussian"
    kernel_d: float = 0.0
    kernel_df: float = 3.0
    sigma: float = 1.5
    boundary_sigma: float = 1.5
    boundary_floor: float = 0.0  # xi
    boundary_exponent: str = "linear"
    field_radius: int = 5  # R, training-time support half-width
    crop_radius: int = 3  # r, test-time crop half-width
    lambda1: float = 1.0
    lambda2: float = 16.0
    gamma: float = 40.0
    eta: float = 4.0
    rotate_min: float = -60.0
    rotate_max: float = 60.0
    scale_min: float = 0.5
    scale_max: float = 1.0
    disturb_kinds: tuple[str, ...] = DisturbancePolicy().kinds
    seed: int = 0
    tau: float = 0.08
    normalization: str = "interocular"

    def __post_init__(self):
        # Constructing the derived objects runs every underlying validator.
        self.grid
        self.kernel
        self.weights
        self.policy
        self.norm_kind
        if self.boundary_exponent not in ("linear", "squared"):
            raise ValidationError(
                f"boundary_exponent must be 'linear' or 'squared', got {self.boundary_exponent!r}"
            )

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_width, self.grid_height)

    @property
    def kernel(self) -> KernelSpec:
        family = KernelFamily(self.kernel_family)
        if family is KernelFamily.GED:
            return KernelSpec.ged(self.kernel_d, self.sigma)
        if family is KernelFamily.STUDENT_T:
            return KernelSpec.student_t(self.kernel_df, self.sigma)
        return KernelSpec.gaussian(self.sigma)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.gamma, self.eta)

    @property
    def policy(self) -> DisturbancePolicy:
        return DisturbancePolicy(
            kinds=self.disturb_kinds,
            rotate_range=(self.rotate_min, self.rotate_max),
            scale_range=(self.scale_min, self.scale_max),
        )

    @property
    def norm_kind(self) -> NormKind:
        return NormKind(self.normalization)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    if key == "disturb_kinds":
        return tuple(k.strip() for k in raw.split(",") if k.strip())
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from None


def load_config(path: str | None = None) -> RunConfig:
    """Load a flat ``key = value`` file; '#' starts a comment.

    With no path, falls back to ``$BALI_CODEC_CONFIG`` and then to defaults.
    Unknown keys are rejected by name.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, raw)
    return replace(RunConfig(), **overrides)
