"""balicodec: codec and evaluation toolkit for heatmap + offset-field landmark
representations.

Encode landmark sets into landmark heatmaps, boundary heatmaps and
boundary-aware landmark intensity offset fields; decode them back to
sub-pixel coordinates; generate disturbed sample pairs with exact transfer
operators; compute the paired-sample loss family; and score predictions with
NME / AUC / failure-rate metrics.
"""

from .decode import DecodeConfig, DecodeMode, DecodeResult, coarse_argmax, crop_region, decode_all, decode_landmark
from .disturb import (
    Disturbance,
    DisturbancePolicy,
    DisturbKind,
    PairedSample,
    apply_to_image,
    make_pair,
    sample_disturbance,
    transfer_field,
    transfer_heatmap,
    transfer_landmarks,
)
from .errors import BaliError, ContainerError, NoMassError, PtsParseError, ValidationError
from .field import BaliComposite, BaliField, encode_composite, encode_field
from .geometry import (
    AffineTransform,
    BoundaryScheme,
    FlipPermutation,
    GridSpec,
    LandmarkSet,
    Scheme,
    apply_affine,
    default_boundary_scheme,
    default_flip_permutation,
    eye_indices,
    flip_landmarks,
)
from .heatmap import (
    HeatmapKind,
    HeatmapStack,
    KernelFamily,
    KernelSpec,
    distance_transform,
    interpolate_boundary,
    kernel_value,
    render_boundary_heatmaps,
    render_landmark_heatmaps,
)
from .losses import (
    LossWeights,
    OverallLoss,
    StageOutputs,
    SupervisedSample,
    attention_gate,
    js_divergence,
    l2_losses,
    loss_coor,
    loss_org,
    loss_overall,
    loss_scl,
    loss_semi,
    normalize,
)
from .metrics import EvalReport, Normalization, NormKind, auc, evaluate, failure_rate, nme
from .synthetic import random_landmarks, synthetic_face

__version__ = "0.1.0"
