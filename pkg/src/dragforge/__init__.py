"""Point-based drag editing engine over pluggable feature fields.

Pipeline: superpixel segmentation of a feature grid, automatic editable-
region masks from the drag points, latent optimization with position-
supervised backtracking, DDIM inversion/sampling with correspondence
guidance, and precision metrics; exposed as a library, CLI, and session
HTTP service.
"""

from .dragopt import (
    ACCEPT,
    REJECT_DIRECTION,
    REJECT_DISTANCE,
    DragState,
    RegionMode,
    accept_step,
    drag_session_run,
    latent_step,
    motion_supervision_loss,
    point_track,
)
from .errors import (
    BoundsError,
    ConfigError,
    DataError,
    DragforgeError,
    FormatError,
    NumericError,
    ParameterError,
    ShapeError,
)
from .fields import (
    AnalyticBumpField,
    FeatureField,
    IdentityField,
    LinearConvField,
    TabulatedField,
    field_adjoint,
    field_forward,
    field_from_config,
)
from .grid import (
    Grid,
    Point,
    bilinear_sample,
    load_grid,
    read_dft1,
    read_npy,
    write_dft1,
    write_npy,
)
from .maskgen import (
    DragInstruction,
    Mask,
    generate_mask,
    mask_complement_weighting,
    read_mask_png,
    write_mask_png,
)
from .metrics import EvalReport, evaluate_session, mean_distance
from .sampler import (
    ConstantPredictor,
    Guidance,
    LinearPredictor,
    NoiseSchedule,
    PatchPair,
    TabulatedPredictor,
    ZeroPredictor,
    closs,
    ddim_invert,
    ddim_invert_step,
    ddim_sample,
    ddim_step,
    ddpm_loss,
    guided_sample,
)
from .superpixel import (
    Segmentation,
    enforce_connectivity,
    region_of,
    slic_segment,
)

__version__ = "0.1.0"

__all__ = [
    "ACCEPT",
    "REJECT_DIRECTION",
    "REJECT_DISTANCE",
    "AnalyticBumpField",
    "BoundsError",
    "ConfigError",
    "ConstantPredictor",
    "DataError",
    "DragInstruction",
    "DragState",
    "DragforgeError",
    "EvalReport",
    "FeatureField",
    "FormatError",
    "Grid",
    "Guidance",
    "IdentityField",
    "LinearConvField",
    "LinearPredictor",
    "Mask",
    "NoiseSchedule",
    "NumericError",
    "ParameterError",
    "PatchPair",
    "Point",
    "RegionMode",
    "Segmentation",
    "ShapeError",
    "TabulatedField",
    "TabulatedPredictor",
    "ZeroPredictor",
    "accept_step",
    "bilinear_sample",
    "closs",
    "ddim_invert",
    "ddim_invert_step",
    "ddim_sample",
    "ddim_step",
    "ddpm_loss",
    "drag_session_run",
    "enforce_connectivity",
    "evaluate_session",
    "field_adjoint",
    "field_forward",
    "field_from_config",
    "generate_mask",
    "guided_sample",
    "latent_step",
    "load_grid",
    "mask_complement_weighting",
    "mean_distance",
    "motion_supervision_loss",
    "point_track",
    "read_dft1",
    "read_mask_png",
    "read_npy",
    "region_of",
    "slic_segment",
    "write_dft1",
    "write_mask_png",
    "write_npy",
]
