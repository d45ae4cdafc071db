"""Iterative warp-and-inpaint panorama generation with risk-based erasing
and bidirectional guidance."""

from .backend import MockInpainter, RemoteInpainter, mock_inpaint
from .errors import (
    ConfigError,
    ContractViolationError,
    DimensionError,
    PanoError,
    ParameterError,
    ProtocolError,
    SequencingError,
    ServiceError,
    TransportError,
    UnsupportedKindError,
)
from .guidance import InpaintRequest, SdeditParams, build_inpaint_request, extract_prior, paste_guidance
from .imagecore import (
    CameraPose,
    Mask,
    PanoCanvas,
    RiskMap,
    RiskWeights,
    RowStats,
    ViewImage,
)
from .pipeline import (
    PathPlan,
    PipelineResult,
    RunConfig,
    StepSpec,
    plan_paths,
    run_pipeline,
    select_symmetric_guidance,
    validate_plan,
)
from .projection import commit_view, planar_shift_warp, render_view, rotate_warp
from .risk import (
    MaskFilterParams,
    combine_risks,
    erase_by_risk,
    filter_mask,
    risk_color,
    risk_edge,
    risk_init,
    risk_smooth,
    update_row_stats,
)

__version__ = "0.1.0"

__all__ = [
    "CameraPose",
    "ConfigError",
    "ContractViolationError",
    "DimensionError",
    "InpaintRequest",
    "Mask",
    "MaskFilterParams",
    "MockInpainter",
    "PanoCanvas",
    "PanoError",
    "ParameterError",
    "PathPlan",
    "PipelineResult",
    "ProtocolError",
    "RemoteInpainter",
    "RiskMap",
    "RiskWeights",
    "RowStats",
    "RunConfig",
    "SdeditParams",
    "SequencingError",
    "ServiceError",
    "StepSpec",
    "TransportError",
    "UnsupportedKindError",
    "ViewImage",
    "build_inpaint_request",
    "combine_risks",
    "commit_view",
    "erase_by_risk",
    "extract_prior",
    "filter_mask",
    "mock_inpaint",
    "paste_guidance",
    "plan_paths",
    "planar_shift_warp",
    "render_view",
    "risk_color",
    "risk_edge",
    "risk_init",
    "risk_smooth",
    "rotate_warp",
    "run_pipeline",
    "select_symmetric_guidance",
    "update_row_stats",
    "validate_plan",
]
