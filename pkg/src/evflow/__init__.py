"""Event-camera optical flow: plane-fit local flow, aperture-robust
multi-scale correction, motion prediction, synthetic scenes, metrics."""

from .core import (
    EVENT_DTYPE,
    FLOW_DTYPE,
    INVALID_FLOW,
    POL_OFF,
    POL_ON,
    Event,
    FlowSurface,
    FlowVector,
    LocalFlow,
    SensorGeometry,
    TimeSurface,
)
from .pipeline import Pipeline, PipelineConfig, run_pipeline, run_pipeline_array
from .planefit import LocalFlowConfig, PlaneParams, count_inliers, fit_plane, local_flow
from .pooling import ScaleReport, ScaleSet, corrected_flow, pooled_mean_speed, select_scale

__version__ = "0.1.0"

__all__ = [
    "EVENT_DTYPE",
    "FLOW_DTYPE",
    "INVALID_FLOW",
    "POL_OFF",
    "POL_ON",
    "Event",
    "FlowSurface",
    "FlowVector",
    "LocalFlow",
    "LocalFlowConfig",
    "Pipeline",
    "PipelineConfig",
    "PlaneParams",
    "ScaleReport",
    "ScaleSet",
    "SensorGeometry",
    "TimeSurface",
    "corrected_flow",
    "count_inliers",
    "fit_plane",
    "local_flow",
    "pooled_mean_speed",
    "run_pipeline",
    "run_pipeline_array",
    "select_scale",
    "__version__",
]
