"""Boundary-point text detection: prior maps, proposals, refinement and evaluation."""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    InvalidInput,
    ParseError,
    detect,
    distance_transform,
    evaluate,
    extract_proposals,
    gradcheck,
    make_prior_maps,
    parse_annotations,
    pm_loss,
    polygon_iou,
    rasterize,
    resample_polygon,
    run_cli,
    schedule_factor,
    synth_scene,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "InvalidInput",
    "ParseError",
    "detect",
    "distance_transform",
    "evaluate",
    "extract_proposals",
    "gradcheck",
    "make_prior_maps",
    "parse_annotations",
    "pm_loss",
    "polygon_iou",
    "rasterize",
    "resample_polygon",
    "run_cli",
    "schedule_factor",
    "synth_scene",
]
