"""Uncalibrated photometric stereo by differentiable inverse rendering."""

from _psir import (  # noqa: F401
    render_dataset,
    default_config_json,
    default_scene_json,
    e_int,
    encode,
    fit_normals,
    gbr_transform,
    mae_degrees,
    render_scene,
    shadow_iou,
    soft_shadow_map,
    solve,
)

__all__ = [
    "default_config_json",
    "default_scene_json",
    "e_int",
    "encode",
    "fit_normals",
    "gbr_transform",
    "mae_degrees",
    "render_dataset",
    "render_scene",
    "shadow_iou",
    "soft_shadow_map",
    "solve",
]
