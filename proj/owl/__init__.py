# SPDX-License-Identifier: Apache-2.0
"""Unsupervised 3D pseudo-labeling pipeline."""

from ._owl import (
    Box3D,
    ClassId,
    PointCloud,
    cluster,
    consistency_score,
    distribution_score,
    dynamic_radius,
    evaluate,
    filter_motion_artifacts,
    generate_frames,
    initial_labels,
    iou_3d,
    iou_bev,
    nms,
    normalize_config,
    remove_ground,
    run_e2e,
)

__all__ = [
    "Box3D",
    "ClassId",
    "PointCloud",
    "cluster",
    "consistency_score",
    "distribution_score",
    "dynamic_radius",
    "evaluate",
    "filter_motion_artifacts",
    "generate_frames",
    "initial_labels",
    "iou_3d",
    "iou_bev",
    "nms",
    "normalize_config",
    "remove_ground",
    "run_e2e",
]
