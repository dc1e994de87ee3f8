"""Deterministic FK-projected hand-centric ROI extraction and dataset governance."""

__version__ = "0.1.0"

from .camera import CalibrationSet, Intrinsics, Projection, project, to_camera_frame
from .foveation import TokenStats, View, density_gain, token_accounting
from .gates import GateReport, GateThresholds, aggregate_report, jitter, projection_validity_ratio, teleop_metrics
from .kinematics import JointSpec, KinematicChain, Pose, compose, fk, transform_point
from .manifest import DatasetManifest, build_manifest, verify_regeneration
from .records import LineageTuple, Rect, RoiRecord, read_records, write_records
from .roi import (
    RoiPolicy,
    confidence,
    crop_bounds,
    extract_roi,
    generate_frame,
    inward_direction,
    offset_center,
    resize_area,
    roi_scale,
)
from .sync import FrameSample, StateRecord, pair_streams
