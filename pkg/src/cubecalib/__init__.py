"""Extrinsic calibration of multi-camera RGB-D rigs with a cube marker."""

__version__ = "0.1.0"

from .calibration import (
    CalibrationParams,
    CalibrationResult,
    Observation,
    ObservationGraph,
    alignment_error,
    build_observation_graph,
    calibrate_rig,
    match_faces,
    procrustes_align,
    ransac_pairwise,
)
from .errors import *  # noqa: F401,F403
from .extraction import (
    ExtractedFaces,
    ExtractionParams,
    FaceCluster,
    cluster_faces,
    extract_cube_faces,
    reassign_points,
    regress_planes,
)
from .geometry import (
    CubeModel,
    Plane,
    PointCloud,
    RigidTransform,
    angle_between,
    centroid,
    compose,
    estimate_normals,
    fit_plane_pca,
    invert,
    merge_clouds,
    plane_signed_distance,
    transform_apply,
)
from .hyperopt import ParamSpace, TrialResult, grid_search
from .ids import CameraId, CaptureId
from .metrics import CubeReconstructionReport, cube_reconstruction_error, hausdorff, wasserstein
from .ply import read_ply, write_ply
from .rgbd import CaptureFrame, HsvThresholds, Intrinsics, deproject, load_session, marker_mask
from .synth import NoiseSpec, RigSpec, SyntheticSession, generate_session, ground_truth_error, render_cube_cloud
