"""Synthetic multi-camera rig with known extrinsics.

Renders the cube marker analytically (ray/box intersection, no
rasterization) so every point keeps its ground-truth face label.  Camera
frames follow the OpenCV convention: x right, y down, z forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRender, InputMismatch
from .geometry import (
    CubeModel,
    PointCloud,
    RigidTransform,
    compose,
    invert,
    rotation_about,
    rotation_angle,
)
from .ids import CameraId, CaptureId
from .rgbd import Intrinsics, hsv_to_rgb

DEFAULT_INTRINSICS = Intrinsics(fx=400.0, fy=400.0, cx=319.5, cy=239.5, width=640, height=480)

# rotation taking the cube's (1, 1, 1) body diagonal onto world +z
CORNER_UP = rotation_about((1.0, -1.0, 0.0), np.degrees(np.arccos(1.0 / np.sqrt(3.0))))


@dataclass(frozen=True)
class NoiseSpec:
    depth_sigma: float = 0.0
    outlier_fraction: float = 0.0
    quantization: float = 0.001

    def __post_init__(self):
        if self.depth_sigma < 0 or self.quantization < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must lie in [0, 1)")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0)


@dataclass
class RigSpec:
    rows: int
    cols: int
    poses: dict[CameraId, RigidTransform]  # camera frame -> world
    intrinsics: Intrinsics = DEFAULT_INTRINSICS

    def __post_init__(self):
        if self.rows * self.cols < 1:
            raise ValueError("rig needs at least one camera")

    @property
    def cameras(self) -> list[CameraId]:
        return sorted(self.poses)


@dataclass
class LabeledCloud:
    cloud: PointCloud
    labels: np.ndarray       # face index 0..5, -1 for injected outliers
    edge_flags: np.ndarray   # True within the edge band of a face border
    visible_faces: tuple[int, ...]


@dataclass
class SyntheticSession:
    rig: RigSpec
    cubes: dict[CaptureId, CubeModel]
    frames: dict[tuple[CameraId, CaptureId], LabeledCloud]
    covisibility: dict[CaptureId, dict[CameraId, int]] = field(default_factory=dict)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    @property
    def truth(self) -> dict[CameraId, RigidTransform]:
        return self.rig.poses

    @property
    def captures(self) -> list[CaptureId]:
        return sorted(self.cubes)

    def clouds(self) -> dict[tuple[CameraId, CaptureId], PointCloud]:
        return {k: v.cloud for k, v in self.frames.items()}

    def relative_truth(self, reference: CameraId | None = None) -> dict[CameraId, RigidTransform]:
        """Ground-truth transforms mapping each camera frame into the reference frame."""
        ref = reference or min(self.truth)
        inv_ref = invert(self.truth[ref])
        return {c: compose(inv_ref, T) for c, T in self.truth.items()}


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-world pose of a camera at ``position`` looking at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, (1.0, 0.0, 0.0))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), position)


def default_rig(
    rows: int = 3,
    cols: int = 4,
    radius: float = 1.2,
    row_heights=(0.4, 1.0, 1.6),
    target_height: float | None = None,
    intrinsics: Intrinsics = DEFAULT_INTRINSICS,
    azimuth_offset: float = 0.0,
) -> RigSpec:
    """Cylindrical booth: ``rows`` rings of ``cols`` cameras aimed at the axis."""
    heights = list(row_heights)
    if len(heights) != rows:
        heights = list(np.linspace(0.4, 1.6, rows)) if rows > 1 else [1.0]
    if target_height is None:
        target_height = float(np.mean(heights))
    poses = {}
    for i in range(rows):
        for j in range(cols):
            az = np.radians(azimuth_offset + 360.0 * j / cols)
            pos = (radius * np.cos(az), radius * np.sin(az), heights[i])
            poses[CameraId(i, j)] = look_at(pos, (0.0, 0.0, target_height))
    return RigSpec(rows, cols, poses, intrinsics)


def cube_pose(height: float, yaw_deg: float = 0.0, offset=(0.0, 0.0)) -> RigidTransform:
    """Cube standing on a corner (body diagonal vertical) at ``height``."""
    r = rotation_about((0.0, 0.0, 1.0), yaw_deg) @ CORNER_UP
    return RigidTransform(r, (offset[0], offset[1], height))


# -- ray casting ------------------------------------------------------------


def _ray_box(origin, dirs, half):
    """Slab test against the axis-aligned box ``[-half, half]^3``.

    Returns entry/exit parameters and the entry face index (cube face order)
    per ray.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (-half - origin) * inv
        t2 = (half - origin) * inv
    lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    hi = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
    # rays parallel to a slab: inside -> unconstrained, outside -> miss
    par = dirs == 0
    outside = par & (np.abs(origin) > half)
    lo = np.where(par, np.where(outside, np.inf, -np.inf), lo)
    hi = np.where(par, np.where(outside, -np.inf, np.inf), hi)
    t_near = lo.max(axis=-1)
    t_far = hi.min(axis=-1)
    axis = lo.argmax(axis=-1)
    d_axis = np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0]
    face = np.where(d_axis > 0, axis + 3, axis)
    return t_near, t_far, face


def _face_grid(cube: CubeModel, face: int, m: int):
    """``m x m`` cell-centered samples on one face, in world coordinates."""
    s = (np.arange(m) + 0.5) / m - 0.5
    u, v = np.meshgrid(s, s, indexing="ij")
    u, v = u.ravel() * cube.edge, v.ravel() * cube.edge
    k = face % 3
    sign = 1.0 if face < 3 else -1.0
    local = np.zeros((m * m, 3))
    local[:, k] = sign * cube.edge / 2
    local[:, (k + 1) % 3] = u
    local[:, (k + 2) % 3] = v
    border = cube.edge / 2 - np.maximum(np.abs(u), np.abs(v))
    return cube.pose.apply_points(local), border


def visible_faces(camera_pose: RigidTransform, cube: CubeModel) -> list[int]:
    """Back-face culling: faces whose outward normal points at the camera."""
    view = camera_pose.translation - cube.face_centers()
    return [f for f in range(6) if cube.face_normals()[f] @ view[f] > 0]


def _project(points_cam, K: Intrinsics):
    z = points_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * points_cam[:, 0] / z + K.cx
        v = K.fy * points_cam[:, 1] / z + K.cy
    return u, v


def render_cube_cloud(
    camera_pose: RigidTransform,
    intrinsics: Intrinsics,
    cube: CubeModel,
    density: int = 900,
    noise: NoiseSpec | None = None,
    rng_seed=0,
    edge_band: float = 0.003,
) -> LabeledCloud:
    """Sample the camera-facing cube faces and express them in the camera frame.

    ``density`` is the number of samples per face (rounded to a square
    grid).  Occluded and out-of-frustum samples are dropped, then depth
    noise, quantization and uniform outliers are applied.
    """
    noise = noise or NoiseSpec.none()
    rng = np.random.default_rng(rng_seed)
    to_cam = invert(camera_pose)
    if to_cam.apply_points(cube.center[None])[0, 2] <= 0:
        raise EmptyRender("cube is behind the camera")

    m = max(2, int(round(np.sqrt(density))))
    faces = visible_faces(camera_pose, cube)
    pts, labels, border = [], [], []
    for f in faces:
        p, b = _face_grid(cube, f, m)
        pts.append(p)
        labels.append(np.full(len(p), f))
        border.append(b)
    if not pts:
        raise EmptyRender("no face points toward the camera")
    world = np.concatenate(pts)
    labels = np.concatenate(labels)
    border = np.concatenate(border)

    # occlusion: keep samples that are the first hit along their camera ray
    to_cube = invert(cube.pose)
    o = to_cube.apply_points(camera_pose.translation[None])[0]
    d = to_cube.apply_points(world) - o
    t_near, _, _ = _ray_box(o, d, cube.edge / 2)
    keep = t_near >= 1.0 - 1e-9

    cam = to_cam.apply_points(world)
    u, v = _project(cam, intrinsics)
    keep &= (cam[:, 2] > 0) & (u >= 0) & (u <= intrinsics.width - 1)
    keep &= (v >= 0) & (v <= intrinsics.height - 1)
    if not keep.any():
        raise EmptyRender("cube is outside the camera frustum")
    cam, labels, border = cam[keep], labels[keep], border[keep]

    if noise.depth_sigma > 0:
        rays = cam / np.linalg.norm(cam, axis=1, keepdims=True)
        cam = cam + rng.normal(0.0, noise.depth_sigma, len(cam))[:, None] * rays
    if noise.quantization > 0:
        z = cam[:, 2]
        cam = cam * (np.round(z / noise.quantization) * noise.quantization / z)[:, None]

    edge_flags = border < edge_band
    if noise.outlier_fraction > 0:
        n_out = int(round(noise.outlier_fraction * len(cam) / (1.0 - noise.outlier_fraction)))
        lo, hi = cam.min(axis=0), cam.max(axis=0)
        pad = 0.1 * (hi - lo)
        out = rng.uniform(lo - pad, hi + pad, size=(n_out, 3))
        cam = np.concatenate([cam, out])
        labels = np.concatenate([labels, np.full(n_out, -1)])
        edge_flags = np.concatenate([edge_flags, np.zeros(n_out, dtype=bool)])

    return LabeledCloud(PointCloud(cam), labels, edge_flags, tuple(sorted(set(labels[labels >= 0].tolist()))))


def render_rgbd(
    camera_pose: RigidTransform,
    intrinsics: Intrinsics,
    cube: CubeModel,
    noise: NoiseSpec | None = None,
    rng_seed=0,
    background_depth: float = 3.0,
):
    """Ray-cast a registered RGB-D pair of the green cube.

    Returns ``(rgb uint8, depth uint16 mm, face_id int)``; ``face_id`` is -1
    where the ray misses the cube.  The background is a gray wall at
    ``background_depth`` meters.
    """
    noise = noise or NoiseSpec(quantization=0.001)
    rng = np.random.default_rng(rng_seed)
    K = intrinsics
    v, u = np.mgrid[0 : K.height, 0 : K.width].astype(np.float64)
    rays = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)

    cube_from_cam = compose(invert(cube.pose), camera_pose)
    o = cube_from_cam.translation
    d = rays @ cube_from_cam.rotation.T
    t_near, t_far, face = _ray_box(o, d, cube.edge / 2)
    hit = (t_near <= t_far) & (t_near > 0)

    z = np.where(hit, t_near, background_depth)
    if noise.depth_sigma > 0:
        scale = 1.0 / np.linalg.norm(rays, axis=-1)
        z = z + hit * rng.normal(0.0, noise.depth_sigma, z.shape) * scale
    depth = np.clip(np.round(z * 1000.0), 0, 65535).astype(np.uint16)

    face_id = np.where(hit, face, -1)
    normals_cam = cube.face_normals() @ camera_pose.rotation
    shade = np.zeros(z.shape)
    for f in range(6):
        sel = face_id == f
        if sel.any():
            cosang = -(rays[sel] @ normals_cam[f]) / np.linalg.norm(rays[sel], axis=-1)
            shade[sel] = np.clip(cosang, 0.0, 1.0)
    hsv = np.zeros(z.shape + (3,))
    hsv[..., 0] = 120.0
    hsv[..., 1] = np.where(hit, 0.8, 0.0)
    hsv[..., 2] = np.where(hit, 0.35 + 0.6 * shade, 0.4)
    return hsv_to_rgb(hsv), depth, face_id


def generate_session(
    rig: RigSpec | None = None,
    heights=(0.6, 0.76, 0.92, 1.08, 1.24, 1.4),
    shots_per_height: int = 4,
    edge: float = 0.3,
    noise: NoiseSpec | None = None,
    rng_seed: int = 0,
    density: int = 900,
    yaw_range: float = 15.0,
    offset_radius: float = 0.08,
    edge_band: float = 0.003,
) -> SyntheticSession:
    """Render every camera for every (height, shot) capture of the cube.

    Each shot jitters the cube by a random yaw within ``yaw_range`` degrees
    and a horizontal offset within ``offset_radius`` meters of the rig
    axis.  A frame is kept when its camera sees at least two faces.
    """
    rig = rig or default_rig()
    noise = noise if noise is not None else NoiseSpec()
    pose_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0]))
    cubes = {}
    for hi, h in enumerate(heights):
        for s in range(shots_per_height):
            yaw = pose_rng.uniform(-yaw_range, yaw_range)
            r = offset_radius * np.sqrt(pose_rng.uniform())
            phi = pose_rng.uniform(0.0, 2.0 * np.pi)
            cubes[CaptureId(hi, s)] = CubeModel(edge, cube_pose(h, yaw, (r * np.cos(phi), r * np.sin(phi))))

    frames = {}
    covis = {}
    for cap, cube in sorted(cubes.items()):
        covis[cap] = {}
        for cam in rig.cameras:
            seed = np.random.SeedSequence([rng_seed, 1, cam.row, cam.col, cap.height, cap.shot])
            try:
                lc = render_cube_cloud(rig.poses[cam], rig.intrinsics, cube, density, noise, seed, edge_band)
            except EmptyRender:
                continue
            if len(lc.visible_faces) >= 2:
                covis[cap][cam] = len(lc.visible_faces)
                frames[(cam, cap)] = lc
    return SyntheticSession(rig, cubes, frames, covis, noise, rng_seed)


def ground_truth_error(result, truth: dict[CameraId, RigidTransform]) -> dict[CameraId, tuple[float, float]]:
    """Per-camera (rotation error in degrees, translation error in mm).

    ``truth`` holds camera-to-world poses; they are re-expressed relative to
    the result's reference camera before comparison.
    """
    if set(result.transforms) != set(truth):
        missing = sorted(set(truth) ^ set(result.transforms))
        raise InputMismatch(f"camera sets differ: {[c.name for c in missing]}")
    inv_ref = invert(truth[result.reference])
    out = {}
    for cam in sorted(truth):
        t_true = compose(inv_ref, truth[cam])
        t_est = result.transforms[cam]
        rot = rotation_angle(t_est.rotation @ t_true.rotation.T)
        trans = 1000.0 * float(np.linalg.norm(t_est.translation - t_true.translation))
        out[cam] = (rot, trans)
    return out
