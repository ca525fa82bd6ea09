"""RGB-D ingestion: color segmentation of the marker and depth deprojection.

Images are numpy arrays: RGB ``(H, W, 3) uint8`` and depth ``(H, W) uint16``
in millimeters where 0 marks an invalid reading.  RGB and depth are
assumed pixel-registered.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import EmptyInput, FormatError
from .geometry import PointCloud
from .ids import CameraId, CaptureId


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point lies outside the image")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HsvThresholds:
    """Acceptance window for marker pixels.

    Hue is in degrees and may wrap (``hue_min > hue_max`` selects e.g.
    ``[340, 360) U [0, 20]``).  Saturation and value are in ``[0, 1]``,
    depth in meters.
    """

    hue_min: float = 90.0
    hue_max: float = 150.0
    sat_min: float = 0.35
    sat_max: float = 1.0
    val_min: float = 0.2
    val_max: float = 1.0
    depth_min: float = 0.3
    depth_max: float = 2.5

    def __post_init__(self):
        for lo, hi in [("sat_min", "sat_max"), ("val_min", "val_max"), ("depth_min", "depth_max")]:
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} exceeds {hi}")


@dataclass
class CaptureFrame:
    camera: CameraId
    capture: CaptureId
    rgb: np.ndarray
    depth: np.ndarray
    intrinsics: Intrinsics


def rgb_to_hsv(image) -> np.ndarray:
    """Hexcone HSV with H in degrees ``[0, 360)`` and S, V in ``[0, 1]``."""
    rgb = np.asarray(image, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.select(
        [c == 0, v == r, v == g],
        [0.0, ((g - b) / safe_c) % 6.0, (b - r) / safe_c + 2.0],
        (r - g) / safe_c + 4.0,
    )
    h = (60.0 * h) % 360.0
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`, returning ``uint8`` RGB."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] / 60.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    x = c * (1 - np.abs(h % 2 - 1))
    zero = np.zeros_like(h)
    sector = np.floor(h).astype(int) % 6
    table = [(c, x, zero), (x, c, zero), (zero, c, x), (zero, x, c), (x, zero, c), (c, zero, x)]
    rgb = np.zeros(h.shape + (3,))
    for k, (r, g, b) in enumerate(table):
        sel = sector == k
        rgb[sel] = np.stack([r[sel], g[sel], b[sel]], axis=-1)
    rgb += (v - c)[..., None]
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


_EIGHT = np.ones((3, 3), dtype=bool)


def threshold_mask(rgb, depth, t: HsvThresholds) -> np.ndarray:
    """Per-pixel color/depth test, before component selection."""
    rgb = np.asarray(rgb)
    depth = np.asarray(depth)
    if rgb.shape[:2] != depth.shape:
        raise FormatError(f"rgb {rgb.shape[:2]} and depth {depth.shape} differ in size")
    hsv = rgb_to_hsv(rgb)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    if t.hue_min <= t.hue_max:
        hue_ok = (h >= t.hue_min) & (h <= t.hue_max)
    else:
        hue_ok = (h >= t.hue_min) | (h <= t.hue_max)
    z = depth.astype(np.float64) / 1000.0
    return (
        hue_ok
        & (s >= t.sat_min) & (s <= t.sat_max)
        & (v >= t.val_min) & (v <= t.val_max)
        & (depth > 0) & (z >= t.depth_min) & (z <= t.depth_max)
    )


def largest_component(mask) -> np.ndarray:
    """Keep the largest 8-connected component; ties go to the first in scan order."""
    labels, count = ndimage.label(mask, structure=_EIGHT)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def marker_mask(rgb, depth, t: HsvThresholds | None = None) -> np.ndarray:
    return largest_component(threshold_mask(rgb, depth, t or HsvThresholds()))


def deproject(depth, mask, K: Intrinsics) -> PointCloud:
    """Pinhole back-projection of masked, valid depth pixels (camera frame, meters)."""
    depth = np.asarray(depth)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != depth.shape:
        raise FormatError(f"mask {mask.shape} and depth {depth.shape} differ in size")
    sel = mask & (depth > 0)
    if not sel.any():
        raise EmptyInput("mask selects no valid depth pixel")
    v, u = np.nonzero(sel)
    z = depth[v, u].astype(np.float64) / 1000.0
    x = (u - K.cx) * z / K.fx
    y = (v - K.cy) * z / K.fy
    return PointCloud(np.column_stack([x, y, z]))


def segment_frame(frame: CaptureFrame, t: HsvThresholds | None = None) -> PointCloud:
    mask = marker_mask(frame.rgb, frame.depth, t)
    cloud = deproject(frame.depth, mask, frame.intrinsics)
    colors = frame.rgb[mask & (frame.depth > 0)]
    return PointCloud(cloud.points, colors=colors)


# -- session layout --------------------------------------------------------


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def read_intrinsics(path) -> Intrinsics:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        return Intrinsics(
            float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"]),
            int(data["width"]), int(data["height"]),
        )
    except FileNotFoundError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad intrinsics file {path}: {exc}") from exc


def write_frame(root, camera: CameraId, capture: CaptureId, rgb, depth) -> None:
    """Write one RGB-D pair in the session layout."""
    d = Path(root) / camera.name
    d.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(d / f"{capture.name}_rgb.png")
    Image.fromarray(np.asarray(depth, dtype=np.uint16)).save(d / f"{capture.name}_depth.png")


def write_intrinsics(root, camera: CameraId, K: Intrinsics) -> None:
    d = Path(root) / camera.name
    d.mkdir(parents=True, exist_ok=True)
    (d / "intrinsics.json").write_text(json.dumps(K.to_dict(), indent=2))


def load_session(root) -> list[CaptureFrame]:
    """Load every frame below ``root``, ordered by (row, col, height, shot).

    Layout::

        <root>/cam_<row>_<col>/intrinsics.json
        <root>/cam_<row>_<col>/h<height>_s<shot>_rgb.png
        <root>/cam_<row>_<col>/h<height>_s<shot>_depth.png
    """
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"session root {root} is not a directory")
    frames = []
    cams = []
    for d in root.iterdir():
        if d.is_dir():
            try:
                cams.append((CameraId.parse(d.name), d))
            except ValueError:
                continue
    for cam, d in sorted(cams):
        K = read_intrinsics(d / "intrinsics.json")
        caps = []
        for f in d.glob("*_rgb.png"):
            try:
                caps.append(CaptureId.parse(f.name[: -len("_rgb.png")]))
            except ValueError:
                continue
        for cap in sorted(caps):
            rgb_path = d / f"{cap.name}_rgb.png"
            depth_path = d / f"{cap.name}_depth.png"
            if not depth_path.exists():
                raise OSError(f"missing depth image {depth_path}")
            rgb = _read_image(rgb_path)
            depth = _read_image(depth_path)
            if rgb.ndim != 3 or rgb.shape[2] < 3:
                raise FormatError(f"{rgb_path} is not an RGB image")
            rgb = rgb[..., :3].astype(np.uint8)
            if depth.ndim != 2:
                raise FormatError(f"{depth_path} is not single-channel")
            if rgb.shape[:2] != depth.shape:
                raise FormatError(
                    f"resolution mismatch in {cam.name}/{cap.name}: "
                    f"rgb {rgb.shape[1]}x{rgb.shape[0]} vs depth {depth.shape[1]}x{depth.shape[0]}"
                )
            frames.append(CaptureFrame(cam, cap, rgb, depth.astype(np.uint16), K))
    return frames
