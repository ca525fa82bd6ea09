import colorsys

import numpy as np
import pytest
from PIL import Image

from cubecalib.errors import EmptyInput, FormatError
from cubecalib.ids import CameraId, CaptureId
from cubecalib.rgbd import (
    HsvThresholds,
    Intrinsics,
    deproject,
    hsv_to_rgb,
    largest_component,
    load_session,
    marker_mask,
    rgb_to_hsv,
    segment_frame,
    threshold_mask,
    write_frame,
    write_intrinsics,
)

K = Intrinsics(fx=400.0, fy=410.0, cx=15.5, cy=11.5, width=32, height=24)


def test_rgb_to_hsv_matches_colorsys():
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, (500, 3)).astype(np.uint8)
    rgb[:5] = [[0, 0, 0], [255, 255, 255], [128, 128, 128], [255, 0, 0], [0, 255, 0]]
    ours = rgb_to_hsv(rgb)
    for px, (h, s, v) in zip(rgb, ours):
        eh, es, ev = colorsys.rgb_to_hsv(*(px / 255.0))
        assert h == pytest.approx((eh * 360.0) % 360.0, abs=1e-9)
        assert s == pytest.approx(es, abs=1e-12)
        assert v == pytest.approx(ev, abs=1e-12)


def test_hsv_roundtrip():
    rgb = np.random.default_rng(1).integers(0, 256, (1000, 3)).astype(np.uint8)
    assert np.array_equal(hsv_to_rgb(rgb_to_hsv(rgb)), rgb)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(0.0, 1.0, 1.0, 1.0, 4, 4)
    with pytest.raises(ValueError):
        Intrinsics(1.0, 1.0, 10.0, 1.0, 4, 4)


def _scene():
    rgb = np.zeros((24, 32, 3), np.uint8)
    depth = np.full((24, 32), 1000, np.uint16)
    rgb[:] = (120, 120, 120)
    rgb[2:10, 2:10] = (20, 200, 40)      # large green patch
    rgb[15:18, 20:23] = (20, 200, 40)    # small green patch
    return rgb, depth


def test_marker_mask_keeps_largest_green_component():
    rgb, depth = _scene()
    m = marker_mask(rgb, depth)
    assert m.sum() == 64 and m[2:10, 2:10].all()


def test_threshold_mask_depth_gate_and_invalid_depth():
    rgb, depth = _scene()
    depth[2:10, 2:6] = 0
    depth[2:10, 6:8] = 4000
    m = threshold_mask(rgb, depth, HsvThresholds())
    assert m[2:10, 8:10].all() and not m[2:10, 2:8].any()


def test_hue_wrap_window():
    rgb = np.array([[[250, 10, 30], [250, 30, 10], [10, 250, 10]]], np.uint8)
    depth = np.full((1, 3), 1000, np.uint16)
    t = HsvThresholds(hue_min=340.0, hue_max=20.0)
    assert threshold_mask(rgb, depth, t).tolist() == [[True, True, False]]


def test_size_mismatch_is_format_error():
    with pytest.raises(FormatError):
        threshold_mask(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5), np.uint16), HsvThresholds())
    with pytest.raises(FormatError):
        deproject(np.zeros((4, 4), np.uint16), np.zeros((4, 5), bool), K)


def test_largest_component_tie_goes_to_scan_order():
    m = np.zeros((5, 5), bool)
    m[0, 3] = m[0, 4] = True
    m[4, 0] = m[4, 1] = True
    out = largest_component(m)
    assert out[0, 3] and out[0, 4] and not out[4].any()
    # diagonal pixels are connected
    d = np.eye(4, dtype=bool)
    assert largest_component(d).sum() == 4


def test_deproject_matches_pinhole_loop():
    rng = np.random.default_rng(2)
    depth = rng.integers(300, 3000, (24, 32)).astype(np.uint16)
    depth[0, 0] = 0
    mask = rng.random((24, 32)) < 0.3
    mask[0, 0] = True
    cloud = deproject(depth, mask, K)
    expected = []
    for v in range(24):
        for u in range(32):
            if mask[v, u] and depth[v, u] > 0:
                z = depth[v, u] / 1000.0
                expected.append(((u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z))
    assert np.allclose(cloud.points, expected, atol=1e-15)


def test_deproject_empty_mask():
    with pytest.raises(EmptyInput):
        deproject(np.ones((4, 4), np.uint16), np.zeros((4, 4), bool), K)


def test_session_roundtrip_and_order(tmp_path):
    rgb, depth = _scene()
    for cam in [CameraId(1, 0), CameraId(0, 2)]:
        write_intrinsics(tmp_path, cam, K)
        for cap in [CaptureId(1, 0), CaptureId(0, 3)]:
            write_frame(tmp_path, cam, cap, rgb, depth)
    frames = load_session(tmp_path)
    keys = [(f.camera, f.capture) for f in frames]
    assert keys == sorted(keys) and len(keys) == 4
    assert np.array_equal(frames[0].rgb, rgb) and np.array_equal(frames[0].depth, depth)
    assert frames[0].depth.dtype == np.uint16
    cloud = segment_frame(frames[0])
    assert len(cloud) == 64 and cloud.colors.shape == (64, 3)


def test_session_resolution_mismatch(tmp_path):
    cam, cap = CameraId(0, 0), CaptureId(0, 0)
    write_intrinsics(tmp_path, cam, K)
    rgb, depth = _scene()
    write_frame(tmp_path, cam, cap, rgb, depth)
    Image.fromarray(np.zeros((10, 10), np.uint16)).save(tmp_path / cam.name / f"{cap.name}_depth.png")
    with pytest.raises(FormatError, match="resolution mismatch"):
        load_session(tmp_path)


def test_session_missing_files(tmp_path):
    with pytest.raises(OSError):
        load_session(tmp_path / "nope")
    cam = CameraId(0, 0)
    write_intrinsics(tmp_path, cam, K)
    rgb, _ = _scene()
    Image.fromarray(rgb).save(tmp_path / cam.name / "h0_s0_rgb.png")
    with pytest.raises(OSError, match="missing depth"):
        load_session(tmp_path)
