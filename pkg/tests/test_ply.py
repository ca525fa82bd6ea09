import numpy as np
import pytest

from cubecalib.errors import FormatError
from cubecalib.geometry import PointCloud
from cubecalib.ids import CameraId, CaptureId
from cubecalib.ply import read_cloud_dir, read_ply, write_cloud_dir, write_ply


def test_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(100, 3)) * np.array([1e-7, 1.0, 1e6])
    nrm = rng.normal(size=(100, 3))
    col = rng.integers(0, 256, (100, 3)).astype(np.uint8)
    labels = rng.integers(-1, 6, 100)
    write_ply(tmp_path / "a.ply", PointCloud(pts, nrm, col), {"label": labels})
    cloud, extra = read_ply(tmp_path / "a.ply")
    assert np.array_equal(cloud.points, pts)
    assert np.array_equal(cloud.normals, nrm)
    assert np.array_equal(cloud.colors, col)
    assert np.array_equal(extra["label"], labels)


def test_points_only_and_empty(tmp_path):
    write_ply(tmp_path / "p.ply", PointCloud(np.eye(3)))
    c, extra = read_ply(tmp_path / "p.ply")
    assert c.normals is None and c.colors is None and extra == {}
    write_ply(tmp_path / "e.ply", PointCloud(np.zeros((0, 3))))
    assert len(read_ply(tmp_path / "e.ply")[0]) == 0


@pytest.mark.parametrize("text", ["hello\n", "ply\nformat binary_little_endian 1.0\nend_header\n",
                                  "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\n"
                                  "property double y\nproperty double z\nend_header\n1 2 3\n"])
def test_malformed_files(tmp_path, text):
    (tmp_path / "bad.ply").write_text(text)
    with pytest.raises(FormatError):
        read_ply(tmp_path / "bad.ply")


def test_cloud_dir_roundtrip(tmp_path):
    clouds = {(CameraId(0, 1), CaptureId(2, 3)): PointCloud(np.ones((4, 3))),
              (CameraId(1, 0), CaptureId(0, 0)): PointCloud(np.zeros((5, 3)))}
    write_cloud_dir(tmp_path, clouds)
    back = read_cloud_dir(tmp_path)
    assert set(back) == set(clouds)
    with pytest.raises(OSError):
        read_cloud_dir(tmp_path / "missing")
