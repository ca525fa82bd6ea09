import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubecalib.errors import DegenerateGeometry, EmptyInput
from cubecalib.geometry import (
    CubeModel,
    Plane,
    PointCloud,
    RigidTransform,
    angle_between,
    angles_between,
    centroid,
    compose,
    estimate_normals,
    fit_plane_pca,
    invert,
    merge_clouds,
    nearest_rotation,
    plane_signed_distance,
    random_rotation,
    rotation_about,
    rotation_angle,
    transform_apply,
)

seeds = st.integers(0, 2**32 - 1)


def random_transform(rng):
    return RigidTransform(random_rotation(rng), rng.normal(size=3))


def test_plane_normalizes_and_measures():
    p = Plane(np.array([0.0, 0.0, 1.0]), -1.0)
    assert plane_signed_distance(p, [5.0, 1.0, 3.0]) == pytest.approx(2.0)
    assert plane_signed_distance(p.flipped(), [0.0, 0.0, 3.0]) == pytest.approx(-2.0)


@pytest.mark.parametrize("normal", [np.zeros(3), np.array([0.0, 0.0, 2.0]), np.array([np.nan, 0, 1])])
def test_plane_rejects_bad_normal(normal):
    with pytest.raises(ValueError):
        Plane(normal, 0.0)


def test_rigid_transform_validates_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(2 * np.eye(3), np.zeros(3))


def test_transform_matrix_roundtrip():
    T = random_transform(np.random.default_rng(3))
    assert np.array_equal(RigidTransform.from_matrix(T.matrix).matrix, T.matrix)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_compose_with_inverse_is_identity(seed):
    T = random_transform(np.random.default_rng(seed))
    I = compose(invert(T), T)
    assert np.allclose(I.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(I.translation, 0, atol=1e-12)
    assert np.allclose((T @ T.inverse()).matrix, np.eye(4), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_compose_is_associative_and_matches_matrices(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_transform(rng) for _ in range(3))
    left = compose(compose(a, b), c).matrix
    right = compose(a, compose(b, c)).matrix
    assert np.allclose(left, right, atol=1e-12)
    assert np.allclose(left, a.matrix @ b.matrix @ c.matrix, atol=1e-12)


def test_apply_plane_moves_points_consistently():
    rng = np.random.default_rng(0)
    T = random_transform(rng)
    p = Plane(np.array([0.3, -0.2, 0.9]) / np.linalg.norm([0.3, -0.2, 0.9]), 0.4)
    pts = rng.normal(size=(20, 3))
    assert np.allclose(T.apply_plane(p).distances(T.apply_points(pts)), p.distances(pts), atol=1e-12)


def test_fit_plane_exact_and_oriented():
    rng = np.random.default_rng(1)
    n = np.array([1.0, 2.0, -2.0]) / 3.0
    u = np.cross(n, [1, 0, 0]); u /= np.linalg.norm(u)
    v = np.cross(n, u)
    pts = 0.5 * n + rng.uniform(-1, 1, (50, 1)) * u + rng.uniform(-1, 1, (50, 1)) * v
    # viewpoint at the origin lies on the -n side, so the fitted normal flips
    p = fit_plane_pca(pts)
    assert angle_between(p.normal, -n) < 1e-9
    assert np.abs(p.distances(pts)).max() < 1e-12
    p2 = fit_plane_pca(pts, viewpoint=2 * n)
    assert angle_between(p2.normal, n) < 1e-9


@pytest.mark.parametrize(
    "pts",
    [
        np.zeros((2, 3)),
        np.outer(np.arange(10.0), [1.0, 2.0, 3.0]),
        np.ones((5, 3)),
    ],
)
def test_fit_plane_degenerate(pts):
    with pytest.raises(DegenerateGeometry):
        fit_plane_pca(pts)


def test_fit_plane_rejects_isotropic_blob():
    pts = np.random.default_rng(2).normal(size=(2000, 3))
    with pytest.raises(DegenerateGeometry):
        fit_plane_pca(pts)


def test_estimate_normals_on_plane():
    g = np.stack(np.meshgrid(np.linspace(-1, 1, 20), np.linspace(-1, 1, 20)), -1).reshape(-1, 2)
    pts = np.column_stack([g, np.full(len(g), 2.0)])
    cloud = estimate_normals(PointCloud(pts), k=8)
    assert np.allclose(cloud.normals, [0, 0, -1], atol=1e-9)
    out = estimate_normals(PointCloud(pts), k=8, viewpoint=(0, 0, 0), outward=True)
    assert np.allclose(out.normals, [0, 0, 1], atol=1e-9)


def test_angle_precision_near_zero():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([1.0, 1e-9, 0.0]) / np.linalg.norm([1.0, 1e-9, 0.0])
    assert angle_between(a, b) == pytest.approx(np.degrees(1e-9), rel=1e-6)
    assert angle_between(a, -a) == pytest.approx(180.0)
    assert np.allclose(angles_between(np.eye(3), np.roll(np.eye(3), 1, 0)), 90.0)


def test_rotation_about_and_angle():
    R = rotation_about([0, 0, 1], 90.0)
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    for deg in [0.0, 1e-7, 2.0, 90.0, 179.0, 180.0]:
        assert rotation_angle(rotation_about([1, 2, 3], deg)) == pytest.approx(deg, abs=1e-9)


def test_nearest_rotation_projects():
    R = random_rotation(np.random.default_rng(5))
    noisy = R + 1e-3 * np.random.default_rng(6).normal(size=(3, 3))
    Q = nearest_rotation(noisy)
    assert np.allclose(Q @ Q.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(Q) == pytest.approx(1.0)
    assert rotation_angle(Q @ R.T) < 0.2


def test_cloud_helpers():
    a = PointCloud(np.zeros((2, 3)), colors=np.zeros((2, 3), np.uint8))
    b = PointCloud(np.ones((3, 3)), colors=np.ones((3, 3), np.uint8))
    m = merge_clouds([a, b])
    assert len(m) == 5 and m.colors.shape == (5, 3)
    assert np.allclose(centroid(m.points), [0.6, 0.6, 0.6])
    with pytest.raises(EmptyInput):
        centroid(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 2)))


def test_transform_apply_moves_normals():
    T = RigidTransform(rotation_about([0, 0, 1], 90.0), np.array([1.0, 0.0, 0.0]))
    c = transform_apply(T, PointCloud(np.array([[1.0, 0, 0]]), np.array([[1.0, 0, 0]])))
    assert np.allclose(c.points, [[1, 1, 0]])
    assert np.allclose(c.normals, [[0, 1, 0]])


def test_cube_model_faces():
    cube = CubeModel(0.3, RigidTransform(rotation_about([0, 0, 1], 30.0), np.array([0, 0, 1.0])))
    n = cube.face_normals()
    assert n.shape == (6, 3)
    assert np.allclose(n[:3], -n[3:])
    assert np.allclose(np.linalg.norm(cube.face_centers() - cube.center, axis=1), 0.15)
    for plane, c in zip(cube.planes(), cube.face_centers()):
        assert abs(plane.distances(c[None])[0]) < 1e-12
        assert plane.distances(cube.center[None])[0] == pytest.approx(-0.15)
