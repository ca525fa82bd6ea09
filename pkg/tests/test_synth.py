import numpy as np
import pytest

from cubecalib.calibration import CalibrationResult
from cubecalib.errors import EmptyRender, InputMismatch
from cubecalib.extraction import ExtractionParams, assign_labels
from cubecalib.geometry import CubeModel, RigidTransform, compose, invert, rotation_about
from cubecalib.ids import CameraId
from cubecalib.synth import (
    DEFAULT_INTRINSICS,
    NoiseSpec,
    default_rig,
    generate_session,
    ground_truth_error,
    look_at,
    render_cube_cloud,
    visible_faces,
)

CUBE = CubeModel(0.3)


def test_face_on_view_sees_one_face():
    pose = look_at((0.0, 0.0, 2.0), (0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0))
    assert visible_faces(pose, CUBE) == [2]
    lc = render_cube_cloud(pose, DEFAULT_INTRINSICS, CUBE)
    assert lc.visible_faces == (2,)


def test_diagonal_view_sees_three_faces():
    pose = look_at((1.5, 1.5, 1.5), (0.0, 0.0, 0.0))
    lc = render_cube_cloud(pose, DEFAULT_INTRINSICS, CUBE)
    assert lc.visible_faces == (0, 1, 2)
    assert np.bincount(lc.labels).min() > 800


def test_noise_free_points_on_labeled_faces():
    pose = look_at((1.0, -1.3, 0.7), (0.0, 0.0, 0.0))
    cube = CubeModel(0.3, RigidTransform(rotation_about((1, 2, 3), 40.0), np.array([0.1, 0.0, 0.2])))
    lc = render_cube_cloud(pose, DEFAULT_INTRINSICS, cube, noise=NoiseSpec.none())
    world = pose.apply_points(lc.cloud.points)
    planes = cube.planes()
    for f in lc.visible_faces:
        d = planes[f].distances(world[lc.labels == f])
        assert np.abs(d).max() < 1e-12


def test_empty_renders():
    behind = look_at((0.0, 0.0, 2.0), (0.0, 0.0, 4.0), up=(0.0, 1.0, 0.0))
    with pytest.raises(EmptyRender):
        render_cube_cloud(behind, DEFAULT_INTRINSICS, CUBE)
    off = look_at((0.0, 0.0, 2.0), (30.0, 0.0, 2.0))
    with pytest.raises(EmptyRender):
        render_cube_cloud(off, DEFAULT_INTRINSICS, CUBE)


def test_session_counts_and_covisibility(clean_session):
    s = clean_session
    assert len(s.rig.cameras) == 12 and len(s.cubes) == 24
    assert len(s.frames) <= 288
    expected = {(cam, cap) for cap, vis in s.covisibility.items() for cam in vis}
    assert set(s.frames) == expected
    for (cam, cap), lc in s.frames.items():
        assert s.covisibility[cap][cam] == len(lc.visible_faces)
        assert 2 <= len(set(lc.labels[lc.labels >= 0].tolist())) <= 3


def test_extraction_succeeds_on_every_three_face_frame(clean_session, clean_observations):
    three = {(cam, cap) for (cam, cap), lc in clean_session.frames.items() if len(lc.visible_faces) == 3}
    assert {(o.camera, o.capture) for o in clean_observations} == three


def test_adjacent_rows_are_covisible(clean_session):
    for r in range(2):
        assert any(
            any(c.row == r and k == 3 for c, k in vis.items()) and any(c.row == r + 1 and k == 3 for c, k in vis.items())
            for vis in clean_session.covisibility.values()
        )


def test_label_fidelity(clean_session):
    for (cam, cap), lc in list(clean_session.frames.items())[::10]:
        to_cam = invert(clean_session.truth[cam])
        cube = clean_session.cubes[cap]
        planes = []
        for n, c in zip(cube.face_normals(), cube.face_centers()):
            nc = to_cam.rotation @ n
            cc = to_cam.apply_points(c[None])[0]
            planes.append(type(cube.planes()[0])(nc, -float(nc @ cc)))
        faces = list(lc.visible_faces)
        labels = assign_labels(lc.cloud, [planes[f] for f in faces], ExtractionParams(distance_threshold=1e-9))
        inner = ~lc.edge_flags
        assert np.array_equal(np.array(faces)[labels[inner]], lc.labels[inner])


def test_session_deterministic():
    a = generate_session(heights=(1.0,), shots_per_height=2, noise=NoiseSpec(0.001, 0.01), rng_seed=3)
    b = generate_session(heights=(1.0,), shots_per_height=2, noise=NoiseSpec(0.001, 0.01), rng_seed=3)
    assert a.frames.keys() == b.frames.keys()
    for k in a.frames:
        assert np.array_equal(a.frames[k].cloud.points, b.frames[k].cloud.points)
        assert np.array_equal(a.frames[k].labels, b.frames[k].labels)
    c = generate_session(heights=(1.0,), shots_per_height=2, noise=NoiseSpec(0.001, 0.01), rng_seed=4)
    k = next(iter(a.frames))
    assert not np.array_equal(a.frames[k].cloud.points, c.frames[k].cloud.points)


def _matrix_errors(result, truth):
    ref = np.linalg.inv(truth[result.reference].matrix)
    out = {}
    for cam, T in result.transforms.items():
        m_true = ref @ truth[cam].matrix
        d = T.matrix @ np.linalg.inv(m_true)
        rot = np.degrees(np.arccos(np.clip((np.trace(d[:3, :3]) - 1) / 2, -1, 1)))
        out[cam] = (rot, 1000 * np.linalg.norm(T.matrix[:3, 3] - m_true[:3, 3]))
    return out


def test_ground_truth_error_examples(clean_session):
    truth = clean_session.truth
    rel = clean_session.relative_truth()
    exact = ground_truth_error(CalibrationResult(rel, [], CameraId(0, 0)), truth)
    assert all(r < 1e-12 and t < 1e-9 for r, t in exact.values())
    cam = CameraId(1, 2)
    bent = dict(rel)
    bent[cam] = RigidTransform(rel[cam].rotation @ rotation_about((0, 0, 1), 2.0), rel[cam].translation)
    err = ground_truth_error(CalibrationResult(bent, [], CameraId(0, 0)), truth)
    assert err[cam][0] == pytest.approx(2.0, abs=1e-9)
    assert all(r < 1e-12 for c, (r, _) in err.items() if c != cam)
    with pytest.raises(InputMismatch):
        ground_truth_error(CalibrationResult({CameraId(0, 0): RigidTransform.identity()}), truth)


def test_ground_truth_error_matches_matrix_oracle(noisy_session, noisy_observations):
    from cubecalib.calibration import build_observation_graph, calibrate_rig

    r = calibrate_rig(build_observation_graph(noisy_observations), noisy_observations)
    ours = ground_truth_error(r, noisy_session.truth)
    oracle = _matrix_errors(r, noisy_session.truth)
    for cam in ours:
        assert ours[cam][0] == pytest.approx(oracle[cam][0], abs=1e-6)  # arccos is ill-conditioned near 0
        assert ours[cam][1] == pytest.approx(oracle[cam][1], abs=1e-9)


def test_default_rig_layout():
    rig = default_rig()
    assert (rig.rows, rig.cols) == (3, 4)
    for cam, pose in rig.poses.items():
        assert pose.translation[2] == pytest.approx((0.4, 1.0, 1.6)[cam.row])
        assert np.hypot(*pose.translation[:2]) == pytest.approx(1.2)
