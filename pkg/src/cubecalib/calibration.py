"""Rig extrinsics from matched cube faces.

Every observation is reduced to the cube model it implies: three face
normals plus the centers of those faces, computed from the intersection
corner of the three fitted planes and the known edge length.  The model
centers do not depend on which part of a face was sampled, and they let a
face seen by one camera be paired with the *opposite* face seen by
another (a sign flip in :func:`match_faces`).

Pairwise transforms come from RANSAC over shared captures with a weighted
Procrustes fit; the rig is assembled row by row and then row to row.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometry,
    EdgeCalibrationFailure,
    GraphDisconnected,
    MatchFailure,
)
from .extraction import ExtractedFaces
from .geometry import RigidTransform, angles_between, compose, invert, rotation_angle
from .ids import CameraId, CaptureId

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CalibrationParams:
    alpha: float = 1.0
    beta: float = 0.1
    ransac_iterations: int = 100
    ransac_inlier_distance: float = 0.01
    ransac_inlier_angle: float = 2.0
    row_distance_threshold: float = 0.1
    row_angular_threshold: float = 5.0
    min_shared_captures: int = 2
    rng_seed: int = 0
    cube_edge: float = 0.3
    ransac_confidence: float = 0.999

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError("alpha and beta must be >= 0 and not both zero")
        if self.ransac_iterations < 1 or self.min_shared_captures < 1:
            raise ValueError("ransac_iterations and min_shared_captures must be >= 1")
        if self.cube_edge <= 0:
            raise ValueError("cube_edge must be positive")


@dataclass(frozen=True)
class Observation:
    camera: CameraId
    capture: CaptureId
    faces: ExtractedFaces


@dataclass
class ObservationGraph:
    nodes: list[CameraId]
    edges: dict[tuple[CameraId, CameraId], list[CaptureId]]

    def neighbors(self, cam: CameraId) -> list[CameraId]:
        out = [b for (a, b) in self.edges if a == cam] + [a for (a, b) in self.edges if b == cam]
        return sorted(out)

    def shared(self, a: CameraId, b: CameraId) -> list[CaptureId]:
        return self.edges.get((a, b)) or self.edges.get((b, a)) or []

    def components(self) -> list[list[CameraId]]:
        seen, comps = set(), []
        for start in self.nodes:
            if start in seen:
                continue
            comp, queue = [], deque([start])
            seen.add(start)
            while queue:
                c = queue.popleft()
                comp.append(c)
                for nb in self.neighbors(c):
                    if nb not in seen:
                        seen.add(nb)
                        queue.append(nb)
            comps.append(sorted(comp))
        return comps


@dataclass(frozen=True)
class EdgeReport:
    target: CameraId
    source: CameraId
    distance_error: float
    angular_error: float
    combined: float
    inliers: int
    stage: str


@dataclass
class CalibrationResult:
    transforms: dict[CameraId, RigidTransform]
    edges: list[EdgeReport] = field(default_factory=list)
    reference: CameraId = CameraId(0, 0)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "reference": self.reference.name,
            "transforms": {
                c.name: self.transforms[c].matrix.tolist() for c in sorted(self.transforms)
            },
            "edges": [
                {
                    "target": e.target.name,
                    "source": e.source.name,
                    "distance_error": e.distance_error,
                    "angular_error": e.angular_error,
                    "combined": e.combined,
                    "inliers": e.inliers,
                    "stage": e.stage,
                }
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationResult":
        transforms = {
            CameraId.parse(k): RigidTransform.from_matrix(v) for k, v in data["transforms"].items()
        }
        edges = [
            EdgeReport(
                CameraId.parse(e["target"]), CameraId.parse(e["source"]),
                e["distance_error"], e["angular_error"], e["combined"], e["inliers"], e["stage"],
            )
            for e in data.get("edges", [])
        ]
        return cls(transforms, edges, CameraId.parse(data["reference"]))


# -- cube model features ------------------------------------------------------


def face_features(faces: ExtractedFaces, edge: float) -> tuple[np.ndarray, np.ndarray]:
    """Normals and model face centers of the three observed faces.

    The three planes meet at the visible cube corner; each face center sits
    half an edge away from that corner along the other two face normals.
    """
    normals = faces.normals
    offsets = np.array([p.offset for p in faces.planes])
    try:
        corner = np.linalg.solve(normals, -offsets)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometry("face planes do not meet in a corner") from exc
    centers = corner + 0.5 * edge * (normals - normals.sum(axis=0))
    return normals, centers


# (permutation, signs) pairs; the first entry is the identity
SIGNED_PERMUTATIONS = [
    (perm, signs)
    for perm in itertools.permutations(range(3))
    for signs in itertools.product((1.0, -1.0), repeat=3)
]
_PERM_DET = np.array(
    [
        np.linalg.det(np.array([[signs[i] if j == perm[i] else 0.0 for j in range(3)] for i in range(3)]))
        for perm, signs in SIGNED_PERMUTATIONS
    ]
)


_PERM_INDEX = np.array([perm for perm, _ in SIGNED_PERMUTATIONS])
_PERM_SIGNS = np.array([signs for _, signs in SIGNED_PERMUTATIONS])


def virtual_faces(normals: np.ndarray, centers: np.ndarray, edge: float):
    """All 48 relabelings of an observed face triad.

    Entry ``k`` lists, for slots 0..2, the face ``perm[i]`` (or its opposite
    when ``signs[i] < 0``) with its normal and center.
    """
    n = normals[_PERM_INDEX]
    c = centers[_PERM_INDEX]
    vn = _PERM_SIGNS[..., None] * n
    vc = np.where(_PERM_SIGNS[..., None] > 0, c, c - edge * n)
    return vn, vc


def _valid_candidates(normals_a: np.ndarray, normals_b: np.ndarray) -> np.ndarray:
    # a proper rotation keeps the handedness of the triad
    return np.sign(_PERM_DET) == np.sign(np.linalg.det(normals_a) * np.linalg.det(normals_b))


# -- Procrustes ---------------------------------------------------------------


def _procrustes_batch(src_c, src_n, dst_c, dst_n, alpha, beta):
    ms = src_c.mean(axis=-2, keepdims=True)
    md = dst_c.mean(axis=-2, keepdims=True)
    h = alpha * np.swapaxes(src_c - ms, -1, -2) @ (dst_c - md)
    h = h + beta * np.swapaxes(src_n, -1, -2) @ dst_n
    u, s, vt = np.linalg.svd(h)
    v = np.swapaxes(vt, -1, -2)
    d = np.sign(np.linalg.det(v @ np.swapaxes(u, -1, -2)))
    d = np.where(d == 0, 1.0, d)
    fix = np.ones(h.shape[:-2] + (3,))
    fix[..., 2] = d
    r = (v * fix[..., None, :]) @ np.swapaxes(u, -1, -2)
    t = md[..., 0, :] - np.einsum("...ij,...j->...i", r, ms[..., 0, :])
    return r, t, s


def procrustes_align(src_centroids, src_normals, dst_centroids, dst_normals,
                     alpha: float = 1.0, beta: float = 0.1) -> RigidTransform:
    """Weighted least-squares rigid transform taking ``src`` onto ``dst``.

    Minimizes ``alpha * sum |R (c_s - mean_s) - (c_d - mean_d)|^2 +
    beta * sum |R n_s - n_d|^2``; the translation then matches the centroid
    means.  The rotation always has determinant +1.
    """
    sc = np.asarray(src_centroids, dtype=np.float64)
    sn = np.asarray(src_normals, dtype=np.float64)
    dc = np.asarray(dst_centroids, dtype=np.float64)
    dn = np.asarray(dst_normals, dtype=np.float64)
    if sc.shape != dc.shape or sn.shape != dn.shape or len(sc) < 3:
        raise ValueError("need >= 3 matched correspondences of equal shape")
    r, t, s = _procrustes_batch(sc, sn, dc, dn, alpha, beta)
    if not s[0] > 0 or s[1] <= 1e-10 * s[0]:
        raise DegenerateGeometry("cross-covariance is rank deficient")
    return RigidTransform(r, t)


def alignment_error(T: RigidTransform, src_centroids, src_normals, dst_centroids, dst_normals,
                    alpha: float = 1.0, beta: float = 0.1) -> tuple[float, float, float]:
    """(mean centroid distance m, mean normal angle deg, alpha*dist + beta*angle)."""
    c = T.apply_points(src_centroids)
    n = T.apply_vectors(src_normals)
    dist = float(np.mean(np.linalg.norm(c - np.asarray(dst_centroids), axis=1)))
    ang = float(np.mean(angles_between(n, np.asarray(dst_normals))))
    return dist, ang, alpha * dist + beta * ang


def _errors_batch(r, t, vc, vn, ca, na):
    """Per-candidate (distance, angle) of mapped virtual faces vs target faces.

    ``r``/``t`` broadcast against the leading axes of ``vc``/``vn``.
    """
    rt = np.swapaxes(r, -1, -2)
    mc = vc @ rt + t[..., None, :]
    mn = vn @ rt
    dist = np.linalg.norm(mc - ca, axis=-1).mean(axis=-1)
    ang = angles_between(mn, na).mean(axis=-1)
    return dist, ang


@dataclass(frozen=True)
class FaceMatch:
    permutation: tuple[int, int, int]
    signs: tuple[float, float, float]
    transform: RigidTransform  # maps view ``b`` onto view ``a``
    distance_error: float
    angular_error: float
    error: float


def match_faces(a: ExtractedFaces, b: ExtractedFaces, params: CalibrationParams | None = None,
                hint: RigidTransform | None = None) -> FaceMatch:
    """Face correspondence between two views of the same capture.

    Every relabeling of ``b`` (3! orders times opposite-face flips, kept
    only when consistent with a proper rotation) is scored by the weighted
    alignment error of its Procrustes fit, or of ``hint`` when given.  A
    cube is symmetric, so without a hint several relabelings fit equally
    well; ties go to the smallest rotation, then to enumeration order.
    """
    params = params or CalibrationParams()
    na, ca = face_features(a, params.cube_edge)
    nb, cb = face_features(b, params.cube_edge)
    vn, vc = virtual_faces(nb, cb, params.cube_edge)
    valid = _valid_candidates(na, nb)
    if hint is None:
        r, t, _ = _procrustes_batch(vc, vn, ca[None], na[None], params.alpha, params.beta)
    else:
        r, t = hint.rotation[None], hint.translation[None]
    dist, ang = _errors_batch(r, t, vc, vn, ca[None], na[None])
    err = params.alpha * dist + params.beta * ang
    err = np.where(valid, err, np.inf)
    rot = np.array([rotation_angle(m) for m in np.broadcast_to(r, (len(err), 3, 3))])
    tol = 1e-9 * max(1.0, float(np.min(err)))
    tied = np.flatnonzero(err <= np.min(err) + tol)
    k = int(min(tied, key=lambda i: (round(rot[i], 9), i)))
    if not (dist[k] <= params.ransac_inlier_distance and ang[k] <= params.ransac_inlier_angle):
        raise MatchFailure(
            f"best face match misses the gates (distance {dist[k]:.4g} m, angle {ang[k]:.4g} deg)"
        )
    perm, signs = SIGNED_PERMUTATIONS[k]
    T = hint if hint is not None else RigidTransform(r[k], t[k])
    return FaceMatch(tuple(perm), tuple(signs), T, float(dist[k]), float(ang[k]), float(err[k]))


# -- RANSAC over shared captures ----------------------------------------------


@dataclass(frozen=True)
class PairwiseEstimate:
    transform: RigidTransform  # source frame -> target frame
    inliers: tuple[CaptureId, ...]
    distance_error: float
    angular_error: float
    combined: float


class _EdgeData:
    def __init__(self, pairs, edge):
        self.captures = [p[0] for p in pairs]
        na, ca, vn, vc, valid = [], [], [], [], []
        for _, fa, fb in pairs:
            n1, c1 = face_features(fa, edge)
            n2, c2 = face_features(fb, edge)
            v_n, v_c = virtual_faces(n2, c2, edge)
            na.append(n1)
            ca.append(c1)
            vn.append(v_n)
            vc.append(v_c)
            valid.append(_valid_candidates(n1, n2))
        self.na, self.ca = np.array(na), np.array(ca)
        self.vn, self.vc = np.array(vn), np.array(vc)
        self.valid = np.array(valid)

    def __len__(self):
        return len(self.captures)


def _score(data: _EdgeData, r, t, params, gate_d, gate_a):
    """Best relabeling and inlier mask per capture under each transform.

    ``r``: (H, 3, 3), ``t``: (H, 3).  Returns arrays shaped (H, n).
    """
    dist, ang = _errors_batch(
        r[:, None, None], t[:, None, None], data.vc[None], data.vn[None],
        data.ca[None, :, None], data.na[None, :, None],
    )
    err = params.alpha * dist + params.beta * ang
    err = np.where(data.valid[None], err, np.inf)
    best = np.argmin(err, axis=2)
    take = lambda a: np.take_along_axis(a, best[..., None], axis=2)[..., 0]
    d, a, e = take(dist), take(ang), take(err)
    inlier = (d <= gate_d) & (a <= gate_a)
    return best, inlier, d, a, e


def _fit(data: _EdgeData, idx, cand, params) -> RigidTransform:
    src_c = data.vc[idx, cand].reshape(-1, 3)
    src_n = data.vn[idx, cand].reshape(-1, 3)
    return procrustes_align(src_c, src_n, data.ca[idx].reshape(-1, 3), data.na[idx].reshape(-1, 3),
                            params.alpha, params.beta)


def _sample_pairs(n: int, params: CalibrationParams, rng: np.random.Generator):
    if n == 1:
        return [(0, 0)]
    total = n * (n - 1) // 2
    if total <= params.ransac_iterations:
        pairs = list(itertools.combinations(range(n), 2))
        return [pairs[i] for i in rng.permutation(total)]
    out = []
    for _ in range(params.ransac_iterations):
        i, j = rng.choice(n, size=2, replace=False)
        out.append((int(min(i, j)), int(max(i, j))))
    return out


def ransac_pairwise(pairs, params: CalibrationParams | None = None,
                    gates: tuple[float, float] | None = None, name: str = "") -> PairwiseEstimate:
    """Robust source-to-target transform from captures both cameras saw.

    ``pairs`` is a list of ``(capture_id, target_faces, source_faces)``.
    Each hypothesis is built from two captures: every admissible relabeling
    of the first seeds a fit, the second is matched under it and both are
    refit together.  Captures whose mean centroid and normal errors fall
    inside ``gates`` (distance m, angle deg) are inliers; the best
    hypothesis is refit on its inliers until the set is stable.
    """
    params = params or CalibrationParams()
    gate_d, gate_a = gates or (params.ransac_inlier_distance, params.ransac_inlier_angle)
    pairs = sorted(pairs, key=lambda p: p[0])
    if not pairs:
        raise EdgeCalibrationFailure(f"edge {name}: no shared captures", edge=name)
    data = _EdgeData(pairs, params.cube_edge)
    n = len(data)
    rng = np.random.default_rng(params.rng_seed)

    best = None  # (count, -err, transform)
    needed = math.inf
    for done, (i, j) in enumerate(_sample_pairs(n, params, rng), start=1):
        cands = np.flatnonzero(data.valid[i])
        r, t, _ = _procrustes_batch(data.vc[i, cands], data.vn[i, cands],
                                    data.ca[i][None], data.na[i][None], params.alpha, params.beta)
        if j != i:
            sub = _EdgeData.__new__(_EdgeData)
            sub.vc, sub.vn, sub.ca, sub.na, sub.valid = (
                data.vc[[j]], data.vn[[j]], data.ca[[j]], data.na[[j]], data.valid[[j]]
            )
            mj = _score(sub, r, t, params, gate_d, gate_a)[0][:, 0]
            src_c = np.concatenate([data.vc[i, cands], data.vc[j, mj]], axis=1)
            src_n = np.concatenate([data.vn[i, cands], data.vn[j, mj]], axis=1)
            dst_c = np.concatenate([data.ca[i], data.ca[j]])[None]
            dst_n = np.concatenate([data.na[i], data.na[j]])[None]
            r, t, _ = _procrustes_batch(src_c, src_n, dst_c, dst_n, params.alpha, params.beta)
        _, inlier, _, _, e = _score(data, r, t, params, gate_d, gate_a)
        counts = inlier.sum(axis=1)
        errs = np.where(inlier, e, 0.0).sum(axis=1)
        for h in range(len(r)):
            key = (int(counts[h]), -float(errs[h]))
            if best is None or key > best[:2]:
                best = (key[0], key[1], RigidTransform(r[h], t[h]))
        w = best[0] / n
        if w >= 1.0:
            needed = 0
        elif w > 0:
            needed = math.log(1 - params.ransac_confidence) / math.log(1 - w * w)
        if done >= needed:
            break

    T = best[2]
    inliers = None
    for _ in range(10):
        cand, inl, _, _, _ = _score(data, T.rotation[None], T.translation[None], params, gate_d, gate_a)
        idx = np.flatnonzero(inl[0])
        if len(idx) == 0:
            break
        if inliers is not None and np.array_equal(idx, inliers):
            break
        inliers = idx
        try:
            T = _fit(data, idx, cand[0, idx], params)
        except DegenerateGeometry:
            break
    if inliers is None or len(inliers) < min(params.min_shared_captures, n):
        got = 0 if inliers is None else len(inliers)
        raise EdgeCalibrationFailure(
            f"edge {name}: best model has {got} consistent captures, need {params.min_shared_captures}",
            edge=name,
        )
    cand = _score(data, T.rotation[None], T.translation[None], params, gate_d, gate_a)[0][0]
    src_c = data.vc[inliers, cand[inliers]].reshape(-1, 3)
    src_n = data.vn[inliers, cand[inliers]].reshape(-1, 3)
    dist, ang, comb = alignment_error(
        T, src_c, src_n, data.ca[inliers].reshape(-1, 3), data.na[inliers].reshape(-1, 3),
        params.alpha, params.beta,
    )
    return PairwiseEstimate(T, tuple(data.captures[i] for i in inliers), dist, ang, comb)


# -- graph and rig assembly ---------------------------------------------------


def _index(observations) -> dict[tuple[CameraId, CaptureId], ExtractedFaces]:
    return {(o.camera, o.capture): o.faces for o in observations if o.faces is not None}


def build_observation_graph(observations, params: CalibrationParams | None = None,
                            cameras=None) -> ObservationGraph:
    """Cameras as nodes; an edge wherever two cameras share enough captures.

    ``cameras`` adds nodes that may have no usable observation, so that an
    isolated camera is reported rather than silently dropped.
    """
    params = params or CalibrationParams()
    idx = _index(observations)
    nodes = sorted(set(cameras or []) | {o.camera for o in observations})
    if not nodes:
        raise ValueError("no cameras to calibrate")
    seen: dict[CameraId, set[CaptureId]] = {c: set() for c in nodes}
    for cam, cap in idx:
        seen[cam].add(cap)
    edges = {}
    for a, b in itertools.combinations(nodes, 2):
        shared = sorted(seen[a] & seen[b])
        if len(shared) >= params.min_shared_captures:
            edges[(a, b)] = shared
    graph = ObservationGraph(nodes, edges)
    comps = graph.components()
    if len(comps) > 1:
        desc = "; ".join("{" + ", ".join(c.name for c in comp) + "}" for comp in comps)
        raise GraphDisconnected(
            f"observation graph has {len(comps)} components: {desc}. Capture the cube where "
            "these camera groups see it at the same time.",
            components=[[c.name for c in comp] for comp in comps],
        )
    return graph


class _EdgeCache:
    def __init__(self, graph, idx, params):
        self.graph, self.idx, self.params = graph, idx, params
        self.cache = {}

    def estimate(self, target: CameraId, source: CameraId, gates=None) -> PairwiseEstimate:
        key = (target, source, gates)
        if key not in self.cache:
            pairs = [
                (cap, self.idx[(target, cap)], self.idx[(source, cap)])
                for cap in self.graph.shared(target, source)
            ]
            name = f"{target.name}<-{source.name}"
            try:
                self.cache[key] = ransac_pairwise(pairs, self.params, gates, name)
            except EdgeCalibrationFailure as exc:
                self.cache[key] = exc
        val = self.cache[key]
        if isinstance(val, Exception):
            raise val
        return val


def _report(target, source, est: PairwiseEstimate, stage: str) -> EdgeReport:
    return EdgeReport(target, source, est.distance_error, est.angular_error, est.combined,
                      len(est.inliers), stage)


def calibrate_rig(graph: ObservationGraph, observations,
                  params: CalibrationParams | None = None) -> CalibrationResult:
    """Two-stage calibration: within rows, then rows chained to the first.

    Each row's lowest-column camera anchors the row; the others are reached
    breadth-first along intra-row edges.  Rows are then attached to the
    already-calibrated set through the single inter-row edge with the
    lowest combined error among those within the row thresholds.  The
    global reference is the lowest (row, col) camera.
    """
    params = params or CalibrationParams()
    idx = _index(observations)
    nodes = sorted(graph.nodes)
    reference = nodes[0]
    if len(nodes) == 1:
        return CalibrationResult({reference: RigidTransform.identity()}, [], reference)
    comps = graph.components()
    if len(comps) > 1:
        raise GraphDisconnected(
            f"observation graph has {len(comps)} components",
            components=[[c.name for c in comp] for comp in comps],
        )
    edges = _EdgeCache(graph, idx, params)
    reports: list[EdgeReport] = []
    failures: list[str] = []

    rows = sorted({c.row for c in nodes})
    row_of = {r: [c for c in nodes if c.row == r] for r in rows}
    in_row: dict[CameraId, RigidTransform] = {}
    for r in rows:
        anchor = row_of[r][0]
        in_row[anchor] = RigidTransform.identity()
        queue = deque([anchor])
        while queue:
            cam = queue.popleft()
            for nb in graph.neighbors(cam):
                if nb.row != r or nb in in_row:
                    continue
                try:
                    est = edges.estimate(cam, nb)
                except EdgeCalibrationFailure as exc:
                    failures.append(str(exc))
                    continue
                in_row[nb] = compose(in_row[cam], est.transform)
                reports.append(_report(cam, nb, est, "intra-row"))
                queue.append(nb)

    world: dict[CameraId, RigidTransform] = {}
    first = reference.row
    # the reference camera anchors its own row
    for c in row_of[first]:
        if c in in_row:
            world[c] = in_row[c]
    attached = {first}
    row_gates = (params.row_distance_threshold, params.row_angular_threshold)
    while len(attached) < len(rows):
        options = []
        for a in sorted(world):
            for b in graph.neighbors(a):
                if b.row in attached or b not in in_row:
                    continue
                try:
                    est = edges.estimate(a, b)
                except EdgeCalibrationFailure as exc:
                    failures.append(str(exc))
                    continue
                if est.distance_error <= row_gates[0] and est.angular_error <= row_gates[1]:
                    options.append((est.combined, a, b, est))
                else:
                    failures.append(
                        f"edge {a.name}<-{b.name}: error {est.distance_error:.4g} m / "
                        f"{est.angular_error:.4g} deg exceeds the row thresholds"
                    )
        if not options:
            pending = sorted(set(rows) - attached)
            raise EdgeCalibrationFailure(
                f"no usable inter-row edge reaches rows {pending}: " + "; ".join(failures[-6:]),
                edge=None,
            )
        _, a, b, est = min(options, key=lambda o: (o[0], o[1], o[2]))
        # anchor of b's row, expressed in the reference frame
        anchor = compose(compose(world[a], est.transform), invert(in_row[b]))
        for c in row_of[b.row]:
            if c in in_row:
                world[c] = compose(anchor, in_row[c])
        reports.append(_report(a, b, est, "inter-row"))
        attached.add(b.row)

    # cameras not reachable inside their own row: attach through any edge
    progress = True
    while progress and len(world) < len(nodes):
        progress = False
        for cam in nodes:
            if cam in world:
                continue
            for nb in graph.neighbors(cam):
                if nb not in world:
                    continue
                try:
                    est = edges.estimate(nb, cam)
                except EdgeCalibrationFailure as exc:
                    failures.append(str(exc))
                    continue
                world[cam] = compose(world[nb], est.transform)
                reports.append(_report(nb, cam, est, "fallback"))
                progress = True
                break
    missing = [c.name for c in nodes if c not in world]
    if missing:
        raise EdgeCalibrationFailure(
            f"cameras {missing} could not be calibrated: " + "; ".join(failures[-6:]),
            edge=None,
        )
    world[reference] = RigidTransform.identity()
    return CalibrationResult(world, reports, reference)
