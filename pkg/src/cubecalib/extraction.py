"""Segmentation of a marker cloud into the cube's visible face planes.

The loop is: cluster once (k-means on position + scaled normal), then
alternate plane regression and point reassignment until the labels stop
changing.  The alternation starts with a wide gate (``WARMUP_GATE``
times the distance threshold, no normal gate) so that badly tilted
initial planes cannot shrink a face to the thin stripe where they cross
it; once that settles, the real gates apply.  Progress in the gated phase is tracked with a trimmed least-squares objective

    J = mean_i min(d_i^2, tau^2)

where ``d_i`` is the distance of point ``i`` to its assigned plane and
excluded points cost ``tau^2`` (``tau`` = distance threshold).  An
iterate that would raise ``J`` is rejected and the loop stops, so the
recorded history is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateGeometry, ExtractionFailure
from .geometry import (
    Plane,
    PointCloud,
    angles_between,
    estimate_normals,
    fit_plane_pca,
)

# two groups closer to parallel than to orthogonal cannot be distinct adjacent faces
PARALLEL_MERGE_DEG = 45.0
# warm-up gate, in units of the distance threshold
WARMUP_GATE = 5.0


@dataclass(frozen=True)
class ExtractionParams:
    max_iterations: int = 50
    distance_threshold: float = 0.006
    angular_threshold: float = 1.0
    min_cluster_fraction: float = 0.05
    consider_normals: bool = False
    kmeans_restarts: int = 5
    rng_seed: int = 0
    normal_neighbors: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.distance_threshold > 0 and self.angular_threshold > 0):
            raise ValueError("thresholds must be positive")
        if not 0 < self.min_cluster_fraction <= 1:
            raise ValueError("min_cluster_fraction must lie in (0, 1]")
        if self.kmeans_restarts < 1 or self.normal_neighbors < 3:
            raise ValueError("kmeans_restarts >= 1 and normal_neighbors >= 3 required")


@dataclass(frozen=True)
class FaceCluster:
    indices: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_members(cls, points, normals, indices) -> "FaceCluster":
        indices = np.asarray(indices, dtype=np.int64)
        if len(indices) == 0:
            raise ValueError("face cluster needs at least one member")
        return cls(indices, points[indices].mean(axis=0), _median_normal(normals[indices]))


@dataclass(frozen=True)
class ExtractedFaces:
    faces: tuple[FaceCluster, ...]
    planes: tuple[Plane, ...]
    residual: float
    orthogonality_error: float
    labels: np.ndarray
    iterations: int = 0
    converged: bool = True
    objective_history: tuple[float, ...] = field(default_factory=tuple)

    @property
    def normals(self) -> np.ndarray:
        return np.array([p.normal for p in self.planes])

    @property
    def centroids(self) -> np.ndarray:
        return np.array([f.centroid for f in self.faces])

    def to_dict(self, include_labels: bool = False) -> dict:
        out = {
            "planes": [{"normal": p.normal.tolist(), "offset": p.offset} for p in self.planes],
            "centroids": [f.centroid.tolist() for f in self.faces],
            "sizes": [int(len(f.indices)) for f in self.faces],
            "residual": self.residual,
            "orthogonality_error": self.orthogonality_error,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective_history": list(self.objective_history),
        }
        if include_labels:
            out["labels"] = self.labels.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractedFaces":
        """Inverse of ``to_dict(include_labels=True)``."""
        labels = np.asarray(data["labels"], dtype=np.int64)
        planes = tuple(Plane(np.asarray(p["normal"]), float(p["offset"])) for p in data["planes"])
        faces = tuple(
            FaceCluster(np.flatnonzero(labels == k), np.asarray(c, dtype=np.float64), planes[k].normal.copy())
            for k, c in enumerate(data["centroids"])
        )
        return cls(
            faces, planes, float(data["residual"]), float(data["orthogonality_error"]), labels,
            int(data["iterations"]), bool(data["converged"]), tuple(data.get("objective_history", ())),
        )


def _median_normal(normals: np.ndarray) -> np.ndarray:
    m = np.median(normals, axis=0)
    norm = np.linalg.norm(m)
    if norm < 1e-12:
        m = normals.mean(axis=0)
        norm = np.linalg.norm(m)
    return m / norm


def _unsigned_angles(a, b) -> np.ndarray:
    ang = angles_between(a, b)
    return np.minimum(ang, 180.0 - ang)


def _kmeans(x: np.ndarray, k: int, restarts: int, rng: np.random.Generator, max_iter: int = 100):
    """Lloyd's k-means with farthest-point seeding; best inertia over restarts."""
    n = len(x)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        first = int(rng.integers(n))
        chosen = [first]
        d2 = np.sum((x - x[first]) ** 2, axis=1)
        for _ in range(1, k):
            nxt = int(np.argmax(d2))
            chosen.append(nxt)
            d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
        centers = x[chosen].copy()
        labels = None
        for _ in range(max_iter):
            dist = np.sum((x[:, None, :] - centers[None]) ** 2, axis=2)
            new = np.argmin(dist, axis=1)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            for j in range(k):
                sel = labels == j
                if sel.any():
                    centers[j] = x[sel].mean(axis=0)
                else:
                    far = int(np.argmax(dist[np.arange(n), labels]))
                    centers[j] = x[far]
        inertia = float(np.sum((x - centers[labels]) ** 2))
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def _gate(points, normals, indices, angular_threshold):
    """Drop members whose normal strays from the group's median normal."""
    med = _median_normal(normals[indices])
    keep = _unsigned_angles(normals[indices], med[None]) <= angular_threshold
    return indices[keep]


def _should_merge(a: FaceCluster, b: FaceCluster, params: ExtractionParams) -> bool:
    ang = float(angles_between(a.normal[None], b.normal[None])[0])
    if ang < params.angular_threshold or ang < PARALLEL_MERGE_DEG:
        return True
    return float(np.linalg.norm(a.centroid - b.centroid)) < params.distance_threshold


def _feature_scale(points: np.ndarray) -> float:
    # twice the largest distance from the centroid: a rotation-invariant diameter
    r = np.linalg.norm(points - points.mean(axis=0), axis=1).max()
    return 2.0 * float(r) if r > 0 else 1.0


def cluster_faces(cloud: PointCloud, params: ExtractionParams, k: int = 3) -> list[FaceCluster]:
    """Initial face groups from k-means over ``[p, lambda * n]`` features.

    Small groups are discarded, members with stray normals are dropped, and
    groups that cannot be distinct cube faces are merged.
    """
    if cloud.normals is None:
        raise ValueError("cluster_faces needs a cloud with normals")
    n = len(cloud)
    if n < 30:
        raise ExtractionFailure(f"marker cloud has {n} points, need >= 30")
    pts, nrm = cloud.points, cloud.normals
    rng = np.random.default_rng(params.rng_seed)
    feats = np.hstack([pts, _feature_scale(pts) * nrm])
    labels = _kmeans(feats, k, params.kmeans_restarts, rng)

    min_size = params.min_cluster_fraction * n
    groups = []
    for j in range(k):
        idx = np.flatnonzero(labels == j)
        if len(idx) < min_size:
            continue
        idx = _gate(pts, nrm, idx, params.angular_threshold)
        if len(idx) >= 3:
            groups.append(idx)

    clusters = [FaceCluster.from_members(pts, nrm, g) for g in groups]
    while len(clusters) > 1:
        pairs = [
            (float(angles_between(a.normal[None], b.normal[None])[0]), i, j)
            for i, a in enumerate(clusters)
            for j, b in enumerate(clusters)
            if i < j and _should_merge(a, b, params)
        ]
        if not pairs:
            break
        _, i, j = min(pairs)
        merged = np.union1d(clusters[i].indices, clusters[j].indices)
        merged = _gate(pts, nrm, merged, params.angular_threshold)
        rest = [c for t, c in enumerate(clusters) if t not in (i, j)]
        if len(merged) >= 3:
            rest.append(FaceCluster.from_members(pts, nrm, merged))
        clusters = rest

    if len(clusters) < 2:
        raise ExtractionFailure(f"only {len(clusters)} face cluster(s) survived clustering")
    clusters.sort(key=lambda c: int(c.indices[0]))
    return clusters


def orthogonality_error(normals) -> float:
    """Largest pairwise deviation from 90 degrees, in degrees."""
    normals = np.asarray(normals)
    worst = 0.0
    for i in range(len(normals)):
        for j in range(i + 1, len(normals)):
            ang = float(angles_between(normals[i][None], normals[j][None])[0])
            worst = max(worst, abs(ang - 90.0))
    return worst


def orthogonalize_normals(normals) -> np.ndarray:
    """Nearest set of mutually orthogonal unit vectors (polar factor via SVD).

    Handedness of the input triad is preserved.
    """
    m = np.asarray(normals, dtype=np.float64).T
    u, _, vt = np.linalg.svd(m, full_matrices=False)
    return (u @ vt).T


def regress_planes(
    cloud: PointCloud,
    clusters,
    params: ExtractionParams,
    viewpoint=(0.0, 0.0, 0.0),
    orthogonalize: bool = True,
) -> list[Plane]:
    """PCA plane per cluster, projected onto an orthogonal set when needed.

    ``clusters`` may be :class:`FaceCluster` objects or index arrays.  After
    orthogonalization each plane is re-anchored at its cluster centroid.
    """
    index_sets = [c.indices if isinstance(c, FaceCluster) else np.asarray(c) for c in clusters]
    pts = cloud.points
    planes = [fit_plane_pca(pts[idx], viewpoint) for idx in index_sets]
    if not orthogonalize or len(planes) < 2:
        return planes
    normals = np.array([p.normal for p in planes])
    if orthogonality_error(normals) <= params.angular_threshold:
        return planes
    fixed = orthogonalize_normals(normals)
    out = []
    for n, idx in zip(fixed, index_sets):
        n = n / np.linalg.norm(n)
        out.append(Plane(n, -float(n @ pts[idx].mean(axis=0))))
    return out


def _distances(points, planes) -> np.ndarray:
    nmat = np.array([p.normal for p in planes])
    d = np.array([p.offset for p in planes])
    return np.abs(points @ nmat.T + d)


def assign_labels(cloud: PointCloud, planes, params: ExtractionParams, gated: bool = True) -> np.ndarray:
    """Nearest-plane label per point, -1 for excluded (edge / far) points.

    ``gated=False`` applies only the wide warm-up distance gate.
    """
    dist = _distances(cloud.points, planes)
    labels = np.argmin(dist, axis=1)  # first minimum wins ties
    best = dist[np.arange(len(labels)), labels]
    if not gated:
        return np.where(best > WARMUP_GATE * params.distance_threshold, -1, labels)
    excluded = best > params.distance_threshold
    if params.consider_normals:
        if cloud.normals is None:
            raise ValueError("consider_normals requires point normals")
        pn = np.array([p.normal for p in planes])[labels]
        excluded |= _unsigned_angles(cloud.normals, pn) > params.angular_threshold
    return np.where(excluded, -1, labels)


def reassign_points(cloud: PointCloud, planes, params: ExtractionParams) -> list[FaceCluster]:
    labels = assign_labels(cloud, planes, params)
    nrm = cloud.normals if cloud.normals is not None else np.zeros_like(cloud.points)
    out = []
    for k in range(len(planes)):
        idx = np.flatnonzero(labels == k)
        if len(idx):
            out.append(FaceCluster(idx, cloud.points[idx].mean(axis=0), planes[k].normal.copy()))
    return out


def trimmed_objective(points, planes, labels, tau: float) -> float:
    nmat = np.array([p.normal for p in planes])
    d = np.array([p.offset for p in planes])
    cost = np.full(len(points), tau * tau)
    sel = labels >= 0
    r = np.einsum("ij,ij->i", points[sel], nmat[labels[sel]]) + d[labels[sel]]
    cost[sel] = np.minimum(r * r, tau * tau)
    return float(cost.mean())


def _groups(labels, k):
    return [np.flatnonzero(labels == j) for j in range(k)]


def refine_faces(
    cloud: PointCloud,
    labels: np.ndarray,
    params: ExtractionParams,
    viewpoint=(0.0, 0.0, 0.0),
    orthogonalize: bool = True,
    on_iteration: Callable[[int, np.ndarray], None] | None = None,
):
    """Alternate regression and reassignment from an initial labelling.

    Returns ``(planes, labels, iterations, converged, history)``; the
    history covers the gated phase only.
    """
    k = int(labels.max()) + 1
    pts = cloud.points
    tau = params.distance_threshold

    def step(labels, gated):
        groups = _groups(labels, k)
        if any(len(g) < 3 for g in groups):
            raise ExtractionFailure("a face lost all but a handful of its points")
        try:
            planes = regress_planes(cloud, groups, params, viewpoint, orthogonalize)
        except DegenerateGeometry as exc:
            raise ExtractionFailure(f"face regression failed: {exc}") from exc
        return planes, assign_labels(cloud, planes, params, gated)

    it = 0
    while it < params.max_iterations - 1:
        it += 1
        _, new_labels = step(labels, gated=False)
        if on_iteration is not None:
            on_iteration(it, new_labels)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    planes, history = None, []
    converged = False
    start = it
    for it in range(start + 1, params.max_iterations + 1):
        new_planes, new_labels = step(labels, gated=True)
        j = trimmed_objective(pts, new_planes, new_labels, tau)
        if history and j > history[-1] * (1.0 + 1e-12) + 1e-18:
            # rejected step: keep the previous state
            converged = True
            it -= 1
            break
        history.append(j)
        if on_iteration is not None:
            on_iteration(it, new_labels)
        unchanged = np.array_equal(new_labels, labels)
        planes, labels = new_planes, new_labels
        if unchanged:
            converged = True
            break
    return planes, labels, it, converged, tuple(history)


def _finalize(cloud, planes, labels, params, it, converged, history) -> ExtractedFaces:
    pts = cloud.points
    nrm = cloud.normals
    faces = []
    resid = []
    min_size = params.min_cluster_fraction * len(pts)
    for k, plane in enumerate(planes):
        idx = np.flatnonzero(labels == k)
        if len(idx) < max(3, min_size):
            raise ExtractionFailure(f"face {k} kept {len(idx)} points, below the minimum {min_size:.0f}")
        faces.append(FaceCluster(idx, pts[idx].mean(axis=0), plane.normal.copy()))
        resid.append(np.abs(plane.distances(pts[idx])))
    residual = float(np.concatenate(resid).mean())
    if not converged and residual > 2.0 * params.distance_threshold:
        raise ExtractionFailure(
            f"no convergence after {it} iterations (residual {residual:.4g} m)"
        )
    return ExtractedFaces(
        tuple(faces),
        tuple(planes),
        residual,
        orthogonality_error([p.normal for p in planes]),
        labels,
        it,
        converged,
        history,
    )


def extract_cube_faces(
    cloud: PointCloud,
    params: ExtractionParams | None = None,
    viewpoint=(0.0, 0.0, 0.0),
    initial_labels=None,
    on_iteration: Callable[[int, np.ndarray], None] | None = None,
) -> ExtractedFaces:
    """Find the three visible faces of the cube in one camera's marker cloud.

    ``viewpoint`` is the camera center in the cloud's frame; normals are
    oriented toward it.  ``initial_labels`` (values 0..2, -1 = unassigned)
    replaces the clustering stage.  ``on_iteration(i, labels)`` is called
    after every accepted iteration, e.g. to dump debug clouds.
    """
    params = params or ExtractionParams()
    if len(cloud) < 30:
        raise ExtractionFailure(f"marker cloud has {len(cloud)} points, need >= 30")
    if cloud.normals is None:
        try:
            cloud = estimate_normals(cloud, params.normal_neighbors, viewpoint)
        except DegenerateGeometry as exc:
            raise ExtractionFailure(f"normal estimation failed: {exc}") from exc

    if initial_labels is None:
        clusters = cluster_faces(cloud, params)
        if len(clusters) < 3:
            raise ExtractionFailure(f"only {len(clusters)} faces visible, need 3")
        labels = np.full(len(cloud), -1)
        for k, c in enumerate(clusters):
            labels[c.indices] = k
    else:
        labels = np.asarray(initial_labels, dtype=np.int64).copy()
        if labels.shape != (len(cloud),) or labels.max() != 2:
            raise ValueError("initial_labels must label every point with 0..2 or -1")

    planes, labels, it, converged, history = refine_faces(
        cloud, labels, params, viewpoint, True, on_iteration
    )
    return _finalize(cloud, planes, labels, params, it, converged, history)


def segment_cube_surfaces(
    cloud: PointCloud,
    params: ExtractionParams | None = None,
    max_faces: int = 6,
) -> ExtractedFaces:
    """Unconstrained face segmentation of a fused (multi-view) cube cloud.

    Normals point away from the cloud centroid and no orthogonality is
    imposed, so the fitted planes expose any misalignment between views.
    """
    params = params or ExtractionParams()
    if len(cloud) < 30:
        raise ExtractionFailure(f"fused cloud has {len(cloud)} points, need >= 30")
    center = cloud.points.mean(axis=0)
    try:
        cloud = estimate_normals(PointCloud(cloud.points), params.normal_neighbors, center, outward=True)
    except DegenerateGeometry as exc:
        raise ExtractionFailure(f"normal estimation failed: {exc}") from exc
    clusters = cluster_faces(cloud, params, k=max_faces)
    labels = np.full(len(cloud), -1)
    for k, c in enumerate(clusters):
        labels[c.indices] = k
    planes, labels, it, converged, history = _refine_outward(cloud, labels, params, center)
    return _finalize(cloud, planes, labels, params, it, converged, history)


def _refine_outward(cloud, labels, params, center):
    # fit_plane_pca orients toward the viewpoint; flip to point away from the center
    planes, labels, it, converged, history = refine_faces(
        cloud, labels, params, center, orthogonalize=False
    )
    return [p.flipped() for p in planes], labels, it, converged, history
