"""Geometric primitives shared by the whole pipeline.

Points, normals and clouds are plain ``float64`` numpy arrays wrapped in a
few small dataclasses.  Every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, EmptyInput

# smallest/largest covariance eigenvalue ratio above which a point set is a blob
BLOB_RATIO = 0.5
# middle/largest eigenvalue ratio below which a point set is collinear
COLLINEAR_RATIO = 1e-12


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Plane:
    """Plane ``n . x + d = 0`` with unit normal ``n``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = _frozen(self.normal)
        if n.shape != (3,) or not np.all(np.isfinite(n)):
            raise ValueError(f"plane normal must be a finite 3-vector, got {self.normal!r}")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)

    def distances(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal + self.offset


@dataclass(frozen=True)
class RigidTransform:
    """Element of SE(3) acting as ``p -> R p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.rotation)
        t = _frozen(self.translation)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-8 or np.linalg.det(r) < 0:
            raise ValueError("rotation is not a proper orthogonal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("homogeneous matrix must be 4x4")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply_points(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def apply_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def apply_plane(self, plane: Plane) -> Plane:
        n = self.rotation @ plane.normal
        return Plane(n, plane.offset - n @ self.translation)

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


@dataclass(frozen=True)
class PointCloud:
    """Points with optional per-point normals and 8-bit RGB colors."""

    points: np.ndarray
    normals: np.ndarray | None = None
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.size == 0:
            pts = _frozen(np.zeros((0, 3)))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _frozen(self.normals).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError("normals length differs from points length")
            object.__setattr__(self, "normals", nrm)
        if self.colors is not None:
            col = _frozen(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(col) != len(pts):
                raise ValueError("colors length differs from points length")
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index) -> "PointCloud":
        return PointCloud(
            self.points[index],
            None if self.normals is None else self.normals[index],
            None if self.colors is None else self.colors[index],
        )

    def with_normals(self, normals) -> "PointCloud":
        return PointCloud(self.points, normals, self.colors)


def merge_clouds(clouds) -> PointCloud:
    clouds = list(clouds)
    if not clouds:
        raise EmptyInput("no clouds to merge")
    pts = np.concatenate([c.points for c in clouds])
    nrm = None
    if all(c.normals is not None for c in clouds):
        nrm = np.concatenate([c.normals for c in clouds])
    col = None
    if all(c.colors is not None for c in clouds):
        col = np.concatenate([c.colors for c in clouds])
    return PointCloud(pts, nrm, col)


@dataclass(frozen=True)
class CubeModel:
    """Cube of side ``edge`` whose own frame is centered at the cube center.

    Faces are ordered ``+x, +y, +z, -x, -y, -z`` of the cube frame, normals
    pointing outward.
    """

    edge: float
    pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not self.edge > 0:
            raise ValueError("cube edge must be positive")

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation

    def face_normals(self) -> np.ndarray:
        r = self.pose.rotation
        return np.concatenate([r.T, -r.T])

    def face_centers(self) -> np.ndarray:
        return self.center + 0.5 * self.edge * self.face_normals()

    def planes(self) -> list[Plane]:
        return [
            Plane(n, -float(n @ c))
            for n, c in zip(self.face_normals(), self.face_centers())
        ]


def plane_signed_distance(plane: Plane, p) -> float:
    """Signed distance ``n . p + d``; zero exactly on the plane."""
    return float(np.dot(plane.normal, np.asarray(p, dtype=np.float64)) + plane.offset)


def centroid(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyInput("centroid of an empty point set")
    return pts.mean(axis=0)


def _orient_toward(normal: np.ndarray, anchor: np.ndarray, viewpoint: np.ndarray) -> np.ndarray:
    s = normal @ (anchor - viewpoint)
    if s > 0:
        return -normal
    if s == 0:
        # no preference from the viewpoint: make the largest component positive
        k = int(np.argmax(np.abs(normal)))
        return normal if normal[k] >= 0 else -normal
    return normal


def fit_plane_pca(points, viewpoint=(0.0, 0.0, 0.0)) -> Plane:
    """Least-squares plane through ``points``.

    The normal is the covariance eigenvector with the smallest eigenvalue,
    oriented so that it points toward ``viewpoint`` (the camera origin by
    default).  Raises :class:`DegenerateGeometry` for fewer than three
    points, collinear sets, and isotropic blobs.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateGeometry(f"plane fit needs >= 3 points, got {len(pts)}")
    c = pts.mean(axis=0)
    x = pts - c
    w, v = np.linalg.eigh(x.T @ x / len(pts))
    if not w[2] > 0 or w[1] <= COLLINEAR_RATIO * w[2]:
        raise DegenerateGeometry("points are coincident or collinear")
    if w[0] > BLOB_RATIO * w[2]:
        raise DegenerateGeometry("point set has no dominant plane")
    n = _orient_toward(v[:, 0], c, np.asarray(viewpoint, dtype=np.float64))
    n = n / np.linalg.norm(n)
    return Plane(n, -float(n @ c))


def _batched_local_normals(points: np.ndarray, idx: np.ndarray):
    nbr = points[idx]
    x = nbr - nbr.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", x, x) / idx.shape[1]
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    bad = (
        ~(w[:, 2] > 0)
        | (w[:, 1] <= COLLINEAR_RATIO * w[:, 2])
        | (w[:, 0] > BLOB_RATIO * w[:, 2])
    )
    return normals, nbr.mean(axis=1), bad


def estimate_normals(
    cloud: PointCloud,
    k: int = 10,
    viewpoint=(0.0, 0.0, 0.0),
    outward: bool = False,
) -> PointCloud:
    """Per-point normals from local PCA, smoothed over the neighborhood.

    Each point gets the plane normal of its ``k`` nearest neighbors; the
    final normal is the renormalized average of its own and its
    neighbors' local normals.  Normals point toward ``viewpoint``, or away
    from it when ``outward`` is set (use the cloud centroid for closed
    shapes).
    """
    pts = cloud.points
    if len(pts) < k + 1:
        raise DegenerateGeometry(f"normal estimation with k={k} needs > {k} points")
    _, idx = cKDTree(pts).query(pts, k=k + 1)
    local, anchors, bad = _batched_local_normals(pts, idx)
    if bad.all():
        raise DegenerateGeometry("every neighborhood is degenerate")

    vp = np.asarray(viewpoint, dtype=np.float64)
    side = np.einsum("ni,ni->n", local, anchors - vp)
    flip = side < 0 if outward else side > 0
    local[flip] *= -1.0

    weights = (~bad).astype(np.float64)
    summed = np.einsum("nk,nki->ni", weights[idx], local[idx])
    norm = np.linalg.norm(summed, axis=1)
    ok = norm > 1e-12
    out = local.copy()
    out[ok] = summed[ok] / norm[ok, None]
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return cloud.with_normals(out)


def angle_between(a, b) -> float:
    """Angle in degrees between two unit vectors, in ``[0, 180]``."""
    return float(angles_between(np.asarray(a)[None], np.asarray(b)[None])[0])


def angles_between(a, b) -> np.ndarray:
    """Row-wise angles in degrees.

    Uses ``atan2(|a x b|, a . b)``, which agrees with the clamped arccos but
    keeps full precision near 0 and 180 degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.einsum("...i,...i->...", a, b)
    return np.degrees(np.arctan2(cross, dot))


def transform_apply(T: RigidTransform, cloud: PointCloud) -> PointCloud:
    return PointCloud(
        T.apply_points(cloud.points),
        None if cloud.normals is None else T.apply_vectors(cloud.normals),
        cloud.colors,
    )


def compose(Ta: RigidTransform, Tb: RigidTransform) -> RigidTransform:
    """``Ta o Tb``: apply ``Tb`` first, then ``Ta``."""
    return RigidTransform(
        Ta.rotation @ Tb.rotation, Ta.rotation @ Tb.translation + Ta.translation
    )


def invert(T: RigidTransform) -> RigidTransform:
    rt = T.rotation.T
    return RigidTransform(rt, -rt @ T.translation)


def rotation_about(axis, degrees: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    th = np.radians(degrees)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(th) * k + (1 - np.cos(th)) * (k @ k)


def rotation_angle(r) -> float:
    """Geodesic angle of a rotation matrix, degrees."""
    r = np.asarray(r, dtype=np.float64)
    # axis-angle via the skew part keeps precision for tiny angles
    s = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    c = 0.5 * (np.trace(r) - 1.0)
    return float(np.degrees(np.arctan2(s, c)))


def nearest_rotation(m) -> np.ndarray:
    """Closest proper rotation to ``m`` in Frobenius norm."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
