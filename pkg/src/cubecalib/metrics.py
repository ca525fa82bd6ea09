"""Calibration quality: fused-cube reconstruction errors and cloud distances."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import CalibError, EmptyInput, MetricFailure
from .extraction import ExtractionParams, segment_cube_surfaces
from .geometry import PointCloud, angles_between, merge_clouds, transform_apply
from .ids import CameraId, CaptureId

SCHEMA_VERSION = 1

# Fused clouds are segmented with a wide distance gate: a tight gate would
# silently drop the points of a misaligned view and hide the error we measure.
EVAL_PARAMS = ExtractionParams(distance_threshold=0.03, max_iterations=50)
OPPOSITE_DEG = 135.0


@dataclass(frozen=True)
class SubsetReport:
    cameras: tuple[str, ...]
    size_error: float  # mm, mean over captures
    angle_errors: tuple[float, ...]  # deg, every non-opposite plane pair of every capture
    captures: int
    size_from_gap: int
    size_from_extent: int
    failed: tuple[str, ...] = ()

    @property
    def angle_error(self) -> float:
        return float(np.mean(self.angle_errors)) if self.angle_errors else float("nan")

    def to_dict(self) -> dict:
        return {
            "cameras": list(self.cameras),
            "size_error_mm": self.size_error,
            "angle_error_deg": self.angle_error,
            "angle_errors_deg": list(self.angle_errors),
            "captures": self.captures,
            "edges_from_opposite_gap": self.size_from_gap,
            "edges_from_extent": self.size_from_extent,
            "failed_captures": list(self.failed),
        }


@dataclass(frozen=True)
class CubeReconstructionReport:
    rows: dict[int, SubsetReport]
    row_pairs: dict[tuple[int, int], SubsetReport]
    total: SubsetReport
    extra: dict = field(default_factory=dict)

    def entries(self) -> list[SubsetReport]:
        return list(self.rows.values()) + list(self.row_pairs.values()) + [self.total]

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "units": {"size": "mm", "angle": "deg"},
            "rows": {f"row_{r}": rep.to_dict() for r, rep in self.rows.items()},
            "row_pairs": {f"row_{b}-{a}": rep.to_dict() for (a, b), rep in self.row_pairs.items()},
            "total": self.total.to_dict(),
        }
        out.update(self.extra)
        return out


def _capture_errors(cloud: PointCloud, edge: float, params: ExtractionParams):
    faces = segment_cube_surfaces(cloud, params)
    normals = faces.normals
    k = len(normals)
    ang = angles_between(normals[:, None].repeat(k, 1), normals[None].repeat(k, 0))
    pair_err, opposite = [], {}
    for i in range(k):
        for j in range(i + 1, k):
            if ang[i, j] > OPPOSITE_DEG:
                opposite.setdefault(i, j)
                opposite.setdefault(j, i)
            else:
                pair_err.append(abs(ang[i, j] - 90.0))
    pts = cloud.points[faces.labels >= 0]
    sizes, n_gap, n_ext, used = [], 0, 0, set()
    for i in range(k):
        if i in used:
            continue
        j = opposite.get(i)
        if j is not None and j not in used:
            n = normals[i] - normals[j]
            n /= np.linalg.norm(n)
            gap = n @ (faces.faces[i].centroid - faces.faces[j].centroid)
            sizes.append(abs(gap - edge))
            used |= {i, j}
            n_gap += 1
        else:
            proj = pts @ normals[i]
            sizes.append(abs(proj.max() - proj.min() - edge))
            used.add(i)
            n_ext += 1
    return float(np.mean(sizes)) * 1000.0, pair_err, n_gap, n_ext


def _subsample(cloud: PointCloud, max_points: int | None, key: str) -> PointCloud:
    if max_points is None or len(cloud) <= max_points:
        return cloud
    seed = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    idx = np.sort(np.random.default_rng(seed).choice(len(cloud), max_points, replace=False))
    return cloud.subset(idx)


def subset_reconstruction_error(clouds, result, edge: float, cameras,
                                params: ExtractionParams | None = None,
                                max_points: int | None = 8000, captures=None) -> SubsetReport:
    """Reconstruction error of the cube fused from ``cameras`` only.

    Per capture, the clouds of the chosen cameras are mapped into the
    reference frame and merged; up to six faces are segmented without any
    orthogonality constraint.  Angle errors are ``|angle - 90|`` over
    adjacent face pairs; edge lengths come from opposite-face gaps when both
    faces exist, else from the extent of the fused cloud along the normal.
    """
    params = params or EVAL_PARAMS
    cameras = sorted(cameras)
    missing = [c.name for c in cameras if c not in result.transforms]
    if missing:
        raise MetricFailure(f"cameras {missing} are not in the calibration result")
    by_capture: dict[CaptureId, list] = {}
    for (cam, cap), cloud in sorted(clouds.items()):
        if cam in cameras and (captures is None or cap in captures):
            by_capture.setdefault(cap, []).append(transform_apply(result.transforms[cam], cloud))
    sizes, angles, n_gap, n_ext, failed = [], [], 0, 0, []
    for cap, parts in sorted(by_capture.items()):
        fused = _subsample(merge_clouds(parts), max_points, cap.name + "/" + ",".join(c.name for c in cameras))
        try:
            s, a, g, e = _capture_errors(fused, edge, params)
        except CalibError:
            failed.append(cap.name)
            continue
        sizes.append(s)
        angles += a
        n_gap += g
        n_ext += e
    if not sizes:
        raise MetricFailure(
            f"no capture of cameras {[c.name for c in cameras]} could be fused into a cube; "
            "the calibration is likely too poor"
        )
    return SubsetReport(
        tuple(c.name for c in cameras), float(np.mean(sizes)), tuple(float(x) for x in angles),
        len(sizes), n_gap, n_ext, tuple(failed),
    )


def cube_reconstruction_error(clouds, result, edge: float,
                              params: ExtractionParams | None = None,
                              max_points: int | None = 8000, captures=None,
                              subsets: str = "all") -> CubeReconstructionReport:
    """Per-row, adjacent-row-pair and whole-rig reconstruction errors.

    ``clouds`` maps ``(CameraId, CaptureId)`` to camera-frame marker
    clouds.  ``subsets="total"`` skips the row and row-pair entries.  The
    whole-rig entry fuses every camera at once; it is not an average of
    the row entries.
    """
    cams = sorted({cam for cam, _ in clouds} & set(result.transforms))
    if not cams:
        raise MetricFailure("no camera of the clouds is calibrated")
    rows = sorted({c.row for c in cams})
    kw = dict(params=params, max_points=max_points, captures=captures)
    row_rep, pair_rep = {}, {}
    if subsets == "all":
        for r in rows:
            row_rep[r] = subset_reconstruction_error(clouds, result, edge, [c for c in cams if c.row == r], **kw)
        for a, b in zip(rows, rows[1:]):
            pair_rep[(a, b)] = subset_reconstruction_error(
                clouds, result, edge, [c for c in cams if c.row in (a, b)], **kw
            )
    total = subset_reconstruction_error(clouds, result, edge, cams, **kw)
    return CubeReconstructionReport(row_rep, pair_rep, total)


# -- distances between clouds -------------------------------------------------


def _points(cloud) -> np.ndarray:
    pts = (cloud if isinstance(cloud, PointCloud) else PointCloud(np.asarray(cloud, dtype=np.float64))).points
    if len(pts) == 0:
        raise EmptyInput("distance to an empty point set")
    return pts


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance (exact nearest neighbors via k-d trees)."""
    pa, pb = _points(a), _points(b)
    dab = cKDTree(pb).query(pa)[0].max()
    dba = cKDTree(pa).query(pb)[0].max()
    return float(max(dab, dba))


def wasserstein(a, b, sample_size: int = 512, rng_seed: int = 0) -> float:
    """Exact 1-Wasserstein distance between equal-size samples of two clouds.

    Both clouds are reduced (or padded) to ``n = min(sample_size, max(|A|,
    |B|))`` points: a cloud with exactly ``n`` points is used as is, a
    larger one is subsampled without replacement, a smaller one is padded
    by drawing extra points with replacement.  Each side draws from a fresh
    generator seeded with ``rng_seed``, so two clouds of equal size (for
    example one cloud under two calibrations) are sampled at the same
    indices.  The balanced assignment on
    the Euclidean cost matrix is then solved exactly; the result is the
    mean matched distance.
    """
    pa, pb = _points(a), _points(b)
    n = min(sample_size, max(len(pa), len(pb)))

    def take(p):
        if len(p) == n:
            return p
        # same stream per side: equal-size clouds get paired indices
        rng = np.random.default_rng(rng_seed)
        if len(p) > n:
            return p[np.sort(rng.choice(len(p), n, replace=False))]
        return np.concatenate([p, p[rng.choice(len(p), n - len(p), replace=True)]])

    sa, sb = take(pa), take(pb)
    cost = cdist(sa, sb)
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean())
