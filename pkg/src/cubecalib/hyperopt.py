"""Exhaustive grid search over extraction and calibration parameters.

A trial runs extraction on every frame, calibrates the rig and scores the
transforms with a cube reconstruction.  Work is shared between trials
wherever the result cannot differ:

* frames are extracted once per extraction setting; a run with a larger
  iteration cap is reused for a smaller cap when it stopped earlier;
* trials whose observations and calibration settings coincide reuse one
  calibration;
* identical transform sets reuse one evaluation.

Seeds are derived from the search seed and the configuration values, never
from execution order, so results do not depend on ``workers``.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .calibration import CalibrationParams, CalibrationResult, Observation, build_observation_graph, calibrate_rig
from .errors import CalibError, DegenerateGeometry, SearchFailure
from .extraction import ExtractionParams, extract_cube_faces
from .geometry import estimate_normals
from .metrics import CubeReconstructionReport, cube_reconstruction_error

SCHEMA_VERSION = 1

EXTRACTION_KEYS = ("max_iterations", "distance_threshold", "angular_threshold", "consider_normals")
CALIBRATION_KEYS = ("min_shared_captures", "row_distance_threshold", "row_angular_threshold")

# Loss normalization: errors are divided by the default thresholds, which stay
# fixed across trials so that losses remain comparable.
SIZE_SCALE_MM = 6.0
ANGLE_SCALE_DEG = 1.0


@dataclass(frozen=True)
class ParamSpace:
    min_shared_captures: tuple = (2, 3, 5)
    max_iterations: tuple = (25, 50, 100)
    distance_threshold: tuple = (0.003, 0.006, 0.01)
    angular_threshold: tuple = (0.3, 0.6, 1.0)
    row_distance_threshold: tuple = (0.1, 0.001)
    row_angular_threshold: tuple = (5.0, 3.0, 2.0)
    consider_normals: tuple = (True, False)

    def __post_init__(self):
        for f in fields(self):
            vals = tuple(getattr(self, f.name))
            if not vals:
                raise ValueError(f"{f.name}: empty value list")
            object.__setattr__(self, f.name, vals)

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def single(cls, config: dict) -> "ParamSpace":
        return cls(**{k: (config[k],) for k in cls.keys()})

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSpace":
        unknown = set(data) - set(cls.keys())
        if unknown:
            raise ValueError(f"unknown parameters: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})

    def configurations(self) -> list[dict]:
        keys = self.keys()
        return [dict(zip(keys, vals)) for vals in itertools.product(*(getattr(self, k) for k in keys))]

    def __len__(self) -> int:
        return int(np.prod([len(getattr(self, k)) for k in self.keys()]))


def default_config() -> dict:
    """The configuration the package uses when nothing is tuned."""
    e, c = ExtractionParams(), CalibrationParams()
    return {
        "min_shared_captures": c.min_shared_captures,
        "max_iterations": e.max_iterations,
        "distance_threshold": e.distance_threshold,
        "angular_threshold": e.angular_threshold,
        "row_distance_threshold": c.row_distance_threshold,
        "row_angular_threshold": c.row_angular_threshold,
        "consider_normals": e.consider_normals,
    }


@dataclass
class TrialResult:
    index: int
    config: dict
    loss: float | None
    report: CubeReconstructionReport | None
    status: str
    calibration: CalibrationResult | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "success"


def derive_seed(seed: int, *parts) -> int:
    text = json.dumps([seed, *parts], sort_keys=True)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def mae_loss(report: CubeReconstructionReport) -> float:
    """Mean normalized absolute error of the whole-rig size and angle entries."""
    t = report.total
    return 0.5 * (t.size_error / SIZE_SCALE_MM + t.angle_error / ANGLE_SCALE_DEG)


def _sort_key(trial: TrialResult):
    vals = tuple(trial.config[k] for k in ParamSpace.keys())
    return (not trial.ok, trial.loss if trial.ok else 0.0, vals)


# -- worker-side state --------------------------------------------------------

_STATE: dict = {}


def _init(state):
    _STATE.clear()
    _STATE.update(state)


def _extract_all(job):
    """Extract every frame for one extraction setting.

    Returns ``{frame_key: (faces or None)}`` for each iteration cap in
    ``caps`` (ascending), reusing the largest-cap run where exact.
    """
    base, caps = job
    clouds = _STATE["clouds"]
    out = {m: {} for m in caps}
    top = caps[-1]
    for key in sorted(clouds):
        cloud = clouds[key]
        try:
            faces = extract_cube_faces(cloud, replace(base, max_iterations=top))
        except CalibError:
            faces = None
        out[top][key] = faces
        for m in caps[:-1]:
            if faces is not None and faces.converged and faces.iterations < m:
                out[m][key] = faces
                continue
            try:
                out[m][key] = extract_cube_faces(cloud, replace(base, max_iterations=m))
            except CalibError:
                out[m][key] = None
    return out


def _fingerprint(observations) -> str:
    h = hashlib.sha256()
    for o in observations:
        h.update(f"{o.camera.name}/{o.capture.name}".encode())
        for p in o.faces.planes:
            h.update(np.asarray(p.normal).tobytes())
            h.update(np.float64(p.offset).tobytes())
    return h.hexdigest()


def _transforms_key(result: CalibrationResult) -> str:
    h = hashlib.sha256()
    for cam in sorted(result.transforms):
        h.update(cam.name.encode())
        h.update(result.transforms[cam].matrix.tobytes())
    return h.hexdigest()


def _calibrate(job):
    obs_key, cparams = job
    observations = _STATE["observations"][obs_key]
    try:
        graph = build_observation_graph(observations, cparams, cameras=_STATE["cameras"])
        return calibrate_rig(graph, observations, cparams), None
    except CalibError as exc:
        return None, f"{exc.code}: {exc}"


def _evaluate(result: CalibrationResult):
    try:
        return cube_reconstruction_error(
            _STATE["eval_clouds"], result, _STATE["edge"], subsets=_STATE["subsets"],
            max_points=_STATE["max_points"], captures=_STATE["eval_captures"],
        ), None
    except CalibError as exc:
        return None, f"{exc.code}: {exc}"


def _map(fn, jobs, workers, state):
    if workers <= 1 or len(jobs) <= 1:
        _init(state)
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers, initializer=_init, initargs=(state,)) as pool:
        return list(pool.map(fn, jobs))


def grid_search(space: ParamSpace, clouds, edge: float, eval_clouds=None, rng_seed: int = 0,
                workers: int = 1, eval_captures=None, max_points: int | None = 6000,
                subsets: str = "total", base_extraction: ExtractionParams | None = None,
                base_calibration: CalibrationParams | None = None) -> list[TrialResult]:
    """Evaluate every configuration of ``space``; return trials ranked by loss.

    ``clouds`` maps ``(CameraId, CaptureId)`` to marker clouds used for
    calibration; ``eval_clouds`` (default: the same) are fused with each
    trial's transforms to score it.  Failures rank last; equal losses are
    ordered by configuration values.
    """
    base_e = base_extraction or ExtractionParams()
    base_c = base_calibration or CalibrationParams()
    configs = space.configurations()
    cameras = sorted({cam for cam, _ in clouds})
    # point normals do not depend on any searched parameter
    prepared = {}
    for key, cloud in clouds.items():
        if cloud.normals is None:
            try:
                cloud = estimate_normals(cloud, base_e.normal_neighbors)
            except DegenerateGeometry:
                pass
        prepared[key] = cloud
    clouds = prepared
    state = {
        "clouds": clouds,
        "eval_clouds": eval_clouds if eval_clouds is not None else clouds,
        "edge": edge,
        "eval_captures": eval_captures,
        "max_points": max_points,
        "subsets": subsets,
        "cameras": cameras,
    }

    # stage 1: extraction per setting (iteration caps share one job)
    ext_groups: dict[tuple, set] = {}
    for cfg in configs:
        k = (cfg["distance_threshold"], cfg["angular_threshold"], cfg["consider_normals"])
        ext_groups.setdefault(k, set()).add(cfg["max_iterations"])
    ext_jobs = []
    for k in sorted(ext_groups):
        seed = derive_seed(rng_seed, "extraction", *k)
        base = replace(base_e, distance_threshold=k[0], angular_threshold=k[1],
                       consider_normals=k[2], rng_seed=seed)
        ext_jobs.append((base, sorted(ext_groups[k])))
    ext_out = _map(_extract_all, ext_jobs, workers, state)

    observations, obs_key_of = {}, {}
    for k, res in zip(sorted(ext_groups), ext_out):
        for m, frames in res.items():
            obs = [Observation(cam, cap, f) for (cam, cap), f in sorted(frames.items()) if f is not None]
            fp = _fingerprint(obs)
            observations.setdefault(fp, obs)
            obs_key_of[k + (m,)] = fp
    state["observations"] = observations

    # stage 2: calibration per distinct (observations, calibration settings)
    trial_job = []
    cal_jobs: dict[tuple, int] = {}
    job_list = []
    for cfg in configs:
        fp = obs_key_of[(cfg["distance_threshold"], cfg["angular_threshold"],
                         cfg["consider_normals"], cfg["max_iterations"])]
        cvals = tuple(cfg[k] for k in CALIBRATION_KEYS)
        key = (fp,) + cvals
        if key not in cal_jobs:
            cparams = replace(base_c, rng_seed=derive_seed(rng_seed, "calibration", *cvals),
                              **dict(zip(CALIBRATION_KEYS, cvals)))
            cal_jobs[key] = len(job_list)
            job_list.append((fp, cparams))
        trial_job.append(cal_jobs[key])
    cal_out = _map(_calibrate, job_list, workers, state)

    # stage 3: evaluation per distinct transform set
    eval_index, eval_jobs = {}, []
    for result, _ in cal_out:
        if result is not None:
            tk = _transforms_key(result)
            if tk not in eval_index:
                eval_index[tk] = len(eval_jobs)
                eval_jobs.append(result)
    eval_out = _map(_evaluate, eval_jobs, workers, state)

    trials = []
    for i, (cfg, j) in enumerate(zip(configs, trial_job)):
        result, err = cal_out[j]
        if result is None:
            trials.append(TrialResult(i, cfg, None, None, err))
            continue
        report, err = eval_out[eval_index[_transforms_key(result)]]
        if report is None:
            trials.append(TrialResult(i, cfg, None, None, err, result))
            continue
        trials.append(TrialResult(i, cfg, mae_loss(report), report, "success", result))
    if not any(t.ok for t in trials):
        reasons = sorted({t.status.split(":")[0] for t in trials})
        raise SearchFailure(f"all {len(trials)} configurations failed ({', '.join(reasons)})")
    return sorted(trials, key=_sort_key)


def write_trials_csv(path, trials) -> None:
    keys = ParamSpace.keys()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "index", *keys, "loss", "size_error_mm", "angle_error_deg", "status"])
        for rank, t in enumerate(trials, start=1):
            size = repr(t.report.total.size_error) if t.report else ""
            ang = repr(t.report.total.angle_error) if t.report else ""
            w.writerow([rank, t.index, *(t.config[k] for k in keys),
                        repr(t.loss) if t.ok else "", size, ang, t.status])


def winning_config(trials) -> dict:
    """JSON-ready configuration of the best trial, usable as a CLI config."""
    best = trials[0]
    if not best.ok:
        raise SearchFailure("no successful trial")
    cfg = best.config
    return {
        "schema_version": SCHEMA_VERSION,
        "extraction": {k: cfg[k] for k in EXTRACTION_KEYS},
        "calibration": {k: cfg[k] for k in CALIBRATION_KEYS},
        "loss": best.loss,
    }
