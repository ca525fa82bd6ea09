"""Command-line front end: ``cubecalib <command> [options]``.

Commands::

    synth       render a synthetic session (clouds, optional RGB-D images, truth)
    segment     RGB-D session images -> per-frame marker clouds (PLY)
    extract     marker clouds -> fitted faces (JSON)
    calibrate   fitted faces -> camera transforms (JSON)
    evaluate    transforms + clouds -> reconstruction metrics (JSON)
    gridsearch  parameter sweep -> trials CSV + winning config (JSON)

Every command accepts ``--config FILE`` (JSON, unknown keys rejected) and
``--set section.key=VALUE`` overrides; flags win over the file.  Each run
writes ``manifest.json`` into its output directory.  Failures print one
JSON error record on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    CalibrationParams,
    CalibrationResult,
    Observation,
    build_observation_graph,
    calibrate_rig,
)
from .errors import CalibError, ConfigError, GraphDisconnected
from .extraction import ExtractedFaces, ExtractionParams, extract_cube_faces
from .geometry import PointCloud, RigidTransform, merge_clouds, transform_apply
from .hyperopt import ParamSpace, grid_search, winning_config, write_trials_csv
from .ids import CameraId, CaptureId
from .metrics import cube_reconstruction_error, hausdorff, wasserstein
from .ply import read_cloud_dir, write_cloud_dir, write_ply
from .rgbd import HsvThresholds, load_session, segment_frame, write_frame, write_intrinsics
from .synth import NoiseSpec, default_rig, generate_session, ground_truth_error, render_rgbd

SCHEMA_VERSION = 1

EXIT_CODES = {"config_error": 2, "missing_input": 3}
PIPELINE_EXIT = 4


@dataclass(frozen=True)
class RigConfig:
    rows: int = 3
    cols: int = 4
    radius: float = 1.2
    row_heights: tuple = (0.4, 1.0, 1.6)


@dataclass(frozen=True)
class SessionConfig:
    heights: tuple = (0.6, 0.76, 0.92, 1.08, 1.24, 1.4)
    shots_per_height: int = 4
    edge: float = 0.3
    density: int = 900
    yaw_range: float = 15.0
    offset_radius: float = 0.08


@dataclass(frozen=True)
class MetricsConfig:
    max_points: int = 8000
    sample_size: int = 512


@dataclass(frozen=True)
class SearchConfig:
    min_shared_captures: tuple = (2, 3, 5)
    max_iterations: tuple = (25, 50, 100)
    distance_threshold: tuple = (0.003, 0.006, 0.01)
    angular_threshold: tuple = (0.3, 0.6, 1.0)
    row_distance_threshold: tuple = (0.1, 0.001)
    row_angular_threshold: tuple = (5.0, 3.0, 2.0)
    consider_normals: tuple = (True, False)
    workers: int = 1
    max_points: int = 6000
    eval_captures: tuple = ()


SECTIONS = {
    "hsv": HsvThresholds,
    "extraction": ExtractionParams,
    "calibration": CalibrationParams,
    "noise": NoiseSpec,
    "rig": RigConfig,
    "session": SessionConfig,
    "metrics": MetricsConfig,
    "search": SearchConfig,
}


@dataclass
class RunConfig:
    seed: int = 0
    sections: dict = field(default_factory=dict)

    def __getattr__(self, name):
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "seed": self.seed}
        for name in SECTIONS:
            d = asdict(self.sections[name])
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _coerce(cls, section: str, values: dict):
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(names))
    if unknown:
        raise ConfigError(f"[{section}] unknown keys {unknown}; allowed: {sorted(names)}")
    kw = {}
    for k, v in values.items():
        default = names[k].default
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"[{section}] {k} must be true or false")
        elif isinstance(default, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"[{section}] {k} must be an integer")
        elif isinstance(default, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"[{section}] {k} must be a number")
            v = float(v)
        elif isinstance(default, tuple):
            if not isinstance(v, list):
                raise ConfigError(f"[{section}] {k} must be a list")
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _parse_override(text: str) -> tuple[str, str, object]:
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    lhs, rhs = text.split("=", 1)
    section, key = lhs.split(".", 1)
    try:
        value = json.loads(rhs)
    except json.JSONDecodeError:
        value = rhs
    return section, key, value


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    """Validated configuration: defaults, then the file, then overrides."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(raw) - set(SECTIONS) - {"schema_version", "seed"})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}; allowed: seed, schema_version, {sorted(SECTIONS)}")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']}")
    values = {name: dict(raw.get(name) or {}) for name in SECTIONS}
    for text in overrides:
        section, key, value = _parse_override(text)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r} in override {text!r}")
        values[section][key] = value
    run_seed = raw.get("seed", 0) if seed is None else seed
    if isinstance(run_seed, bool) or not isinstance(run_seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(run_seed, {name: _coerce(cls, name, values[name]) for name, cls in SECTIONS.items()})


# -- helpers ------------------------------------------------------------------


def _dump(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, config: RunConfig, artifacts) -> None:
    arts = sorted({Path(a) for a in artifacts})
    _dump(out / "manifest.json", {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "config_hash": config.digest(),
        "seed": config.seed,
        "config": config.to_dict(),
        "artifacts": [{"path": str(a.relative_to(out)), "sha256": _sha256(a)} for a in arts],
    })


def _matrix_dict(transforms) -> dict:
    return {c.name: transforms[c].matrix.tolist() for c in sorted(transforms)}


def _load_faces(path: Path) -> tuple[list[Observation], list[CameraId]]:
    data = json.loads(Path(path).read_text())
    obs = []
    for rec in data["frames"]:
        if rec["status"] != "ok":
            continue
        obs.append(Observation(CameraId.parse(rec["camera"]), CaptureId.parse(rec["capture"]),
                               ExtractedFaces.from_dict(rec["faces"])))
    return obs, [CameraId.parse(c) for c in data.get("cameras", [])]


def _load_result(path) -> CalibrationResult:
    return CalibrationResult.from_dict(json.loads(Path(path).read_text()))


# -- commands -----------------------------------------------------------------


def cmd_synth(args, config: RunConfig) -> list[Path]:
    out = Path(args.out)
    rc, sc = config.rig, config.session
    rig = default_rig(rc.rows, rc.cols, rc.radius, rc.row_heights)
    session = generate_session(
        rig, sc.heights, sc.shots_per_height, sc.edge, config.noise, config.seed,
        sc.density, sc.yaw_range, sc.offset_radius,
    )
    extras = {
        k: {"label": lc.labels, "edge_flag": lc.edge_flags.astype(np.int64)}
        for k, lc in session.frames.items()
    }
    written = write_cloud_dir(out / "clouds", session.clouds(), extras)
    ref = min(rig.poses)
    truth = {
        "schema_version": SCHEMA_VERSION,
        "edge": sc.edge,
        "reference": ref.name,
        "poses": _matrix_dict(rig.poses),
        "transforms": _matrix_dict(session.relative_truth(ref)),
        "cubes": {cap.name: session.cubes[cap].pose.matrix.tolist() for cap in session.captures},
        "covisibility": {
            cap.name: {cam.name: n for cam, n in sorted(v.items())}
            for cap, v in sorted(session.covisibility.items())
        },
        "intrinsics": rig.intrinsics.to_dict(),
    }
    written.append(_dump(out / "truth.json", truth))
    if args.rgbd:
        img_root = out / "images"
        for cam in rig.cameras:
            write_intrinsics(img_root, cam, rig.intrinsics)
            written.append(img_root / cam.name / "intrinsics.json")
        for i, (cam, cap) in enumerate(sorted(session.frames)):
            seed = np.random.SeedSequence([config.seed, 2, cam.row, cam.col, cap.height, cap.shot])
            rgb, depth, _ = render_rgbd(rig.poses[cam], rig.intrinsics, session.cubes[cap], config.noise, seed)
            write_frame(img_root, cam, cap, rgb, depth)
            written += [img_root / cam.name / f"{cap.name}_rgb.png", img_root / cam.name / f"{cap.name}_depth.png"]
    return written


def cmd_segment(args, config: RunConfig) -> list[Path]:
    out = Path(args.out)
    frames = load_session(args.session)
    clouds, failures = {}, []
    for fr in frames:
        try:
            clouds[(fr.camera, fr.capture)] = segment_frame(fr, config.hsv)
        except CalibError as exc:
            failures.append({"camera": fr.camera.name, "capture": fr.capture.name,
                             "code": exc.code, "message": str(exc)})
    written = write_cloud_dir(out / "clouds", clouds)
    written.append(_dump(out / "segment_report.json", {
        "schema_version": SCHEMA_VERSION, "frames": len(frames), "segmented": len(clouds), "failures": failures,
    }))
    return written


def cmd_extract(args, config: RunConfig) -> list[Path]:
    out = Path(args.out)
    clouds = read_cloud_dir(args.clouds)
    params = config.extraction
    written, records = [], []
    for (cam, cap), cloud in sorted(clouds.items()):
        rec = {"camera": cam.name, "capture": cap.name, "points": len(cloud)}
        hook = None
        if args.debug:
            dbg = out / "debug" / cam.name
            dbg.mkdir(parents=True, exist_ok=True)

            def hook(it, labels, cam=cam, cap=cap, cloud=cloud, dbg=dbg):
                path = dbg / f"{cap.name}_iter{it:03d}.ply"
                write_ply(path, PointCloud(cloud.points, colors=_label_colors(labels)), {"label": labels})
                written.append(path)
        try:
            faces = extract_cube_faces(cloud, params, on_iteration=hook)
            rec.update(status="ok", faces=faces.to_dict(include_labels=True))
        except CalibError as exc:
            rec.update(status="failed", code=exc.code, message=str(exc))
        records.append(rec)
    cameras = sorted({cam for cam, _ in clouds})
    written.append(_dump(out / "faces.json", {
        "schema_version": SCHEMA_VERSION,
        "cameras": [c.name for c in cameras],
        "frames": records,
    }))
    return written


_PALETTE = np.array([[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48],
                     [145, 30, 180], [70, 240, 240], [128, 128, 128]], dtype=np.uint8)


def _label_colors(labels) -> np.ndarray:
    return _PALETTE[np.where(labels < 0, len(_PALETTE) - 1, labels % (len(_PALETTE) - 1))]


def cmd_calibrate(args, config: RunConfig) -> list[Path]:
    out = Path(args.out)
    obs, cameras = _load_faces(args.faces)
    params = config.calibration
    graph = build_observation_graph(obs, params, cameras=cameras)
    result = calibrate_rig(graph, obs, params)
    doc = result.to_dict()
    doc["graph"] = {
        "cameras": [c.name for c in graph.nodes],
        "edges": [{"a": a.name, "b": b.name, "shared": len(v)} for (a, b), v in sorted(graph.edges.items())],
    }
    return [_dump(out / "transforms.json", doc)]


def cmd_evaluate(args, config: RunConfig) -> list[Path]:
    out = Path(args.out)
    result = _load_result(args.transforms)
    clouds = read_cloud_dir(args.clouds)
    edge = config.session.edge
    truth = None
    if args.truth:
        truth = json.loads(Path(args.truth).read_text())
        edge = float(truth.get("edge", edge))
    report = cube_reconstruction_error(clouds, result, edge, max_points=config.metrics.max_points)
    doc = report.to_dict()
    doc["edge_m"] = edge
    if truth is not None:
        poses = {CameraId.parse(k): RigidTransform.from_matrix(v) for k, v in truth["poses"].items()}
        errs = ground_truth_error(result, poses)
        doc["ground_truth"] = {
            "per_camera": {c.name: {"rotation_deg": r, "translation_mm": t} for c, (r, t) in errs.items()},
            "max_rotation_deg": max(r for r, _ in errs.values()),
            "max_translation_mm": max(t for _, t in errs.values()),
        }
    if args.compare:
        other = _load_result(args.compare)
        doc["comparison"] = _compare(clouds, result, other, config)
    return [_dump(out / "metrics.json", doc)]


def _compare(clouds, a: CalibrationResult, b: CalibrationResult, config: RunConfig) -> dict:
    """Hausdorff and Wasserstein distances between the fused clouds of two calibrations."""
    per_capture = {}
    for cap in sorted({cap for _, cap in clouds}):
        keys = [k for k in sorted(clouds) if k[1] == cap and k[0] in a.transforms and k[0] in b.transforms]
        if not keys:
            continue
        fa = merge_clouds([transform_apply(a.transforms[c], clouds[(c, cap)]) for c, _ in keys])
        fb = merge_clouds([transform_apply(b.transforms[c], clouds[(c, cap)]) for c, _ in keys])
        per_capture[cap.name] = {
            "hausdorff_m": hausdorff(fa, fb),
            "wasserstein_m": wasserstein(fa, fb, config.metrics.sample_size, config.seed),
        }
    vals = list(per_capture.values())
    return {
        "per_capture": per_capture,
        "mean_hausdorff_m": float(np.mean([v["hausdorff_m"] for v in vals])) if vals else None,
        "mean_wasserstein_m": float(np.mean([v["wasserstein_m"] for v in vals])) if vals else None,
    }


def cmd_gridsearch(args, config: RunConfig) -> list[Path]:
    out = Path(args.out)
    clouds = read_cloud_dir(args.clouds)
    eval_clouds = read_cloud_dir(args.eval_clouds) if args.eval_clouds else None
    sc = config.search
    space = ParamSpace(**{k: getattr(sc, k) for k in ParamSpace.keys()})
    caps = {CaptureId.parse(c) for c in sc.eval_captures} or None
    trials = grid_search(
        space, clouds, config.session.edge, eval_clouds, rng_seed=config.seed, workers=sc.workers,
        eval_captures=caps, max_points=sc.max_points,
        base_extraction=config.extraction, base_calibration=config.calibration,
    )
    written = [out / "trials.csv"]
    write_trials_csv(written[0], trials)
    win = winning_config(trials)
    loss = win.pop("loss")
    written.append(_dump(out / "best_config.json", win))
    written.append(_dump(out / "search_summary.json", {
        "schema_version": SCHEMA_VERSION,
        "configurations": len(trials),
        "succeeded": sum(t.ok for t in trials),
        "best_loss": loss,
        "best_index": trials[0].index,
    }))
    return written


COMMANDS = {
    "synth": cmd_synth,
    "segment": cmd_segment,
    "extract": cmd_extract,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (JSON literal); repeatable")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", required=True, help="output directory")

    p = argparse.ArgumentParser(prog="cubecalib", description="Cube-marker extrinsic calibration for RGB-D rigs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic session")
    s.add_argument("--rgbd", action="store_true", help="also write RGB-D images in the session layout")
    s = sub.add_parser("segment", parents=[common], help="segment the marker in RGB-D images")
    s.add_argument("--session", required=True, help="session root (cam_<r>_<c>/...)")
    s = sub.add_parser("extract", parents=[common], help="fit cube faces per frame")
    s.add_argument("--clouds", required=True, help="directory of per-frame PLY clouds")
    s.add_argument("--debug", action="store_true", help="write per-iteration label PLYs")
    s = sub.add_parser("calibrate", parents=[common], help="estimate camera transforms")
    s.add_argument("--faces", required=True, help="faces.json from extract")
    s = sub.add_parser("evaluate", parents=[common], help="score a calibration")
    s.add_argument("--transforms", required=True)
    s.add_argument("--clouds", required=True)
    s.add_argument("--truth", help="truth.json from synth")
    s.add_argument("--compare", help="second transforms.json for Hausdorff/Wasserstein")
    s = sub.add_parser("gridsearch", parents=[common], help="sweep parameters")
    s.add_argument("--clouds", required=True, help="clouds used for calibration")
    s.add_argument("--eval-clouds", help="clouds used for scoring (default: --clouds)")
    return p


def _error_record(code: str, exc: BaseException) -> dict:
    err = {"code": code, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, GraphDisconnected):
        err["components"] = exc.components
    if getattr(exc, "edge", None):
        err["edge"] = exc.edge
    return {"schema_version": SCHEMA_VERSION, "error": err}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.set, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = COMMANDS[args.command](args, config)
        _write_manifest(out, args.command, config, artifacts)
    except ConfigError as exc:
        failure = (exc.code, EXIT_CODES["config_error"], exc)
    except OSError as exc:
        failure = ("missing_input", EXIT_CODES["missing_input"], exc)
    except CalibError as exc:
        failure = (exc.code, PIPELINE_EXIT, exc)
    except (KeyError, json.JSONDecodeError) as exc:
        failure = ("format_error", PIPELINE_EXIT, exc)
    else:
        return 0
    code, status, exc = failure
    print(json.dumps(_error_record(code, exc), sort_keys=True), file=sys.stderr)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
