"""ASCII PLY point-cloud files (``x y z [nx ny nz] [r g b]`` plus extra int columns)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import PointCloud
from .ids import CameraId, CaptureId


def write_ply(path, cloud: PointCloud, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``cloud``; ``extra`` maps property names to integer per-point columns."""
    extra = extra or {}
    n = len(cloud)
    props = ["double x", "double y", "double z"]
    cols = [cloud.points]
    fmts = ["%.17g"] * 3
    if cloud.normals is not None:
        props += ["double nx", "double ny", "double nz"]
        cols.append(cloud.normals)
        fmts += ["%.17g"] * 3
    if cloud.colors is not None:
        props += ["uchar red", "uchar green", "uchar blue"]
        cols.append(cloud.colors.astype(np.float64))
        fmts += ["%d"] * 3
    for name, values in extra.items():
        values = np.asarray(values)
        if len(values) != n:
            raise ValueError(f"extra column {name!r} has wrong length")
        props.append(f"int {name}")
        cols.append(values.astype(np.float64)[:, None])
        fmts.append("%d")
    header = ["ply", "format ascii 1.0", f"element vertex {n}"]
    header += [f"property {p}" for p in props]
    header.append("end_header")
    data = np.hstack(cols) if n else np.zeros((0, len(fmts)))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(header) + "\n")
        if n:
            np.savetxt(fh, data, fmt=fmts)


def read_ply(path) -> tuple[PointCloud, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise FormatError(f"{path} is not a PLY file")
        if fh.readline().strip() != "format ascii 1.0":
            raise FormatError(f"{path}: only ASCII PLY is supported")
        n = None
        names = []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "element" and parts[1] == "vertex":
                n = int(parts[2])
            elif parts[0] == "property":
                names.append(parts[-1])
            elif parts[0] == "end_header":
                break
        if n is None:
            raise FormatError(f"{path}: no vertex element")
        data = np.loadtxt(fh, ndmin=2) if n else np.zeros((0, len(names)))
    if data.shape != (n, len(names)):
        raise FormatError(f"{path}: expected {n}x{len(names)} values, got {data.shape}")
    col = {name: data[:, i] for i, name in enumerate(names)}
    try:
        pts = np.column_stack([col.pop("x"), col.pop("y"), col.pop("z")])
    except KeyError as exc:
        raise FormatError(f"{path}: missing coordinate {exc}") from exc
    normals = colors = None
    if {"nx", "ny", "nz"} <= col.keys():
        normals = np.column_stack([col.pop("nx"), col.pop("ny"), col.pop("nz")])
    if {"red", "green", "blue"} <= col.keys():
        colors = np.column_stack([col.pop("red"), col.pop("green"), col.pop("blue")]).astype(np.uint8)
    extra = {k: v.astype(np.int64) for k, v in col.items()}
    return PointCloud(pts, normals, colors), extra


def write_cloud_dir(root, clouds, extras=None) -> list[Path]:
    """Write ``{(CameraId, CaptureId): PointCloud}`` as ``<root>/cam_r_c/h_s.ply``."""
    root = Path(root)
    written = []
    for (cam, cap), cloud in sorted(clouds.items()):
        d = root / cam.name
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{cap.name}.ply"
        write_ply(path, cloud, (extras or {}).get((cam, cap)))
        written.append(path)
    return written


def read_cloud_dir(root) -> dict:
    """Inverse of :func:`write_cloud_dir`; extra columns are dropped."""
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"cloud directory {root} does not exist")
    out = {}
    for d in sorted(root.iterdir()):
        try:
            cam = CameraId.parse(d.name)
        except ValueError:
            continue
        for f in sorted(d.glob("*.ply")):
            try:
                cap = CaptureId.parse(f.stem)
            except ValueError:
                continue
            out[(cam, cap)] = read_ply(f)[0]
    if not out:
        raise OSError(f"no cam_<row>_<col>/h<height>_s<shot>.ply files under {root}")
    return out
