"""Text sensor logs and series files.

All files are comma-separated text with one leading comment header naming
columns and units, one record per line, written with a fixed 12-significant-
digit format so identical runs produce byte-identical files.

Drive files come in triples sharing an id prefix: ``<id>_imu.csv``
(t, specific force, angular rate), ``<id>_fixes.csv`` (t, position) and
``<id>_truth.csv`` (t, position, heading, speed, speed rate, heading rate;
optional, simulator drives always have it).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import Drive, FixStream, ImuStream, Trajectory, align_streams
from .errors import IoFailureError

FMT = "%.12g"

IMU_HEADER = "t [s],fx [m/s^2],fy [m/s^2],fz [m/s^2],wx [rad/s],wy [rad/s],wz [rad/s]"
FIX_HEADER = "t [s],px [m],py [m]"
TRUTH_HEADER = "t [s],px [m],py [m],psi [rad],s [m/s],sdot [m/s^2],psidot [rad/s]"
TRAJ_HEADER = "t [s],px [m],py [m],psi [rad]"
SPEED_HEADER = "t [s],s [m/s]"
ERROR_HEADER = "t [s],err [m]"


def write_table(path, header: str, data: np.ndarray) -> None:
    try:
        np.savetxt(path, np.asarray(data), fmt=FMT, delimiter=",", header=header, comments="# ")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def read_table(path) -> tuple[str, np.ndarray]:
    """Read a series file; returns (header, data as 2-D float array)."""
    import warnings

    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
        header = first.lstrip("#").strip() if first.startswith("#") else ""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty files are reported by callers
            data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise IoFailureError(f"{path}: malformed table: {exc}") from exc
    return header, data


def drive_paths(out_dir, drive_id: str) -> dict[str, Path]:
    base = Path(out_dir)
    return {
        "imu": base / f"{drive_id}_imu.csv",
        "fixes": base / f"{drive_id}_fixes.csv",
        "truth": base / f"{drive_id}_truth.csv",
    }


def write_drive(drive: Drive, out_dir) -> dict[str, Path]:
    """Write a drive's file triple; returns the paths."""
    paths = drive_paths(out_dir, drive.id)
    imu = drive.imu
    write_table(
        paths["imu"], IMU_HEADER,
        np.column_stack([imu.t, imu.f_body, imu.omega_body]),
    )
    write_table(
        paths["fixes"], FIX_HEADER,
        np.column_stack([drive.fixes.t, drive.fixes.p_nav]),
    )
    if drive.truth is not None:
        tr = drive.truth
        write_table(
            paths["truth"], TRUTH_HEADER,
            np.column_stack([tr.t, tr.p, tr.psi, tr.s, tr.sdot, tr.psidot]),
        )
    return paths


def read_drive(prefix) -> Drive:
    """Read a drive triple given its path prefix (``dir/d0`` style)."""
    prefix = Path(prefix)
    drive_id = prefix.name
    paths = drive_paths(prefix.parent, drive_id)
    _, imu_data = read_table(paths["imu"])
    if imu_data.shape[1] != 7:
        raise IoFailureError(f"{paths['imu']}: expected 7 columns")
    imu = ImuStream(t=imu_data[:, 0], f_body=imu_data[:, 1:4], omega_body=imu_data[:, 4:7])
    _, fix_data = read_table(paths["fixes"])
    if fix_data.shape[1] != 3:
        raise IoFailureError(f"{paths['fixes']}: expected 3 columns")
    fixes = FixStream(t=fix_data[:, 0], p_nav=fix_data[:, 1:3])
    truth = None
    if paths["truth"].exists():
        _, tr = read_table(paths["truth"])
        if tr.shape[1] != 7:
            raise IoFailureError(f"{paths['truth']}: expected 7 columns")
        truth = Trajectory(
            t=tr[:, 0], p=tr[:, 1:3], psi=tr[:, 3], s=np.maximum(tr[:, 4], 0.0),
            sdot=tr[:, 5], psidot=tr[:, 6],
        )
    return align_streams(imu, fixes, drive_id=drive_id, truth=truth)


def find_drives(paths) -> list[Path]:
    """Resolve CLI drive arguments (directories or prefixes) to prefixes."""
    prefixes: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            for imu_file in sorted(p.glob("*_imu.csv")):
                prefixes.append(imu_file.parent / imu_file.name[: -len("_imu.csv")])
        else:
            name = p.name
            for suffix in ("_imu.csv", "_fixes.csv", "_truth.csv"):
                if name.endswith(suffix):
                    p = p.parent / name[: -len(suffix)]
                    break
            prefixes.append(p)
    if not prefixes:
        raise IoFailureError(f"no drives found under {list(map(str, paths))}")
    return prefixes
