"""Operator command line: simulate / prepare / train / evaluate / nav / plot.

Every command takes ``--config`` (INI, see ``--help``) and ``--out``; a fully
resolved copy of the configuration is written next to the outputs, and
identical configs plus seeds reproduce outputs byte for byte.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
4 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import datafiles, nav, pipeline, simulate
from .config import RunConfig, config_reference, derive_seed, load_config, write_resolved
from .errors import (
    DivergenceError,
    InvalidConfigError,
    IoFailureError,
    MissingTruthError,
    SpeedNavError,
)
from .model import network, training

log = logging.getLogger("speednav")


def _build_noise_models(cfg: RunConfig, index: int):
    sim = cfg.sim
    accel_bias = cfgmod.parse_vector3(sim.accel_bias, "[sim] accel_bias")
    gyro_bias = cfgmod.parse_vector3(sim.gyro_bias, "[sim] gyro_bias")
    if accel_bias is None or gyro_bias is None:
        rng = np.random.default_rng(derive_seed(sim.seed, index, 3))
        drawn_a = rng.uniform(-sim.accel_bias_scale, sim.accel_bias_scale, 3)
        drawn_g = rng.uniform(-sim.gyro_bias_scale, sim.gyro_bias_scale, 3)
        accel_bias = drawn_a if accel_bias is None else accel_bias
        gyro_bias = drawn_g if gyro_bias is None else gyro_bias
    imu_noise = simulate.ImuNoiseModel(
        accel_bias=accel_bias,
        gyro_bias=gyro_bias,
        accel_noise_std=sim.accel_noise_std,
        gyro_noise_std=sim.gyro_noise_std,
        vibration_windows=cfgmod.parse_vibration(sim.vibration_windows),
        seed=derive_seed(sim.seed, index, 1),
    )
    rtk_noise = simulate.RtkNoiseModel(
        position_std=sim.position_std, seed=derive_seed(sim.seed, index, 2)
    )
    return imu_noise, rtk_noise


def simulate_drives(cfg: RunConfig):
    """Generate the configured drives (shared by the CLI and tests)."""
    sim = cfg.sim
    explicit = cfgmod.parse_segments(sim.segments, sim.dt)
    drives = []
    for i in range(sim.drives):
        if explicit:
            profile = simulate.DriveProfile(
                segments=explicit, seed=derive_seed(sim.seed, i, 0), dt=sim.dt
            )
        else:
            profile = simulate.random_profile(
                sim.duration, derive_seed(sim.seed, i, 0), dt=sim.dt, max_speed=sim.max_speed
            )
        truth = simulate.gen_trajectory(profile)
        imu_noise, rtk_noise = _build_noise_models(cfg, i)
        imu = simulate.trajectory_to_imu(truth, imu_noise)
        fixes = simulate.trajectory_to_fixes(truth, rtk_noise)
        drives.append(
            nav.Drive(
                id=f"d{i}", imu=imu, fixes=fixes, truth=truth,
                duration=float(truth.t[-1] - truth.t[0]),
            )
        )
    return drives


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    out = _ensure_out(args.out)
    drives = simulate_drives(cfg)
    for drive in drives:
        datafiles.write_drive(drive, out)
        dt = np.diff(drive.truth.t)
        distance = float(np.sum(0.5 * (drive.truth.s[1:] + drive.truth.s[:-1]) * dt))
        print(
            f"{drive.id}: duration {drive.duration:.1f} s, "
            f"distance {distance:.0f} m, max speed {drive.truth.s.max():.1f} m/s"
        )
    write_resolved(cfg, out)
    return 0


def cmd_prepare(args) -> int:
    cfg = _config_from_args(args)
    out = _ensure_out(args.out)
    prefixes = datafiles.find_drives(args.drives)
    drives = [datafiles.read_drive(p) for p in prefixes]
    split = pipeline.split_train_val(
        drives, ratio=cfg.pipe.ratio, attitude_source=cfg.pipe.attitude_source
    )
    path = out / "dataset.bin"
    pipeline.save_dataset(split, path)
    print(
        f"dataset: {split.train_windows} train / {split.val_windows} val windows "
        f"({split.train_windows / max(1, split.train_windows + split.val_windows):.3f} train) "
        f"-> {path}"
    )
    write_resolved(cfg, out)
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = _ensure_out(args.out)
    split = pipeline.load_dataset(args.dataset)
    model = network.init_model(cfg.model)
    model, history = training.train(model, split, cfg.train)
    weights = out / "model.spdnet"
    network.save_weights(model, weights)
    rows = np.column_stack(
        [np.arange(1, len(history) + 1), history.train_rmse, history.val_rmse]
    )
    datafiles.write_table(out / "history.csv", "epoch,train_rmse [m/s],val_rmse [m/s]", rows)
    print(
        f"trained {len(history)} epochs: train RMSE {history.train_rmse[-1]:.4f} m/s, "
        f"val RMSE {history.val_rmse[-1]:.4f} m/s -> {weights}"
    )
    write_resolved(cfg, out)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    out = _ensure_out(args.out) if args.out else None
    model = network.load_weights(args.model)
    lines = []
    if args.dataset:
        split = pipeline.load_dataset(args.dataset)
        train_rmse = training.evaluate_rmse(model, split.train, cfg.train.batch_lanes)
        val_rmse = training.evaluate_rmse(model, split.val, cfg.train.batch_lanes)
        lines.append(f"dataset train RMSE {train_rmse:.4f} m/s")
        lines.append(f"dataset val RMSE {val_rmse:.4f} m/s")
    if args.drives:
        boundaries = [float(b) for b in args.boundaries] if args.boundaries else []
        for prefix in datafiles.find_drives(args.drives):
            drive = datafiles.read_drive(prefix)
            if drive.truth is None:
                raise MissingTruthError(f"drive {drive.id} has no truth to evaluate against")
            windows = pipeline.prepare_drive(drive, cfg.pipe.attitude_source)
            lanes = [list(windows)]
            rmse = training.evaluate_rmse(model, lanes, cfg.train.batch_lanes)
            lines.append(f"{drive.id}: speed RMSE {rmse:.4f} m/s vs labels")
            if boundaries:
                pred = _drive_predictions(model, drive, cfg.nav.attitude_source)
                segs = nav.segment_rmse(pred, drive.truth.speed_series(), boundaries)
                for lo, hi, val in segs:
                    lines.append(f"{drive.id}: RMSE [{lo:.0f}, {hi:.0f}] s = {val:.4f} m/s")
    if not lines:
        raise InvalidConfigError("evaluate needs --dataset and/or --drives")
    for line in lines:
        print(line)
    if out is not None:
        (out / "evaluation.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_resolved(cfg, out)
    return 0


def _drive_predictions(model, drive, attitude_source: str):
    from .attitude import estimate_attitude
    from .core import AttitudeSeries

    psi0 = float(drive.truth.psi[0]) if drive.truth is not None else 0.0
    att = estimate_attitude(drive.imu, psi0=psi0)
    if attitude_source == "level":
        att = AttitudeSeries.level(len(drive.imu), psi=att.psi)
    nog = pipeline.remove_gravity(drive.imu, att)
    return network.predict_stream(model, nog)


def cmd_nav(args) -> int:
    cfg = _config_from_args(args)
    out = _ensure_out(args.out)
    mode = args.mode or cfg.nav.mode
    prefixes = datafiles.find_drives(args.drives)
    if len(prefixes) != 1:
        raise InvalidConfigError("nav expects exactly one drive")
    drive = datafiles.read_drive(prefixes[0])
    if mode == "aided":
        if not args.model:
            raise InvalidConfigError("aided mode needs --model")
        source = nav.SpeedSource.from_model(network.load_weights(args.model))
    elif mode == "plain":
        source = nav.SpeedSource.integrated()
    elif mode == "truth":
        source = nav.SpeedSource.truth()
    else:
        raise InvalidConfigError(f"unknown nav mode {mode!r}")
    sol = nav.run_dr(drive, source, attitude_source=cfg.nav.attitude_source)
    stem = f"{drive.id}_{mode}"
    datafiles.write_table(
        out / f"{stem}_trajectory.csv", datafiles.TRAJ_HEADER,
        np.column_stack([sol.t, sol.p, sol.psi]),
    )
    datafiles.write_table(
        out / f"{stem}_speed.csv", datafiles.SPEED_HEADER,
        np.column_stack([sol.t, sol.speed]),
    )
    if drive.truth is not None:
        series, summary = nav.position_error(sol, drive.truth)
        datafiles.write_table(
            out / f"{stem}_error.csv", datafiles.ERROR_HEADER,
            np.column_stack([series.t, series.err]),
        )
        print(
            f"{drive.id} {mode}: error at 60 s {summary.at_60s:.2f} m, "
            f"at end {summary.at_end:.2f} m (max {summary.max:.2f} m)"
        )
    else:
        print(f"{drive.id} {mode}: no ground truth, error series skipped")
    write_resolved(cfg, out)
    return 0


_PLOT_KINDS = {
    datafiles.SPEED_HEADER: ("speed", "time [s]", "speed [m/s]"),
    datafiles.ERROR_HEADER: ("error", "time [s]", "position error [m]"),
    datafiles.TRAJ_HEADER: ("trajectory", "east [m]", "north [m]"),
    datafiles.TRUTH_HEADER: ("trajectory", "east [m]", "north [m]"),
}


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = []
    kind = None
    for path in args.series:
        header, data = datafiles.read_table(path)
        if data.size == 0:
            raise IoFailureError(f"{path}: empty series")
        if header not in _PLOT_KINDS:
            raise IoFailureError(f"{path}: unrecognized series header {header!r}")
        this_kind = _PLOT_KINDS[header]
        if kind is None:
            kind = this_kind
        elif this_kind[0] != kind[0]:
            raise IoFailureError("all plotted series must be of the same kind")
        series.append((Path(path).stem, header, data))
    _name, xlabel, ylabel = kind

    fig, ax = plt.subplots(figsize=(7, 5))
    for label, _header, data in series:
        if kind[0] == "trajectory":
            ax.plot(data[:, 1], data[:, 2], label=label)
        else:
            ax.plot(data[:, 0], data[:, 1], label=label)
    if kind[0] == "trajectory":
        ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.4)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out)
    except OSError as exc:
        raise IoFailureError(f"cannot write {out}: {exc}") from exc
    plt.close(fig)

    table = out.with_suffix(out.suffix + ".txt")
    with open(table, "w", encoding="utf-8") as fh:
        for label, header, data in series:
            fh.write(f"# series: {label}\n# {header}\n")
            np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    print(f"wrote {out} and {table}")
    return 0


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides[("sim", "seed")] = args.seed
    return load_config(args.config, overrides=overrides)


def _ensure_out(out) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create output directory {path}: {exc}") from exc
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speednav",
        description=__doc__,
        epilog=config_reference(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=str, default=None, help="INI config file")
        p.add_argument("--out", type=str, required=out_required, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override [sim] seed")

    p = sub.add_parser(
        "simulate", help="generate synthetic drives",
        epilog=config_reference(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "prepare", help="turn drives into a training dataset",
        epilog=config_reference(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common(p)
    p.add_argument("--drives", nargs="+", required=True,
                   help="drive directories or file prefixes")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser(
        "train", help="train the speed regressor on a dataset",
        epilog=config_reference(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common(p)
    p.add_argument("--dataset", required=True, help="dataset file from prepare")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "evaluate", help="report model RMSE on a dataset and/or drives",
        epilog=config_reference(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common(p, out_required=False)
    p.add_argument("--model", required=True, help="weight file")
    p.add_argument("--dataset", default=None, help="dataset file")
    p.add_argument("--drives", nargs="*", default=None, help="drives with ground truth")
    p.add_argument("--boundaries", nargs="*", default=None,
                   help="segment boundaries (s) for per-segment speed RMSE")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "nav", help="dead-reckon a drive",
        epilog=config_reference(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common(p)
    p.add_argument("--drives", nargs="+", required=True, help="one drive prefix or directory")
    p.add_argument("--model", default=None, help="weight file (aided mode)")
    p.add_argument("--mode", choices=("plain", "aided", "truth"), default=None,
                   help="speed source (defaults to [nav] mode)")
    p.set_defaults(func=cmd_nav)

    p = sub.add_parser("plot", help="plot series files to a vector graphic")
    p.add_argument("--out", required=True, help="output figure path (.svg)")
    p.add_argument("series", nargs="+", help="series files of one kind")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("SPEEDNAV_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (InvalidConfigError, MissingTruthError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IoFailureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SpeedNavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
