"""Supervised training material from drives.

Speed labels come from differentiating the 50 Hz position fixes (central
differences inside, one-sided at the ends) and taking the vector norm, then
linear upsampling onto the 100 Hz IMU grid. Specific force has gravity removed
using a per-tick attitude, windows of 20 ticks pair the 6 IMU channels with
20 speed labels, and whole contiguous spans are assigned to train or
validation around an 85:15 window-count ratio.

Windows are non-overlapping (stride = window length): the stateful
many-to-many training consumes each tick exactly once.

Dataset file format (``save_dataset`` / ``load_dataset``): a UTF-8 text header
followed by fixed-size binary records, one per window::

    SPEEDNAV-DATASET v1
    record: drive_id 16s utf-8 nul-padded, index u32le, valid u8,
            x 120 f64le (fx fy fz m/s^2, wx wy wz rad/s, per tick, 20 ticks),
            y 20 f64le (m/s)
    lanes: <count>
    lane: drive_id=<id> windows=<n> split=<train|val>
    ratio: <float>
    end-header

Records follow lane-major in header order, chronological within a lane.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import attitude as _attitude
from .core import (
    AttitudeSeries,
    Drive,
    FixStream,
    GRAVITY,
    ImuStream,
    SpeedSeries,
    gravity_in_body,
)
from .errors import (
    EmptySeriesError,
    IoFailureError,
    LengthMismatchError,
    MissingTruthError,
    NoLanesError,
    NonUniformRateError,
    TooFewDrivesError,
    TooFewFixesError,
)

WINDOW_LEN = 20
INPUT_CHANNELS = 6


@dataclass(frozen=True)
class LabeledWindow:
    """One training window: x (20, 6) inputs, y (20,) speed labels, validity."""

    x: np.ndarray
    y: np.ndarray
    valid: bool
    drive_id: str
    index: int

    def __post_init__(self):
        object.__setattr__(self, "x", np.ascontiguousarray(self.x, dtype=np.float64))
        object.__setattr__(self, "y", np.ascontiguousarray(self.y, dtype=np.float64))
        if self.x.shape != (WINDOW_LEN, INPUT_CHANNELS) or self.y.shape != (WINDOW_LEN,):
            raise LengthMismatchError("window must be (20, 6) inputs with (20,) labels")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("window values must be finite")
        if not self.valid and (np.any(self.x != 0.0) or np.any(self.y != 0.0)):
            raise ValueError("padding windows must be all-zero")


def padding_window(drive_id: str, index: int) -> LabeledWindow:
    return LabeledWindow(
        x=np.zeros((WINDOW_LEN, INPUT_CHANNELS)),
        y=np.zeros(WINDOW_LEN),
        valid=False,
        drive_id=drive_id,
        index=index,
    )


@dataclass(frozen=True)
class WindowBatch:
    """Windows sharing one timeline step, one per parallel drive lane."""

    windows: tuple[LabeledWindow, ...]
    step: int

    @property
    def lanes(self) -> int:
        return len(self.windows)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pack into (B, 20, 6) inputs, (B, 20) labels, (B,) validity."""
        x = np.stack([w.x for w in self.windows])
        y = np.stack([w.y for w in self.windows])
        valid = np.array([w.valid for w in self.windows], dtype=np.uint8)
        return x, y, valid


@dataclass(frozen=True)
class DatasetSplit:
    """Train and validation lanes; each lane is a chronological window tuple."""

    train: tuple[tuple[LabeledWindow, ...], ...]
    val: tuple[tuple[LabeledWindow, ...], ...]
    ratio: float = 0.85

    @property
    def train_windows(self) -> int:
        return sum(len(lane) for lane in self.train)

    @property
    def val_windows(self) -> int:
        return sum(len(lane) for lane in self.val)


def positions_to_speed(fixes: FixStream) -> SpeedSeries:
    """Differentiate fixes per component and take the norm: 50 Hz speed.

    Central differences at interior points, one-sided at the two endpoints.

    Raises:
        TooFewFixesError: fewer than three fixes.
        NonUniformRateError: spacing deviates more than 10% from 0.02 s.
    """
    n = len(fixes)
    if n < 3:
        raise TooFewFixesError(f"need at least 3 fixes, got {n}")
    dts = np.diff(fixes.t)
    if np.any(np.abs(dts - 0.02) > 0.1 * 0.02):
        raise NonUniformRateError("fix spacing must be 0.02 s within 10%")
    p = fixes.p_nav
    t = fixes.t
    v = np.empty_like(p)
    v[1:-1] = (p[2:] - p[:-2]) / (t[2:] - t[:-2])[:, None]
    v[0] = (p[1] - p[0]) / (t[1] - t[0])
    v[-1] = (p[-1] - p[-2]) / (t[-1] - t[-2])
    return SpeedSeries(t=t.copy(), s=np.hypot(v[:, 0], v[:, 1]))


def upsample_speed(s50: SpeedSeries, n_out: int | None = None) -> SpeedSeries:
    """Linearly interpolate a 50 Hz speed series onto the doubled-rate grid.

    The output grid is ``t0 + k * (dt / 2)``; values at original timestamps are
    preserved exactly. By default the output has ``2 N - 1`` samples; a larger
    ``n_out`` extends the grid holding the final value. Labels are clamped at
    zero after interpolation.

    Raises:
        EmptySeriesError: the input series is empty (never constructible) or
            has a single sample with no spacing to double.
        NonUniformRateError: the input is not uniformly spaced.
    """
    n = len(s50)
    if n < 2:
        raise EmptySeriesError("upsampling needs at least two samples")
    dts = np.diff(s50.t)
    dt = float(np.median(dts))
    if np.any(np.abs(dts - dt) > 0.1 * dt):
        raise NonUniformRateError("speed series must be uniformly spaced")
    if n_out is None:
        n_out = 2 * n - 1
    t_out = np.empty(n_out)
    s_out = np.empty(n_out)
    base = min(n_out, 2 * n - 1)
    n_even = (base + 1) // 2
    t_out[0:base:2] = s50.t[:n_even]
    s_out[0:base:2] = s50.s[:n_even]
    n_odd = base // 2
    t_out[1:base:2] = 0.5 * (s50.t[: n_odd] + s50.t[1 : n_odd + 1])
    s_out[1:base:2] = 0.5 * (s50.s[: n_odd] + s50.s[1 : n_odd + 1])
    if n_out > base:  # extend past the last fix holding its value
        t_out[base:] = s50.t[-1] + 0.5 * dt * np.arange(1, n_out - base + 1)
        s_out[base:] = s50.s[-1]
    return SpeedSeries(t=t_out, s=np.maximum(s_out, 0.0))


def remove_gravity(imu: ImuStream, att: AttitudeSeries, g: float = GRAVITY) -> ImuStream:
    """Subtract gravity from specific force using per-tick attitude.

    Equivalent to rotating to the navigation frame, removing ``(0, 0, g)`` and
    rotating back: ``f_out = f_in - R(att)^T (0, 0, g)``, which only involves
    roll and pitch. Angular-rate channels pass through untouched.

    Raises:
        LengthMismatchError: attitude and IMU lengths differ.
    """
    if len(att) != len(imu):
        raise LengthMismatchError(f"attitude has {len(att)} ticks, imu has {len(imu)}")
    f = imu.f_body - gravity_in_body(att.roll, att.pitch, g)
    return ImuStream(t=imu.t.copy(), f_body=f, omega_body=imu.omega_body.copy())


def make_windows(drive: Drive, labels: SpeedSeries) -> list[LabeledWindow]:
    """Cut a drive into consecutive non-overlapping 20-tick labeled windows.

    ``drive.imu`` is expected gravity-removed and ``labels`` aligned one per
    IMU tick; a trailing remainder shorter than one window is dropped.

    Raises:
        LengthMismatchError: labels and IMU disagree in length or timestamps.
    """
    imu = drive.imu
    if len(labels) != len(imu):
        raise LengthMismatchError(f"{len(labels)} labels for {len(imu)} imu ticks")
    if np.max(np.abs(labels.t - imu.t)) > 1e-6:
        raise LengthMismatchError("label timestamps must match IMU ticks")
    n_windows = len(imu) // WINDOW_LEN
    x_all = np.concatenate([imu.f_body, imu.omega_body], axis=1)
    windows = []
    for k in range(n_windows):
        lo = k * WINDOW_LEN
        hi = lo + WINDOW_LEN
        windows.append(
            LabeledWindow(
                x=x_all[lo:hi].copy(),
                y=labels.s[lo:hi].copy(),
                valid=True,
                drive_id=drive.id,
                index=k,
            )
        )
    return windows


def make_batches(lanes: list[list[LabeledWindow]], batch_lanes: int = 4) -> list[WindowBatch]:
    """Assemble chronological batches, one window per lane per step.

    Lanes shorter than the longest are padded with all-zero invalid windows so
    recurrent state can flow lane-wise through the whole timeline.

    Raises:
        NoLanesError: no lanes were given.
        ValueError: more lanes than ``batch_lanes`` (chunk lanes upstream).
    """
    if len(lanes) == 0:
        raise NoLanesError("batch assembly needs at least one lane")
    if len(lanes) > batch_lanes:
        raise ValueError(f"{len(lanes)} lanes exceed the batch width {batch_lanes}")
    n_steps = max(len(lane) for lane in lanes)
    lane_ids = [lane[-1].drive_id if lane else "" for lane in lanes]
    batches = []
    for k in range(n_steps):
        row = tuple(
            lane[k] if k < len(lane) else padding_window(lane_ids[i], k)
            for i, lane in enumerate(lanes)
        )
        batches.append(WindowBatch(windows=row, step=k))
    return batches


def prepare_drive(drive: Drive, attitude_source: str = "estimator") -> list[LabeledWindow]:
    """Full per-drive pipeline: labels, gravity removal, windowing.

    ``attitude_source`` selects the roll/pitch used for gravity removal:
    ``estimator`` runs the complementary filter, ``truth`` takes the simulator
    attitude (flat road), ``level`` assumes roll = pitch = 0 outright.
    """
    s50 = positions_to_speed(drive.fixes)
    labels = upsample_speed(s50, n_out=len(drive.imu))
    if attitude_source == "estimator":
        psi0 = float(drive.truth.psi[0]) if drive.truth is not None else 0.0
        att = _attitude.estimate_attitude(drive.imu, psi0=psi0)
    elif attitude_source == "truth":
        if drive.truth is None:
            raise MissingTruthError(f"drive {drive.id} has no ground truth attitude")
        att = drive.truth.attitude()
    elif attitude_source == "level":
        att = AttitudeSeries.level(len(drive.imu))
    else:
        raise ValueError(f"unknown attitude source {attitude_source!r}")
    imu_nog = remove_gravity(drive.imu, att)
    return make_windows(replace(drive, imu=imu_nog), labels)


def split_train_val(
    drives: list[Drive],
    ratio: float = 0.85,
    attitude_source: str = "estimator",
) -> DatasetSplit:
    """Assign whole contiguous window spans to train or validation.

    Whole drives are assigned greedily (largest first) while that improves the
    window-count ratio; if the achievable whole-drive ratio leaves the
    [0.80, 0.90] band, one drive is cut at a window boundary so the train span
    is its chronological prefix and the validation span its suffix. No window
    appears on both sides.

    Raises:
        TooFewDrivesError: fewer than two drives.
    """
    if len(drives) < 2:
        raise TooFewDrivesError("need at least two drives to split")
    lanes = [prepare_drive(d, attitude_source=attitude_source) for d in drives]
    counts = np.array([len(lane) for lane in lanes])
    total = int(counts.sum())
    if total == 0:
        raise TooFewDrivesError("no windows in any drive")

    order = sorted(range(len(lanes)), key=lambda i: (-counts[i], i))
    in_train = [False] * len(lanes)
    acc = 0
    for i in order:
        new = acc + counts[i]
        if abs(new / total - ratio) <= abs(acc / total - ratio):
            in_train[i] = True
            acc = int(new)

    cut: dict[int, int] = {}
    if not 0.80 <= acc / total <= 0.90:
        want = int(round(ratio * total))
        if acc > want:  # drop smallest train drives until cutting can top up
            for i in sorted((j for j in range(len(lanes)) if in_train[j]), key=lambda j: counts[j]):
                if acc <= want:
                    break
                in_train[i] = False
                acc -= int(counts[i])
        for i in order:
            if acc >= want:
                break
            if in_train[i]:
                continue
            take = min(int(counts[i]), want - acc)
            if take == counts[i]:
                in_train[i] = True
            else:
                cut[i] = take
            acc += take

    train: list[tuple[LabeledWindow, ...]] = []
    val: list[tuple[LabeledWindow, ...]] = []
    for i, lane in enumerate(lanes):
        if i in cut:
            k = cut[i]
            if k > 0:
                train.append(tuple(lane[:k]))
            if k < len(lane):
                val.append(tuple(lane[k:]))
        elif in_train[i]:
            train.append(tuple(lane))
        else:
            val.append(tuple(lane))
    return DatasetSplit(train=tuple(train), val=tuple(val), ratio=ratio)


_MAGIC = "SPEEDNAV-DATASET v1"
_RECORD = struct.Struct(f"<16sIB{WINDOW_LEN * INPUT_CHANNELS}d{WINDOW_LEN}d")


def _encode_id(drive_id: str) -> bytes:
    raw = drive_id.encode("utf-8")
    if len(raw) > 16:
        raise ValueError(f"drive id {drive_id!r} exceeds 16 bytes")
    return raw.ljust(16, b"\x00")


def save_dataset(split: DatasetSplit, path) -> None:
    """Write a DatasetSplit to the binary dataset file format."""
    lanes = [(lane, "train") for lane in split.train] + [(lane, "val") for lane in split.val]
    header = [_MAGIC]
    header.append(
        "record: drive_id 16s utf-8 nul-padded, index u32le, valid u8, "
        "x 120 f64le (fx fy fz m/s^2, wx wy wz rad/s, per tick, 20 ticks), "
        "y 20 f64le (m/s)"
    )
    header.append(f"lanes: {len(lanes)}")
    for lane, tag in lanes:
        lane_id = lane[0].drive_id if lane else ""
        header.append(f"lane: drive_id={lane_id} windows={len(lane)} split={tag}")
    header.append(f"ratio: {split.ratio!r}")
    header.append("end-header")
    try:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("utf-8"))
            for lane, _tag in lanes:
                for w in lane:
                    fh.write(
                        _RECORD.pack(
                            _encode_id(w.drive_id),
                            w.index,
                            1 if w.valid else 0,
                            *w.x.reshape(-1),
                            *w.y,
                        )
                    )
    except OSError as exc:
        raise IoFailureError(f"cannot write dataset {path}: {exc}") from exc


def load_dataset(path) -> DatasetSplit:
    """Read a dataset file written by :func:`save_dataset`."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read dataset {path}: {exc}") from exc
    marker = b"end-header\n"
    pos = blob.find(marker)
    if pos < 0 or not blob.startswith(_MAGIC.encode()):
        raise IoFailureError(f"{path} is not a dataset file")
    header_lines = blob[:pos].decode("utf-8").splitlines()
    body = blob[pos + len(marker):]
    lane_specs = []
    ratio = 0.85
    for line in header_lines:
        if line.startswith("lane: "):
            fields = dict(item.split("=", 1) for item in line[len("lane: "):].split())
            lane_specs.append((fields["drive_id"], int(fields["windows"]), fields["split"]))
        elif line.startswith("ratio: "):
            ratio = float(line[len("ratio: "):])
    expected = sum(n for _, n, _ in lane_specs) * _RECORD.size
    if len(body) != expected:
        raise IoFailureError(
            f"{path}: expected {expected} record bytes, found {len(body)}"
        )
    train: list[tuple[LabeledWindow, ...]] = []
    val: list[tuple[LabeledWindow, ...]] = []
    off = 0
    for _lane_id, n, tag in lane_specs:
        lane = []
        for _ in range(n):
            rec = _RECORD.unpack_from(body, off)
            off += _RECORD.size
            did = rec[0].rstrip(b"\x00").decode("utf-8")
            x = np.array(rec[3 : 3 + WINDOW_LEN * INPUT_CHANNELS]).reshape(WINDOW_LEN, INPUT_CHANNELS)
            y = np.array(rec[3 + WINDOW_LEN * INPUT_CHANNELS :])
            lane.append(LabeledWindow(x=x, y=y, valid=bool(rec[2]), drive_id=did, index=rec[1]))
        (train if tag == "train" else val).append(tuple(lane))
    return DatasetSplit(train=tuple(train), val=tuple(val), ratio=ratio)
