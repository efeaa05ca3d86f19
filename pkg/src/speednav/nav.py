"""2-D dead-reckoning navigator with pluggable speed sources.

Position integrates the planar kinematics ``p[k] = p[k-1] + dt * s[k] *
(cos psi[k], sin psi[k])`` on the 100 Hz IMU grid. Heading always comes from
integrating the z gyro from the initial heading; the complementary filter
stabilizes only roll and pitch, which feed gravity removal and the
body-to-navigation rotation.

Speed sources:

* ``truth`` — the simulator's per-tick speed (requires ground truth).
* ``integrated`` — trapezoidal integration of the gravity-removed specific
  force rotated to the navigation frame (the divergent plain-DR baseline).
* ``model`` — the trained regressor, streamed over 20-tick windows. The value
  fed to the integrator is piecewise-constant per 0.2 s emission: during
  window ``w`` the navigator uses the last prediction of window ``w - 1``
  (zero during the first window), honoring the predictor's latency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attitude import estimate_attitude
from .core import (
    AttitudeSeries,
    Drive,
    ImuStream,
    Pose2D,
    SpeedSeries,
    Trajectory,
    rotation_body_to_nav,
    wrap_angle,
)
from .errors import (
    LengthMismatchError,
    MissingTruthError,
    NegativeSpeedError,
    NonPositiveDtError,
    SpanMismatchError,
    StreamTooShortError,
)
from .model.network import SpeedModel, predict_stream
from .pipeline import remove_gravity


@dataclass(frozen=True)
class SpeedSource:
    """Which speed feeds the dead-reckoning integrator."""

    kind: str
    model: Optional[SpeedModel] = None

    def __post_init__(self):
        if self.kind not in ("model", "integrated", "truth"):
            raise ValueError(f"unknown speed source {self.kind!r}")
        if self.kind == "model" and self.model is None:
            raise ValueError("model speed source needs a SpeedModel")

    @classmethod
    def from_model(cls, model: SpeedModel) -> "SpeedSource":
        return cls(kind="model", model=model)

    @classmethod
    def integrated(cls) -> "SpeedSource":
        return cls(kind="integrated")

    @classmethod
    def truth(cls) -> "SpeedSource":
        return cls(kind="truth")


@dataclass(frozen=True)
class NavSolution:
    """Per-tick navigation output: pose plus the speed the integrator used."""

    t: np.ndarray
    p: np.ndarray
    psi: np.ndarray
    speed: np.ndarray

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class ErrorSeries:
    """Per-tick Euclidean distance to ground truth, meters."""

    t: np.ndarray
    err: np.ndarray


@dataclass(frozen=True)
class ErrorSummary:
    """Headline position errors: maximum, at 60 s after start, at the end."""

    max: float
    at_60s: float
    at_end: float


def dr_step(pose: Pose2D, s: float, psi: float, dt: float) -> Pose2D:
    """One dead-reckoning step: advance by ``dt * s`` along heading ``psi``.

    Raises:
        NegativeSpeedError / NonPositiveDtError: invalid inputs.
    """
    if s < 0.0:
        raise NegativeSpeedError(f"speed {s} must be non-negative")
    if not dt > 0.0:
        raise NonPositiveDtError(f"dt {dt} must be positive")
    p = pose.p_nav + dt * s * np.array([np.cos(psi), np.sin(psi)])
    return Pose2D(p_nav=p, psi=psi)


def integrate_acceleration_speed(imu: ImuStream, att: AttitudeSeries) -> SpeedSeries:
    """Speed from direct integration of gravity-removed specific force.

    Rotates each sample to the navigation frame, integrates the horizontal
    components with the trapezoidal rule from ``v(0) = 0``, and returns the
    norm of the resulting velocity.

    Raises:
        LengthMismatchError: attitude and IMU lengths differ.
    """
    if len(att) != len(imu):
        raise LengthMismatchError(f"attitude has {len(att)} ticks, imu has {len(imu)}")
    rot = rotation_body_to_nav(att.roll, att.pitch, att.psi)
    a_nav = np.einsum("nij,nj->ni", rot, imu.f_body)[:, :2]
    v = np.zeros_like(a_nav)
    if len(imu) > 1:
        dt = np.diff(imu.t)[:, None]
        v[1:] = np.cumsum(0.5 * (a_nav[1:] + a_nav[:-1]) * dt, axis=0)
    return SpeedSeries(t=imu.t.copy(), s=np.hypot(v[:, 0], v[:, 1]))


def _model_speed_used(pred: np.ndarray, n: int, window_len: int) -> np.ndarray:
    """Piecewise-constant consumption of windowed emissions (see module doc)."""
    used = np.zeros(n)
    n_windows = pred.shape[0] // window_len
    for w in range(1, n_windows):
        used[w * window_len : (w + 1) * window_len] = pred[w * window_len - 1]
    if n > n_windows * window_len and n_windows > 0:
        used[n_windows * window_len :] = pred[n_windows * window_len - 1]
    return used


def run_dr(
    drive: Drive,
    source: SpeedSource,
    psi0: float | None = None,
    p0: np.ndarray | None = None,
    attitude_source: str = "estimator",
) -> NavSolution:
    """Navigate a drive by dead reckoning with the chosen speed source.

    ``psi0`` and ``p0`` default to the ground truth at the first tick when the
    drive carries truth (otherwise zero). ``attitude_source`` selects the
    roll/pitch fed to gravity removal: ``estimator`` (complementary filter) or
    ``level`` (flat-road prior); heading is gyro-integrated either way.

    Raises:
        MissingTruthError: truth speed requested but the drive has none.
        StreamTooShortError: model source on a stream shorter than one window.
    """
    imu = drive.imu
    n = len(imu)
    if psi0 is None:
        psi0 = float(drive.truth.psi[0]) if drive.truth is not None else 0.0
    if p0 is None:
        p0 = drive.truth.p[0].copy() if drive.truth is not None else np.zeros(2)
    p0 = np.asarray(p0, dtype=np.float64).reshape(2)

    est = estimate_attitude(imu, psi0=psi0)
    if attitude_source == "estimator":
        att = est
    elif attitude_source == "level":
        att = AttitudeSeries.level(n, psi=est.psi)
    else:
        raise ValueError(f"unknown attitude source {attitude_source!r}")
    psi = att.psi

    if source.kind == "truth":
        if drive.truth is None:
            raise MissingTruthError(f"drive {drive.id} carries no ground truth")
        speed = np.maximum(drive.truth.s, 0.0)
    elif source.kind == "integrated":
        nog = remove_gravity(imu, att)
        speed = integrate_acceleration_speed(nog, att).s
    else:
        nog = remove_gravity(imu, att)
        window_len = source.model.config.window_len
        if n < window_len:
            raise StreamTooShortError(f"{n} ticks < one {window_len}-tick window")
        pred = predict_stream(source.model, nog)
        speed = _model_speed_used(pred.s, n, window_len)

    p = np.empty((n, 2))
    p[0] = p0
    if n > 1:
        dt = np.diff(imu.t)
        steps = (dt * speed[1:])[:, None] * np.stack([np.cos(psi[1:]), np.sin(psi[1:])], axis=1)
        p[1:] = p0 + np.cumsum(steps, axis=0)
    return NavSolution(t=imu.t.copy(), p=p, psi=wrap_angle(psi), speed=speed)


def position_error(sol: NavSolution, truth: Trajectory) -> tuple[ErrorSeries, ErrorSummary]:
    """Per-tick distance between a solution and ground truth, with summary.

    The summary reports the maximum error, the error 60 s after the start
    (or at the end for shorter runs) and the final error.

    Raises:
        SpanMismatchError: truth does not cover the solution's time span.
    """
    if truth.t[0] > sol.t[0] + 1e-9 or truth.t[-1] < sol.t[-1] - 1e-9:
        raise SpanMismatchError("ground truth does not cover the solution span")
    tx = np.interp(sol.t, truth.t, truth.p[:, 0])
    ty = np.interp(sol.t, truth.t, truth.p[:, 1])
    err = np.hypot(sol.p[:, 0] - tx, sol.p[:, 1] - ty)
    horizon = sol.t[0] + 60.0
    i60 = int(np.searchsorted(sol.t, horizon + 1e-9)) - 1
    i60 = max(0, min(i60, len(err) - 1))
    summary = ErrorSummary(
        max=float(err.max()), at_60s=float(err[i60]), at_end=float(err[-1])
    )
    return ErrorSeries(t=sol.t.copy(), err=err), summary


def segment_rmse(
    pred: SpeedSeries, truth: SpeedSeries, boundaries: list[float]
) -> list[tuple[float, float, float]]:
    """Speed RMSE per time segment delimited by the given boundaries.

    Segments are ``[t0, b1), [b1, b2), ..., [bk, t_end]``. Truth is
    interpolated onto the prediction grid.

    Raises:
        SpanMismatchError: truth does not cover the predictions, or the
            boundaries are not increasing inside the span.
    """
    if truth.t[0] > pred.t[0] + 1e-9 or truth.t[-1] < pred.t[-1] - 1e-9:
        raise SpanMismatchError("truth speed does not cover the prediction span")
    bounds = [float(b) for b in boundaries]
    edges = [float(pred.t[0])] + bounds + [float(pred.t[-1])]
    if any(b2 <= b1 for b1, b2 in zip(edges, edges[1:])):
        raise SpanMismatchError("boundaries must be increasing and inside the span")
    s_true = np.interp(pred.t, truth.t, truth.s)
    out = []
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        if i == len(edges) - 2:
            mask = (pred.t >= lo) & (pred.t <= hi + 1e-9)
        else:
            mask = (pred.t >= lo) & (pred.t < hi)
        err = pred.s[mask] - s_true[mask]
        out.append((lo, hi, float(np.sqrt(np.mean(err * err)))))
    return out
