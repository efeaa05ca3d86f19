"""Shared domain types and clock alignment for heterogeneous-rate sensor streams.

Frame conventions used throughout the package:

* Navigation frame: local planar East-North (x east, y north, z up), origin at
  the drive's first position fix. All navigation is done on this flat plane.
* Body frame: x forward, y left, z up. Accelerometers measure specific force,
  so a stationary, level sensor reads ``(0, 0, +g)`` with g = 9.80665 m/s^2.
* Heading ``psi`` is the angle of the body x-axis from navigation x (east),
  counter-clockwise positive, wrapped to ``(-pi, pi]``.
* All timestamps are float64 seconds on a single drive clock.

Types are plain frozen dataclasses holding numpy arrays; treat them as
immutable value data after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    EmptyStreamError,
    GapTooLargeError,
    LengthMismatchError,
    NonFiniteError,
    NonMonotonicTimeError,
)

GRAVITY = 9.80665
"""Standard gravity, m/s^2; sign convention per the module docstring."""

IMU_DT = 0.01
"""Nominal IMU sample period (100 Hz), seconds."""

FIX_DT = 0.02
"""Nominal position-fix period (50 Hz), seconds."""

MAX_GAP_PERIODS = 5
"""A stream gap longer than this many nominal periods is a dropout error."""

_TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array, radians) to the interval ``(-pi, pi]``.

    Raises:
        NonFiniteError: if any input value is NaN or infinite.
    """
    arr = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("angle must be finite")
    wrapped = np.mod(arr, _TWO_PI)  # [0, 2*pi)
    wrapped = np.where(wrapped > np.pi, wrapped - _TWO_PI, wrapped)
    if arr.ndim == 0:
        return float(wrapped)
    return wrapped


def rotation_body_to_nav(roll, pitch, psi) -> np.ndarray:
    """Rotation matrix (or stack of matrices) taking body vectors to navigation.

    Built as ``Rz(psi) @ Ry(-pitch) @ Rx(roll)`` so that a nose-up pitch tips
    the body x-axis toward navigation z. Scalar inputs give a (3, 3) array,
    length-N inputs give (N, 3, 3).
    """
    roll = np.asarray(roll, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    cphi, sphi = np.cos(roll), np.sin(roll)
    cth, sth = np.cos(pitch), np.sin(pitch)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    out = np.empty(np.broadcast(roll, pitch, psi).shape + (3, 3), dtype=np.float64)
    out[..., 0, 0] = cpsi * cth
    out[..., 0, 1] = -cpsi * sth * sphi - spsi * cphi
    out[..., 0, 2] = -cpsi * sth * cphi + spsi * sphi
    out[..., 1, 0] = spsi * cth
    out[..., 1, 1] = -spsi * sth * sphi + cpsi * cphi
    out[..., 1, 2] = -spsi * sth * cphi - cpsi * sphi
    out[..., 2, 0] = sth
    out[..., 2, 1] = cth * sphi
    out[..., 2, 2] = cth * cphi
    return out


def gravity_in_body(roll, pitch, g: float = GRAVITY) -> np.ndarray:
    """Gravity reaction ``R^T (0, 0, g)`` expressed in the body frame.

    This is what a stationary accelerometer reads at the given attitude;
    heading does not enter. Scalar inputs give (3,), arrays give (N, 3).
    """
    roll = np.asarray(roll, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    out = np.empty(np.broadcast(roll, pitch).shape + (3,), dtype=np.float64)
    out[..., 0] = g * np.sin(pitch)
    out[..., 1] = g * np.cos(pitch) * np.sin(roll)
    out[..., 2] = g * np.cos(pitch) * np.cos(roll)
    return out


def _check_times(t: np.ndarray, what: str) -> None:
    if t.size == 0:
        raise EmptyStreamError(f"{what}: empty stream")
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{what}: non-finite timestamp")
    if t.size > 1 and not np.all(np.diff(t) > 0.0):
        raise NonMonotonicTimeError(f"{what}: timestamps must be strictly increasing")


@dataclass(frozen=True)
class ImuSample:
    """One inertial reading: specific force (m/s^2) and angular rate (rad/s)."""

    t: float
    f_body: np.ndarray
    omega_body: np.ndarray


@dataclass(frozen=True)
class GnssFix:
    """One planar position fix in the navigation frame, meters."""

    t: float
    p_nav: np.ndarray


@dataclass(frozen=True)
class ImuStream:
    """A 100 Hz inertial stream: t (N,), f_body (N, 3), omega_body (N, 3)."""

    t: np.ndarray
    f_body: np.ndarray
    omega_body: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.ascontiguousarray(self.t, dtype=np.float64))
        object.__setattr__(self, "f_body", np.ascontiguousarray(self.f_body, dtype=np.float64))
        object.__setattr__(self, "omega_body", np.ascontiguousarray(self.omega_body, dtype=np.float64))
        _check_times(self.t, "imu")
        n = self.t.shape[0]
        if self.f_body.shape != (n, 3) or self.omega_body.shape != (n, 3):
            raise LengthMismatchError("imu: f_body and omega_body must be (N, 3)")
        if not (np.all(np.isfinite(self.f_body)) and np.all(np.isfinite(self.omega_body))):
            raise NonFiniteError("imu: non-finite sample")

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.f_body[i].copy(), self.omega_body[i].copy())

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


@dataclass(frozen=True)
class FixStream:
    """A 50 Hz position-fix stream: t (N,), p_nav (N, 2)."""

    t: np.ndarray
    p_nav: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.ascontiguousarray(self.t, dtype=np.float64))
        object.__setattr__(self, "p_nav", np.ascontiguousarray(self.p_nav, dtype=np.float64))
        _check_times(self.t, "fixes")
        if self.p_nav.shape != (self.t.shape[0], 2):
            raise LengthMismatchError("fixes: p_nav must be (N, 2)")
        if not np.all(np.isfinite(self.p_nav)):
            raise NonFiniteError("fixes: non-finite position")

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> GnssFix:
        return GnssFix(float(self.t[i]), self.p_nav[i].copy())

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position (2,) meters and heading psi wrapped to (-pi, pi]."""

    p_nav: np.ndarray
    psi: float

    def __post_init__(self):
        object.__setattr__(self, "p_nav", np.asarray(self.p_nav, dtype=np.float64).reshape(2).copy())
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))


@dataclass(frozen=True)
class AttitudeState:
    """Roll, pitch, heading in radians; heading wrapped to (-pi, pi]."""

    roll: float
    pitch: float
    psi: float

    def __post_init__(self):
        for name in ("roll", "pitch", "psi"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise NonFiniteError(f"attitude {name} must be finite")
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))


@dataclass(frozen=True)
class AttitudeSeries:
    """Per-tick attitude: roll, pitch, psi arrays of equal length (radians)."""

    roll: np.ndarray
    pitch: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        for name in ("roll", "pitch", "psi"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        n = self.roll.shape[0]
        if self.pitch.shape != (n,) or self.psi.shape != (n,):
            raise LengthMismatchError("attitude series components must share length")

    def __len__(self) -> int:
        return self.roll.shape[0]

    def __getitem__(self, i: int) -> AttitudeState:
        return AttitudeState(float(self.roll[i]), float(self.pitch[i]), float(self.psi[i]))

    @classmethod
    def level(cls, n: int, psi=None) -> "AttitudeSeries":
        """Flat-road attitude: roll = pitch = 0, optional heading series."""
        z = np.zeros(n)
        return cls(z, z.copy(), z.copy() if psi is None else np.asarray(psi, dtype=np.float64))


@dataclass(frozen=True)
class SpeedSeries:
    """Scalar speed samples, m/s, non-negative, one per timestamp."""

    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.ascontiguousarray(self.t, dtype=np.float64))
        object.__setattr__(self, "s", np.ascontiguousarray(self.s, dtype=np.float64))
        if self.s.shape != self.t.shape:
            raise LengthMismatchError("speed series: t and s must share length")
        _check_times(self.t, "speed series")
        if not np.all(np.isfinite(self.s)):
            raise NonFiniteError("speed series: non-finite value")
        if np.any(self.s < 0.0):
            raise ValueError("speed series: speed must be non-negative")

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Ground-truth trajectory on a uniform tick grid.

    Per tick: position p (N, 2), heading psi, speed s, speed rate sdot and
    heading rate psidot. Heading is wrapped to (-pi, pi].
    """

    t: np.ndarray
    p: np.ndarray
    psi: np.ndarray
    s: np.ndarray
    sdot: np.ndarray
    psidot: np.ndarray

    def __post_init__(self):
        for name in ("t", "p", "psi", "s", "sdot", "psidot"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        n = self.t.shape[0]
        _check_times(self.t, "trajectory")
        if self.p.shape != (n, 2):
            raise LengthMismatchError("trajectory: p must be (N, 2)")
        for name in ("psi", "s", "sdot", "psidot"):
            if getattr(self, name).shape != (n,):
                raise LengthMismatchError(f"trajectory: {name} must be (N,)")
        if np.any(self.s < -1e-12):
            raise ValueError("trajectory: speed must be non-negative")

    def __len__(self) -> int:
        return self.t.shape[0]

    def pose(self, i: int) -> Pose2D:
        return Pose2D(self.p[i], float(self.psi[i]))

    def attitude(self) -> AttitudeSeries:
        """Flat-road true attitude: roll = pitch = 0, heading from the path."""
        return AttitudeSeries.level(len(self), psi=self.psi)

    def speed_series(self) -> SpeedSeries:
        return SpeedSeries(self.t, np.maximum(self.s, 0.0))


@dataclass(frozen=True)
class Drive:
    """A time-aligned recording: IMU stream, fix stream, optional ground truth."""

    id: str
    imu: ImuStream
    fixes: FixStream
    truth: Optional[Trajectory] = None
    duration: float = 0.0
    warnings: tuple[str, ...] = field(default_factory=tuple)


def _check_gaps(t: np.ndarray, nominal_dt: float, what: str) -> None:
    if t.size < 2:
        return
    gaps = np.diff(t)
    limit = MAX_GAP_PERIODS * nominal_dt * (1.0 + 1e-9)
    worst = int(np.argmax(gaps))
    if gaps[worst] > limit:
        raise GapTooLargeError(
            f"{what}: gap of {gaps[worst]:.4f} s at t={t[worst]:.3f} s exceeds "
            f"{MAX_GAP_PERIODS} nominal periods ({limit:.4f} s); sensor dropout"
        )


def align_streams(
    imu: ImuStream,
    fixes: FixStream,
    drive_id: str = "drive",
    truth: Optional[Trajectory] = None,
) -> Drive:
    """Combine an IMU stream and a fix stream into a Drive on a shared clock.

    Fixes outside the IMU time span are dropped so that every fix timestamp
    lies within ``[imu.t[0], imu.t[-1]]``. Gaps longer than five nominal
    periods in either stream are rejected as sensor dropouts. If the surviving
    fixes do not cover the IMU span a warning flag is recorded on the drive.

    Raises:
        EmptyStreamError: a stream is empty, or no fix falls inside the IMU span.
        NonMonotonicTimeError: timestamps are not strictly increasing.
        GapTooLargeError: dropout beyond tolerance in either stream.
    """
    _check_gaps(imu.t, IMU_DT, "imu")
    _check_gaps(fixes.t, FIX_DT, "fixes")
    t0, t1 = imu.span
    keep = (fixes.t >= t0) & (fixes.t <= t1)
    if not np.any(keep):
        raise EmptyStreamError("no fix falls within the IMU time span")
    clipped = FixStream(fixes.t[keep], fixes.p_nav[keep])
    warnings: list[str] = []
    if not np.all(keep):
        warnings.append(f"dropped {int((~keep).sum())} fixes outside the IMU span")
    f0, f1 = clipped.span
    if f0 - t0 > FIX_DT * (1.0 + 1e-9) or t1 - f1 > FIX_DT * (1.0 + 1e-9):
        warnings.append(
            f"fixes cover [{f0:.3f}, {f1:.3f}] s of the IMU span [{t0:.3f}, {t1:.3f}] s"
        )
    return Drive(
        id=drive_id,
        imu=imu,
        fixes=clipped,
        truth=truth,
        duration=t1 - t0,
        warnings=tuple(warnings),
    )
