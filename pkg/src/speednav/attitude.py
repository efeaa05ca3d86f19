"""Roll/pitch complementary filter and gyro heading integration.

Roll and pitch blend gyro propagation (weight ``ALPHA`` per step) with the
accelerometer tilt (weight ``1 - ALPHA``); the gravity direction anchors the
estimate at low frequency while the gyro supplies the dynamics. Heading is
pure gyro integration from a supplied initial value: the accelerometer carries
no heading information on a flat road.

The per-step recursion ``y[k] = ALPHA * (y[k-1] + u_gyro[k] * dt) +
(1 - ALPHA) * tilt[k]`` is a first-order IIR filter, evaluated here with
``scipy.signal.lfilter`` so long streams stay cheap.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .core import AttitudeSeries, ImuStream, wrap_angle
from .errors import EmptyStreamError

ALPHA = 0.98
"""Gyro weight per filter step; accel tilt gets ``1 - ALPHA``."""


def tilt_from_accel(f_body: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Roll and pitch implied by a specific-force reading, valid when quasi-static."""
    f = np.asarray(f_body, dtype=np.float64)
    roll = np.arctan2(f[..., 1], f[..., 2])
    pitch = np.arctan2(f[..., 0], np.hypot(f[..., 1], f[..., 2]))
    return roll, pitch


def _complementary(gyro_term: np.ndarray, tilt: np.ndarray) -> np.ndarray:
    """Run the blend recursion with y[0] = tilt[0]."""
    y0 = tilt[0]
    if tilt.size == 1:
        return np.array([y0])
    x = ALPHA * gyro_term[1:] + (1.0 - ALPHA) * tilt[1:]
    y, _ = lfilter([1.0], [1.0, -ALPHA], x, zi=np.array([ALPHA * y0]))
    return np.concatenate(([y0], y))


def estimate_attitude(imu: ImuStream, psi0: float = 0.0) -> AttitudeSeries:
    """Estimate per-tick roll, pitch and heading for an IMU stream.

    Roll/pitch start from the first accelerometer tilt and then follow the
    complementary filter. Heading integrates the z gyro (trapezoidal rule)
    from ``psi0``. All angles are wrapped to ``(-pi, pi]``.

    Raises:
        EmptyStreamError: the stream has no samples.
    """
    n = len(imu)
    if n == 0:
        raise EmptyStreamError("attitude estimation needs at least one sample")
    dt = np.empty(n)
    dt[0] = 0.0
    dt[1:] = np.diff(imu.t)

    tilt_roll, tilt_pitch = tilt_from_accel(imu.f_body)
    roll = _complementary(imu.omega_body[:, 0] * dt, tilt_roll)
    pitch = _complementary(-imu.omega_body[:, 1] * dt, tilt_pitch)

    wz = imu.omega_body[:, 2]
    psi = np.empty(n)
    psi[0] = psi0
    if n > 1:
        psi[1:] = psi0 + np.cumsum(0.5 * (wz[1:] + wz[:-1]) * dt[1:])
    return AttitudeSeries(roll=wrap_angle(roll), pitch=wrap_angle(pitch), psi=wrap_angle(psi))
