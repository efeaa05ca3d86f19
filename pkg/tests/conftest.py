import os

os.environ.setdefault("MPLBACKEND", "Agg")

import numpy as np
import pytest

from speednav.core import GRAVITY, FixStream, ImuStream
from speednav.simulate import (
    DriveProfile,
    ImuNoiseModel,
    RtkNoiseModel,
    Segment,
    gen_trajectory,
    trajectory_to_fixes,
    trajectory_to_imu,
)
from speednav.core import align_streams


def quiet_imu() -> ImuNoiseModel:
    return ImuNoiseModel()


def stationary_imu(duration: float = 10.0, dt: float = 0.01, f=None, w=None) -> ImuStream:
    """A stationary, level IMU stream with constant readings."""
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    f_body = np.tile(np.array([0.0, 0.0, GRAVITY]) if f is None else np.asarray(f, float), (n, 1))
    omega = np.tile(np.zeros(3) if w is None else np.asarray(w, float), (n, 1))
    return ImuStream(t=t, f_body=f_body, omega_body=omega)


@pytest.fixture
def city_profile() -> DriveProfile:
    """A short hand-built drive touching every segment kind."""
    return DriveProfile(
        segments=(
            Segment("stop", 4.0),
            Segment("straight", 12.0, 10.0),
            Segment("arc", 8.0, 6.0, 20.0),
            Segment("straight", 10.0, 12.0),
            Segment("arc", 6.0, 5.0, -15.0),
            Segment("stop", 6.0),
        ),
        seed=0,
    )


def make_drive(profile: DriveProfile, imu_noise=None, rtk_noise=None, drive_id="test"):
    truth = gen_trajectory(profile)
    imu = trajectory_to_imu(truth, imu_noise or ImuNoiseModel())
    fixes = trajectory_to_fixes(truth, rtk_noise or RtkNoiseModel(position_std=0.0))
    return align_streams(imu, fixes, drive_id=drive_id, truth=truth)
