"""Learn car speed from IMU windows and use it for 2-D dead reckoning.

Subpackages and modules:

* ``core`` — shared domain types, frame conventions, stream alignment.
* ``simulate`` — synthetic urban drives: truth, noisy IMU, RTK fixes.
* ``pipeline`` — speed labels, gravity removal, windows, batches, splits.
* ``model`` — the recurrent regressor, its kernels and training loop.
* ``attitude`` / ``nav`` — attitude estimation and dead reckoning.
* ``config`` / ``cli`` / ``datafiles`` — operator surface and file formats.
"""

__version__ = "0.1.0"

from .core import (
    AttitudeSeries,
    AttitudeState,
    Drive,
    FixStream,
    GnssFix,
    GRAVITY,
    ImuSample,
    ImuStream,
    Pose2D,
    SpeedSeries,
    Trajectory,
    align_streams,
    wrap_angle,
)

__all__ = [
    "__version__",
    "AttitudeSeries",
    "AttitudeState",
    "Drive",
    "FixStream",
    "GnssFix",
    "GRAVITY",
    "ImuSample",
    "ImuStream",
    "Pose2D",
    "SpeedSeries",
    "Trajectory",
    "align_streams",
    "wrap_angle",
]
