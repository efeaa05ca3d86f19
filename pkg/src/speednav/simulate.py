"""Synthetic urban drive generation.

Produces ground-truth trajectories from segment profiles (straights, arcs,
stops), then renders them into noisy 100 Hz IMU streams and 50 Hz RTK-grade
position fixes. Roads are flat (roll = pitch = 0); on an arc the path is a
circle of the segment radius regardless of the speed profile, which keeps
every segment's position integral in closed form.

Speed follows trapezoidal ramps: each segment after the first ramps from the
previous segment's target to its own at the maximum rate ``A_MAX`` and then
holds. The first segment starts at its own target (a profile that should start
from rest begins with a stop segment).

Per-tick speed-rate and heading-rate samples that land exactly on a phase
boundary take the mean of the two one-sided values, so trapezoidal integration
of the ideal signals reproduces the truth without kink error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GRAVITY, FixStream, ImuStream, Trajectory, wrap_angle
from .errors import InfeasibleProfileError

A_MAX = 3.0
"""Maximum speed-ramp magnitude, m/s^2 (typical city driving bound)."""

MAX_SPEED = 25.0
"""Upper bound on profile target speeds, m/s."""

SEGMENT_KINDS = ("straight", "arc", "stop")


@dataclass(frozen=True)
class Segment:
    """One profile piece: kind, duration (s), target speed (m/s), arc radius (m).

    Radius is signed: positive turns left (counter-clockwise). Stops force a
    zero target speed and travel straight while decelerating.
    """

    kind: str
    duration: float
    speed: float = 0.0
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.duration > 0.0:
            raise ValueError("segment duration must be positive")
        if self.kind == "stop":
            object.__setattr__(self, "speed", 0.0)
        if not 0.0 <= self.speed <= MAX_SPEED:
            raise ValueError(f"segment speed must be in [0, {MAX_SPEED}] m/s")
        if self.kind == "arc" and self.radius == 0.0:
            raise ValueError("arc segments need a non-zero radius")


@dataclass(frozen=True)
class DriveProfile:
    """A drive as a list of segments plus the tick period and a seed."""

    segments: tuple[Segment, ...]
    seed: int = 0
    dt: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("profile needs at least one segment")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")

    @property
    def duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))


@dataclass(frozen=True)
class ImuNoiseModel:
    """Additive IMU corruption: constant biases, white noise, vibration bursts.

    ``vibration_windows`` is a tuple of ``(t_start, t_end, extra_std)`` triples;
    inside each window independent white noise of the extra standard deviation
    is added to all three accelerometer axes (rough-road model).
    """

    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_noise_std: float = 0.0
    gyro_noise_std: float = 0.0
    vibration_windows: tuple[tuple[float, float, float], ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "accel_bias", np.asarray(self.accel_bias, dtype=np.float64).reshape(3))
        object.__setattr__(self, "gyro_bias", np.asarray(self.gyro_bias, dtype=np.float64).reshape(3))
        if self.accel_noise_std < 0.0 or self.gyro_noise_std < 0.0:
            raise ValueError("noise standard deviations must be non-negative")
        for t0, t1, std in self.vibration_windows:
            if not t1 > t0:
                raise ValueError("vibration window must have t_end > t_start")
            if std < 0.0:
                raise ValueError("vibration std must be non-negative")


@dataclass(frozen=True)
class RtkNoiseModel:
    """Per-axis i.i.d. Gaussian position noise, meters."""

    position_std: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.position_std < 0.0:
            raise ValueError("position std must be non-negative")


@dataclass(frozen=True)
class _Phase:
    kind: str  # "straight" or "arc"
    t0: float
    dur: float
    s0: float
    a: float
    r: float
    p0: np.ndarray
    psi0: float


def _phase_end_state(ph: _Phase) -> tuple[np.ndarray, float, float]:
    """Closed-form (position, heading, speed) at the end of a phase."""
    tau = ph.dur
    dist = ph.s0 * tau + 0.5 * ph.a * tau * tau
    s_end = ph.s0 + ph.a * tau
    if ph.kind == "arc":
        psi_end = ph.psi0 + dist / ph.r
        p_end = ph.p0 + ph.r * np.array(
            [math.sin(psi_end) - math.sin(ph.psi0), -(math.cos(psi_end) - math.cos(ph.psi0))]
        )
    else:
        psi_end = ph.psi0
        p_end = ph.p0 + dist * np.array([math.cos(ph.psi0), math.sin(ph.psi0)])
    return p_end, psi_end, s_end


def _build_phases(profile: DriveProfile) -> list[_Phase]:
    phases: list[_Phase] = []
    t = 0.0
    p = np.zeros(2)
    psi = 0.0
    speed = profile.segments[0].speed  # first segment starts at its own target
    for i, seg in enumerate(profile.segments):
        path_kind = "arc" if seg.kind == "arc" else "straight"
        target = seg.speed
        ramp_t = abs(target - speed) / A_MAX
        if ramp_t > seg.duration + 1e-9:
            raise InfeasibleProfileError(
                f"segment {i}: speed change {speed:.2f} -> {target:.2f} m/s "
                f"needs {ramp_t:.2f} s but the segment lasts {seg.duration:.2f} s"
            )
        if ramp_t > 1e-12:
            a = math.copysign(A_MAX, target - speed)
            ph = _Phase(path_kind, t, ramp_t, speed, a, seg.radius, p, psi)
            phases.append(ph)
            p, psi, speed = _phase_end_state(ph)
            t += ramp_t
        hold = seg.duration - ramp_t
        if hold > 1e-12:
            ph = _Phase(path_kind, t, hold, target, 0.0, seg.radius, p, psi)
            phases.append(ph)
            p, psi, speed = _phase_end_state(ph)
            t += hold
    return phases


def gen_trajectory(profile: DriveProfile) -> Trajectory:
    """Generate the ground-truth trajectory of a profile on the tick grid.

    Positions integrate the velocity exactly (closed form per phase). The grid
    is ``k * dt`` for ``k = 0 .. round(duration / dt)``; evaluation times past
    the profile end (at most half a tick) are clamped to the final state.

    Raises:
        InfeasibleProfileError: a segment demands a faster ramp than A_MAX allows.
    """
    phases = _build_phases(profile)
    total = profile.duration
    dt = profile.dt
    n = int(round(total / dt))
    t = np.arange(n + 1, dtype=np.float64) * dt

    starts = np.array([ph.t0 for ph in phases])
    idx = np.searchsorted(starts, t + 1e-9, side="right") - 1
    idx = np.clip(idx, 0, len(phases) - 1)

    p = np.empty((n + 1, 2))
    psi = np.empty(n + 1)
    s = np.empty(n + 1)
    sdot = np.empty(n + 1)
    psidot = np.empty(n + 1)

    for j, ph in enumerate(phases):
        sel = idx == j
        if not np.any(sel):
            continue
        tau = np.clip(t[sel] - ph.t0, 0.0, ph.dur)
        dist = ph.s0 * tau + 0.5 * ph.a * tau * tau
        sj = ph.s0 + ph.a * tau
        s[sel] = sj
        sdot[sel] = ph.a
        if ph.kind == "arc":
            psij = ph.psi0 + dist / ph.r
            psi[sel] = psij
            psidot[sel] = sj / ph.r
            p[sel, 0] = ph.p0[0] + ph.r * (np.sin(psij) - math.sin(ph.psi0))
            p[sel, 1] = ph.p0[1] - ph.r * (np.cos(psij) - math.cos(ph.psi0))
        else:
            psi[sel] = ph.psi0
            psidot[sel] = 0.0
            p[sel, 0] = ph.p0[0] + dist * math.cos(ph.psi0)
            p[sel, 1] = ph.p0[1] + dist * math.sin(ph.psi0)

    # Ticks that sit exactly on a phase boundary carry the mean of the two
    # one-sided rate values; see the module docstring.
    for j in range(1, len(phases)):
        b = phases[j].t0
        k = int(round(b / dt))
        if 0 <= k <= n and abs(t[k] - b) < 1e-9:
            prev = phases[j - 1]
            s_end = prev.s0 + prev.a * prev.dur
            prev_psidot = s_end / prev.r if prev.kind == "arc" else 0.0
            cur = phases[j]
            cur_psidot = cur.s0 / cur.r if cur.kind == "arc" else 0.0
            sdot[k] = 0.5 * (prev.a + cur.a)
            psidot[k] = 0.5 * (prev_psidot + cur_psidot)

    s = np.maximum(s, 0.0)  # guard sub-eps negatives at ramp ends
    return Trajectory(t=t, p=p, psi=wrap_angle(psi), s=s, sdot=sdot, psidot=psidot)


def _check_uniform_grid(t: np.ndarray, what: str) -> float:
    if t.size < 2:
        raise ValueError(f"{what}: need at least two ticks")
    dts = np.diff(t)
    dt = float(np.median(dts))
    if np.any(np.abs(dts - dt) > 1e-9):
        raise ValueError(f"{what}: trajectory must be on a uniform tick grid")
    return dt


def trajectory_to_imu(truth: Trajectory, noise: ImuNoiseModel) -> ImuStream:
    """Render ideal flat-road IMU signals from truth and corrupt them.

    Ideal body-frame signals are ``f = (sdot, s * psidot, g)`` and
    ``omega = (0, 0, psidot)``. Bias is added, then white noise, then vibration
    bursts; the draw order is fixed so outputs are deterministic per seed.
    """
    _check_uniform_grid(truth.t, "imu render")
    n = len(truth)
    f = np.empty((n, 3))
    f[:, 0] = truth.sdot
    f[:, 1] = truth.s * truth.psidot
    f[:, 2] = GRAVITY
    w = np.zeros((n, 3))
    w[:, 2] = truth.psidot

    span0, span1 = float(truth.t[0]), float(truth.t[-1])
    for t0, t1, _std in noise.vibration_windows:
        if t0 < span0 - 1e-9 or t1 > span1 + 1e-9:
            raise ValueError(
                f"vibration window [{t0}, {t1}] s lies outside the drive span "
                f"[{span0}, {span1}] s"
            )

    rng = np.random.default_rng(noise.seed)
    f += noise.accel_bias
    w += noise.gyro_bias
    f += rng.normal(0.0, noise.accel_noise_std, (n, 3))
    for t0, t1, std in noise.vibration_windows:
        mask = (truth.t >= t0) & (truth.t < t1)
        cnt = int(mask.sum())
        if cnt:
            f[mask] += rng.normal(0.0, std, (cnt, 3))
    w += rng.normal(0.0, noise.gyro_noise_std, (n, 3))
    return ImuStream(t=truth.t.copy(), f_body=f, omega_body=w)


def trajectory_to_fixes(truth: Trajectory, noise: RtkNoiseModel) -> FixStream:
    """Sample every second truth position (100 Hz -> 50 Hz) and add RTK noise."""
    _check_uniform_grid(truth.t, "fix render")
    t = truth.t[::2].copy()
    p = truth.p[::2].copy()
    rng = np.random.default_rng(noise.seed)
    p += rng.normal(0.0, noise.position_std, p.shape)
    return FixStream(t=t, p_nav=p)


def random_profile(
    duration: float,
    seed: int,
    dt: float = 0.01,
    max_speed: float = 15.0,
) -> DriveProfile:
    """Compose a plausible city-drive profile of roughly the given duration.

    Starts stationary, then mixes straights, turns, roundabouts (longer arcs)
    and stops. Turn speeds are capped so lateral acceleration stays below
    ~2.5 m/s^2, and every segment is long enough for its entry ramp. Segment
    durations land on the tick grid; the total may overshoot the request by up
    to one segment's feasibility floor.
    """
    rng = np.random.default_rng(seed)
    segs: list[Segment] = []
    entry: list[float] = []
    total = 0.0
    speed = 0.0

    def snap(x: float) -> float:
        return max(dt, round(x / dt) * dt)

    d = snap(rng.uniform(3.0, 8.0))
    segs.append(Segment("stop", d))
    entry.append(speed)
    total += d

    while total < duration:
        u = rng.random()
        entry.append(speed)
        if u < 0.50:
            target = float(rng.uniform(5.0, max_speed))
            d = snap(max(rng.uniform(6.0, 18.0), abs(target - speed) / A_MAX + 0.5))
            segs.append(Segment("straight", d, target))
            speed = target
        elif u < 0.82:
            r = float(rng.uniform(9.0, 35.0)) * (1.0 if rng.random() < 0.5 else -1.0)
            cap = min(math.sqrt(2.5 * abs(r)), 9.0)
            target = float(rng.uniform(max(3.0, 0.55 * cap), cap))
            angle = float(rng.uniform(0.3 * math.pi, 0.7 * math.pi))
            d = snap(max(abs(r) * angle / target, abs(target - speed) / A_MAX + 0.2))
            segs.append(Segment("arc", d, target, r))
            speed = target
        elif u < 0.90:
            r = float(rng.uniform(10.0, 16.0)) * (1.0 if rng.random() < 0.5 else -1.0)
            target = float(rng.uniform(4.0, min(math.sqrt(2.5 * abs(r)), 6.5)))
            angle = float(rng.uniform(0.9 * math.pi, 1.6 * math.pi))
            d = snap(max(abs(r) * angle / target, abs(target - speed) / A_MAX + 0.2))
            segs.append(Segment("arc", d, target, r))
            speed = target
        else:
            d = snap(max(rng.uniform(3.0, 9.0), speed / A_MAX + 0.3))
            segs.append(Segment("stop", d))
            speed = 0.0
        total += segs[-1].duration

    excess = total - duration
    if excess > 0.0:
        last = segs[-1]
        floor = snap(abs(last.speed - entry[-1]) / A_MAX + 2.0 * dt)
        trimmed = snap(last.duration - excess)
        if trimmed >= floor:
            segs[-1] = Segment(last.kind, trimmed, last.speed, last.radius)
    return DriveProfile(segments=tuple(segs), seed=seed, dt=dt)
