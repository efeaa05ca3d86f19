import numpy as np
import pytest

from speednav.core import GRAVITY
from speednav.errors import InfeasibleProfileError
from speednav.pipeline import positions_to_speed
from speednav.simulate import (
    DriveProfile,
    ImuNoiseModel,
    RtkNoiseModel,
    Segment,
    gen_trajectory,
    random_profile,
    trajectory_to_fixes,
    trajectory_to_imu,
)


def single(seg):
    return DriveProfile(segments=(seg,), seed=0)


class TestGenTrajectory:
    def test_uniform_straight(self):
        # first segment starts at its own target: constant 10 m/s for 10 s
        truth = gen_trajectory(single(Segment("straight", 10.0, 10.0)))
        assert truth.p[-1] == pytest.approx([100.0, 0.0], abs=1e-9)
        assert np.all(truth.s == 10.0)
        assert len(truth) == 1001

    def test_full_circle_closes(self):
        # grid-aligned period: speed chosen so T = 2*pi*r/s = 12.56 s exactly
        r, period = 20.0, 12.56
        s = 2 * np.pi * r / period
        truth = gen_trajectory(single(Segment("arc", period, s, r)))
        assert np.linalg.norm(truth.p[-1] - truth.p[0]) < 1e-6

    def test_stop_holds_pose(self):
        truth = gen_trajectory(single(Segment("stop", 5.0)))
        assert np.all(truth.s == 0.0)
        assert np.all(truth.p == truth.p[0])
        assert np.all(truth.psi == truth.psi[0])

    def test_ramp_reaches_target(self):
        prof = DriveProfile(segments=(Segment("stop", 2.0), Segment("straight", 10.0, 9.0)), seed=0)
        truth = gen_trajectory(prof)
        # ramp 0 -> 9 m/s at 3 m/s^2 takes 3 s starting at t = 2 s
        k = int(round(5.0 / 0.01))
        assert truth.s[k] == pytest.approx(9.0, abs=1e-9)
        mid = int(round(3.5 / 0.01))
        assert truth.s[mid] == pytest.approx(4.5, abs=1e-9)

    def test_infeasible_ramp_rejected(self):
        prof = DriveProfile(segments=(Segment("stop", 2.0), Segment("straight", 2.0, 25.0)), seed=0)
        with pytest.raises(InfeasibleProfileError):
            gen_trajectory(prof)

    def test_speed_continuous_across_segments(self, city_profile):
        truth = gen_trajectory(city_profile)
        assert np.max(np.abs(np.diff(truth.s))) <= 3.0 * 0.01 + 1e-9


class TestTrajectoryToImu:
    def test_constant_straight_exact(self):
        truth = gen_trajectory(single(Segment("straight", 10.0, 10.0)))
        imu = trajectory_to_imu(truth, ImuNoiseModel())
        assert np.array_equal(imu.f_body, np.tile([0.0, 0.0, GRAVITY], (len(truth), 1)))
        assert np.array_equal(imu.omega_body, np.zeros((len(truth), 3)))

    def test_circle_centripetal_exact(self):
        truth = gen_trajectory(single(Segment("arc", 12.0, 10.0, 20.0)))
        imu = trajectory_to_imu(truth, ImuNoiseModel())
        # a_lat = s^2/r = 5, psidot = s/r = 0.5
        assert np.allclose(imu.f_body, np.tile([0.0, 5.0, GRAVITY], (len(truth), 1)), atol=1e-12)
        assert np.allclose(imu.omega_body[:, 2], 0.5, atol=1e-12)

    def test_bias_additive_exact(self):
        truth = gen_trajectory(single(Segment("stop", 3.0)))
        noise = ImuNoiseModel(accel_bias=np.array([0.05, 0.0, 0.0]))
        imu = trajectory_to_imu(truth, noise)
        assert np.array_equal(imu.f_body, np.tile([0.05, 0.0, GRAVITY], (len(truth), 1)))

    def test_deterministic_per_seed(self, city_profile):
        truth = gen_trajectory(city_profile)
        noise = ImuNoiseModel(accel_noise_std=0.05, gyro_noise_std=0.01, seed=9)
        a = trajectory_to_imu(truth, noise)
        b = trajectory_to_imu(truth, noise)
        assert np.array_equal(a.f_body, b.f_body)
        assert np.array_equal(a.omega_body, b.omega_body)

    def test_vibration_only_inside_window(self):
        truth = gen_trajectory(single(Segment("stop", 10.0)))
        noise = ImuNoiseModel(vibration_windows=((2.0, 4.0, 0.5),), seed=1)
        imu = trajectory_to_imu(truth, noise)
        outside = (truth.t < 2.0) | (truth.t >= 4.0)
        assert np.array_equal(imu.f_body[outside, 0], np.zeros(outside.sum()))
        inside = ~outside
        assert np.std(imu.f_body[inside, 0]) > 0.3

    def test_vibration_outside_span_rejected(self):
        truth = gen_trajectory(single(Segment("stop", 5.0)))
        with pytest.raises(ValueError):
            trajectory_to_imu(truth, ImuNoiseModel(vibration_windows=((4.0, 9.0, 0.1),)))

    def test_energy_consistency_on_straight_with_ramps(self):
        # targets chosen so every ramp lasts a whole number of ticks: the
        # boundary-tick midpoint sampling then makes trapezoid integration exact
        prof = DriveProfile(
            segments=(
                Segment("stop", 5.0),
                Segment("straight", 20.0, 12.0),
                Segment("straight", 20.0, 4.5),
                Segment("straight", 15.0, 10.5),
            ),
            seed=0,
        )
        truth = gen_trajectory(prof)
        imu = trajectory_to_imu(truth, ImuNoiseModel())
        dt = np.diff(imu.t)
        v = np.concatenate([[0.0], np.cumsum(0.5 * (imu.f_body[1:, 0] + imu.f_body[:-1, 0]) * dt)])
        err = np.abs(v - truth.s)
        # a jump tick itself carries a da*dt/4 transient; integration must be
        # exact (drift-free) everywhere else, including the end
        boundary = np.zeros(len(truth), dtype=bool)
        boundary[np.nonzero(np.abs(np.diff(truth.sdot)) > 1e-9)[0]] = True
        boundary[np.nonzero(np.abs(np.diff(truth.sdot)) > 1e-9)[0] + 1] = True
        assert np.max(err[~boundary]) < 1e-3
        assert err[-1] < 1e-3


class TestTrajectoryToFixes:
    def test_noiseless_equals_truth(self, city_profile):
        truth = gen_trajectory(city_profile)
        fixes = trajectory_to_fixes(truth, RtkNoiseModel(position_std=0.0))
        assert np.array_equal(fixes.p_nav, truth.p[::2])
        assert np.array_equal(fixes.t, truth.t[::2])

    def test_fix_count_ten_seconds(self):
        truth = gen_trajectory(single(Segment("straight", 10.0, 5.0)))
        fixes = trajectory_to_fixes(truth, RtkNoiseModel())
        assert len(fixes) == 501  # floor(10 / 0.02) + 1

    def test_noise_std_monte_carlo(self):
        # 2000 s stationary -> 100,001 fixes; sample std within [0.019, 0.021]
        truth = gen_trajectory(single(Segment("stop", 2000.0)))
        fixes = trajectory_to_fixes(truth, RtkNoiseModel(position_std=0.02, seed=5))
        err = fixes.p_nav - truth.p[::2]
        for axis in range(2):
            assert 0.019 < np.std(err[:, axis]) < 0.021

    def test_deterministic(self, city_profile):
        truth = gen_trajectory(city_profile)
        a = trajectory_to_fixes(truth, RtkNoiseModel(position_std=0.02, seed=3))
        b = trajectory_to_fixes(truth, RtkNoiseModel(position_std=0.02, seed=3))
        assert np.array_equal(a.p_nav, b.p_nav)


class TestRoundTrip:
    def test_speed_recovered_from_noiseless_fixes(self):
        # constant-speed profile (no ramps): derivative truncation only
        prof = DriveProfile(
            segments=(
                Segment("straight", 10.0, 8.0),
                Segment("arc", 8.0, 8.0, 25.0),
                Segment("straight", 10.0, 8.0),
            ),
            seed=0,
        )
        truth = gen_trajectory(prof)
        fixes = trajectory_to_fixes(truth, RtkNoiseModel(position_std=0.0))
        speed = positions_to_speed(fixes)
        err = np.abs(speed.s - truth.s[::2])
        assert np.max(err[1:-1]) < 1e-2
    def test_speed_recovered_with_ramps_away_from_kinks(self, city_profile):
        truth = gen_trajectory(city_profile)
        fixes = trajectory_to_fixes(truth, RtkNoiseModel(position_std=0.0))
        speed = positions_to_speed(fixes)
        err = np.abs(speed.s - truth.s[::2])
        # |sdot| jumps at phase boundaries put O(da*dt) spikes in the central
        # difference; mask one fix on either side of each boundary
        near_kink = np.zeros(len(speed), dtype=bool)
        kinks = np.nonzero(np.abs(np.diff(truth.sdot[::2])) > 1e-9)[0]
        for k in kinks:
            near_kink[max(0, k - 1) : k + 2] = True
        near_kink[0] = near_kink[-1] = True
        assert np.max(err[~near_kink]) < 1e-2


class TestRandomProfile:
    def test_deterministic_and_diverse(self):
        a = random_profile(300.0, seed=11)
        b = random_profile(300.0, seed=11)
        assert a == b
        kinds = {seg.kind for seg in a.segments}
        assert kinds == {"straight", "arc", "stop"}
        assert a.duration >= 300.0 - 10.0

    def test_generates_feasible_profiles(self):
        for seed in range(12):
            prof = random_profile(240.0, seed=seed)
            truth = gen_trajectory(prof)  # raises if infeasible
            assert truth.s.max() <= 15.0 + 1e-9
