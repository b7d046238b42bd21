"""Almost-periodicity and vanishing-mean classification tests."""

import numpy as np
import pytest

from papevolve.fields import Field, GridSpec, LorentzExponents
from papevolve.pap import (
    ap_test,
    fitted_mean_slope,
    mean_value_curve,
    pap0_test,
    pap_synthesize,
    translation_defect,
)
from papevolve.trajectory import (
    TimeGrid,
    Trajectory,
    modulated_trajectory,
    read_trajectory,
    scalar_trajectory,
    write_trajectory,
)


def scalar_signal(fn, t_min, t_max, dt):
    steps = int(round((t_max - t_min) / dt))
    grid = TimeGrid(t_min, t_min + steps * dt, steps)
    return scalar_trajectory(grid, fn(grid.times()))


class TestTranslationDefect:
    def test_exact_period(self):
        dt = 2 * np.pi / 64
        f = scalar_signal(np.sin, -40 * dt, 40 * dt, dt)
        assert translation_defect(f, 2 * np.pi) < 1e-10

    def test_half_period_attains_two(self):
        dt = 2 * np.pi / 64
        f = scalar_signal(np.sin, -64 * dt, 64 * dt, dt)
        # sup |sin(t+pi) - sin t| = 2, attained at t = pi/2 which is on the grid
        assert translation_defect(f, np.pi) == pytest.approx(2.0, rel=1e-12)

    def test_zero_shift(self):
        f = scalar_signal(np.cos, 0.0, 5.0, 0.1)
        assert translation_defect(f, 0.0) == 0.0

    def test_empty_overlap_rejected(self):
        f = scalar_signal(np.cos, 0.0, 5.0, 0.1)
        with pytest.raises(ValueError):
            translation_defect(f, 100.0)

    def test_stationary_under_common_shift(self):
        dt = 0.05
        vals = np.sin(np.arange(201) * dt) + 0.3 * np.cos(np.sqrt(3) * np.arange(201) * dt)
        a = scalar_trajectory(TimeGrid(0.0, 200 * dt, 200), vals)
        b = scalar_trajectory(TimeGrid(-5.0, -5.0 + 200 * dt, 200), vals)
        for T in (0.25, 1.0, 3.3):
            assert translation_defect(a, T) == pytest.approx(
                translation_defect(b, T), rel=1e-14)

    def test_field_valued_defect(self):
        g = GridSpec(1, 8, 1.0)
        dt = np.pi / 32
        grid = TimeGrid(0.0, 128 * dt, 128)
        profile = Field(g, np.ones(8))
        traj = modulated_trajectory(grid, np.sin(grid.times()), profile,
                                    LorentzExponents(2.0))
        # ||sin(t+T) g - sin(t) g||_X = |dsin| * ||g||_X = |dsin| * sqrt(2)
        got = translation_defect(traj, np.pi)
        want = 2.0 * np.sqrt(2.0)
        assert got == pytest.approx(want, rel=1e-9)


class TestAPTest:
    def test_two_tone_signal_passes(self):
        dt = 0.05
        f = scalar_signal(lambda t: np.sin(t) + np.sin(np.sqrt(2) * t),
                          -200.0, 200.0, dt)
        rep = ap_test(f, epsilon=0.4, l_max=120.0)
        assert rep.ok
        assert rep.inclusion_length <= 120.0
        # the found almost periods really are almost periods
        for T in rep.almost_periods[:: max(1, len(rep.almost_periods) // 7)]:
            assert translation_defect(f, T) < 0.4

    def test_linear_drift_fails(self):
        f = scalar_signal(lambda t: t, -100.0, 100.0, 0.1)
        rep = ap_test(f, epsilon=0.5, l_max=20.0)
        assert not rep.ok
        assert rep.inclusion_length is None

    def test_constant_signal(self):
        f = scalar_signal(lambda t: np.ones_like(t), 0.0, 20.0, 0.1)
        rep = ap_test(f, epsilon=0.01, l_max=5.0)
        assert rep.ok
        assert rep.inclusion_length == pytest.approx(0.1)
        assert rep.max_gap == pytest.approx(0.1)

    def test_epsilon_monotonicity(self):
        dt = 0.05
        f = scalar_signal(lambda t: np.sin(t) + np.sin(np.sqrt(2) * t),
                          -200.0, 200.0, dt)
        small = ap_test(f, epsilon=0.4, l_max=150.0)
        large = ap_test(f, epsilon=0.8, l_max=150.0)
        assert small.ok and large.ok
        assert large.inclusion_length <= small.inclusion_length
        assert set(np.round(small.almost_periods, 9)) <= set(
            np.round(large.almost_periods, 9))

    def test_rejections(self):
        f = scalar_signal(np.sin, 0.0, 10.0, 0.1)
        with pytest.raises(ValueError):
            ap_test(f, epsilon=0.0, l_max=5.0)
        with pytest.raises(ValueError):
            ap_test(f, epsilon=0.5, l_max=5.0, scan_max=100.0)


class TestMeanValueCurve:
    def test_lorentzian_oracle(self):
        # f = 1/(1+t^2): M(L) = arctan(L)/L
        f = scalar_signal(lambda t: 1.0 / (1.0 + t**2), -100.0, 100.0, 0.01)
        curve = mean_value_curve(f, [1.25, 2.5, 5.0, 10.0])
        want = np.arctan(10.0) / 10.0
        assert curve.values[-1] == pytest.approx(want, abs=1e-4)
        assert curve.values[-1] == pytest.approx(0.1471, abs=1e-3)

    def test_constant_one(self):
        f = scalar_signal(lambda t: np.ones_like(t), -50.0, 50.0, 0.05)
        curve = mean_value_curve(f, [2.0, 8.0, 16.0, 32.0])
        np.testing.assert_allclose(curve.values, 1.0, rtol=1e-12)

    def test_abs_sin_limit(self):
        f = scalar_signal(np.sin, -80.0, 80.0, 0.01)
        curve = mean_value_curve(f, [50.0])
        assert curve.values[0] == pytest.approx(2.0 / np.pi, abs=0.01)

    def test_scaling(self):
        f = scalar_signal(lambda t: 1.0 / (1.0 + t**2), -40.0, 40.0, 0.02)
        g = scalar_signal(lambda t: -3.0 / (1.0 + t**2), -40.0, 40.0, 0.02)
        cf = mean_value_curve(f, [5.0, 10.0, 20.0, 40.0])
        cg = mean_value_curve(g, [5.0, 10.0, 20.0, 40.0])
        np.testing.assert_allclose(cg.values, 3.0 * cf.values, rtol=1e-12)

    def test_window_exceeding_support_rejected(self):
        f = scalar_signal(np.sin, -10.0, 10.0, 0.1)
        with pytest.raises(ValueError):
            mean_value_curve(f, [20.0])


class TestPAP0Test:
    def test_lorentzian_true(self):
        f = scalar_signal(lambda t: 1.0 / (1.0 + t**2), -100.0, 100.0, 0.01)
        curve = mean_value_curve(f, [4.0, 8.0, 16.0, 32.0, 64.0])
        assert pap0_test(curve)
        assert fitted_mean_slope(curve) < -0.8

    def test_constant_false(self):
        f = scalar_signal(lambda t: np.ones_like(t), -80.0, 80.0, 0.05)
        curve = mean_value_curve(f, [4.0, 8.0, 32.0, 64.0])
        assert not pap0_test(curve)

    def test_exponential_true(self):
        f = scalar_signal(lambda t: np.exp(-np.abs(t)), -80.0, 80.0, 0.01)
        curve = mean_value_curve(f, [4.0, 8.0, 16.0, 32.0, 64.0])
        assert pap0_test(curve)

    def test_ap_signal_false(self):
        f = scalar_signal(lambda t: np.sin(t) + np.sin(np.sqrt(2) * t),
                          -100.0, 100.0, 0.02)
        curve = mean_value_curve(f, [8.0, 16.0, 32.0, 64.0])
        assert not pap0_test(curve)

    def test_preconditions(self):
        f = scalar_signal(lambda t: 1.0 / (1.0 + t**2), -50.0, 50.0, 0.05)
        with pytest.raises(ValueError):
            pap0_test(mean_value_curve(f, [4.0, 8.0, 16.0]))
        with pytest.raises(ValueError):
            pap0_test(mean_value_curve(f, [4.0, 8.0, 16.0, 24.0]))


class TestSynthesize:
    def grids(self):
        return TimeGrid(-100.0, 100.0, 4000)

    def test_sum_and_tags(self):
        grid = self.grids()
        t = grid.times()
        g = scalar_trajectory(grid, np.sin(t) + np.sin(np.sqrt(2) * t))
        phi = scalar_trajectory(grid, 1.0 / (1.0 + t**2))
        f = pap_synthesize(g, phi)
        np.testing.assert_allclose(f.snapshots, g.snapshots + phi.snapshots)
        assert f.ap_part is g and f.ergodic_part is phi

    def test_zero_components(self):
        grid = self.grids()
        t = grid.times()
        g = scalar_trajectory(grid, np.sin(t))
        zero = scalar_trajectory(grid, np.zeros_like(t))
        assert np.allclose(pap_synthesize(g, zero).snapshots, g.snapshots)
        assert np.allclose(pap_synthesize(zero, g).snapshots, g.snapshots)

    def test_grid_mismatch(self):
        g = scalar_trajectory(TimeGrid(0.0, 10.0, 100), np.zeros(101))
        phi = scalar_trajectory(TimeGrid(0.0, 10.0, 50), np.zeros(51))
        with pytest.raises(ValueError):
            pap_synthesize(g, phi)

    def test_classification_consistency(self):
        grid = self.grids()
        t = grid.times()
        g = scalar_trajectory(grid, np.sin(t) + np.sin(np.sqrt(2) * t))
        phi = scalar_trajectory(grid, 1.0 / (1.0 + t**2))
        f = pap_synthesize(g, phi)
        assert ap_test(f.ap_part, 0.4, 120.0).ok
        curve = mean_value_curve(f.ergodic_part, [4.0, 8.0, 16.0, 32.0, 64.0])
        assert pap0_test(curve)


class TestTrajectoryIO:
    def test_field_roundtrip(self, tmp_path):
        g = GridSpec(2, 4, 1.5)
        grid = TimeGrid(-1.0, 1.0, 8)
        rng = np.random.default_rng(0)
        snaps = rng.normal(size=(9, 16)) + 1j * rng.normal(size=(9, 16))
        traj = Trajectory(grid, snaps, space=g, space_norm=LorentzExponents(2.0))
        path = tmp_path / "traj.txt"
        write_trajectory(path, traj)
        back = read_trajectory(path, LorentzExponents(2.0))
        assert back.space == g
        assert back.grid == grid
        np.testing.assert_array_equal(back.snapshots, traj.snapshots)

    def test_scalar_roundtrip(self, tmp_path):
        grid = TimeGrid(0.0, 2.0, 10)
        traj = scalar_trajectory(grid, np.exp(1j * grid.times()))
        path = tmp_path / "scalar.txt"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        assert back.is_scalar
        np.testing.assert_array_equal(back.snapshots, traj.snapshots)

    def test_header_format(self, tmp_path):
        grid = TimeGrid(0.0, 1.0, 8)
        traj = scalar_trajectory(grid, np.zeros(9))
        path = tmp_path / "t.txt"
        write_trajectory(path, traj)
        first = path.read_text().splitlines()[0]
        assert first.startswith("PAPTRAJ 0 1 0 ")

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("NOPE 1 2 3\n")
        with pytest.raises(ValueError):
            read_trajectory(path)
