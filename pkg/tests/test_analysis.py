import numpy as np
import pytest

from spmlab import (
    SupermartingaleSeries,
    check_absorption,
    detect_extinction,
    ensemble_supermartingale_test,
    supermartingale_series,
)
from spmlab.stepper import Trajectory


def make_traj(times, hm1):
    times = np.asarray(times, dtype=float)
    hm1 = np.asarray(hm1, dtype=float)
    z = np.zeros_like(times)
    return Trajectory(
        times=times, hm1_norms=hm1, lp_norms=z, min_values=z, max_values=z,
        supermartingale_values=z,
    )


class TestDetectExtinction:
    def test_first_crossing(self):
        traj = make_traj([0, 1, 2, 3], [0.5, 0.2, 0.0009, 0.0001])
        assert detect_extinction(traj, 0.001) == 2.0

    def test_never_below(self):
        traj = make_traj([0, 1, 2], [0.5, 0.4, 0.3])
        assert detect_extinction(traj, 0.001) is None

    def test_starts_extinct(self):
        traj = make_traj([0, 1], [0.0, 0.0])
        assert detect_extinction(traj, 0.001) == 0.0

    def test_monotone_in_eps(self):
        traj = make_traj([0, 1, 2, 3, 4], [0.5, 0.3, 0.09, 0.009, 0.0])
        taus = [detect_extinction(traj, eps) for eps in (0.01, 0.1, 0.4)]
        assert taus == sorted(taus, reverse=True)

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            detect_extinction(make_traj([0], [1.0]), 0.0)


class TestSupermartingaleSeries:
    def test_initial_value(self):
        traj = make_traj([0.0, 1.0], [0.25, 0.1])
        s = supermartingale_series(traj, c_star=0.5, alpha=0.5)
        assert s.values[0] == pytest.approx(0.25**0.5)

    def test_zero_after_extinction(self):
        traj = make_traj([0, 1, 2, 3], [0.5, 0.0, 0.0, 0.0])
        s = supermartingale_series(traj, c_star=1.0, alpha=0.5)
        assert np.all(s.values[1:] == 0.0)

    def test_quiet_noise_reduces_to_norm_power(self):
        hm1 = np.array([0.4, 0.3, 0.2, 0.1])
        traj = make_traj([0, 1, 2, 3], hm1)
        s = supermartingale_series(traj, c_star=0.0, alpha=0.5)
        np.testing.assert_allclose(s.values, hm1**0.5)
        assert np.all(np.diff(s.values) < 0)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            supermartingale_series(make_traj([0], [1.0]), 0.0, 1.5)


class TestCheckAbsorption:
    def test_clamped_path(self):
        traj = make_traj([0, 1, 2, 3], [0.5, 0.0005, 0.0, 0.0])
        assert check_absorption(traj, 0.001)

    def test_non_extinct_vacuous(self):
        traj = make_traj([0, 1], [0.5, 0.4])
        assert check_absorption(traj, 0.001)

    def test_violating_series(self):
        traj = make_traj([0, 1, 2, 3], [0.5, 0.0005, 0.0, 0.2])
        assert not check_absorption(traj, 0.001)


def constant_series(n, value, times):
    return [
        SupermartingaleSeries(
            times=np.asarray(times, dtype=float),
            values=np.full(len(times), value),
            c_star=0.0,
            alpha=0.5,
        )
        for _ in range(n)
    ]


class TestEnsembleTest:
    def test_requires_enough_paths(self):
        with pytest.raises(ValueError):
            ensemble_supermartingale_test(constant_series(50, 1.0, [0, 1]), [0.5, 1.0])

    def test_constant_series_pass(self):
        rng = np.random.default_rng(0)
        series = [
            SupermartingaleSeries(
                times=np.array([0.0, 1.0, 2.0]),
                values=np.full(3, rng.uniform(0.5, 1.5)),
                c_star=0.0,
                alpha=0.5,
            )
            for _ in range(200)
        ]
        rep = ensemble_supermartingale_test(series, [0.5, 1.0, 2.0])
        assert rep.overall_pass

    def test_increasing_series_fail(self):
        series = [
            SupermartingaleSeries(
                times=np.array([0.0, 1.0, 2.0]),
                values=np.array([1.0, 2.0, 3.0]),
                c_star=0.0,
                alpha=0.5,
            )
            for _ in range(150)
        ]
        rep = ensemble_supermartingale_test(series, [0.5, 1.0, 2.0])
        assert not rep.overall_pass

    def test_strictly_decreasing_deterministic(self):
        series = [
            SupermartingaleSeries(
                times=np.array([0.0, 1.0, 2.0]),
                values=np.array([3.0, 2.0, 1.0]),
                c_star=0.0,
                alpha=0.5,
            )
            for _ in range(120)
        ]
        rep = ensemble_supermartingale_test(series, [0.5, 1.0, 2.0])
        assert rep.overall_pass and all(rep.pair_pass)
