import numpy as np
import pytest

from streamsgd import _kernels
from streamsgd.datagen import CovariateProcess, Environment, NoiseProcess, ProblemSpec
from streamsgd.numerics import Rng
from streamsgd.schedules import StepsizeSchedule
from streamsgd.sgd_dense import DenseSgdState, fit_loglog_slope, run_dense, sgd_step
from streamsgd.trajectory import TrajectoryRecord, log_times


class TestStep:
    def test_hand_arithmetic(self):
        s = sgd_step(DenseSgdState(np.array([1.0, 0.0])), np.array([1.0, 1.0]), 0.5, 0.1)
        np.testing.assert_allclose(s.beta, [0.95, -0.05], atol=1e-15)
        assert s.t == 1

    def test_zero_stepsize(self):
        b = np.array([0.3, -0.7])
        np.testing.assert_array_equal(sgd_step(DenseSgdState(b), np.array([1.0, 2.0]), 5.0,
                                               0.0).beta, b)

    def test_zero_residual(self):
        b = np.array([1.0, 2.0])
        np.testing.assert_array_equal(sgd_step(DenseSgdState(b), np.array([1.0, 1.0]), 3.0,
                                               0.4).beta, b)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            sgd_step(DenseSgdState(np.zeros(2)), np.zeros(3), 0.0, 0.1)
        with pytest.raises(ValueError):
            sgd_step(DenseSgdState(np.zeros(2)), np.array([np.nan, 0.0]), 0.0, 0.1)

    def test_expected_contraction_noiseless(self):
        d, eta = 5, 0.1
        gen = np.random.default_rng(0)
        beta_star = gen.standard_normal(d)
        beta = beta_star + gen.standard_normal(d)
        X = gen.standard_normal((1000, d))
        after = [np.sum((sgd_step(DenseSgdState(beta), x, float(x @ beta_star), eta).beta
                         - beta_star) ** 2) for x in X]
        assert np.mean(after) <= (1 - eta) * np.sum((beta - beta_star) ** 2)


def _spec(d=5, sigma=1.0, seed=0):
    beta = np.random.default_rng(seed).standard_normal(d)
    return ProblemSpec.regression(beta, sigma, lambda_min=1.0, lambda_max=1.0)


class TestRunDense:
    def test_noiseless_contraction(self):
        spec = _spec(sigma=0.0)
        tr = run_dense(spec, CovariateProcess("sphere-ar", 5), NoiseProcess("iid", 0.0),
                       (StepsizeSchedule.constant(0.1), StepsizeSchedule.decaying(3, 100, 1, 5)),
                       1000, 100, Rng(1), t1=2000)
        assert tr["err_sq"][-1] <= 1e-6 * tr["err_sq"][0]
        assert np.all(tr["phase"] == 0)

    def test_horizon_zero(self):
        spec = _spec()
        tr = run_dense(spec, CovariateProcess("iid", 5), NoiseProcess("iid"),
                       (None, StepsizeSchedule.decaying(3, 100, 1, 5)), 0, "geom", Rng(1))
        assert len(tr) == 1 and tr.t[0] == 0
        assert tr["err_sq"][0] == pytest.approx(np.sum(spec.beta**2))

    def test_deterministic(self):
        spec = _spec()
        runs = [run_dense(spec, CovariateProcess("sphere-ar", 5), NoiseProcess("dependent-sign"),
                          (StepsizeSchedule.constant(0.05), StepsizeSchedule.decaying(3, 100, 1, 5)),
                          5000, "geom", Rng(2)) for _ in range(2)]
        np.testing.assert_array_equal(runs[0]["err_sq"], runs[1]["err_sq"])
        assert runs[0].meta["t1"] == runs[1].meta["t1"]

    def test_oracle_switch(self):
        spec = _spec(sigma=0.2)
        tr = run_dense(spec, CovariateProcess("iid", 5), NoiseProcess("iid", 0.2),
                       (StepsizeSchedule.constant(0.1), StepsizeSchedule.decaying(3, 100, 1, 5)),
                       20000, 1, Rng(3))
        t1 = tr.meta["t1"]
        assert t1 is not None and t1 > 0
        # phase flips exactly at the first step whose error is below sigma^2 / lambda_max
        err, phase = tr["err_sq"], tr["phase"]
        assert np.all(err[:t1] > 0.04) and err[t1] <= 0.04
        assert np.all(phase[:t1] == 0) and np.all(phase[t1:] == 1)

    def test_fixed_switch_time(self):
        tr = run_dense(_spec(), CovariateProcess("iid", 5), NoiseProcess("iid"),
                       (StepsizeSchedule.constant(0.1), StepsizeSchedule.decaying(3, 100, 1, 5)),
                       3000, 10, Rng(4), t1=1234)
        assert tr.meta["t1"] == 1234

    def test_matches_python_loop(self):
        spec = _spec(d=3)
        const, dec = StepsizeSchedule.constant(0.05), StepsizeSchedule.decaying(3, 20, 1, 3)
        T, t1 = 3000, 700
        tr = run_dense(spec, CovariateProcess("sphere-ar", 3), NoiseProcess("dependent-sign"),
                       (const, dec), T, 1, Rng(5), t1=t1)
        env = Environment(CovariateProcess("sphere-ar", 3), NoiseProcess("dependent-sign"),
                          Rng(5))
        X, xi = env.take(T)
        state = DenseSgdState(np.zeros(3))
        errs = []
        for t in range(T):
            errs.append(np.sum((state.beta - spec.beta) ** 2))
            eta = const.eta if t < t1 else dec.with_t1(t1).at(t)
            state = sgd_step(state, X[t], float(X[t] @ spec.beta + xi[t]), eta)
        errs.append(np.sum((state.beta - spec.beta) ** 2))
        np.testing.assert_allclose(tr["err_sq"], errs, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(tr.meta["beta"], state.beta, rtol=1e-10)

    def test_kernel_logs_before_step(self):
        beta = np.array([1.0])
        X = np.ones((2, 1))
        Y = np.zeros(2)
        lt = np.array([0, 1], dtype=np.int64)
        err = np.zeros(2)
        phase = np.zeros(2, dtype=np.int64)
        state = np.zeros(2, dtype=np.int64)
        pos = _kernels.dense_chunk(beta, X, Y, np.zeros(1), 0, state, 0.5, 1.0, 1.0, -1.0, -1,
                                   lt, err, phase, 0)
        assert pos == 2
        np.testing.assert_allclose(err, [1.0, 0.25])
        np.testing.assert_allclose(beta, [0.25])

    def test_validation(self):
        spec = _spec()
        with pytest.raises(ValueError):
            run_dense(spec, CovariateProcess("iid", 5), NoiseProcess("iid"),
                      (None, StepsizeSchedule.constant(0.1)), 10, 1, Rng(0))
        with pytest.raises(ValueError):
            run_dense(ProblemSpec(np.eye(2)), CovariateProcess("iid", 2), NoiseProcess("iid"),
                      (None, StepsizeSchedule.decaying(3, 100)), 10, 1, Rng(0))


class TestSlope:
    def _traj(self, y_of_t):
        t = log_times(10**5, "geom")[1:]
        return TrajectoryRecord("x", {"t": t, "err_sq": y_of_t(t.astype(float))})

    def test_inverse_t(self):
        assert fit_loglog_slope(self._traj(lambda t: 3.0 / t), 10, 10**5) == \
            pytest.approx(-1.0, abs=1e-6)

    def test_constant(self):
        assert fit_loglog_slope(self._traj(lambda t: 0 * t + 2.0), 10, 10**5) == \
            pytest.approx(0.0, abs=1e-12)

    def test_inverse_square(self):
        assert fit_loglog_slope(self._traj(lambda t: 1.0 / t**2), 10, 10**5) == \
            pytest.approx(-2.0, abs=1e-6)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_loglog_slope(self._traj(lambda t: 1.0 / t), 100, 110)


class TestTrajectory:
    def test_log_times_endpoints(self):
        for T in (0, 1, 17, 999_999):
            for stride in ("geom", 1, 7):
                lt = log_times(T, stride)
                assert lt[0] == 0 and lt[-1] == T
                assert np.all(np.diff(lt) > 0)

    def test_csv_round_trip_precision(self):
        x = np.array([0.1, 1 / 3, 2.0**-40])
        tr = TrajectoryRecord("x", {"t": np.array([0, 1, 2]), "v": x})
        lines = tr.to_csv().splitlines()
        assert lines[0] == "t,v"
        np.testing.assert_array_equal([float(r.split(",")[1]) for r in lines[1:]], x)
        assert tr.to_csv(min_t=1).splitlines()[1].startswith("1,")

    def test_validation(self):
        with pytest.raises(ValueError):
            TrajectoryRecord("x", {"t": np.array([0, 0])})
        with pytest.raises(ValueError):
            TrajectoryRecord("x", {"t": np.array([0, 1]), "v": np.zeros(3)})
        with pytest.raises(ValueError):
            TrajectoryRecord("x", {"v": np.zeros(3)})
