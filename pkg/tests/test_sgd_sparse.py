import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsgd.datagen import CovariateProcess, Environment, NoiseProcess, ProblemSpec
from streamsgd.numerics import Rng
from streamsgd.schedules import StepsizeSchedule
from streamsgd.sgd_dense import fit_loglog_slope
from streamsgd.sgd_sparse import (
    SparseSgdState,
    SupportSet,
    hard_threshold,
    heuristic_update_trigger,
    oracle_update_times,
    run_sparse,
    select_support_addition,
    sparse_dim,
    sparse_sgd_step,
)
from streamsgd.trajectory import TrajectoryRecord


class TestHardThreshold:
    def test_keeps_selected(self):
        np.testing.assert_array_equal(hard_threshold([1.0, 2.0, 3.0], [0, 2]), [1.0, 0.0, 3.0])

    def test_empty_support(self):
        np.testing.assert_array_equal(hard_threshold([1.0, 2.0, 3.0], []), 0.0)

    def test_full_support(self):
        v = np.array([1.0, -2.0, 3.5])
        np.testing.assert_array_equal(hard_threshold(v, range(3)), v)

    def test_support_set(self):
        S = SupportSet((4, 1))
        assert S.indices == (1, 4) and 4 in S and 2 not in S
        assert S.add(2).indices == (1, 2, 4)
        np.testing.assert_array_equal(S.complement(5), [0, 2, 3])
        with pytest.raises(ValueError):
            S.add(4)


class TestSparseStep:
    def test_hand_arithmetic(self):
        s = sparse_sgd_step(SparseSgdState.start(3, [0]), np.array([1.0, 2.0, 3.0]), 1.0, 0.5)
        np.testing.assert_array_equal(s.beta, [0.5, 0.0, 0.0])
        np.testing.assert_array_equal(s.G_window, [-1.0, -2.0, -3.0])
        np.testing.assert_array_equal(s.G_cum, [-1.0, -2.0, -3.0])

    def test_zero_stepsize_still_accumulates(self):
        s = sparse_sgd_step(SparseSgdState.start(3, [0]), np.array([1.0, 2.0, 3.0]), 1.0, 0.0)
        np.testing.assert_array_equal(s.beta, 0.0)
        np.testing.assert_array_equal(s.G_cum, [-1.0, -2.0, -3.0])

    def test_zero_residual(self):
        s0 = SparseSgdState.start(3, [0, 1], beta0=[1.0, 1.0, 0.0])
        s = sparse_sgd_step(s0, np.array([1.0, 1.0, 5.0]), 2.0, 0.3)
        np.testing.assert_array_equal(s.beta, s0.beta)
        np.testing.assert_array_equal(s.G_cum, 0.0)

    def test_addition_resets_window_only(self):
        s = sparse_sgd_step(SparseSgdState.start(3, [0]), np.array([1.0, 2.0, 3.0]), 1.0, 0.5)
        s2 = s.with_addition(2)
        assert s2.support.indices == (0, 2) and s2.update_log == [(1, 2)]
        np.testing.assert_array_equal(s2.G_window, 0.0)
        np.testing.assert_array_equal(s2.G_cum, s.G_cum)

    def test_gradient_sum_splits(self):
        gen = np.random.default_rng(0)
        X = gen.standard_normal((400, 6))
        Y = gen.standard_normal(400)
        s = SparseSgdState.start(6, [1, 3])
        for k in range(400):
            s = sparse_sgd_step(s, X[k], Y[k], 0.01)
            if k == 149:
                mid = s.G_cum.copy()
        rest = s.G_cum - mid
        np.testing.assert_allclose(mid + rest, s.G_cum, rtol=1e-9)
        # the split pieces are themselves sums of the per-step gradients
        betas = [SparseSgdState.start(6, [1, 3])]
        for k in range(400):
            betas.append(sparse_sgd_step(betas[-1], X[k], Y[k], 0.01))
        g = np.array([(X[k] @ betas[k].beta - Y[k]) * X[k] for k in range(400)])
        np.testing.assert_allclose(g[:150].sum(axis=0), mid, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(g[150:].sum(axis=0), rest, rtol=1e-9, atol=1e-12)


class TestSelection:
    def test_largest_outside(self):
        assert select_support_addition([5.0, -7.0, 2.0], [0]) == 1

    def test_tie_break_lowest(self):
        assert select_support_addition([0.0, 0.0, 0.0], [2]) == 0

    def test_singleton_complement(self):
        assert select_support_addition([9.0, 0.0, 9.0], [0, 2]) == 1

    def test_full_support(self):
        with pytest.raises(ValueError):
            select_support_addition([1.0, 2.0], [0, 1])


def _trigger_state(G, support, t=5000, last=0):
    s = SparseSgdState.start(len(G), support)
    s.G_window = np.asarray(G, dtype=float)
    s.t, s.last_update = t, last
    return s


class TestHeuristicTrigger:
    def test_fires_on_outlier(self):
        assert heuristic_update_trigger(_trigger_state([3.0, 100.0, 1.0, 1.0, 1.0], [0]), rho=10)

    def test_flat_statistic(self):
        assert not heuristic_update_trigger(_trigger_state([3.0, 2.0, 2.0, -2.0, 2.0], [0]),
                                            rho=10)

    def test_min_gap(self):
        s = _trigger_state([3.0, 100.0, 1.0, 1.0, 1.0], [0], t=1500, last=1000)
        assert not heuristic_update_trigger(s, rho=10, min_gap=1000)

    def test_all_zero(self):
        assert not heuristic_update_trigger(_trigger_state(np.zeros(5), [0]), rho=10)

    def test_cumulative_window(self):
        s = _trigger_state(np.zeros(5), [0])
        s.G_cum = np.array([0.0, 50.0, 1.0, 1.0, 1.0])
        assert heuristic_update_trigger(s, window="cumulative")
        assert not heuristic_update_trigger(s, window="local")


def _scan_tau(rhs):
    """Independent oracle: walk tau = 3, 4, ... until tau / log(tau) >= rhs."""
    tau = 3
    while tau / math.log(tau) < rhs:
        tau += 1
    return tau


class TestOracleUpdateTimes:
    def test_nothing_missing(self):
        spec = ProblemSpec.regression([0.0, 1.0, 2.0], support=[1, 2])
        assert oracle_update_times(spec, [1, 2, 0]) == []

    def test_single_missing(self):
        beta = np.zeros(8)
        beta[[0, 3]] = 1.0
        spec = ProblemSpec.regression(beta, 1.0, support=[0, 3], lambda_min=1.0)
        taus = oracle_update_times(spec, [0])
        assert taus == [_scan_tau(math.log(8.0))]
        assert taus == [3]

    @pytest.mark.parametrize("seed", range(8))
    def test_first_time_matches_scan(self, seed):
        gen = np.random.default_rng(seed)
        d = int(gen.integers(10, 200))
        sup = sorted(gen.choice(d, 5, replace=False))
        beta = np.zeros(d)
        beta[sup] = gen.uniform(0.01, 1.0, 5) * gen.choice([-1, 1], 5)
        sigma, lam = float(gen.uniform(0.5, 2)), float(gen.uniform(0.5, 2))
        spec = ProblemSpec.regression(beta, sigma, support=sup, lambda_min=lam)
        S0 = sup[:2]
        miss = beta[sup[2:]]
        rhs = 3 * math.log(d / 3) * sigma**2 / (lam * np.sum(miss**2))
        taus = oracle_update_times(spec, S0, c_sched=1.5)
        assert taus[0] == _scan_tau(1.5 * rhs)
        assert len(taus) == 3 and all(np.diff(taus) > 0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 10.0), st.sampled_from(["local", "cumulative"]))
    def test_doubling_constant_never_earlier(self, c, window):
        beta = np.zeros(30)
        beta[[2, 9, 17, 25]] = [1.0, 0.5, 0.2, 0.05]
        spec = ProblemSpec.regression(beta, 1.0, support=[2, 9, 17, 25], lambda_min=1.0)
        a = oracle_update_times(spec, [2], window=window, c_sched=c)
        b = oracle_update_times(spec, [2], window=window, c_sched=2 * c)
        assert all(y >= x for x, y in zip(a, b))

    def test_needs_support(self):
        with pytest.raises(ValueError):
            oracle_update_times(ProblemSpec.regression([1.0, 0.0]), [0])


def _sparse_spec(d=12, rho=0.0):
    beta = np.zeros(d)
    sup = [1, 5, 9]
    beta[sup] = [2.0, -1.0, 0.5]
    return ProblemSpec.regression(beta, 1.0, support=sup, lambda_min=1.0, lambda_max=1.0)


class TestRunSparse:
    def test_true_support_rate(self):
        spec = _sparse_spec()
        sched = StepsizeSchedule.decaying(3, 100, 1, sparse_dim(12, 3))
        errs = []
        for r in range(10):
            tr = run_sparse(spec, CovariateProcess("iid", 12), NoiseProcess("iid"), sched, "fixed",
                            100_000, Rng(1).replication(r), initial_support=spec.support)
            errs.append(tr["err_sq"])
        mean = TrajectoryRecord("x", {"t": tr.t, "err_sq": np.mean(errs, axis=0)})
        assert -1.2 <= fit_loglog_slope(mean, 1000, 100_000) <= -0.8

    def test_disjoint_support_freezes_off_support_error(self):
        spec = _sparse_spec()
        S0 = [0, 2, 3]
        tr = run_sparse(spec, CovariateProcess("sphere-ar", 12), NoiseProcess("dependent-sign"),
                        StepsizeSchedule.decaying(3, 100, 1, 5), "fixed", 20000, Rng(2),
                        initial_support=S0, log_stride=50)
        off = tr["err_sq"] - tr["err_sq_on_support"]
        np.testing.assert_allclose(off, np.sum(spec.beta**2), rtol=1e-12)
        beta = tr.meta["beta"]
        assert np.all(beta[[i for i in range(12) if i not in S0]] == 0.0)

    def test_heuristic_growth_is_monotone(self):
        spec = _sparse_spec()
        tr = run_sparse(spec, CovariateProcess("iid", 12), NoiseProcess("iid"),
                        StepsizeSchedule.decaying(3, 100, 1, sparse_dim(12, 3)), "heuristic",
                        60_000, Rng(3), initial_support=[1], min_gap=500, log_stride=100)
        events = tr.meta["events"]
        assert len(events) >= 1
        times = [e[0] for e in events]
        assert times == sorted(times) and len(set(times)) == len(times)
        size = tr["support_size"]
        assert np.all(np.diff(size) >= 0)
        for t, n in zip(tr.t, size):
            assert n == 1 + sum(1 for e in times if e <= t)
        mask = np.zeros(12, dtype=bool)
        mask[list(tr.meta["support"])] = True
        assert np.all(tr.meta["beta"][~mask] == 0.0)
        assert set(spec.support) <= set(tr.meta["support"])

    def test_warm_start(self):
        spec = _sparse_spec()
        tr = run_sparse(spec, CovariateProcess("iid", 12), NoiseProcess("iid"),
                        StepsizeSchedule.decaying(3, 100, 1, sparse_dim(12, 3)), "heuristic",
                        30_000, Rng(4), compare_dense=StepsizeSchedule.decaying(3, 100, 1, 12))
        assert tr.meta["t_start"] > 0
        assert len(tr.meta["initial_support"]) == 5
        k = tr.t < tr.meta["t_start"]
        np.testing.assert_array_equal(tr["err_sq"][k], tr["err_sq_dense"][k])
        assert np.all(tr["support_size"][k] == 12)

    def test_fixed_length_warmup(self):
        tr = run_sparse(_sparse_spec(), CovariateProcess("iid", 12), NoiseProcess("iid"),
                        StepsizeSchedule.decaying(3, 100, 1, 5), "fixed", 5000, Rng(5),
                        warmup=1200, keep_top=4)
        assert tr.meta["t_start"] == 1200 and len(tr.meta["initial_support"]) == 4

    def test_oracle_mode_uses_given_times(self):
        spec = _sparse_spec()
        tr = run_sparse(spec, CovariateProcess("iid", 12), NoiseProcess("iid"),
                        StepsizeSchedule.decaying(3, 100, 1, 5), "oracle-local", 5000, Rng(6),
                        initial_support=[1], update_times=[1000, 3000])
        assert [e[0] for e in tr.meta["events"]] == [1000, 3000]

    def test_deterministic(self):
        args = (_sparse_spec(), CovariateProcess("sphere-ar", 12), NoiseProcess("dependent-sign"),
                StepsizeSchedule.decaying(3, 100, 1, 5), "heuristic", 20000)
        a = run_sparse(*args, Rng(7), min_gap=200)
        b = run_sparse(*args, Rng(7), min_gap=200)
        np.testing.assert_array_equal(a["err_sq"], b["err_sq"])
        assert a.meta["events"] == b.meta["events"]

    def test_matches_python_loop(self):
        spec = _sparse_spec()
        d, T, S0 = 12, 6000, [1]
        sched = StepsizeSchedule.decaying(3, 100, 1, 4)
        rho, min_gap, every = 5.0, 300, 7
        tr = run_sparse(spec, CovariateProcess("iid", d), NoiseProcess("iid"), sched, "heuristic",
                        T, Rng(8), initial_support=S0, rho=rho, min_gap=min_gap,
                        check_every=every, log_stride=1)
        X, xi = Environment(CovariateProcess("iid", d), NoiseProcess("iid"), Rng(8)).take(T)
        Y = X @ spec.beta + xi
        state = SparseSgdState.start(d, S0)
        errs = []
        s_max = 6
        for t in range(T):
            if (len(state.support) < s_max and t % every == 0
                    and heuristic_update_trigger(state, rho, min_gap)):
                state = state.with_addition(select_support_addition(state.G_window, state.support))
            errs.append(np.sum((state.beta - spec.beta) ** 2))
            state = sparse_sgd_step(state, X[t], Y[t], sched.at(t))
        errs.append(np.sum((state.beta - spec.beta) ** 2))
        assert tr.meta["events"] == state.update_log
        np.testing.assert_allclose(tr["err_sq"], errs, rtol=1e-9)
        np.testing.assert_allclose(tr.meta["G_cum"], state.G_cum, rtol=1e-9)
        np.testing.assert_allclose(tr.meta["beta"], state.beta, rtol=1e-9)

    def test_validation(self):
        spec = _sparse_spec()
        with pytest.raises(ValueError):
            run_sparse(spec, CovariateProcess("iid", 12), NoiseProcess("iid"),
                       StepsizeSchedule.decaying(3, 100), "magic", 10, Rng(0))
        with pytest.raises(ValueError):
            run_sparse(spec, CovariateProcess("iid", 12), NoiseProcess("iid"),
                       StepsizeSchedule.constant(0.1), "fixed", 10, Rng(0))

    def test_sparse_dim(self):
        assert sparse_dim(50, 4) == pytest.approx(4 * math.log(25.0))
        assert sparse_dim(50, None) == 50.0
        with pytest.raises(ValueError):
            sparse_dim(5, 6)
