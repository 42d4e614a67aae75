import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fredholm_backstepping.errors import ControllabilityError, IllConditionedError
from fredholm_backstepping.gains import PotentialSpec
from fredholm_backstepping.moments import (
    MomentControlPlan,
    plan_null_control,
    solve_moment_problem,
    trapezoid_weights,
    verify_plan,
)
from fredholm_backstepping.spectral import EVEN, ODD, SpectralFunction


def moments_of(values, times, mu, horizon):
    """Independent check of int_0^T exp(-mu (T - s)) v(s) ds with numpy's trapezoid."""
    return np.array([np.trapezoid(np.exp(-m * (horizon - times)) * values, times) for m in mu])


class TestQuadrature:
    def test_weights_sum_to_horizon(self):
        _, w = trapezoid_weights(2.5, 101)
        assert w.sum() == pytest.approx(2.5, rel=1e-14)

    def test_exact_on_linear(self):
        t, w = trapezoid_weights(1.0, 11)
        assert w @ (3 * t + 1) == pytest.approx(2.5, rel=1e-14)


class TestSolveMomentProblem:
    def test_zero_targets(self):
        sol = solve_moment_problem(np.zeros(4), 1.0)
        assert not sol.values.any()

    def test_single_moment_closed_form(self):
        sol = solve_moment_problem(np.array([1.0]), 1.0)
        expected = np.exp(-(1.0 - sol.times)) / ((1.0 - np.exp(-2.0)) / 2.0)
        # least-norm on the trapezoid rule differs from the continuous one by O(h^2)
        assert_allclose(sol.values, expected, rtol=1e-6)

    @pytest.mark.parametrize("modes", range(1, 9))
    def test_residual_at_cap(self, modes, rng):
        targets = rng.uniform(-1, 1, modes)
        sol = solve_moment_problem(targets, 1.0)
        assert sol.moment_residual <= 1e-8
        mu = np.arange(1, modes + 1) ** 2
        assert_allclose(moments_of(sol.values, sol.times, mu, 1.0), targets, atol=1e-8)

    @pytest.mark.parametrize("seed", range(10))
    def test_regularized_six_modes(self, seed):
        targets = np.random.default_rng(seed).uniform(-1, 1, 6) * 1e-2
        assert solve_moment_problem(targets, 1.0, regularization=1e-12).moment_residual <= 1e-8

    def test_norm_growth_at_most_linear_in_log(self):
        logs = []
        for m in range(1, 9):
            sol = solve_moment_problem(np.ones(m), 1.0)
            logs.append(np.log(np.sqrt(np.mean(sol.values**2))))
        steps = np.diff(logs)
        assert np.all(steps > 0)
        assert np.all(np.diff(steps) <= 1e-12)

    def test_least_norm_among_solutions(self, rng):
        # adding anything orthogonal to the exponentials keeps the moments and raises the norm
        sol = solve_moment_problem(np.array([0.3, -0.1]), 1.0, grid_size=257)
        t, w = trapezoid_weights(1.0, 257)
        basis = np.exp(-np.array([1.0, 4.0])[:, None] * (1.0 - t[None, :]))
        d = rng.standard_normal(257)
        coef = np.linalg.solve((basis * w) @ basis.T, (basis * w) @ d)
        d = d - basis.T @ coef
        other = sol.values + d
        assert_allclose((basis * w) @ other, (basis * w) @ sol.values, atol=1e-12)
        assert w @ other**2 > w @ sol.values**2

    def test_cap(self):
        with pytest.raises(ValueError, match="cap"):
            solve_moment_problem(np.ones(9), 1.0)

    def test_ill_conditioned_without_regularization(self):
        with pytest.raises(IllConditionedError, match="regularization"):
            solve_moment_problem(np.ones(12), 1.0, mode_cap=12)
        sol = solve_moment_problem(np.ones(12), 1.0, mode_cap=12, regularization=1e-10)
        assert np.all(np.isfinite(sol.values))

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            solve_moment_problem(np.ones(2), 0.0)
        with pytest.raises(ValueError):
            solve_moment_problem(np.ones(2), 1.0, regularization=-1.0)
        with pytest.raises(ValueError):
            solve_moment_problem(np.ones(2), 1.0, exponents=np.array([1.0]))


class TestPlan:
    def test_zero_data(self):
        pot = PotentialSpec.constant(8)
        plan = plan_null_control(SpectralFunction.zeros(8), pot, 1.0, 2)
        assert not plan.v1_samples.any() and not plan.v2_samples.any()
        assert verify_plan(plan, SpectralFunction.zeros(8), pot) == 0.0

    def test_first_sine(self):
        pot = PotentialSpec.constant(8)
        y0 = SpectralFunction.mode(8, 1, ODD)
        plan = plan_null_control(y0, pot, 1.0, 1)
        assert verify_plan(plan, y0, pot) <= 1e-6
        assert plan.terminal_residual >= 0

    def test_parity_separation(self, rng):
        pot = PotentialSpec.constant(8)
        y0 = SpectralFunction(8, rng.standard_normal(8), np.zeros(9))
        plan = plan_null_control(y0, pot, 1.0, 3)
        assert not plan.v2_samples.any() and plan.v1_samples.any()

    def test_corrupted_control_fails(self, rng):
        pot = PotentialSpec.constant(8)
        y0 = SpectralFunction(8, rng.standard_normal(8), rng.standard_normal(9))
        plan = plan_null_control(y0, pot, 1.0, 3)
        bad = MomentControlPlan(plan.horizon, 3, plan.times, plan.v1_samples * 1.1, plan.v2_samples)
        assert verify_plan(plan, y0, pot) <= 1e-6
        assert verify_plan(bad, y0, pot) > 1e-3

    def test_high_modes_decay_freely(self, rng):
        pot = PotentialSpec.constant(8)
        modes = 2
        odd = np.concatenate([np.zeros(modes), rng.standard_normal(6)])
        even = np.concatenate([np.zeros(modes + 1), rng.standard_normal(6)])
        y0 = SpectralFunction(8, odd, even)
        plan = plan_null_control(y0, pot, 1.0, modes)
        assert np.max(np.abs(plan.v1_samples)) < 1e-12
        verify_plan(plan, y0, pot)
        norm0 = np.linalg.norm(y0.as_vector())
        assert plan.meta["terminal_norm_all"] <= np.exp(-((modes + 1) ** 2)) * norm0

    def test_vanishing_coefficient_named(self):
        pot = PotentialSpec(0.0, [1.0, 0.0, 1.0, 1.0], np.ones(5), validate=False)
        with pytest.raises(ControllabilityError, match="mode 2"):
            plan_null_control(SpectralFunction.mode(4, 1, ODD), pot, 1.0, 3)

    def test_untargeted_zero_coefficient_allowed(self):
        pot = PotentialSpec(0.0, [1.0, 1.0, 1.0, 0.0], np.ones(5), validate=False)
        plan = plan_null_control(SpectralFunction.mode(4, 1, ODD), pot, 1.0, 2)
        assert verify_plan(plan, SpectralFunction.mode(4, 1, ODD), pot) <= 1e-6

    def test_too_many_modes(self):
        with pytest.raises(ValueError):
            plan_null_control(SpectralFunction.zeros(3), PotentialSpec.constant(3), 1.0, 4)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_random_data_is_steered(self, seed, modes):
        r = np.random.default_rng(seed)
        pot = PotentialSpec.power_law(8, 0.0, 1.0, r)
        y0 = SpectralFunction(8, r.standard_normal(8), r.standard_normal(9))
        plan = plan_null_control(y0, pot, 1.0, modes)
        assert verify_plan(plan, y0, pot) <= 1e-6 * max(1.0, np.linalg.norm(y0.as_vector()))


class TestPlanSerialization:
    def plan(self):
        return plan_null_control(SpectralFunction.mode(4, 1, EVEN), PotentialSpec.constant(4), 1.0, 1,
                                 grid_size=33)

    def test_csv_round_trip(self):
        p = self.plan()
        q = MomentControlPlan.from_csv(p.to_csv(), 1)
        assert np.array_equal(p.v1_samples, q.v1_samples) and np.array_equal(p.times, q.times)
        assert q.horizon == 1.0

    def test_json_round_trip(self):
        p = self.plan()
        q = MomentControlPlan.from_json(p.to_json())
        assert np.array_equal(p.v2_samples, q.v2_samples) and q.target_modes == 1
        assert np.isnan(q.terminal_residual)

    def test_replay_matches(self):
        p = self.plan()
        y0 = SpectralFunction.mode(4, 1, EVEN)
        q = MomentControlPlan.from_csv(p.to_csv(), 1)
        assert verify_plan(q, y0, PotentialSpec.constant(4)) == verify_plan(p, y0, PotentialSpec.constant(4))

    def test_non_uniform_rejected(self):
        with pytest.raises(ValueError):
            MomentControlPlan(1.0, 1, [0.0, 0.2, 1.0], [0, 0, 0], [0, 0, 0])
