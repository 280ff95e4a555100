import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaugeport import (
    PricePanel,
    SensitivityProblem,
    TimeGrid,
    WeightVector,
    balance_residuals,
    constant_spec,
    delta_hedge,
    extract_market_gauge,
    insensitivity_residual,
    real_return,
    sensitivity_neutral_weights,
    simulate,
    to_riskfree_units,
)
from gaugeport.riskfree import (
    convergence_study,
    etemadi_check,
    is_price_insensitive,
    project_capped_simplex,
    rebalanced_quantities,
    simplex_grid_oracle,
)
from gaugeport.sim import EnvironmentSeries

GRID = TimeGrid(t0=0.0, dt=0.01, steps=50)


def random_panel(n_assets: int, seed: int, grid: TimeGrid = GRID) -> PricePanel:
    spec = constant_spec(n_assets, 0.05, 0.2)
    env = EnvironmentSeries.constant(grid)
    paths = simulate(spec, env, grid, n_paths=1, seed=seed)
    return PricePanel(grid=grid, prices=paths.paths[0])


class TestWeightVector:
    def test_sum_enforced(self):
        with pytest.raises(ValueError, match="sum to 1"):
            WeightVector(np.array([0.5, 0.4]))

    def test_equal_weights(self):
        w = WeightVector.equal(5)
        np.testing.assert_allclose(w.w, 0.2)
        w.require_riskfree()

    def test_riskfree_needs_positive_weights(self):
        w = WeightVector(np.array([1.5, -0.5]))
        with pytest.raises(ValueError, match="positive"):
            w.require_riskfree()

    def test_riskfree_cap(self):
        # one concentrated weight above c/N fails the dilution requirement
        w = WeightVector(np.concatenate([[0.6], np.full(9, 0.4 / 9)]))
        with pytest.raises(ValueError, match="max weight"):
            w.require_riskfree(c=4.0)
        WeightVector.equal(10).require_riskfree(c=4.0)


class TestPriceInsensitivity:
    def test_residual_of_cash_portfolio_scales_as_one_over_n(self):
        # equal-weight portfolio of the assets themselves: residual_i = q_i,
        # so sup_i |residual| ~ 1/N and doubles back when N halves
        sups = []
        for n in (8, 16, 32, 64):
            panel = random_panel(n, seed=n)
            q, _values = rebalanced_quantities(panel, WeightVector.equal(n))
            panel = PricePanel(grid=panel.grid, prices=panel.prices, quantities=q)
            residual = insensitivity_residual(panel, np.eye(n))
            sups.append(np.max(np.abs(residual)))
        ratios = np.array(sups[:-1]) / np.array(sups[1:])
        assert np.all(ratios > 1.5) and np.all(ratios < 2.7)

    def test_delta_hedged_book_is_insensitive(self):
        # one option plus delta_hedge() of the underlying has zero net delta
        option_delta = 0.63
        q_asset = delta_hedge(option_delta, option_qty=1.0)
        prices = np.linspace(1.0, 1.2, GRID.n_points)[:, None] * np.array([[100.0, 7.9]])
        quantities = np.broadcast_to(np.array([q_asset, 1.0]), prices.shape)
        panel = PricePanel(grid=GRID, prices=prices, quantities=quantities)
        deltas = np.array([[1.0], [option_delta]])  # d(instrument)/d(underlying)
        np.testing.assert_allclose(insensitivity_residual(panel, deltas), 0.0, atol=1e-15)
        assert is_price_insensitive(panel, deltas)

    def test_unhedged_book_is_sensitive(self):
        prices = np.ones((GRID.n_points, 2))
        quantities = np.broadcast_to(np.array([1.0, 1.0]), prices.shape)
        panel = PricePanel(grid=GRID, prices=prices, quantities=quantities)
        deltas = np.array([[1.0], [0.5]])
        assert not is_price_insensitive(panel, deltas)

    def test_requires_quantities(self):
        panel = random_panel(2, seed=1)
        with pytest.raises(ValueError, match="quantities"):
            insensitivity_residual(panel, np.eye(2))


class TestMarketGauge:
    def test_common_growth_gives_constant_gauge(self):
        g = 0.07
        prices = np.exp(g * GRID.points())[:, None] * np.array([[1.0, 2.0, 0.5]])
        panel = PricePanel(grid=GRID, prices=prices)
        result = extract_market_gauge(panel, WeightVector.equal(3))
        np.testing.assert_allclose(result.a.a, -g, rtol=1e-10)
        # constant weights on proportional prices mean constant holdings
        np.testing.assert_allclose(result.b_n.bfield, 0.0, atol=1e-10)

    def test_value_series_starts_at_initial_value(self):
        panel = random_panel(4, seed=2)
        result = extract_market_gauge(panel, WeightVector.equal(4), initial_value=2.5)
        assert result.portfolio_value_series[0] == 2.5
        assert result.quantities.shape == panel.prices.shape

    def test_riskfree_units_round_trip(self):
        # re-extracting the gauge in risk-free units gives A' = 0 exactly
        panel = random_panel(6, seed=3)
        w = WeightVector.equal(6)
        result = extract_market_gauge(panel, w)
        primed = to_riskfree_units(panel, result.portfolio_value_series)
        result2 = extract_market_gauge(primed, w)
        np.testing.assert_allclose(result2.a.a, 0.0, atol=1e-12)
        np.testing.assert_allclose(result2.portfolio_value_series, 1.0, rtol=1e-13)

    def test_riskfree_portfolio_has_zero_real_return(self):
        panel = random_panel(5, seed=4)
        result = extract_market_gauge(panel, WeightVector.equal(5))
        rr = real_return(GRID, result.portfolio_value_series, result.a)
        np.testing.assert_allclose(rr.values, 0.0, atol=1e-12)

    def test_balance_residuals_vanish(self):
        panel = random_panel(5, seed=5)
        result = extract_market_gauge(panel, WeightVector.equal(5))
        r_const, r_self = balance_residuals(panel, result)
        scale = np.max(result.portfolio_value_series) / GRID.dt
        np.testing.assert_allclose(r_const, 0.0, atol=1e-12 * scale)
        np.testing.assert_allclose(r_self, 0.0, atol=1e-12 * scale)

    def test_riskfree_series_must_be_positive(self):
        panel = random_panel(2, seed=6)
        bad = np.ones(GRID.n_points)
        bad[3] = -1.0
        with pytest.raises(ValueError, match="positive"):
            to_riskfree_units(panel, bad)


class TestConvergenceStudy:
    GRID8 = TimeGrid(t0=0.0, dt=1.0 / 64, steps=8)

    def test_equal_vol_slope_is_minus_half(self):
        spec = constant_spec(64, 0.05, 0.25)
        env = EnvironmentSeries.constant(self.GRID8)
        report = convergence_study(spec, env, self.GRID8, [8, 16, 32, 64], 2000, seed=10)
        # sigma_hat = sigma / sqrt(N) exactly, so the analytic fit is exact
        assert report.analytic_slope == pytest.approx(-0.5, abs=1e-12)
        np.testing.assert_allclose(
            report.analytic_sigma_hats, 0.25 / np.sqrt([8, 16, 32, 64]), rtol=1e-12
        )
        assert -0.6 < report.slope < -0.4
        # realized estimates near their analytic targets
        np.testing.assert_allclose(report.sigma_hats, report.analytic_sigma_hats, rtol=0.1)

    def test_size_validation(self):
        spec = constant_spec(16, 0.05, 0.25)
        env = EnvironmentSeries.constant(self.GRID8)
        with pytest.raises(ValueError, match="increasing"):
            convergence_study(spec, env, self.GRID8, [8, 8, 12, 16], 100, seed=0)
        with pytest.raises(ValueError, match="exceeds"):
            convergence_study(spec, env, self.GRID8, [4, 8, 16, 32], 100, seed=0)


class TestEtemadi:
    GRID8 = TimeGrid(t0=0.0, dt=1.0 / 64, steps=8)

    def test_identical_weights_have_zero_divergence(self):
        spec = constant_spec(16, 0.05, 0.2)
        env = EnvironmentSeries.constant(self.GRID8)
        w = WeightVector.equal(16)
        report = etemadi_check(spec, env, self.GRID8, w, w, 500, seed=1, sizes=[4, 8, 16])
        np.testing.assert_allclose(report.divergences, 0.0, atol=1e-15)

    def test_divergence_decays_with_universe_size(self):
        n = 256
        mu = np.linspace(0.0, 0.1, n)
        spec = constant_spec(n, mu, 0.2)
        env = EnvironmentSeries.constant(self.GRID8)
        rng = np.random.default_rng(7)
        wb = rng.uniform(0.5, 1.5, n)
        report = etemadi_check(
            spec, env, self.GRID8, WeightVector.equal(n), WeightVector(wb / wb.sum()),
            2000, seed=2, sizes=[4, 16, 64, 256],
        )
        assert report.terminal_divergence < report.divergences[0]

    def test_short_positions_rejected(self):
        spec = constant_spec(4, 0.05, 0.2)
        env = EnvironmentSeries.constant(self.GRID8)
        wa = WeightVector(np.array([0.5, 0.5, 0.5, -0.5]))
        with pytest.raises(ValueError, match="positive"):
            etemadi_check(spec, env, self.GRID8, wa, WeightVector.equal(4), 100, seed=0)


class TestCappedSimplexProjection:
    @settings(max_examples=60, deadline=None)
    @given(
        v=arrays(np.float64, st.integers(3, 12),
                 elements=st.floats(-5, 5, allow_nan=False)),
        c=st.floats(1.1, 4.0),
    )
    def test_projection_is_feasible(self, v, c):
        cap = c / v.size
        w = project_capped_simplex(v, cap)
        assert abs(w.sum() - 1.0) < 1e-9
        assert np.all(w >= 0.0) and np.all(w <= cap + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        v=arrays(np.float64, 6, elements=st.floats(-3, 3, allow_nan=False)),
        c=st.floats(1.1, 4.0),
        u_seed=st.integers(0, 10_000),
    )
    def test_variational_inequality(self, v, c, u_seed):
        # (v - proj) . (u - proj) <= 0 for every feasible u characterizes
        # the Euclidean projection onto a convex set
        cap = c / v.size
        w = project_capped_simplex(v, cap)
        rng = np.random.default_rng(u_seed)
        u = project_capped_simplex(rng.uniform(-1, 1, v.size), cap)
        assert (v - w) @ (u - w) <= 1e-8

    def test_feasible_point_is_fixed(self):
        w = np.array([0.3, 0.3, 0.2, 0.2])
        np.testing.assert_allclose(project_capped_simplex(w, 0.5), w, atol=1e-10)


class TestSensitivityNeutralWeights:
    def test_zero_gradient_keeps_equal_weights(self):
        problem = SensitivityProblem(np.zeros((8, 2)), cap=0.5)
        result = sensitivity_neutral_weights(problem)
        assert result.exact and result.residual == 0.0
        np.testing.assert_allclose(result.weights.w, 0.125, atol=1e-12)

    def test_centered_gradient_is_already_neutral(self):
        # columns summing to zero are orthogonal to equal weights
        rng = np.random.default_rng(0)
        g = rng.standard_normal((10, 2))
        g -= g.mean(axis=0)
        problem = SensitivityProblem(g, cap=0.4)
        result = sensitivity_neutral_weights(problem)
        assert result.residual < 1e-12

    def test_matches_global_grid_oracle_small_n(self):
        rng = np.random.default_rng(5)
        problem = SensitivityProblem(rng.standard_normal((6, 3)) + 0.3, cap=4.0 / 6)
        result = sensitivity_neutral_weights(problem)
        oracle = simplex_grid_oracle(problem, grid_divisions=4)
        assert result.residual <= oracle + 1e-6

    def test_large_universe_reaches_neutrality(self):
        rng = np.random.default_rng(6)
        n = 256
        problem = SensitivityProblem(rng.standard_normal((n, 3)) + 0.2, cap=4.0 / n)
        result = sensitivity_neutral_weights(problem)
        assert result.exact
        assert result.residual <= 1e-8
        w = result.weights.w
        assert abs(w.sum() - 1.0) < 1e-9
        assert np.all(w >= -1e-12) and np.all(w <= problem.cap + 1e-12)

    def test_never_worse_than_start(self):
        rng = np.random.default_rng(9)
        g = rng.standard_normal((12, 2))
        problem = SensitivityProblem(g, cap=0.5)
        start_res = float(np.linalg.norm(g.T @ np.full(12, 1.0 / 12)))
        result = sensitivity_neutral_weights(problem)
        assert result.residual <= start_res + 1e-15

    def test_problem_validation(self):
        with pytest.raises(ValueError, match="n_factors < N"):
            SensitivityProblem(np.ones((3, 3)), cap=0.5)
        with pytest.raises(ValueError, match="infeasible"):
            SensitivityProblem(np.ones((4, 1)), cap=0.1)
