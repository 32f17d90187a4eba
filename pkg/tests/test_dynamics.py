"""Tests for simulated survival-probability paths."""

import math

import numpy as np
import pandas as pd
import pytest

from becorr.common import norm_ppf, uniform_correlation
from becorr.dynamics import (
    PathSet,
    Scheme,
    clayton_beta,
    exact_step_covariance,
    path_normals,
    realized_z_correlation,
    simulate,
    simulate_clayton,
    simulate_euler,
    simulate_exact,
    terminal_z_variance,
    time_grid,
)
from becorr.errors import DomainError, ShapeError
from becorr.hedging import run_hedge
from becorr.model import BasketPayoff, CopulaSpec, DynamicsSpec, MarketState, XiSchedule

MATURITY = 5.0


def _flat_xi(maturity=MATURITY):
    return XiSchedule.table(maturity, (0.0,), (1.0,))


def _spec(sigma_bar, corr, xi=None, mu=None):
    return DynamicsSpec(np.asarray(sigma_bar, dtype=float), xi or _flat_xi(), corr, mu)


class TestTimeGrid:
    def test_grid(self):
        grid = time_grid(0.0, 0.5, 4, MATURITY)
        np.testing.assert_allclose(grid, [0, 0.5, 1, 1.5, 2])

    def test_reaches_maturity(self):
        with pytest.raises(DomainError):
            time_grid(0.0, 1.0, 5, MATURITY)

    def test_grid_must_start_at_valuation_time(self):
        market = MarketState.homogeneous(2, 0.9, maturity=MATURITY)
        with pytest.raises(DomainError):
            simulate_exact(_spec([0.2, 0.2], np.eye(2)), market, [0.5, 1.0], 2, 1)
        with pytest.raises(DomainError):
            simulate_exact(_spec([0.2, 0.2], np.eye(2)), market, [0.0, 1.0, 1.0], 2, 1)


class TestNormals:
    def test_prefix_stable(self):
        np.testing.assert_array_equal(path_normals(7, 5, 3, 2)[:3], path_normals(7, 3, 3, 2))

    def test_seed_changes_draws(self):
        assert not np.array_equal(path_normals(7, 2, 3, 2), path_normals(8, 2, 3, 2))


class TestExactScheme:
    """Exact transition of Z = Phi^-1(Q)."""

    def test_zero_volatility_keeps_survival(self):
        market = MarketState.from_survival([0.9, 0.7], maturity=MATURITY)
        paths = simulate_exact(_spec([0.0, 0.0], uniform_correlation(2, 0.5)), market, time_grid(0, 0.5, 4, MATURITY), 3, 1)
        np.testing.assert_allclose(paths.survival, np.broadcast_to([0.9, 0.7], paths.survival.shape), rtol=0, atol=1e-14)
        assert paths.scheme == Scheme.EXACT_Z

    def test_deterministic(self):
        market = MarketState.homogeneous(3, 0.9, maturity=MATURITY)
        spec = _spec([0.3, 0.4, 0.5], uniform_correlation(3, 0.4))
        grid = time_grid(0, 0.25, 8, MATURITY)
        first = simulate_exact(spec, market, grid, 6, 42)
        again = simulate_exact(spec, market, grid, 6, 42)
        fewer = simulate_exact(spec, market, grid, 4, 42)
        np.testing.assert_array_equal(first.survival, again.survival)
        np.testing.assert_array_equal(first.survival[:4], fewer.survival)

    def test_martingale(self):
        market = MarketState.from_survival([0.9, 0.6], maturity=MATURITY)
        paths = simulate_exact(_spec([0.8, 0.5], uniform_correlation(2, 0.3)), market, time_grid(0, 1.0, 4, MATURITY), 4000, 3)
        terminal = paths.survival[:, -1]
        std_error = terminal.std(axis=0) / math.sqrt(terminal.shape[0])
        assert np.all(np.abs(terminal.mean(axis=0) - [0.9, 0.6]) < 4 * std_error)

    def test_terminal_variance(self):
        spec = _spec([0.5], np.eye(1))
        market = MarketState.from_survival([0.5], maturity=MATURITY)
        paths = simulate_exact(spec, market, time_grid(0, 0.5, 4, MATURITY), 4000, 9)
        z = norm_ppf(paths.survival[:, -1, 0])
        expected = terminal_z_variance(spec, 2.0)[0]
        assert expected == pytest.approx(math.expm1(0.25 * 2.0))
        assert z.var() == pytest.approx(expected, abs=4 * expected * math.sqrt(2 / z.size))

    def test_realized_correlation(self):
        corr = uniform_correlation(3, 0.6)
        market = MarketState.homogeneous(3, 0.8, maturity=MATURITY)
        paths = simulate_exact(_spec([0.3, 0.3, 0.3], corr), market, time_grid(0, 0.05, 80, MATURITY), 500, 5)
        np.testing.assert_allclose(realized_z_correlation(paths), corr, atol=0.02)

    def test_zero_drift_function(self):
        market = MarketState.from_survival([0.9, 0.8], maturity=MATURITY)
        corr = uniform_correlation(2, 0.5)
        grid = time_grid(0, 0.5, 4, MATURITY)
        plain = simulate_exact(_spec([0.4, 0.6], corr), market, grid, 10, 2)
        with_mu = simulate_exact(_spec([0.4, 0.6], corr, mu=lambda t, q: np.zeros_like(q)), market, grid, 10, 2)
        np.testing.assert_allclose(with_mu.survival, plain.survival, rtol=1e-12)

    def test_terminating_schedule_variance_grows(self):
        spec = _spec([0.5], np.eye(1), xi=XiSchedule.merton(MATURITY))
        assert terminal_z_variance(spec, MATURITY - 1e-12)[0] > 100 * terminal_z_variance(spec, 4.0)[0]

    def test_market_checks(self):
        spec = _spec([0.3, 0.3], np.eye(2))
        grid = time_grid(0, 0.5, 2, MATURITY)
        with pytest.raises(ShapeError):
            simulate_exact(spec, MarketState.homogeneous(3, 0.9, maturity=MATURITY), grid, 2, 1)
        defaulted = MarketState(("a", "b"), MATURITY, [0.0, 0.9], 0.0, defaulted=[True, False])
        with pytest.raises(DomainError):
            simulate_exact(spec, defaulted, grid, 2, 1)


class TestStepCovariance:
    def test_diagonal(self):
        cov = exact_step_covariance([0.5, 1.0], uniform_correlation(2, 0.4), 2.0)
        np.testing.assert_allclose(np.diag(cov), np.expm1(np.array([0.25, 1.0]) * 2.0))
        assert cov[0, 1] == pytest.approx(0.4 * 2 * 0.5 / 1.25 * math.expm1(1.25))

    def test_small_volatility_limit(self):
        cov = exact_step_covariance([1e-8, 1e-8], uniform_correlation(2, 0.3), 2.0)
        assert cov[0, 1] == pytest.approx(0.3 * 1e-16 * 2.0, rel=1e-6)

    def test_zero_volatility(self):
        cov = exact_step_covariance([0.0, 1.0], uniform_correlation(2, 0.3), 1.0)
        assert cov[0, 0] == 0.0
        assert cov[0, 1] == 0.0


class TestEulerScheme:
    def test_zero_volatility_keeps_survival(self):
        market = MarketState.from_survival([0.9, 0.7], maturity=MATURITY)
        paths = simulate_euler(_spec([0.0, 0.0], np.eye(2)), market, time_grid(0, 0.5, 4, MATURITY), 3, 1)
        np.testing.assert_array_equal(paths.survival, np.broadcast_to([0.9, 0.7], paths.survival.shape))
        assert paths.clamp_count == 0

    def test_martingale(self):
        market = MarketState.from_survival([0.9, 0.6], maturity=MATURITY)
        paths = simulate_euler(_spec([0.8, 0.5], uniform_correlation(2, 0.3)), market, time_grid(0, 0.1, 20, MATURITY), 4000, 3)
        terminal = paths.survival[:, -1]
        std_error = terminal.std(axis=0) / math.sqrt(terminal.shape[0])
        assert np.all(np.abs(terminal.mean(axis=0) - [0.9, 0.6]) < 4 * std_error)

    @staticmethod
    def _terminal_pair(steps_per_maturity, n_paths=2000, seed=11):
        """Terminal Q of both schemes on one year, same grid and same draws."""
        market = MarketState.from_survival([0.9, 0.85], maturity=MATURITY)
        spec = _spec([0.4, 0.4], uniform_correlation(2, 0.3))
        grid = time_grid(0, MATURITY / steps_per_maturity, steps_per_maturity // 5, MATURITY)
        euler = simulate_euler(spec, market, grid, n_paths, seed).survival[:, -1]
        exact = simulate_exact(spec, market, grid, n_paths, seed).survival[:, -1]
        return euler, exact

    def test_matches_exact_scheme(self):
        euler, exact = self._terminal_pair(2000)
        diff = euler - exact
        std_error = diff.std(axis=0, ddof=1) / math.sqrt(diff.shape[0])
        assert np.all(np.abs(diff.mean(axis=0)) <= 4 * std_error)
        exact_error = exact.std(axis=0, ddof=1) / math.sqrt(exact.shape[0])
        assert np.all(np.abs(euler.mean(axis=0) - exact.mean(axis=0)) <= 4 * exact_error)

    def test_error_shrinks_with_step(self):
        errors = []
        for k in (250, 500, 1000, 2000):
            euler, exact = self._terminal_pair(k)
            errors.append(np.abs(euler - exact).mean())
        assert all(coarse > fine for coarse, fine in zip(errors, errors[1:]))
        assert errors[-1] < 0.6 * errors[0]

    def test_clamp_warning(self):
        market = MarketState.from_survival([0.99], maturity=2.0)
        spec = _spec([20.0], np.eye(1), xi=_flat_xi(2.0))
        with pytest.warns(UserWarning, match="clamped"):
            paths = simulate_euler(spec, market, time_grid(0, 0.01, 100, 2.0), 50, 4)
        assert paths.clamp_rate > 0.01
        assert np.all((paths.survival >= 1e-10) & (paths.survival <= 1 - 1e-10))

    def test_scheme_dispatch(self):
        market = MarketState.from_survival([0.9, 0.8], maturity=MATURITY)
        spec = _spec([0.3, 0.3], np.eye(2))
        grid = time_grid(0, 0.5, 2, MATURITY)
        assert simulate(spec, market, grid, 2, 1, "euler").scheme == Scheme.EULER
        with pytest.raises(ValueError):
            simulate(spec, market, grid, 2, 1, "clayton")


class TestClaytonScheme:
    """Dynamics under which Clayton-copula prices are martingales."""

    def test_beta(self):
        assert clayton_beta(1.0, 0.75) == pytest.approx(math.sqrt(0.75))

    def test_weak_dependence_decouples_names(self):
        market = MarketState.from_survival([0.9, 0.8], maturity=MATURITY)
        paths = simulate_clayton(1e-6, 0.5, market, time_grid(0, 0.05, 50, MATURITY), 200, 6)
        dq = np.diff(paths.survival, axis=1).reshape(-1, 2)
        assert abs(np.corrcoef(dq, rowvar=False)[0, 1]) < 4 / math.sqrt(dq.shape[0])

    def test_strong_dependence_couples_names(self):
        market = MarketState.from_survival([0.5, 0.5], maturity=MATURITY)
        paths = simulate_clayton(5.0, 0.5, market, time_grid(0, 0.05, 20, MATURITY), 200, 6)
        dq = np.diff(paths.survival, axis=1).reshape(-1, 2)
        assert np.corrcoef(dq, rowvar=False)[0, 1] > 0.9
        assert paths.scheme == Scheme.CLAYTON

    def test_clayton_priced_ftd_hedges_without_drift(self):
        """Under these dynamics a Clayton-priced FTD has zero expected hedged P&L; a Gaussian price at zero
        correlation is short the cross gamma and loses."""
        market = MarketState.from_survival([0.85, 0.8], maturity=MATURITY)
        paths = simulate_clayton(2.0, 1.0, market, time_grid(0, 0.01, 100, MATURITY), 400, 13)
        payoff = BasketPayoff.fptd(2, 1)

        total = run_hedge(paths, payoff, CopulaSpec.clayton(2.0)).total_pnl
        assert abs(total.mean()) < 4 * total.std(ddof=1) / math.sqrt(total.size)

        independent = run_hedge(paths, payoff, CopulaSpec.flat(2, 0.0)).total_pnl
        assert independent.mean() < -4 * independent.std(ddof=1) / math.sqrt(independent.size)

    def test_domain(self):
        market = MarketState.from_survival([0.9, 0.8], maturity=MATURITY)
        grid = time_grid(0, 0.5, 2, MATURITY)
        with pytest.raises(DomainError):
            simulate_clayton(0.0, 0.5, market, grid, 2, 1)
        with pytest.raises(DomainError):
            simulate_clayton(1.0, 0.0, market, grid, 2, 1)


class TestPathFrame:
    """Long-table export and import of path sets."""

    @pytest.fixture
    def paths(self):
        market = MarketState.from_survival([0.9, 0.8], maturity=MATURITY, names=["acme", "globex"])
        return simulate_exact(_spec([0.3, 0.4], uniform_correlation(2, 0.5)), market, time_grid(0, 0.5, 3, MATURITY), 4, 1)

    def test_round_trip(self, paths):
        frame = paths.to_frame()
        assert list(frame.columns) == ["path", "step", "time", "name", "survival_prob"]
        assert len(frame) == 4 * 4 * 2
        restored = PathSet.from_frame(frame, MATURITY, seed=1)
        assert restored.names == ("acme", "globex")
        np.testing.assert_array_equal(restored.survival, paths.survival)
        np.testing.assert_array_equal(restored.times, paths.times)

    def test_missing_column(self, paths):
        with pytest.raises(ShapeError):
            PathSet.from_frame(paths.to_frame().drop(columns="time"), MATURITY)

    def test_duplicate_rows(self, paths):
        frame = paths.to_frame()
        with pytest.raises(ShapeError):
            PathSet.from_frame(pd.concat([frame, frame.iloc[:1]]), MATURITY)

    def test_incomplete_grid(self, paths):
        with pytest.raises(ShapeError):
            PathSet.from_frame(paths.to_frame().iloc[1:], MATURITY)

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            PathSet([0.0, 1.0], np.zeros((2, 3, 2)), ("a", "b"), MATURITY, 1, "exact_z")
