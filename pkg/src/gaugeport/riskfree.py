"""Approximately risk-free portfolios and market gauge extraction.

A diversified portfolio rebalanced to fixed positive weights defines the
market gauge A(t) = -d/dt ln(s.q) and the trade-unit field B_N = q_dot/q.
The module also checks price insensitivity, verifies the 1/sqrt(N) decay of
portfolio volatility, and solves for weights whose expected return is
insensitive to forecasting errors in the environment factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .gauge import GaugeFieldA, GaugeFieldB, PricePanel
from .grid import TimeGrid
from .sim import EnvironmentSeries, ProcessSpec, iter_step_ratio_chunks

#: Default diversification cap constant: weights must satisfy w_i <= DIVERSIFICATION_C / N.
DIVERSIFICATION_C = 4.0


@dataclass(frozen=True)
class WeightVector:
    """Portfolio weights summing to one."""

    w: np.ndarray
    scheme: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty vector")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")

    @property
    def n(self) -> int:
        return self.w.size

    def require_riskfree(self, c: float = DIVERSIFICATION_C) -> None:
        """Enforce long-only, unlevered, O(1/N)-diluted weights."""
        if np.any(self.w <= 0):
            raise ValueError("risk-free candidacy requires strictly positive weights")
        if self.w.max() > c / self.n + 1e-15:
            raise ValueError(
                f"risk-free candidacy requires max weight <= {c}/N = {c / self.n:g}"
            )

    @staticmethod
    def equal(n: int) -> "WeightVector":
        return WeightVector(np.full(n, 1.0 / n), scheme="equal")


@dataclass(frozen=True)
class MarketGaugeResult:
    """Extracted gauge fields and the generating portfolio's value path."""

    a: GaugeFieldA
    b_n: GaugeFieldB
    portfolio_value_series: np.ndarray  # [steps+1]
    quantities: np.ndarray  # [steps+1, N], holdings after each rebalance


@dataclass(frozen=True)
class SensitivityProblem:
    """Drift-gradient data for the sensitivity-neutral weight search."""

    dmu_dxi: np.ndarray  # [N, n_factors]
    cap: float
    base_weights: Optional[WeightVector] = None

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.dmu_dxi, dtype=float))
        if g.shape[1] > g.shape[0] and g.shape[0] == 1:
            g = g.T
        object.__setattr__(self, "dmu_dxi", g)
        if not np.all(np.isfinite(g)):
            raise ValueError("drift gradients must be finite")
        n = g.shape[0]
        if g.shape[1] >= n:
            raise ValueError("need n_factors < N")
        if self.cap <= 0 or n * self.cap < 1.0 - 1e-12:
            raise ValueError("infeasible constraints: need cap > 0 and N*cap >= 1")

    @property
    def n(self) -> int:
        return self.dmu_dxi.shape[0]


# ---------------------------------------------------------------------------
# Price insensitivity and hedging
# ---------------------------------------------------------------------------

def insensitivity_residual(panel: PricePanel, deltas: np.ndarray, k: int = 0) -> np.ndarray:
    """Residual_i = sum_alpha K^alpha dP_alpha/ds_i at grid point k."""
    if panel.quantities is None:
        raise ValueError("no holdings: panel has no quantities")
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 2 or deltas.shape[0] != panel.n_assets:
        raise ValueError(
            f"deltas must be [n_instruments={panel.n_assets}, n_assets], got {deltas.shape}"
        )
    return panel.quantities[k] @ deltas


def is_price_insensitive(
    panel: PricePanel, deltas: np.ndarray, k: int = 0, rel_tol: float = 1e-8
) -> bool:
    """Declare insensitivity when max|residual| <= rel_tol * |K| * |dP|."""
    residual = insensitivity_residual(panel, deltas, k)
    scale = np.linalg.norm(panel.quantities[k]) * np.linalg.norm(deltas)
    return float(np.max(np.abs(residual))) <= rel_tol * max(scale, 1.0)


def delta_hedge(option_delta: float, option_qty: float) -> float:
    """Asset quantity q = -Q * dV/ds that neutralizes one option position."""
    if not np.isfinite(option_delta):
        raise ValueError("option delta must be finite")
    return -option_qty * option_delta


# ---------------------------------------------------------------------------
# Market gauge extraction
# ---------------------------------------------------------------------------

def rebalanced_quantities(
    panel: PricePanel, w: WeightVector, initial_value: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Holdings and value path of a portfolio rebalanced to w each step.

    q[k] = w * Pi[k] / s[k] immediately after the step-k rebalance;
    Pi[k+1] = s[k+1] . q[k].  Rebalancing is cost neutral at current prices.
    """
    if w.n != panel.n_assets:
        raise ValueError("weight length does not match the panel")
    n_points = panel.grid.n_points
    values = np.empty(n_points)
    quantities = np.empty_like(panel.prices)
    values[0] = initial_value
    for k in range(n_points):
        quantities[k] = w.w * values[k] / panel.prices[k]
        if k + 1 < n_points:
            values[k + 1] = panel.prices[k + 1] @ quantities[k]
    if np.any(values <= 0):
        raise ValueError("portfolio value hit zero or below")
    return quantities, values


def extract_market_gauge(
    panel: PricePanel, w: WeightVector, initial_value: float = 1.0
) -> MarketGaugeResult:
    """Market gauge A = -d/dt ln(s.q) and diagonal B_N = q_dot/q.

    B_N is stored diagonal: with vector holdings the defining relation
    s.q_dot = s.B_N.q is under-determined and the diagonal entries
    q_dot^i / q^i are its minimal solution.
    """
    quantities, values = rebalanced_quantities(panel, w, initial_value)
    grid = panel.grid
    a = GaugeFieldA(grid, -np.diff(np.log(values)) / grid.dt)
    q_dot = np.diff(quantities, axis=0) / grid.dt
    diag_rates = q_dot / quantities[:-1]
    bfield = np.zeros((grid.steps, panel.n_assets, panel.n_assets))
    idx = np.arange(panel.n_assets)
    bfield[:, idx, idx] = diag_rates
    b_n = GaugeFieldB(grid, bfield)
    return MarketGaugeResult(a=a, b_n=b_n, portfolio_value_series=values, quantities=quantities)


def balance_residuals(panel: PricePanel, result: MarketGaugeResult) -> tuple[np.ndarray, np.ndarray]:
    """Discrete self-financing/constancy balances for an extracted gauge.

    Returns (r_constancy, r_selffinancing) per interval:

        r_constancy[k]     = s_dot.q + A_arith * s.q + s.B_N.q
        r_selffinancing[k] = s.q_dot - s.B_N.q

    with forward differences, holdings q[k], prices s[k+1] in the trade
    terms, and A converted to the arithmetic rate (1 - e^{-A dt})/dt implied
    by the stored log-rate.  Both vanish identically for rebalanced
    portfolios.
    """
    grid = panel.grid
    dt = grid.dt
    s = panel.prices
    q = result.quantities
    values = result.portfolio_value_series
    s_dot = np.diff(s, axis=0) / dt
    q_dot = np.diff(q, axis=0) / dt
    diag = np.einsum("kii->ki", result.b_n.bfield)
    # s.B_N.q with the diagonal field reduces to s . (diag * q).
    s_bq = np.einsum("ki,ki->k", s[1:], diag * q[:-1])
    s_qdot = np.einsum("ki,ki->k", s[1:], q_dot)
    a_arith = (1.0 - np.exp(-result.a.a * dt)) / dt
    r_constancy = (
        np.einsum("ki,ki->k", s_dot, q[:-1]) + a_arith * values[:-1] + s_bq
    )
    r_selffinancing = s_qdot - s_bq
    return r_constancy, r_selffinancing


def to_riskfree_units(panel: PricePanel, riskfree_values: np.ndarray) -> PricePanel:
    """Quote every price in units of the risk-free portfolio (A' = 0 gauge)."""
    riskfree_values = np.asarray(riskfree_values, dtype=float)
    if riskfree_values.shape != (panel.grid.n_points,):
        raise ValueError("risk-free value series must cover the panel grid")
    if np.any(riskfree_values <= 0):
        raise ValueError("risk-free value series must be strictly positive")
    return PricePanel(
        grid=panel.grid,
        prices=panel.prices / riskfree_values[:, None],
        quantities=panel.quantities,
        asset_ids=panel.asset_ids,
    )


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingReport:
    sizes: tuple[int, ...]
    sigma_hats: np.ndarray
    slope: float
    intercept: float
    analytic_sigma_hats: np.ndarray
    analytic_slope: float


def _streamed_sigma_hat(
    spec: ProcessSpec, env: EnvironmentSeries, grid: TimeGrid, weights: np.ndarray,
    n_paths: int, seed: int,
) -> float:
    """Pooled std of per-step portfolio log-returns, annualized."""
    count = 0
    total = 0.0
    total_sq = 0.0
    for ratios in iter_step_ratio_chunks(spec, env, grid, n_paths, seed):
        logret = np.log(ratios @ weights)
        count += logret.size
        total += logret.sum()
        total_sq += np.sum(logret**2)
    mean = total / count
    var = total_sq / count - mean**2
    return float(np.sqrt(max(var, 0.0))) / np.sqrt(grid.dt)


def convergence_study(
    spec: ProcessSpec,
    env: EnvironmentSeries,
    grid: TimeGrid,
    sizes: Sequence[int],
    n_paths: int,
    seed: int,
) -> ScalingReport:
    """Fit log sigma_hat vs log N for equal-weight prefix universes.

    The analytic slope comes from sigma_hat^2 = sum w_i^2 sigma_i^2 with the
    volatilities evaluated at the initial environment.
    """
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 4 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("need at least 4 strictly increasing universe sizes")
    if max(sizes) > spec.n_assets:
        raise ValueError("largest size exceeds the process's asset count")

    sigma0 = np.array([spec.sigma_fn(i, env.xi[0]) for i in range(max(sizes))])
    sigma_hats = []
    analytic = []
    for j, n in enumerate(sizes):
        sub = ProcessSpec(n, spec.mu_fn, spec.sigma_fn, spec.noise)
        weights = np.full(n, 1.0 / n)
        sigma_hats.append(_streamed_sigma_hat(sub, env, grid, weights, n_paths, seed + j))
        analytic.append(np.sqrt(np.sum((sigma0[:n] / n) ** 2)))
    sigma_hats = np.array(sigma_hats)
    analytic = np.array(analytic)
    finite = np.isfinite(np.log(sigma_hats))
    if finite.sum() < 3:
        raise ValueError("degenerate fit: fewer than 3 finite points")
    slope, intercept = np.polyfit(np.log(np.array(sizes)[finite]), np.log(sigma_hats[finite]), 1)
    analytic_slope, _ = np.polyfit(np.log(sizes), np.log(analytic), 1)
    return ScalingReport(
        sizes=sizes,
        sigma_hats=sigma_hats,
        slope=float(slope),
        intercept=float(intercept),
        analytic_sigma_hats=analytic,
        analytic_slope=float(analytic_slope),
    )


@dataclass(frozen=True)
class EtemadiReport:
    sizes: tuple[int, ...]
    divergences: np.ndarray  # |mean cumulative return difference| per size
    terminal_divergence: float


def etemadi_check(
    spec: ProcessSpec,
    env: EnvironmentSeries,
    grid: TimeGrid,
    weight_a: WeightVector,
    weight_b: WeightVector,
    n_paths: int,
    seed: int,
    sizes: Optional[Sequence[int]] = None,
) -> EtemadiReport:
    """Divergence of cumulative returns under two positive weightings.

    Sub-universes are nested prefixes of the fixed asset ordering; within
    each prefix the full-universe weights are renormalized.  All positive-
    weight diversified averages share one limit, so the divergence must decay
    with N.
    """
    for wv in (weight_a, weight_b):
        if np.any(wv.w <= 0):
            raise ValueError("weights must be strictly positive (no shorts, no leverage)")
        if wv.n != spec.n_assets:
            raise ValueError("weight length does not match the asset universe")
    if sizes is None:
        sizes = []
        n = 64
        while n < spec.n_assets:
            sizes.append(n)
            n *= 4
        sizes.append(spec.n_assets)
    sizes = tuple(int(n) for n in sizes)
    if max(sizes) > spec.n_assets:
        raise ValueError("largest sub-universe exceeds the asset count")

    sums_a = np.zeros(len(sizes))
    sums_b = np.zeros(len(sizes))
    n_done = 0
    for ratios in iter_step_ratio_chunks(spec, env, grid, n_paths, seed):
        for j, n in enumerate(sizes):
            wa = weight_a.w[:n] / weight_a.w[:n].sum()
            wb = weight_b.w[:n] / weight_b.w[:n].sum()
            sums_a[j] += np.sum(np.log(ratios[:, :, :n] @ wa))
            sums_b[j] += np.sum(np.log(ratios[:, :, :n] @ wb))
        n_done += ratios.shape[0]
    cum_a = sums_a / n_done
    cum_b = sums_b / n_done
    div = np.abs(cum_a - cum_b)
    return EtemadiReport(sizes=sizes, divergences=div, terminal_divergence=float(div[-1]))


# ---------------------------------------------------------------------------
# Sensitivity-neutral weights
# ---------------------------------------------------------------------------

def project_capped_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {w : sum w = 1, 0 <= w <= cap}.

    Bisection on the shift tau in w = clip(v - tau, 0, cap); the constraint
    sum is monotone in tau.
    """
    v = np.asarray(v, dtype=float)
    lo = v.min() - cap - 1.0
    hi = v.max()
    # 80 halvings shrink the bracket below double precision resolution
    for _ in range(80):
        tau = 0.5 * (lo + hi)
        total = np.clip(v - tau, 0.0, cap).sum()
        if total > 1.0:
            lo = tau
        else:
            hi = tau
    return np.clip(v - 0.5 * (lo + hi), 0.0, cap)


def _residual(g: np.ndarray, w: np.ndarray) -> float:
    return float(np.linalg.norm(g.T @ w))


def _affine_polish(g: np.ndarray, w: np.ndarray, cap: float) -> Optional[np.ndarray]:
    """Minimal-distance projection of w onto {sum w = 1, g^T w = 0}.

    Returns None when the projected point violates the box constraints.
    """
    n = g.shape[0]
    basis = np.column_stack([np.ones(n), g])  # constraints: basis^T w = (1, 0, ..)
    rhs = np.concatenate([[1.0], np.zeros(g.shape[1])])
    # w* = w - basis (basis^T basis)^+ (basis^T w - rhs)
    gram = basis.T @ basis
    correction = basis @ np.linalg.lstsq(gram, basis.T @ w - rhs, rcond=None)[0]
    candidate = w - correction
    if np.all(candidate >= -1e-14) and np.all(candidate <= cap + 1e-14):
        return np.clip(candidate, 0.0, cap)
    return None


def projected_gradient(
    g: np.ndarray,
    w0: np.ndarray,
    cap: float,
    max_iter: int = 2000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Accelerated projected gradient for min ||g^T w||^2 over the capped simplex."""
    lips = 2.0 * np.linalg.norm(g, 2) ** 2
    step = 1.0 / max(lips, 1e-300)
    w = w0.copy()
    y = w0.copy()
    t = 1.0
    best = w.copy()
    best_res = _residual(g, w)
    for _ in range(max_iter):
        grad = 2.0 * g @ (g.T @ y)
        w_new = project_capped_simplex(y - step * grad, cap)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t**2))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        move = np.max(np.abs(w_new - w))
        w, t = w_new, t_new
        res = _residual(g, w)
        if res < best_res:
            best, best_res = w.copy(), res
        if move < tol or best_res < 1e-13:
            break
    return best


@dataclass(frozen=True)
class SensitivityResult:
    weights: WeightVector
    residual: float
    exact: bool  # residual below the neutrality tolerance


def sensitivity_neutral_weights(
    problem: SensitivityProblem, tol: float = 1e-8, max_iter: int = 2000
) -> SensitivityResult:
    """Weights minimizing the drift sensitivity ||w^T dmu_dxi|| on the capped simplex.

    Deterministic initialization at equal weights (or the supplied base
    weights), accelerated projected gradient, then a final projection onto
    the exact-neutrality affine subspace when that projection stays feasible.
    The returned residual never exceeds the starting point's.
    """
    g = problem.dmu_dxi
    n = problem.n
    w0 = problem.base_weights.w if problem.base_weights is not None else np.full(n, 1.0 / n)
    w0 = project_capped_simplex(w0, problem.cap)
    if _residual(g, w0) == 0.0:
        return SensitivityResult(WeightVector(w0), 0.0, True)
    w = projected_gradient(g, w0, problem.cap, max_iter=max_iter)
    polished = _affine_polish(g, w, problem.cap)
    if polished is not None:
        polished = project_capped_simplex(polished, problem.cap)
        if _residual(g, polished) < _residual(g, w):
            w = polished
    if _residual(g, w) > _residual(g, w0):
        w = w0
    res = _residual(g, w)
    return SensitivityResult(WeightVector(w), res, res <= tol)


def simplex_grid_oracle(
    problem: SensitivityProblem, grid_divisions: int = 4, max_iter: int = 4000
) -> float:
    """Globally searched optimal residual: multistart projected gradient from
    every point of a coarse simplex grid.  Small-N verification oracle only.
    """
    g = problem.dmu_dxi
    n = problem.n
    best = np.inf
    m = grid_divisions
    # Compositions of m into n parts via stars and bars.
    for bars in combinations(range(m + n - 1), n - 1):
        parts = np.diff(np.concatenate([[-1], np.array(bars), [m + n - 1]])) - 1
        start = project_capped_simplex(parts / m, problem.cap)
        w = projected_gradient(g, start, problem.cap, max_iter=max_iter)
        polished = _affine_polish(g, w, problem.cap)
        if polished is not None and _residual(g, polished) < _residual(g, w):
            w = polished
        best = min(best, _residual(g, w))
    return best
