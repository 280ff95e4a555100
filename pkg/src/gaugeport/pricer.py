"""Finite-difference pricing under the gauge-field Black-Scholes equation.

The pricing equation

    dV/dt + (1/2) sigma^2 s^2 V_ss - s V_s A + V (A + B) = 0

is solved backward in time on a log-price grid with Crank-Nicolson stepping
and a Rannacher start-up (implicit-Euler half steps) to damp the payoff
kink.  Setting A = -r, B = 0 recovers the textbook equation with rate r;
the zero-rate closed form is the oracle for the A' = 0 gauge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from .grid import TimeGrid

ArrayLike = Union[float, np.ndarray]


class DegenerateProblem(ValueError):
    """Raised for PDE problems the scheme cannot resolve."""


def _per_interval(value: ArrayLike, steps: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (steps,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class PdeProblem:
    """Grid, coefficients, and terminal data for the pricing equation.

    ``sigma``, ``a_field`` and ``b_scalar`` are scalars or per-interval
    series on ``t_grid``.  ``payoff`` maps the price grid to terminal values.
    ``payoff_kind`` selects the asymptotic boundary data: "call", "put", or
    "linear" (V proportional to s at both ends).
    """

    s_grid: np.ndarray
    t_grid: TimeGrid
    sigma: ArrayLike
    a_field: ArrayLike
    b_scalar: ArrayLike
    payoff: Callable[[np.ndarray], np.ndarray]
    payoff_kind: str = "call"
    strike: Optional[float] = None

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        object.__setattr__(self, "s_grid", s)
        if s.ndim != 1 or s.size < 5:
            raise DegenerateProblem("price grid too coarse: need at least 3 interior nodes")
        if np.any(s <= 0) or np.any(np.diff(np.log(s)) <= 0):
            raise ValueError("price grid must be positive and strictly increasing")
        if self.payoff_kind not in ("call", "put", "linear"):
            raise ValueError(f"unknown payoff_kind {self.payoff_kind!r}")
        if self.payoff_kind in ("call", "put") and self.strike is None:
            raise ValueError("call/put problems need a strike for boundary data")
        steps = self.t_grid.steps
        for name in ("sigma", "a_field", "b_scalar"):
            arr = _per_interval(getattr(self, name), steps, name)
            object.__setattr__(self, name, arr)
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be nonnegative")
        terminal = np.asarray(self.payoff(s), dtype=float)
        if terminal.shape != s.shape or not np.all(np.isfinite(terminal)):
            raise ValueError("payoff must be finite on the grid")
        if np.max(self.sigma) == 0.0:
            # without diffusion a genuine discontinuity never smooths out:
            # flag payoffs whose largest node-to-node jump dwarfs the typical
            # one, or whose jumps are confined to a few isolated nodes
            jumps = np.abs(np.diff(terminal))
            positive = jumps[jumps > 0]
            if positive.size:
                sparse = positive.size < 0.1 * jumps.size
                spiky = np.max(jumps) > 20.0 * np.median(positive)
                if sparse or spiky:
                    raise DegenerateProblem("sigma = 0 with a discontinuous payoff")


@dataclass(frozen=True)
class OptionSurface:
    """Option values and deltas on the [time, price] grid."""

    s_grid: np.ndarray
    t_grid: TimeGrid
    values: np.ndarray  # [steps+1, n_s]
    deltas: np.ndarray  # [steps+1, n_s]

    def value_at(self, s: float, k: int = 0) -> float:
        """Linear interpolation of the time-k slice at price s."""
        return float(np.interp(s, self.s_grid, self.values[k]))

    def delta_at(self, s: float, k: int = 0) -> float:
        return float(np.interp(s, self.s_grid, self.deltas[k]))


@dataclass(frozen=True)
class EffectiveVol:
    """Volatility bump from a finite-N approximately risk-free numeraire."""

    sigma1: float
    sigma_hat: float
    sigma_combined: float


def effective_vol(sigma1: float, sigma_hat: float) -> EffectiveVol:
    """Combined volatility Sigma = sqrt(sigma1^2 + sigma_hat^2)."""
    if sigma1 < 0 or sigma_hat < 0:
        raise ValueError("volatilities must be nonnegative")
    return EffectiveVol(sigma1, sigma_hat, float(np.hypot(sigma1, sigma_hat)))


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def bs_closed_form(s: float, e: float, sigma: float, tau: float) -> float:
    """Zero-rate Black-Scholes call value (the natural A' = 0 gauge)."""
    if tau <= 0:
        return max(s - e, 0.0)
    if sigma <= 0:
        return max(s - e, 0.0)
    st = sigma * np.sqrt(tau)
    d1 = (np.log(s / e) + 0.5 * sigma**2 * tau) / st
    d2 = d1 - st
    return float(s * norm.cdf(d1) - e * norm.cdf(d2))


def bs_closed_form_rate(s: float, e: float, sigma: float, tau: float, r: float) -> float:
    """Textbook Black-Scholes call with constant rate r (reduction oracle)."""
    if tau <= 0:
        return max(s - e, 0.0)
    if sigma <= 0:
        return max(s - e * np.exp(-r * tau), 0.0)
    st = sigma * np.sqrt(tau)
    d1 = (np.log(s / e) + (r + 0.5 * sigma**2) * tau) / st
    d2 = d1 - st
    return float(s * norm.cdf(d1) - e * np.exp(-r * tau) * norm.cdf(d2))


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------

def log_price_grid(strike: float, n_intervals: int = 400, span: float = 8.0) -> np.ndarray:
    """Log-spaced grid on [strike/span, strike*span] with the strike a node.

    ``n_intervals`` must be even so the center node lands on the strike.
    """
    if n_intervals % 2:
        raise ValueError("n_intervals must be even to center the strike")
    x = np.linspace(np.log(strike / span), np.log(strike * span), n_intervals + 1)
    return np.exp(x)


def vanilla_problem(
    kind: str,
    strike: float,
    sigma: ArrayLike,
    tau: float,
    a_field: ArrayLike = 0.0,
    b_scalar: ArrayLike = 0.0,
    n_s: int = 400,
    n_t: int = 400,
    span: float = 8.0,
) -> PdeProblem:
    """Standard call/put problem on the default grid."""
    s = log_price_grid(strike, n_s, span)
    grid = TimeGrid(t0=0.0, dt=tau / n_t, steps=n_t)
    if kind == "call":
        payoff = lambda sg: np.maximum(sg - strike, 0.0)
    elif kind == "put":
        payoff = lambda sg: np.maximum(strike - sg, 0.0)
    else:
        raise ValueError("kind must be 'call' or 'put'")
    return PdeProblem(
        s_grid=s, t_grid=grid, sigma=sigma, a_field=a_field, b_scalar=b_scalar,
        payoff=payoff, payoff_kind=kind, strike=strike,
    )


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

def _operator_bands(sigma: float, a: float, b: float, dx: float, n: int):
    """Tridiagonal coefficients of the spatial operator in x = ln s.

    L V = (1/2) sigma^2 V_xx - (1/2 sigma^2 + a) V_x + (a + b) V.
    """
    diff = 0.5 * sigma**2 / dx**2
    conv = (0.5 * sigma**2 + a) / (2.0 * dx)
    lower = diff + conv
    diag = -2.0 * diff + (a + b)
    upper = diff - conv
    return lower, diag, upper


def _boundary_values(problem: PdeProblem, k: int, int_a_b: float, int_b: float):
    """Dirichlet data at s_min/s_max from the exact asymptotic solutions.

    For large s the equation is solved by s * exp(int B d tau); a constant
    payoff piece grows as exp(int (A + B) d tau).
    """
    s_lo = problem.s_grid[0]
    s_hi = problem.s_grid[-1]
    growth_s = np.exp(int_b)
    growth_c = np.exp(int_a_b)
    if problem.payoff_kind == "call":
        return 0.0, s_hi * growth_s - problem.strike * growth_c
    if problem.payoff_kind == "put":
        return problem.strike * growth_c - s_lo * growth_s, 0.0
    # linear: V proportional to s at both ends
    terminal = problem.payoff(problem.s_grid)
    return terminal[0] * growth_s, terminal[-1] * growth_s


def solve_gauge_bs(problem: PdeProblem, rannacher_steps: int = 2) -> OptionSurface:
    """Backward Crank-Nicolson solve of the gauge-field pricing equation.

    The first ``rannacher_steps`` time steps run as pairs of implicit-Euler
    half steps; second-order accurate in space and time thereafter.
    """
    s = problem.s_grid
    x = np.log(s)
    dx = x[1] - x[0]
    grid = problem.t_grid
    dt = grid.dt
    steps = grid.steps
    n = s.size

    values = np.empty((steps + 1, n))
    values[steps] = problem.payoff(s)

    # Cumulative integrals of B and A+B over [t, T] for boundary data.
    int_b_rev = np.concatenate([[0.0], np.cumsum((problem.b_scalar * dt)[::-1])])[::-1]
    int_ab_rev = np.concatenate(
        [[0.0], np.cumsum(((problem.a_field + problem.b_scalar) * dt)[::-1])]
    )[::-1]

    v = values[steps].copy()
    for k in range(steps - 1, -1, -1):
        sig, a, b = problem.sigma[k], problem.a_field[k], problem.b_scalar[k]
        lower, diag, upper = _operator_bands(sig, a, b, dx, n)
        lo_val, hi_val = _boundary_values(problem, k, int_ab_rev[k], int_b_rev[k])

        def implicit_step(v_in: np.ndarray, theta_dt: float, bc: tuple) -> np.ndarray:
            # (I - theta_dt L) v_out = v_in with Dirichlet ends.
            ab = np.zeros((3, n))
            ab[0, 2:] = -theta_dt * upper
            ab[1, 1:-1] = 1.0 - theta_dt * diag
            ab[2, :-2] = -theta_dt * lower
            ab[1, 0] = 1.0
            ab[1, -1] = 1.0
            ab[0, 1] = 0.0
            ab[2, -2] = 0.0
            rhs = v_in.copy()
            rhs[0], rhs[-1] = bc
            return solve_banded((1, 1), ab, rhs)

        def explicit_apply(v_in: np.ndarray, theta_dt: float) -> np.ndarray:
            out = v_in.copy()
            out[1:-1] = v_in[1:-1] + theta_dt * (
                lower * v_in[:-2] + diag * v_in[1:-1] + upper * v_in[2:]
            )
            return out

        if steps - 1 - k < rannacher_steps:
            # Rannacher start-up: two implicit-Euler half steps.
            v = implicit_step(v, 0.5 * dt, (lo_val, hi_val))
            v = implicit_step(v, 0.5 * dt, (lo_val, hi_val))
        else:
            half = explicit_apply(v, 0.5 * dt)
            v = implicit_step(half, 0.5 * dt, (lo_val, hi_val))
        values[k] = v

    deltas = np.empty_like(values)
    deltas[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (2.0 * dx) / s[1:-1]
    deltas[:, 0] = (values[:, 1] - values[:, 0]) / (dx * s[0])
    deltas[:, -1] = (values[:, -1] - values[:, -2]) / (dx * s[-1])
    return OptionSurface(s_grid=s, t_grid=grid, values=values, deltas=deltas)


def solve_primed_gauge(problem: PdeProblem, sigma_hat: float = 0.0) -> OptionSurface:
    """Solve in the primed A' = 0 gauge with the finite-N volatility bump.

    Replaces sigma by Sigma = sqrt(sigma^2 + sigma_hat^2) and forces A = 0.
    The only effect of discounting with an approximately risk-free portfolio
    is this O(1/sqrt(N)) increase in volatility.
    """
    if sigma_hat < 0:
        raise ValueError("sigma_hat must be nonnegative")
    combined = np.hypot(problem.sigma, sigma_hat)
    primed = PdeProblem(
        s_grid=problem.s_grid,
        t_grid=problem.t_grid,
        sigma=combined,
        a_field=np.zeros(problem.t_grid.steps),
        b_scalar=problem.b_scalar,
        payoff=problem.payoff,
        payoff_kind=problem.payoff_kind,
        strike=problem.strike,
    )
    return solve_gauge_bs(primed)


# ---------------------------------------------------------------------------
# Merton-form residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MertonResidual:
    residual: float
    hedge_ratio: float  # delta = -dV/dH


def merton_residual(
    v: float,
    dv_dt: float,
    dv_ds: float,
    dv_dh: float,
    d2v_ds2: float,
    d2v_dh2: float,
    s: float,
    h: float,
    sigma1: float,
    sigma_hat: float,
    a: float,
    b: float,
) -> MertonResidual:
    """Left-hand side of the gauge-invariant two-factor pricing equation.

        V_t + (1/2) sigma1^2 s^2 V_ss + (1/2) sigma_hat^2 H^2 V_HH
            + (V - s V_s - H V_H)(A + B)

    Zero residual means the candidate solves the equation (per unit option
    quantity).  Degree-one functions of (s, H) with vanishing second
    derivatives give exactly zero for every A and B.
    """
    inputs = [v, dv_dt, dv_ds, dv_dh, d2v_ds2, d2v_dh2, s, h, sigma1, sigma_hat, a, b]
    if not np.all(np.isfinite(inputs)):
        raise ValueError("all inputs must be finite")
    residual = (
        dv_dt
        + 0.5 * sigma1**2 * s**2 * d2v_ds2
        + 0.5 * sigma_hat**2 * h**2 * d2v_dh2
        + (v - s * dv_ds - h * dv_dh) * (a + b)
    )
    return MertonResidual(residual=float(residual), hedge_ratio=float(-dv_dh))
