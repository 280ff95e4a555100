"""Seeded Monte Carlo engine for environment-factor price processes.

Each asset follows the exact log-normal step

    s[k+1] = s[k] * exp((mu_i(xi_k) - sigma_i(xi_k)^2 / 2) dt
                        + sigma_i(xi_k) sqrt(dt) z)

with independent cross-asset noises.  Noise is drawn from counter-based
Philox streams keyed by (seed, path block), so results are bit-identical
regardless of how many worker threads fill the path blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .grid import TimeGrid, require_same_grid

#: Paths per Philox stream.  Part of the seeding scheme: changing it changes
#: the sample, so it is a constant, not a tuning knob.
PATH_BLOCK = 512

NOISE_TAGS = ("normal", "uniform", "two-point")

_SQRT3 = np.sqrt(3.0)


def _block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    # 128-bit Philox key: seed in the first word, (stream, block) packed into
    # the second so distinct blocks and streams never collide.
    word = ((stream & 0xFFFFFFFF) << 32) | (block & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, word]))


def _draw(gen: np.random.Generator, shape: tuple, noise: str) -> np.ndarray:
    if noise == "normal":
        return gen.standard_normal(shape)
    if noise == "uniform":
        # U(-sqrt(3), sqrt(3)) has mean 0 and unit variance.
        return gen.uniform(-_SQRT3, _SQRT3, shape)
    if noise == "two-point":
        return gen.integers(0, 2, shape).astype(float) * 2.0 - 1.0
    raise ValueError(f"unknown noise tag {noise!r}; expected one of {NOISE_TAGS}")


def noise_block(
    seed: int, block: int, n_paths: int, steps: int, n_assets: int, noise: str, stream: int = 0
) -> np.ndarray:
    """Noise for one path block, shape [n_paths, steps, n_assets]."""
    gen = _block_generator(seed, block, stream)
    return _draw(gen, (n_paths, steps, n_assets), noise)


def iter_blocks(n_paths: int) -> Iterator[tuple[int, int, int]]:
    """Yield (block index, start path, block length) covering n_paths."""
    for block, start in enumerate(range(0, n_paths, PATH_BLOCK)):
        yield block, start, min(PATH_BLOCK, n_paths - start)


@dataclass(frozen=True)
class EnvironmentSeries:
    """Deterministic environment factors xi(t), shared by all paths."""

    grid: TimeGrid
    xi: np.ndarray  # [steps+1, n_factors]

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        if xi.shape[0] == 1 and self.grid.n_points > 1:
            xi = xi.T
        object.__setattr__(self, "xi", xi)
        if xi.shape[0] != self.grid.n_points:
            raise ValueError("xi must hold one factor vector per grid point")
        if not np.all(np.isfinite(xi)):
            raise ValueError("environment factors must be finite")

    @staticmethod
    def constant(grid: TimeGrid, value: float = 0.0, n_factors: int = 1) -> "EnvironmentSeries":
        return EnvironmentSeries(grid, np.full((grid.n_points, n_factors), value))


@dataclass(frozen=True)
class ProcessSpec:
    """Per-asset drift/volatility functionals of the environment factor.

    ``mu_fn(i, xi)`` and ``sigma_fn(i, xi)`` map an asset index and a factor
    vector to a drift (1/yr) and volatility (1/sqrt(yr)).  Nonstandard noise
    tags are moment-checked at construction.
    """

    n_assets: int
    mu_fn: Callable[[int, np.ndarray], float]
    sigma_fn: Callable[[int, np.ndarray], float]
    noise: str = "normal"

    def __post_init__(self):
        if self.n_assets < 1:
            raise ValueError("n_assets must be >= 1")
        if self.noise not in NOISE_TAGS:
            raise ValueError(f"unknown noise tag {self.noise!r}; expected one of {NOISE_TAGS}")
        if self.noise != "normal":
            sample = _draw(_block_generator(0, 0, stream=999), (200_000,), self.noise)
            if abs(sample.mean()) > 0.01 or abs(sample.var() - 1.0) > 0.01:
                raise ValueError(f"noise tag {self.noise!r} fails the zero-mean/unit-variance check")

    def drift_matrix(self, env: EnvironmentSeries) -> np.ndarray:
        """mu[k, i] at interval left endpoints, shape [steps, n_assets]."""
        xi = env.xi[:-1]
        return np.array(
            [[self.mu_fn(i, xi[k]) for i in range(self.n_assets)] for k in range(xi.shape[0])]
        )

    def vol_matrix(self, env: EnvironmentSeries) -> np.ndarray:
        """sigma[k, i] at interval left endpoints; rejects negative values."""
        xi = env.xi[:-1]
        sig = np.array(
            [[self.sigma_fn(i, xi[k]) for i in range(self.n_assets)] for k in range(xi.shape[0])]
        )
        if np.any(sig < 0):
            raise ValueError("sigma_fn returned a negative volatility")
        return sig


def constant_spec(
    n_assets: int, mu: Union[float, np.ndarray], sigma: Union[float, np.ndarray], noise: str = "normal"
) -> ProcessSpec:
    """ProcessSpec with environment-independent per-asset mu and sigma."""
    mu_arr = np.broadcast_to(np.asarray(mu, dtype=float), (n_assets,)).copy()
    sigma_arr = np.broadcast_to(np.asarray(sigma, dtype=float), (n_assets,)).copy()
    return ProcessSpec(
        n_assets=n_assets,
        mu_fn=lambda i, xi: mu_arr[i],
        sigma_fn=lambda i, xi: sigma_arr[i],
        noise=noise,
    )


@dataclass(frozen=True)
class PathSet:
    """Simulated price paths [n_paths, steps+1, n_assets] plus provenance."""

    grid: TimeGrid
    paths: np.ndarray
    seed: int
    noise: str = "normal"

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        object.__setattr__(self, "paths", paths)
        if paths.ndim != 3 or paths.shape[1] != self.grid.n_points:
            raise ValueError("paths must be [n_paths, steps+1, n_assets]")
        if np.any(paths <= 0) or not np.all(np.isfinite(paths)):
            raise ValueError("paths must be finite and strictly positive")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_assets(self) -> int:
        return self.paths.shape[2]


@dataclass(frozen=True)
class NumeraireSpec:
    """Possibly stochastic rescaling Y = e^phi with d phi correlated to assets.

    ``rho[i]`` is the correlation between the numeraire noise and asset i's
    noise.  Deterministic mode forces phi_sigma = 0 and reduces to the
    price-gauge transformation.
    """

    phi_mu: Union[float, np.ndarray]
    phi_sigma: float = 0.0
    rho: Optional[np.ndarray] = None
    mode: str = "stochastic"

    def __post_init__(self):
        if self.mode not in ("stochastic", "deterministic"):
            raise ValueError(f"mode must be stochastic|deterministic, got {self.mode!r}")
        if self.mode == "deterministic" and self.phi_sigma != 0.0:
            raise ValueError("deterministic mode requires phi_sigma = 0")
        if self.phi_sigma < 0:
            raise ValueError("phi_sigma must be >= 0")
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=float)
            object.__setattr__(self, "rho", rho)
            if np.any(np.abs(rho) > 1.0):
                raise ValueError("|rho| must be <= 1 componentwise")
            if rho @ rho > 1.0 + 1e-12:
                raise ValueError("rho vector must satisfy sum(rho^2) <= 1")


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _log_increments(
    z: np.ndarray, mu: np.ndarray, sigma: np.ndarray, dt: float
) -> np.ndarray:
    # z: [paths, steps, assets]; mu, sigma: [steps, assets]
    return (mu - 0.5 * sigma**2) * dt + sigma * np.sqrt(dt) * z


def simulate(
    spec: ProcessSpec,
    env: EnvironmentSeries,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    s0: Union[float, np.ndarray] = 1.0,
    n_jobs: int = 1,
) -> PathSet:
    """Simulate asset price paths; bit-identical for any n_jobs."""
    require_same_grid(env.grid, grid, "environment/grid")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    mu = spec.drift_matrix(env)
    sigma = spec.vol_matrix(env)
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (spec.n_assets,))
    if np.any(s0 <= 0):
        raise ValueError("initial prices must be strictly positive")

    out = np.empty((n_paths, grid.n_points, spec.n_assets))
    out[:, 0, :] = s0

    def fill(block: int, start: int, size: int) -> None:
        z = noise_block(seed, block, size, grid.steps, spec.n_assets, spec.noise)
        inc = _log_increments(z, mu, sigma, grid.dt)
        # cumulative product of gross ratios, so the streaming form in
        # iter_step_ratio_chunks reproduces these paths bit for bit
        out[start : start + size, 1:, :] = s0 * np.cumprod(np.exp(inc), axis=1)

    blocks = list(iter_blocks(n_paths))
    if n_jobs == 1:
        for block, start, size in blocks:
            fill(block, start, size)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(lambda args: fill(*args), blocks))
    return PathSet(grid=grid, paths=out, seed=seed, noise=spec.noise)


def iter_step_ratio_chunks(
    spec: ProcessSpec,
    env: EnvironmentSeries,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> Iterator[np.ndarray]:
    """Yield per-block gross step ratios s[k+1]/s[k], shape [block, steps, N].

    Streaming form of :func:`simulate` for universes too large to hold as a
    full PathSet.  Uses the identical noise scheme, so a PathSet built from
    the concatenated ratios matches ``simulate`` bit for bit.
    """
    require_same_grid(env.grid, grid, "environment/grid")
    mu = spec.drift_matrix(env)
    sigma = spec.vol_matrix(env)
    for block, _start, size in iter_blocks(n_paths):
        z = noise_block(seed, block, size, grid.steps, spec.n_assets, spec.noise)
        yield np.exp(_log_increments(z, mu, sigma, grid.dt))


@dataclass(frozen=True)
class PortfolioDynamics:
    """Realized portfolio return paths and volatility estimates."""

    grid: TimeGrid
    returns: np.ndarray  # [n_paths, steps], log-returns per unit time
    sigma_hat_realized: float
    sigma_hat_analytic: Optional[float] = None


def portfolio_dynamics(
    paths: PathSet, weights: np.ndarray, sigmas: Optional[np.ndarray] = None
) -> PortfolioDynamics:
    """Dynamics of the portfolio rebalanced to fixed weights every step.

    ``sigmas`` (constant per-asset volatilities, when known) enables the
    analytic sigma_hat = sqrt(sum w_i^2 sigma_i^2) alongside the realized
    estimate.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (paths.n_assets,):
        raise ValueError(
            f"weights length {weights.shape} does not match {paths.n_assets} assets"
        )
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to one")
    dt = paths.grid.dt
    ratios = paths.paths[:, 1:, :] / paths.paths[:, :-1, :]
    gross = ratios @ weights
    returns = np.log(gross) / dt
    sigma_real = float(np.std(np.log(gross))) / np.sqrt(dt)
    sigma_analytic = None
    if sigmas is not None:
        sigmas = np.asarray(sigmas, dtype=float)
        sigma_analytic = float(np.sqrt(np.sum(weights**2 * sigmas**2)))
    return PortfolioDynamics(paths.grid, returns, sigma_real, sigma_analytic)


def apply_numeraire(paths: PathSet, y: NumeraireSpec, seed2: int) -> PathSet:
    """Rescale paths by a simulated numeraire factor Y, s' = Y s.

    In stochastic mode the numeraire noise is mixed from the asset noises
    (regenerated from the PathSet's seed) and an independent residual keyed
    by ``seed2``: dZ_phi = sum_i rho_i dZ_i + sqrt(1 - sum rho^2) dZ_res.
    """
    grid = paths.grid
    dt = grid.dt
    n_paths, steps = paths.n_paths, grid.steps
    phi_mu = np.broadcast_to(np.asarray(y.phi_mu, dtype=float), (steps,))

    if y.mode == "deterministic":
        log_y = np.concatenate([[0.0], np.cumsum(phi_mu * dt)])
        scaled = paths.paths * np.exp(log_y)[None, :, None]
        return PathSet(grid=grid, paths=scaled, seed=paths.seed, noise=paths.noise)

    rho = y.rho if y.rho is not None else np.zeros(paths.n_assets)
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (paths.n_assets,):
        raise ValueError("rho must hold one correlation per asset")
    resid_scale = np.sqrt(max(0.0, 1.0 - float(rho @ rho)))

    scaled = np.empty_like(paths.paths)
    for block, start, size in iter_blocks(n_paths):
        z_assets = noise_block(paths.seed, block, size, steps, paths.n_assets, paths.noise)
        z_resid = noise_block(seed2, block, size, steps, 1, "normal")[:, :, 0]
        z_phi = z_assets @ rho + resid_scale * z_resid
        inc = (phi_mu - 0.5 * y.phi_sigma**2) * dt + y.phi_sigma * np.sqrt(dt) * z_phi
        log_y = np.concatenate([np.zeros((size, 1)), np.cumsum(inc, axis=1)], axis=1)
        scaled[start : start + size] = paths.paths[start : start + size] * np.exp(log_y)[:, :, None]
    return PathSet(grid=grid, paths=scaled, seed=paths.seed, noise=paths.noise)


def sample_joint_numeraire(
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    pi_mu: float,
    pi_sigma: float,
    phi_mu: float,
    phi_sigma: float,
    rho: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Jointly sample a numeraire Y and a portfolio Pi with correlated noise.

    Returns value arrays (y, pi), each [n_paths, steps+1], both starting at 1.
    """
    if abs(rho) > 1.0:
        raise ValueError("|rho| must be <= 1")
    dt = grid.dt
    steps = grid.steps
    y = np.empty((n_paths, grid.n_points))
    pi = np.empty((n_paths, grid.n_points))
    for block, start, size in iter_blocks(n_paths):
        z = noise_block(seed, block, size, steps, 2, "normal")
        z_pi = z[:, :, 0]
        z_y = rho * z_pi + np.sqrt(1.0 - rho**2) * z[:, :, 1]
        inc_pi = (pi_mu - 0.5 * pi_sigma**2) * dt + pi_sigma * np.sqrt(dt) * z_pi
        inc_y = (phi_mu - 0.5 * phi_sigma**2) * dt + phi_sigma * np.sqrt(dt) * z_y
        sl = slice(start, start + size)
        pi[sl, 0] = 1.0
        y[sl, 0] = 1.0
        pi[sl, 1:] = np.exp(np.cumsum(inc_pi, axis=1))
        y[sl, 1:] = np.exp(np.cumsum(inc_y, axis=1))
    return y, pi


def cross_term(
    y_values: np.ndarray, pi_values: np.ndarray, horizon: float
) -> tuple[float, float]:
    """MC estimate of the quadratic covariation d<log Y, log Pi>/dt.

    Returns (estimate, standard error).  Inputs must be jointly sampled value
    arrays of identical shape [n_paths, steps+1].
    """
    y_values = np.asarray(y_values, dtype=float)
    pi_values = np.asarray(pi_values, dtype=float)
    if y_values.shape != pi_values.shape or y_values.ndim != 2:
        raise ValueError("Y and Pi samples must share the same [n_paths, steps+1] shape")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    dy = np.diff(np.log(y_values), axis=1)
    dpi = np.diff(np.log(pi_values), axis=1)
    per_path = np.sum(dy * dpi, axis=1) / horizon
    n = per_path.shape[0]
    return float(per_path.mean()), float(per_path.std(ddof=1) / np.sqrt(n))


def return_volatility(samples: np.ndarray) -> float:
    """Volatility of a return stream: std of the samples about their mean.

    ``samples`` is [n_samples] or [n_samples, n_intervals]; cross-sample
    variance is computed per interval and aggregated as a root mean square,
    which makes deterministic gauge shifts cancel exactly.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 samples to estimate volatility")
    var = np.var(samples, axis=0)
    return float(np.sqrt(np.mean(var)))
