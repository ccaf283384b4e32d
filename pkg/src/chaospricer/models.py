"""Market models: counter-based Gaussian increments and path simulation.

Increments are drawn from a counter-based generator (Philox) keyed by
(seed, run_index), with the counter addressing fixed blocks of
``SIM_BLOCK`` paths.  The draw attached to (path, step, dimension) is
therefore a pure function of (seed, run_index, path, step, dimension)
and the grid shape, independent of how simulation work is scheduled.
Partial blocks are stream prefixes, so growing the path count never
changes the draws of existing paths.

Both models store the raw standard-normal increments alongside the asset
paths: the chaos basis is evaluated on the increments themselves, before
any correlation or state recursion is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Paths per counter block; part of the sampling contract, never resized.
SIM_BLOCK = 4096
# Paths per vectorized transform chunk (memory bound, value-irrelevant).
_SIM_CHUNK = 65536

_UINT64_SPAN = 1 << 64


@dataclass(frozen=True)
class TimeGrid:
    """Simulation grid t_0 = 0 < ... < t_steps with marked exercise dates.

    ``exercise_map[k]`` is the number of fine steps up to exercise date k;
    it is strictly increasing with exercise_map[0] = 0 and
    exercise_map[-1] = steps.
    """

    times: np.ndarray
    exercise_map: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        emap = np.asarray(self.exercise_map, dtype=np.int64)
        if times.ndim != 1 or times.shape[0] < 2:
            raise ValueError("need at least one step: times must be (steps + 1,)")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must increase strictly from 0")
        if emap.ndim != 1 or emap.shape[0] < 2:
            raise ValueError("need at least one exercise date")
        if emap[0] != 0 or emap[-1] != times.shape[0] - 1 \
                or np.any(np.diff(emap) <= 0):
            raise ValueError(
                "exercise_map must increase strictly from 0 to the step count"
            )
        times = np.ascontiguousarray(times)
        emap = np.ascontiguousarray(emap)
        times.setflags(write=False)
        emap.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "exercise_map", emap)

    @classmethod
    def regular(cls, maturity: float, exercise_dates: int,
                steps: int | None = None) -> "TimeGrid":
        """Uniform grid with equally spaced exercise dates.

        ``steps`` defaults to ``exercise_dates`` (one increment per date) and
        must be a multiple of it otherwise.
        """
        if maturity <= 0:
            raise ValueError(f"maturity must be positive, got {maturity}")
        if exercise_dates < 1:
            raise ValueError("need at least one exercise date")
        n = exercise_dates if steps is None else int(steps)
        if n % exercise_dates != 0:
            raise ValueError(
                f"steps ({n}) must be a multiple of exercise dates "
                f"({exercise_dates})"
            )
        times = maturity * np.arange(n + 1) / n
        emap = np.arange(exercise_dates + 1) * (n // exercise_dates)
        return cls(times=times, exercise_map=emap)

    @property
    def steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def exercise_count(self) -> int:
        return self.exercise_map.shape[0] - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def exercise_times(self) -> np.ndarray:
        return self.times[self.exercise_map]

    @property
    def step_sizes(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class BlackScholesParams:
    """Correlated lognormal assets under the risk-neutral measure.

    The instantaneous correlation matrix is equicorrelated: ones on the
    diagonal, ``correlation`` elsewhere.  It must be positive definite,
    which for a > 1 asset basket confines correlation to
    (-1/(assets-1), 1); the Cholesky root is precomputed.
    """

    spot: np.ndarray
    rate: float
    vol: np.ndarray
    correlation: float = 0.0
    correlation_root: np.ndarray = None

    def __post_init__(self):
        spot = np.atleast_1d(np.asarray(self.spot, dtype=np.float64))
        vol = np.atleast_1d(np.asarray(self.vol, dtype=np.float64))
        if spot.ndim != 1 or vol.shape != spot.shape:
            raise ValueError("spot and vol must be vectors of equal length")
        if np.any(spot <= 0):
            raise ValueError("spots must be positive")
        if np.any(vol < 0):
            raise ValueError("vols must be nonnegative")
        d = spot.shape[0]
        rho = float(self.correlation)
        if d == 1:
            root = np.ones((1, 1))
        else:
            lower = -1.0 / (d - 1)
            if not lower < rho < 1.0:
                raise ValueError(
                    f"correlation {rho} outside ({lower:.6g}, 1) for {d} "
                    "assets: equicorrelation matrix is not positive definite"
                )
            gamma = np.full((d, d), rho)
            np.fill_diagonal(gamma, 1.0)
            try:
                root = np.linalg.cholesky(gamma)
            except np.linalg.LinAlgError as exc:
                raise ValueError(
                    f"correlation {rho} for {d} assets: equicorrelation "
                    "matrix is not positive definite"
                ) from exc
        for arr in (spot, vol, root):
            arr.setflags(write=False)
        object.__setattr__(self, "spot", spot)
        object.__setattr__(self, "vol", vol)
        object.__setattr__(self, "correlation", rho)
        object.__setattr__(self, "correlation_root", root)

    @property
    def asset_count(self) -> int:
        return self.spot.shape[0]

    @property
    def brownian_dim(self) -> int:
        return self.spot.shape[0]


@dataclass(frozen=True)
class HestonParams:
    """Square-root stochastic volatility model (one asset, two drivers)."""

    spot: float
    rate: float
    v0: float
    kappa: float
    theta: float
    xi: float
    rho: float

    def __post_init__(self):
        if self.spot <= 0:
            raise ValueError("spot must be positive")
        if self.v0 < 0:
            raise ValueError("initial variance must be nonnegative")
        if self.kappa < 0 or self.theta < 0 or self.xi < 0:
            raise ValueError("kappa, theta, xi must be nonnegative")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"spot-variance correlation {self.rho} outside (-1, 1)")

    @property
    def asset_count(self) -> int:
        return 1

    @property
    def brownian_dim(self) -> int:
        return 2


@dataclass
class SimulatedPaths:
    """Raw increments, asset paths and discount factors of one run."""

    increments: np.ndarray        # (paths, steps, dim)
    asset_paths: np.ndarray       # (paths, steps + 1, assets)
    discount_factors: np.ndarray  # (steps + 1,)
    variance_paths: np.ndarray | None = None  # (paths, steps + 1), square-root models

    @property
    def path_count(self) -> int:
        return self.increments.shape[0]


def _validate_key(seed: int, run_index: int) -> None:
    if not 0 <= int(seed) < _UINT64_SPAN:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    if not 0 <= int(run_index) < _UINT64_SPAN:
        raise ValueError("run_index must fit in an unsigned 64-bit integer")


def _block_generator(seed: int, run_index: int, block: int) -> np.random.Generator:
    bits = np.random.Philox(counter=[0, 0, block, 0], key=[seed, run_index])
    return np.random.Generator(bits)


def standard_normal_increments(seed: int, run_index: int, count: int,
                               steps: int, dim: int) -> np.ndarray:
    """Draw the (count, steps, dim) increment array for one run."""
    _validate_key(seed, run_index)
    if count < 1:
        raise ValueError("need at least one path")
    out = np.empty((count, steps, dim))
    for block in range((count + SIM_BLOCK - 1) // SIM_BLOCK):
        lo = block * SIM_BLOCK
        hi = min(lo + SIM_BLOCK, count)
        gen = _block_generator(seed, run_index, block)
        out[lo:hi] = gen.standard_normal((hi - lo, steps, dim))
    return out


def draw_increment(seed: int, run_index: int, path_index: int, step_index: int,
                   dim_index: int, steps: int, dim: int) -> float:
    """The single normal draw a simulation assigns to one (path, step, dim) slot.

    Pure function of its arguments; regenerates only the containing
    counter block prefix.
    """
    _validate_key(seed, run_index)
    if path_index < 0:
        raise ValueError("path_index must be nonnegative")
    if not 0 <= step_index < steps:
        raise ValueError(f"step_index {step_index} outside [0, {steps})")
    if not 0 <= dim_index < dim:
        raise ValueError(f"dim_index {dim_index} outside [0, {dim})")
    block, row = divmod(path_index, SIM_BLOCK)
    gen = _block_generator(seed, run_index, block)
    vals = gen.standard_normal((row + 1, steps, dim))
    return float(vals[row, step_index, dim_index])


def simulate_black_scholes(params: BlackScholesParams, grid: TimeGrid,
                           count: int, seed: int, run_index: int
                           ) -> SimulatedPaths:
    """Exact lognormal stepping driven by correlated increments.

    log S_{t_{i+1}}^j = log S_{t_i}^j + (r - vol_j^2/2) dt_i
                        + vol_j sqrt(dt_i) (L g_i)_j,

    with L the Cholesky root of the equicorrelation matrix.  The drift is
    accumulated as (r - vol^2/2) * t_i directly, so zero-vol assets follow
    spot * exp(r t) exactly.
    """
    n = grid.steps
    d = params.brownian_dim
    g = standard_normal_increments(seed, run_index, count, n, d)
    asset = np.empty((count, n + 1, d))
    asset[:, 0, :] = params.spot
    sqdt = np.sqrt(grid.step_sizes)
    scale = params.vol[None, :] * sqdt[:, None]          # (n, d)
    drift = (params.rate - 0.5 * params.vol ** 2)[None, :] \
        * grid.times[1:, None]                            # (n, d)
    root_t = params.correlation_root.T
    for lo in range(0, count, _SIM_CHUNK):
        hi = min(lo + _SIM_CHUNK, count)
        eff = g[lo:hi].reshape(-1, d) @ root_t
        mart = np.cumsum(eff.reshape(hi - lo, n, d) * scale[None], axis=1)
        asset[lo:hi, 1:, :] = params.spot[None, None, :] \
            * np.exp(drift[None] + mart)
    discount = np.exp(-params.rate * grid.times)
    return SimulatedPaths(increments=g, asset_paths=asset,
                          discount_factors=discount)


def simulate_heston(params: HestonParams, grid: TimeGrid, count: int,
                    seed: int, run_index: int) -> SimulatedPaths:
    """Full-truncation Euler scheme in log-spot coordinates.

    v_{i+1} = v_i + kappa (theta - v_i^+) dt_i + xi sqrt(v_i^+ dt_i) g1,
    log S_{i+1} = log S_i + (r - v_i^+/2) dt_i
                  + sqrt(v_i^+ dt_i) (rho g1 + sqrt(1-rho^2) g2),

    where v^+ = max(v, 0); the variance path may go negative and is stored
    untruncated.  Increments keep the raw (g1, g2) pair per step.
    """
    n = grid.steps
    g = standard_normal_increments(seed, run_index, count, n, 2)
    asset = np.empty((count, n + 1, 1))
    variance = np.empty((count, n + 1))
    dt = grid.step_sizes
    rho = params.rho
    rho_bar = np.sqrt(1.0 - rho * rho)
    for lo in range(0, count, _SIM_CHUNK):
        hi = min(lo + _SIM_CHUNK, count)
        m = hi - lo
        v = np.full(m, params.v0)
        log_s = np.full(m, np.log(params.spot))
        asset[lo:hi, 0, 0] = params.spot
        variance[lo:hi, 0] = params.v0
        for i in range(n):
            vp = np.maximum(v, 0.0)
            vol_step = np.sqrt(vp * dt[i])
            g1 = g[lo:hi, i, 0]
            g2 = g[lo:hi, i, 1]
            log_s = log_s + (params.rate - 0.5 * vp) * dt[i] \
                + vol_step * (rho * g1 + rho_bar * g2)
            v = v + params.kappa * (params.theta - vp) * dt[i] \
                + params.xi * vol_step * g1
            asset[lo:hi, i + 1, 0] = np.exp(log_s)
            variance[lo:hi, i + 1] = v
    discount = np.exp(-params.rate * grid.times)
    return SimulatedPaths(increments=g, asset_paths=asset,
                          discount_factors=discount, variance_paths=variance)


def simulate(params, grid: TimeGrid, count: int, seed: int, run_index: int
             ) -> SimulatedPaths:
    """Dispatch on the parameter type."""
    if isinstance(params, BlackScholesParams):
        return simulate_black_scholes(params, grid, count, seed, run_index)
    if isinstance(params, HestonParams):
        return simulate_heston(params, grid, count, seed, run_index)
    raise TypeError(f"unsupported model parameters: {type(params).__name__}")
