"""Bermudan pricing by policy iteration with chaos-regression continuations.

Starting from the terminal policy (exercise at the last date), each
backward step fits the chaos expansion of the current cashflow on the
increments observed up to that date and exercises where the immediate
payoff beats the fitted continuation value.  The resulting stopping time
is admissible, so the Monte Carlo average of the stopped cashflows is a
lower-bound estimate; the reported price is

    U0 = max(Z_0, (1/M) * sum_l cashflow[l]).

With the in-the-money rule (default), coefficient fits sum only paths
whose current payoff is positive (divisor stays M) and only those paths
may exercise; ``union_exercise`` switches to the variant that always
exercises positive-payoff paths and lets the fitted continuation decide
for the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np
import scipy.linalg

from .basis import BasisCatalog, enumerate_basis, monomial_powers
from .models import SimulatedPaths, TimeGrid, simulate
from .payoffs import PayoffSpec, compute_payoff_matrix
from .regression import ChaosCoefficients, PathBatch

_LS_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class StoppingState:
    """Exercise policy snapshot: stopping date index and stopped cashflow."""

    tau_index: np.ndarray
    cashflow: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau_index)
        cash = np.asarray(self.cashflow, dtype=np.float64)
        if tau.ndim != 1 or cash.shape != tau.shape:
            raise ValueError("tau_index and cashflow must be equal-length vectors")
        if tau.size and (tau.min() < 1):
            raise ValueError("stopping indices must be at least 1")
        object.__setattr__(self, "tau_index", tau)
        object.__setattr__(self, "cashflow", cash)


@dataclass(frozen=True)
class RunStats:
    run_index: int
    price: float
    continuation: float
    sim_seconds: float
    induction_seconds: float


@dataclass
class PricingResult:
    """Aggregated output of one pricing experiment."""

    price: float
    run_prices: np.ndarray
    run_variance: float
    immediate: float
    config: dict = field(default_factory=dict)
    run_stats: list[RunStats] = field(default_factory=list)
    coefficients: dict[int, ChaosCoefficients] | None = None
    records: list | None = None

    @property
    def run_count(self) -> int:
        return self.run_prices.shape[0]


def _aggregate(run_prices: np.ndarray) -> tuple[float, float]:
    price = float(np.mean(run_prices))
    variance = float(np.var(run_prices, ddof=1)) if run_prices.size > 1 \
        else float("nan")
    return price, variance


def backward_induction(catalog: BasisCatalog, batch: PathBatch, *,
                       use_itm_rule: bool = True,
                       union_exercise: bool = False,
                       exercisable_from: int = 1,
                       group_size: int | None = None,
                       fit: str = "mean"):
    """Sequential policy iteration over one batch.

    Returns (StoppingState, coefficients) with one ChaosCoefficients per
    processed exercise date.  Identical bitwise to the parallel engine at
    any worker count under fixed granularity.
    """
    from .parallel import DEFAULT_GROUP_SIZE, ExecutionOptions, run_induction

    opts = ExecutionOptions(workers=1,
                            group_size=group_size or DEFAULT_GROUP_SIZE)
    state, coefficients, _ = run_induction(
        catalog, batch, opts,
        use_itm_rule=use_itm_rule,
        union_exercise=union_exercise,
        exercisable_from=exercisable_from,
        keep_coefficients=True,
        fit=fit,
    )
    return state, coefficients


def build_batch(model_params, payoff: PayoffSpec, grid: TimeGrid,
                path_count: int, seed: int, run_index: int
                ) -> tuple[PathBatch, SimulatedPaths]:
    """Simulate one run and assemble its increments/payoff batch."""
    paths = simulate(model_params, grid, path_count, seed, run_index)
    z = compute_payoff_matrix(payoff, paths, grid)
    batch = PathBatch(increments=paths.increments, payoffs=z,
                      date_map=grid.exercise_map)
    return batch, paths


def price_bermudan(model_params, payoff: PayoffSpec, grid: TimeGrid, *,
                   chaos_order: int, path_count: int, runs: int = 1,
                   seed: int = 0, first_run_index: int = 0,
                   use_itm_rule: bool = True, union_exercise: bool = False,
                   fit: str = "mean",
                   options=None, max_basis_size: int | None = None,
                   keep_coefficients: bool = False,
                   progress=None) -> PricingResult:
    """Price a Bermudan claim over ``runs`` independent Monte Carlo runs.

    Run r uses the counter-based stream (seed, first_run_index + r), so
    any run subset can be reproduced in isolation.  ``fit`` picks the
    coefficient estimator ("mean" or "least_squares"); the policy update
    and price aggregation are identical either way.
    """
    from .parallel import ExecutionOptions, run_induction, warm_catalog

    if runs < 1:
        raise ValueError("runs must be at least 1")
    opts = options or ExecutionOptions()
    kwargs = {}
    if max_basis_size is not None:
        kwargs["max_size"] = max_basis_size
    catalog = enumerate_basis(chaos_order, grid.steps,
                              model_params.brownian_dim, **kwargs)
    first = payoff.first_exercise_index(grid)
    warm_catalog(catalog, grid.exercise_map, first)

    run_prices = np.empty(runs)
    stats: list[RunStats] = []
    immediate = float("nan")
    last_coeffs = None
    last_records = None
    for r in range(runs):
        run_index = first_run_index + r
        t0 = perf_counter()
        batch, paths = build_batch(model_params, payoff, grid, path_count,
                                   seed, run_index)
        del paths  # asset paths are no longer needed; increments live in batch
        sim_seconds = perf_counter() - t0
        immediate = float(batch.payoffs[0, 0])

        t0 = perf_counter()
        state, coeffs, records = run_induction(
            catalog, batch, opts,
            use_itm_rule=use_itm_rule,
            union_exercise=union_exercise,
            exercisable_from=first,
            keep_coefficients=keep_coefficients,
            fit=fit,
        )
        induction_seconds = perf_counter() - t0

        continuation = float(np.sum(state.cashflow) / path_count)
        price_r = max(immediate, continuation)
        run_prices[r] = price_r
        stats.append(RunStats(run_index=run_index, price=price_r,
                              continuation=continuation,
                              sim_seconds=sim_seconds,
                              induction_seconds=induction_seconds))
        if keep_coefficients:
            last_coeffs = coeffs
        if opts.keep_records:
            last_records = records
        if progress is not None:
            progress(f"run {run_index}: price {price_r:.6f} "
                     f"(sim {sim_seconds:.2f}s, induction "
                     f"{induction_seconds:.2f}s)")

    price, variance = _aggregate(run_prices)
    config = {
        "model": type(model_params).__name__,
        "payoff": payoff.kind,
        "exercise_dates": grid.exercise_count,
        "steps": grid.steps,
        "chaos_order": chaos_order,
        "path_count": path_count,
        "runs": runs,
        "seed": seed,
        "first_run_index": first_run_index,
        "use_itm_rule": use_itm_rule,
        "union_exercise": union_exercise,
        "fit": fit,
        "workers": opts.workers,
        "granularity": opts.granularity,
        "group_size": opts.group_size,
    }
    return PricingResult(price=price, run_prices=run_prices,
                         run_variance=variance, immediate=immediate,
                         config=config, run_stats=stats,
                         coefficients=last_coeffs, records=last_records)


def make_state_extractor(paths: SimulatedPaths, grid: TimeGrid,
                         payoff: PayoffSpec):
    """Markov state per exercise date for the polynomial baseline.

    Single lognormal asset: the spot.  Basket: the asset spots.
    Square-root volatility model: (spot, variance).  Moving average: the
    window of spots entering the running average at that date.
    """
    spots = paths.asset_paths[:, grid.exercise_map, :]
    variance = None
    if paths.variance_paths is not None:
        variance = paths.variance_paths[:, grid.exercise_map]

    if payoff.kind == "moving_average_call":
        n_avg, n_lag = payoff.window_counts(grid)

        def extract(k: int) -> np.ndarray:
            lo = k - n_avg - n_lag + 1
            hi = k - n_lag
            if lo < 1:
                raise ValueError(f"date {k} has no complete averaging window")
            return spots[:, lo:hi + 1, 0]

        return extract

    if variance is not None:
        def extract(k: int) -> np.ndarray:
            return np.column_stack([spots[:, k, 0], variance[:, k]])

        return extract

    def extract(k: int) -> np.ndarray:
        return spots[:, k, :]

    return extract


def _design_matrix(state: np.ndarray, powers: np.ndarray,
                   extra: np.ndarray | None) -> np.ndarray:
    """Total-degree monomials of the scaled state, plus an optional column."""
    m, s = state.shape
    scale = np.maximum(np.mean(np.abs(state), axis=0), 1e-300)
    scaled = state / scale
    phi = np.ones((m, powers.shape[0] + (0 if extra is None else 1)))
    for a in range(1, powers.shape[0]):
        row = powers[a]
        col = phi[:, a]
        for v in np.nonzero(row)[0]:
            col *= scaled[:, v] ** int(row[v])
    if extra is not None:
        escale = max(float(np.mean(np.abs(extra))), 1e-300)
        phi[:, -1] = extra / escale
    return phi


def _solve_normal_equations(phi: np.ndarray, target: np.ndarray,
                            date_index: int) -> np.ndarray:
    gram = phi.T @ phi
    rhs = phi.T @ target
    bump = np.trace(gram) / gram.shape[0]
    for jitter in _LS_JITTERS:
        try:
            factor = scipy.linalg.cho_factor(
                gram + jitter * bump * np.eye(gram.shape[0]), lower=True)
            return scipy.linalg.cho_solve(factor, rhs)
        except scipy.linalg.LinAlgError:
            continue
    raise RuntimeError(
        f"singular regression design at exercise date {date_index}; "
        "reduce the polynomial degree or add paths"
    )


def longstaff_schwartz_baseline(batch: PathBatch, state_extractor,
                                poly_degree: int,
                                include_payoff: bool = False) -> PricingResult:
    """Polynomial-regression policy iteration on one batch (single run).

    Regressions run on in-the-money paths only, against total-degree
    monomials of the extracted state (optionally plus the payoff itself);
    exercise requires a positive payoff beating the fitted continuation.
    Dates with too few in-the-money paths for a stable fit are skipped.
    """
    m = batch.path_count
    n_dates = batch.exercise_count
    payoffs = batch.payoffs
    tau = np.full(m, n_dates, dtype=np.int32)
    cash = payoffs[:, n_dates].copy()

    powers = None
    for k in range(n_dates - 1, 0, -1):
        z_k = payoffs[:, k]
        itm = np.nonzero(z_k > 0.0)[0]
        if itm.size == 0:
            continue
        try:
            state = state_extractor(k)
        except ValueError:
            continue  # state undefined at this date (incomplete window)
        if powers is None or powers.shape[1] != state.shape[1]:
            powers = monomial_powers(state.shape[1], poly_degree)
        n_features = powers.shape[0] + (1 if include_payoff else 0)
        if itm.size < max(2 * n_features, 16):
            continue
        phi = _design_matrix(state[itm], powers,
                             z_k[itm] if include_payoff else None)
        beta = _solve_normal_equations(phi, cash[itm], k)
        cont = phi @ beta
        hit = itm[z_k[itm] >= cont]
        tau[hit] = k
        cash[hit] = z_k[hit]

    immediate = float(payoffs[0, 0])
    continuation = float(np.sum(cash) / m)
    price = max(immediate, continuation)
    run_prices = np.array([price])
    return PricingResult(
        price=price, run_prices=run_prices, run_variance=float("nan"),
        immediate=immediate,
        config={"method": "longstaff_schwartz", "poly_degree": poly_degree,
                "include_payoff": include_payoff, "path_count": m},
        run_stats=[RunStats(run_index=0, price=price,
                            continuation=continuation, sim_seconds=0.0,
                            induction_seconds=0.0)],
    )


def longstaff_schwartz_price(model_params, payoff: PayoffSpec, grid: TimeGrid,
                             *, poly_degree: int, path_count: int,
                             runs: int = 1, seed: int = 0,
                             first_run_index: int = 0,
                             include_payoff: bool | None = None
                             ) -> PricingResult:
    """Simulate and run the polynomial baseline over independent runs."""
    if include_payoff is None:
        include_payoff = payoff.kind == "basket_put"
    run_prices = np.empty(runs)
    stats = []
    immediate = float("nan")
    for r in range(runs):
        run_index = first_run_index + r
        t0 = perf_counter()
        batch, paths = build_batch(model_params, payoff, grid, path_count,
                                   seed, run_index)
        sim_seconds = perf_counter() - t0
        extractor = make_state_extractor(paths, grid, payoff)
        t0 = perf_counter()
        single = longstaff_schwartz_baseline(batch, extractor, poly_degree,
                                             include_payoff)
        fit_seconds = perf_counter() - t0
        immediate = single.immediate
        run_prices[r] = single.price
        stats.append(RunStats(run_index=run_index, price=single.price,
                              continuation=single.run_stats[0].continuation,
                              sim_seconds=sim_seconds,
                              induction_seconds=fit_seconds))
        del paths, batch
    price, variance = _aggregate(run_prices)
    return PricingResult(
        price=price, run_prices=run_prices, run_variance=variance,
        immediate=immediate,
        config={"method": "longstaff_schwartz", "poly_degree": poly_degree,
                "include_payoff": include_payoff, "path_count": path_count,
                "runs": runs, "seed": seed},
        run_stats=stats,
    )
