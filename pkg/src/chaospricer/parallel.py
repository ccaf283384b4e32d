"""Backward induction engine with deterministic parallel reduction.

Each exercise date runs two barriers.  Phase one: every worker computes
unnormalized coefficient sums for the contiguous path groups it owns.
Reduce: the coordinator folds the per-group partial vectors in ascending
group order (a fixed left fold, independent of the worker count) and
normalizes once by M * alpha!.  Phase two: workers evaluate the fitted
expansion on their own paths and update the stopping policy in place.

Under ``fixed`` granularity the group grid depends only on the path
count and group size, so prices are bitwise identical for every worker
count; under ``free`` granularity groups are re-anchored at each
worker's block start, which reorders the fold and changes results only
at floating-point reduction level.  BLAS is pinned to one thread inside
the engine so per-group kernel arithmetic never depends on scheduling.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np
from threadpoolctl import threadpool_limits

from .basis import BasisCatalog, enumerate_basis
from .models import TimeGrid, simulate
from .payoffs import PayoffSpec, compute_payoff_matrix
from .regression import (
    DEFAULT_GROUP_SIZE,
    LS_POLICY_TOL,
    ChaosCoefficients,
    PathBatch,
    estimate_coefficients_ls,
    grouped_prefix,
    make_expansion_evaluator,
    normalizers,
    weighted_basis_sums,
)

WORKERS_ENV = "CHAOSPRICER_WORKERS"
GRANULARITIES = ("fixed", "free")


def default_workers() -> int:
    """Worker count from the environment, else the CPU count."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is not None:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
        if value < 1:
            raise ValueError(f"{WORKERS_ENV} must be at least 1, got {value}")
        return value
    return os.cpu_count() or 1


def physical_core_count() -> int:
    try:
        import psutil
        cores = psutil.cpu_count(logical=False)
        if cores:
            return cores
    except ImportError:
        pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExecutionOptions:
    """How one backward induction is scheduled."""

    workers: int = 1
    granularity: str = "fixed"
    group_size: int = DEFAULT_GROUP_SIZE
    keep_partials: bool = False
    keep_records: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.granularity not in GRANULARITIES:
            raise ValueError(
                f"granularity {self.granularity!r} not in {GRANULARITIES}"
            )
        if self.group_size < 1:
            raise ValueError("group_size must be positive")


@dataclass(frozen=True)
class WorkerPlan:
    """Static assignment of contiguous path groups to workers.

    ``group_bounds`` are ascending path offsets delimiting the reduction
    groups; worker w owns the group id range ``worker_group_ranges[w]``
    and therefore the contiguous path block ``block_bounds[w] ..
    block_bounds[w+1]``.  Blocks are disjoint and cover every path.
    """

    path_count: int
    workers: int
    granularity: str
    group_size: int
    block_bounds: tuple[int, ...]
    group_bounds: tuple[int, ...]
    worker_group_ranges: tuple[tuple[int, int], ...]

    @property
    def group_count(self) -> int:
        return len(self.group_bounds) - 1

    def group_slice(self, gid: int) -> slice:
        return slice(self.group_bounds[gid], self.group_bounds[gid + 1])

    def worker_group_ids(self, worker: int) -> range:
        lo, hi = self.worker_group_ranges[worker]
        return range(lo, hi)

    def worker_block(self, worker: int) -> tuple[int, int]:
        return self.block_bounds[worker], self.block_bounds[worker + 1]


def build_worker_plan(path_count: int, workers: int,
                      group_size: int = DEFAULT_GROUP_SIZE,
                      granularity: str = "fixed") -> WorkerPlan:
    """Split paths into reduction groups and assign group runs to workers."""
    if path_count < 1:
        raise ValueError("need at least one path")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if workers > path_count:
        raise ValueError(f"more workers ({workers}) than paths ({path_count})")
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity {granularity!r} not in {GRANULARITIES}")
    if group_size < 1:
        raise ValueError("group_size must be positive")

    if granularity == "fixed":
        # Global grid, independent of the worker count.
        bounds = list(range(0, path_count, group_size)) + [path_count]
        n_groups = len(bounds) - 1
        base, rem = divmod(n_groups, workers)
        ranges = []
        lo = 0
        for w in range(workers):
            hi = lo + base + (1 if w < rem else 0)
            ranges.append((lo, hi))
            lo = hi
        block_bounds = [bounds[r[0]] for r in ranges] + [path_count]
    else:
        # Blocks of floor(M/R) paths; the last absorbs the remainder.
        base = path_count // workers
        block_bounds = [w * base for w in range(workers)] + [path_count]
        bounds = []
        ranges = []
        for w in range(workers):
            lo_path, hi_path = block_bounds[w], block_bounds[w + 1]
            first = len(bounds)
            bounds.extend(range(lo_path, hi_path, group_size))
            ranges.append((first, len(bounds)))
        bounds.append(path_count)
        # Convert per-worker group starts into bounds pairs implicitly: the
        # list holds every group start plus the final path count; group g
        # spans bounds[g] .. bounds[g+1] because blocks are contiguous.

    plan = WorkerPlan(
        path_count=path_count,
        workers=workers,
        granularity=granularity,
        group_size=group_size,
        block_bounds=tuple(block_bounds),
        group_bounds=tuple(bounds),
        worker_group_ranges=tuple(ranges),
    )
    if plan.block_bounds[0] != 0 or plan.block_bounds[-1] != path_count \
            or any(b > a for b, a in zip(plan.block_bounds,
                                         plan.block_bounds[1:])):
        raise RuntimeError("worker plan does not cover the paths")
    return plan


@dataclass
class ReductionRecord:
    """One exercise date's reduction: combined coefficients and phase timings."""

    date_index: int
    cutoff_increment: int
    combined: np.ndarray
    local_sum_seconds: np.ndarray
    reduce_seconds: float
    broadcast_seconds: float
    update_seconds: np.ndarray
    partials: list[np.ndarray] | None = None  # per worker, unnormalized

    @property
    def worker_count(self) -> int:
        return self.local_sum_seconds.shape[0]


def _run_phase(pool: ThreadPoolExecutor | None, workers: int, fn) -> np.ndarray:
    if pool is None:
        return np.array([fn(0)])
    futures = [pool.submit(fn, w) for w in range(workers)]
    return np.array([f.result() for f in futures])


def run_induction(catalog: BasisCatalog, batch: PathBatch,
                  options: ExecutionOptions | None = None, *,
                  use_itm_rule: bool = True, union_exercise: bool = False,
                  exercisable_from: int = 1, keep_coefficients: bool = False,
                  fit: str = "mean"):
    """Run backward induction over all exercise dates.

    Returns (StoppingState, coefficients, records) where ``coefficients``
    maps each processed date to its ChaosCoefficients (empty unless
    ``keep_coefficients``) and ``records`` holds one ReductionRecord per
    processed date in processing (descending-date) order.  Dates before
    ``exercisable_from`` and, under the in-the-money rule, dates with no
    in-the-money path are skipped: no fit can change the policy there.

    ``fit`` selects how the continuation coefficients are produced:
    "mean" uses the per-index empirical means (grouped partial sums,
    reduced in fixed order), "least_squares" regresses the cashflows on
    the same sub-basis.  The least-squares path runs sequentially inside
    each date; worker parallelism still applies to the policy update.
    """
    from .pricer import StoppingState

    opts = options or ExecutionOptions()
    if fit not in ("mean", "least_squares"):
        raise ValueError(f"unknown fit {fit!r}")
    if (batch.steps, batch.dim) != (catalog.steps, catalog.dim):
        raise ValueError("catalog shape does not match the batch increments")
    m_paths = batch.path_count
    sigma = batch.date_map
    n_dates = batch.exercise_count
    d = batch.dim
    payoffs = batch.payoffs
    flat = batch.flat_increments()

    if n_dates >= 2 and m_paths < catalog.cutoff(int(sigma[n_dates - 1])):
        warnings.warn(
            f"only {m_paths} paths for {catalog.cutoff(int(sigma[n_dates - 1]))} "
            "basis functions at the last fitted date; estimates will be noisy",
            stacklevel=2,
        )

    plan = build_worker_plan(m_paths, opts.workers, opts.group_size,
                             opts.granularity)
    slices = [plan.group_slice(g) for g in range(plan.group_count)]

    tau = np.full(m_paths, n_dates, dtype=np.int32)
    cash = payoffs[:, n_dates].copy()
    coefficients: dict[int, ChaosCoefficients] = {}
    records: list[ReductionRecord] = []
    restrict = use_itm_rule or union_exercise
    prev_fit = None  # warm start for iterative least-squares fits

    pool = ThreadPoolExecutor(max_workers=opts.workers) if opts.workers > 1 else None
    try:
        with threadpool_limits(limits=1, user_api="blas"):
            for k in range(n_dates - 1, 0, -1):
                if k < exercisable_from:
                    break
                z_k = payoffs[:, k]
                mask = z_k > 0.0 if restrict else None
                if use_itm_rule and not union_exercise and not mask.any():
                    continue
                kk = int(sigma[k])
                q = kk * d
                count = catalog.cutoff(kk)

                if fit == "least_squares":
                    t0 = perf_counter()
                    x0 = None
                    if prev_fit is not None and prev_fit.shape[0] >= count:
                        x0 = prev_fit[:count]
                    ls = estimate_coefficients_ls(catalog, batch, cash, kk,
                                                  itm_mask=mask,
                                                  tol=LS_POLICY_TOL, x0=x0)
                    values = ls.values
                    prev_fit = values
                    local_seconds = perf_counter() - t0
                    reduce_seconds = 0.0
                else:
                    partials = np.zeros((plan.group_count, count))

                    def local_sums(w):
                        t0 = perf_counter()
                        for gid in plan.worker_group_ids(w):
                            sl = slices[gid]
                            pts = flat[sl, :q]
                            wts = cash[sl]
                            if restrict:
                                keep = np.nonzero(mask[sl])[0]
                                if keep.size == 0:
                                    continue
                                pts = pts[keep]
                                wts = wts[keep]
                            else:
                                pts = np.ascontiguousarray(pts)
                            weighted_basis_sums(catalog, pts, wts, count,
                                                partials[gid])
                        return perf_counter() - t0

                    local_seconds = _run_phase(pool, opts.workers, local_sums)

                    t0 = perf_counter()
                    raw = np.zeros(count)
                    for gid in range(plan.group_count):
                        raw += partials[gid]
                    values = raw / normalizers(catalog, count, m_paths)
                    reduce_seconds = perf_counter() - t0

                t0 = perf_counter()
                evaluator = make_expansion_evaluator(catalog, values, kk)
                broadcast_seconds = perf_counter() - t0

                def update(w):
                    t0 = perf_counter()
                    for gid in plan.worker_group_ids(w):
                        sl = slices[gid]
                        z_g = z_k[sl]
                        if use_itm_rule and not union_exercise:
                            keep = np.nonzero(mask[sl])[0]
                            if keep.size == 0:
                                continue
                            cont = evaluator(flat[sl, :q][keep])
                            hit = keep[z_g[keep] >= cont]
                        elif union_exercise:
                            itm = np.nonzero(mask[sl])[0]
                            rest = np.nonzero(~mask[sl])[0]
                            if rest.size:
                                cont = evaluator(flat[sl, :q][rest])
                                rest = rest[z_g[rest] >= cont]
                            hit = np.concatenate([itm, rest])
                        else:
                            cont = evaluator(np.ascontiguousarray(flat[sl, :q]))
                            hit = np.nonzero(z_g >= cont)[0]
                        if hit.size:
                            idx = sl.start + hit
                            tau[idx] = k
                            cash[idx] = z_g[hit]
                    return perf_counter() - t0

                update_seconds = _run_phase(pool, opts.workers, update)

                if keep_coefficients:
                    coefficients[k] = ChaosCoefficients(
                        catalog=catalog, values=values,
                        cutoff_increment=kk, sample_count=m_paths,
                    )
                worker_partials = None
                if opts.keep_partials and fit == "mean":
                    worker_partials = []
                    for w in range(opts.workers):
                        acc = np.zeros(count)
                        for gid in plan.worker_group_ids(w):
                            acc += partials[gid]
                        worker_partials.append(acc)
                records.append(ReductionRecord(
                    date_index=k,
                    cutoff_increment=kk,
                    combined=values,
                    local_sum_seconds=local_seconds,
                    reduce_seconds=reduce_seconds,
                    broadcast_seconds=broadcast_seconds,
                    update_seconds=update_seconds,
                    partials=worker_partials,
                ))
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return StoppingState(tau_index=tau, cashflow=cash), coefficients, records


def warm_catalog(catalog: BasisCatalog, date_map: np.ndarray,
                 first_date: int = 1) -> None:
    """Pre-build grouping metadata for every fitted date (timing fairness)."""
    if catalog.order > 3:
        return
    n_dates = len(date_map) - 1
    for k in range(max(first_date, 1), n_dates):
        kk = int(date_map[k])
        grouped_prefix(catalog, catalog.cutoff(kk), kk * catalog.dim)


@dataclass
class ScalabilityRow:
    workers: int
    sim_seconds: float
    induction_seconds: float
    total_seconds: float
    price: float
    efficiency: float


def measure_scalability(model_params, payoff: PayoffSpec, grid: TimeGrid, *,
                        chaos_order: int, path_count: int, seed: int = 0,
                        run_index: int = 0, worker_counts=(1, 2, 4, 8),
                        use_itm_rule: bool = True,
                        group_size: int = DEFAULT_GROUP_SIZE,
                        granularity: str = "fixed",
                        progress=None) -> list[ScalabilityRow]:
    """Time one identical pricing run per worker count.

    The same seed and run index are used throughout, so under fixed
    granularity every row must report the bitwise-identical price.
    Efficiency is T_induction(1) / (R * T_induction(R)): the simulation is
    embarrassingly parallel and timed separately.
    """
    catalog = enumerate_basis(chaos_order, grid.steps, model_params.brownian_dim)
    first = payoff.first_exercise_index(grid)
    warm_catalog(catalog, grid.exercise_map, first)

    rows: list[ScalabilityRow] = []
    base_induction = None
    for workers in worker_counts:
        t0 = perf_counter()
        paths = simulate(model_params, grid, path_count, seed, run_index)
        z = compute_payoff_matrix(payoff, paths, grid)
        batch = PathBatch(increments=paths.increments, payoffs=z,
                          date_map=grid.exercise_map)
        immediate = float(z[0, 0])
        del paths
        sim_seconds = perf_counter() - t0

        opts = ExecutionOptions(workers=workers, granularity=granularity,
                                group_size=group_size)
        t0 = perf_counter()
        state, _, _ = run_induction(catalog, batch, opts,
                                    use_itm_rule=use_itm_rule,
                                    exercisable_from=first)
        induction_seconds = perf_counter() - t0
        price = max(immediate, float(np.sum(state.cashflow) / path_count))

        if base_induction is None:
            base_induction = induction_seconds
        efficiency = base_induction / (workers * induction_seconds)
        row = ScalabilityRow(
            workers=workers,
            sim_seconds=sim_seconds,
            induction_seconds=induction_seconds,
            total_seconds=sim_seconds + induction_seconds,
            price=price,
            efficiency=efficiency,
        )
        rows.append(row)
        if progress is not None:
            progress(f"workers={workers}: induction {induction_seconds:.2f}s, "
                     f"price {price:.6f}, efficiency {efficiency:.3f}")
        del batch
    return rows


def write_timing_csv(records: list[ReductionRecord], path: str) -> None:
    """Per-date, per-phase, per-worker timing breakdown."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date_index", "phase", "worker", "seconds"])
        for rec in records:
            for w in range(rec.worker_count):
                writer.writerow([rec.date_index, "local_sum", w,
                                 f"{rec.local_sum_seconds[w]:.17g}"])
            writer.writerow([rec.date_index, "reduce", -1,
                             f"{rec.reduce_seconds:.17g}"])
            writer.writerow([rec.date_index, "broadcast", -1,
                             f"{rec.broadcast_seconds:.17g}"])
            for w in range(rec.worker_count):
                writer.writerow([rec.date_index, "policy_update", w,
                                 f"{rec.update_seconds[w]:.17g}"])


def write_scalability_csv(rows: list[ScalabilityRow], path: str) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["workers", "sim_seconds", "induction_seconds",
                         "total_seconds", "price", "efficiency"])
        for row in rows:
            writer.writerow([
                row.workers,
                f"{row.sim_seconds:.17g}",
                f"{row.induction_seconds:.17g}",
                f"{row.total_seconds:.17g}",
                f"{row.price:.17g}",
                f"{row.efficiency:.17g}",
            ])
