"""Discounted exercise values on the exercise-date grid.

Every payoff produces a (paths, dates + 1) matrix Z whose column k is the
payoff at exercise date k discounted back to time zero, so backward
induction compares like with like.  Column 0 is the immediate-exercise
value (identical across paths).

The moving-average call pays (S_T - X_T)^+ against a trailing window
average:

    X at date i = mean of S at dates i - n_avg - n_lag + 1 .. i - n_lag,

with the window (``window``) and lag (``delay``) given in year fractions
that must land on whole numbers of exercise periods.  Dates whose window
would reach before time zero pay nothing and are structurally
non-exercisable; the earliest exercisable date is n_avg + n_lag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import SimulatedPaths, TimeGrid

_KINDS = ("put", "basket_put", "moving_average_call")
_INT_TOL = 1e-9


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff family plus its parameters.

    kind="put":                  (strike - S)^+ on a single asset.
    kind="basket_put":           (strike - sum_j weights[j] S^j)^+;
                                 weights default to equal and must sum to 1.
    kind="moving_average_call":  (S - trailing average)^+ with ``window``
                                 and ``delay`` in year fractions.
    """

    kind: str
    strike: float = 0.0
    weights: np.ndarray | None = None
    window: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}; "
                             f"expected one of {_KINDS}")
        if self.kind in ("put", "basket_put"):
            if self.strike <= 0:
                raise ValueError(f"strike must be positive, got {self.strike}")
        if self.weights is not None:
            w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
            if w.ndim != 1 or w.shape[0] < 1:
                raise ValueError("weights must be a nonempty vector")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if abs(w.sum() - 1.0) > _INT_TOL:
                raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
            w = np.ascontiguousarray(w)
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        if self.kind == "moving_average_call":
            if self.window <= 0:
                raise ValueError(f"window must be positive, got {self.window}")
            if self.delay < 0:
                raise ValueError(f"delay must be nonnegative, got {self.delay}")

    def window_counts(self, grid: TimeGrid) -> tuple[int, int]:
        """(n_avg, n_lag): window and lag as whole exercise-period counts."""
        if self.kind != "moving_average_call":
            raise ValueError("window_counts only applies to moving-average payoffs")
        period = grid.horizon / grid.exercise_count
        out = []
        for name, years in (("window", self.window), ("delay", self.delay)):
            ratio = years / period
            rounded = round(ratio)
            if abs(ratio - rounded) > _INT_TOL:
                raise ValueError(
                    f"{name} {years} is not a whole number of exercise "
                    f"periods ({period})"
                )
            out.append(int(rounded))
        n_avg, n_lag = out
        if n_avg < 1:
            raise ValueError("window must cover at least one exercise period")
        if n_avg + n_lag > grid.exercise_count:
            raise ValueError(
                f"window plus delay spans {n_avg + n_lag} periods, more than "
                f"the {grid.exercise_count} available: no date is exercisable"
            )
        return n_avg, n_lag

    def first_exercise_index(self, grid: TimeGrid) -> int:
        """Earliest exercise date with a well-defined, exercisable payoff."""
        if self.kind == "moving_average_call":
            n_avg, n_lag = self.window_counts(grid)
            return n_avg + n_lag
        return 1


def compute_payoff_matrix(spec: PayoffSpec, paths: SimulatedPaths,
                          grid: TimeGrid) -> np.ndarray:
    """Discounted payoff matrix (paths, dates + 1) for one simulated run."""
    emap = grid.exercise_map
    n_dates = grid.exercise_count
    df = paths.discount_factors[emap]
    spots = paths.asset_paths[:, emap, :]  # (m, dates + 1, assets)
    m = spots.shape[0]

    if spec.kind == "put":
        if spots.shape[2] != 1:
            raise ValueError("put payoff needs a single-asset model")
        intrinsic = np.maximum(spec.strike - spots[:, :, 0], 0.0)
    elif spec.kind == "basket_put":
        d = spots.shape[2]
        w = spec.weights
        if w is None:
            w = np.full(d, 1.0 / d)
        elif w.shape[0] != d:
            raise ValueError(f"{w.shape[0]} weights for {d} assets")
        basket = spots @ w
        intrinsic = np.maximum(spec.strike - basket, 0.0)
    else:
        if spots.shape[2] != 1:
            raise ValueError("moving-average payoff needs a single-asset model")
        n_avg, n_lag = spec.window_counts(grid)
        level = spots[:, :, 0]
        csum = np.zeros((m, n_dates + 2))
        np.cumsum(level, axis=1, out=csum[:, 1:])
        intrinsic = np.zeros((m, n_dates + 1))
        first = n_avg + n_lag
        for i in range(first, n_dates + 1):
            window_mean = (csum[:, i - n_lag + 1] - csum[:, i - n_avg - n_lag + 1]) \
                / n_avg
            intrinsic[:, i] = np.maximum(level[:, i] - window_mean, 0.0)
    return intrinsic * df[None, :]
