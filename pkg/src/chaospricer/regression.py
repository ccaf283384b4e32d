"""Chaos coefficient estimation and conditional-expectation evaluation.

The coefficient of basis index alpha for a square-integrable functional F
of the increments is lam_alpha = E[F * H_alpha(G)] / alpha!.  Its Monte
Carlo estimate over M paths is

    lam_hat[alpha] = (1 / (M * alpha!)) * sum_l w[l] * H_alpha(G[l]),

where w[l] is the target, optionally zeroed outside a path mask (the
divisor stays M either way).  Conditioning on the first k increments
keeps exactly the catalog prefix of length cutoff(k), so the fitted
vector doubles as a conditional-expectation approximation at every
earlier increment via prefix truncation.

Sums are accumulated over a fixed grid of contiguous path groups, folded
in ascending order and normalized once at the end; the result is bitwise
independent of how groups are distributed over workers.

``estimate_coefficients_ls`` fits the same sub-basis by least squares on
the masked sample instead of the plain means.  The two agree on the full
sample as M grows (the basis is orthogonal under the sampling law) but
differ under a mask, where the least-squares projection weights the
basis by the conditional geometry of the kept paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .basis import BasisCatalog, eval_basis_matrix, eval_basis_row

DEFAULT_GROUP_SIZE = 16384
# Largest basis solved through an explicit normal-equations matrix;
# bigger fits go through blockwise conjugate gradients.
LS_DIRECT_LIMIT = 2000
# Residual tolerance for fits driving an exercise policy: the decision
# compares payoff against the fitted continuation, so resolving
# coefficients far below Monte Carlo noise buys no price accuracy.
LS_POLICY_TOL = 1e-5
_LS_BLOCK = 32768
# (iterations, relative residual) of the most recent CG solve
_last_cg_info = (0, 0.0)
# Doubles allowed in one generic basis-matrix chunk (32 MB).
_GENERIC_BUDGET = 1 << 22


@dataclass(frozen=True)
class PathBatch:
    """Simulated increments with per-date discounted payoffs.

    ``increments`` is (paths, steps, dim) of normalized Brownian increments;
    ``payoffs`` is (paths, dates + 1) of discounted exercise values, column k
    belonging to exercise date k; ``date_map`` maps exercise date k to its
    increment count sigma_k (strictly increasing, date_map[0] = 0,
    date_map[-1] = steps).
    """

    increments: np.ndarray
    payoffs: np.ndarray
    date_map: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        pay = np.asarray(self.payoffs, dtype=np.float64)
        dm = np.asarray(self.date_map, dtype=np.int64)
        if inc.ndim != 3:
            raise ValueError("increments must be (paths, steps, dim)")
        if pay.ndim != 2 or pay.shape[0] != inc.shape[0]:
            raise ValueError("payoffs must be (paths, dates + 1)")
        if dm.ndim != 1 or dm.shape[0] != pay.shape[1]:
            raise ValueError("date_map length must match payoff columns")
        if dm[0] != 0 or dm[-1] != inc.shape[1] or np.any(np.diff(dm) <= 0):
            raise ValueError(
                "date_map must be strictly increasing from 0 to the step count"
            )
        if not np.isfinite(inc).all():
            raise ValueError("increments contain non-finite entries")
        if not np.isfinite(pay).all():
            raise ValueError("payoffs contain non-finite entries")
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "payoffs", pay)
        object.__setattr__(self, "date_map", dm)

    @property
    def path_count(self) -> int:
        return self.increments.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]

    @property
    def exercise_count(self) -> int:
        return self.date_map.shape[0] - 1

    def flat_increments(self) -> np.ndarray:
        """View of increments as (paths, steps * dim), increment-major columns."""
        m, n, d = self.increments.shape
        return self.increments.reshape(m, n * d)


@dataclass(frozen=True)
class ChaosCoefficients:
    """Estimated expansion coefficients over a catalog prefix."""

    catalog: BasisCatalog = field(repr=False)
    values: np.ndarray
    cutoff_increment: int
    sample_count: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        expected = self.catalog.cutoff(self.cutoff_increment)
        if vals.shape != (expected,):
            raise ValueError(
                f"expected {expected} coefficients for cutoff increment "
                f"{self.cutoff_increment}, got {vals.shape}"
            )
        if not np.isfinite(vals).all():
            raise ValueError("coefficients contain non-finite entries")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]


def group_slices(total: int, group_size: int) -> list[slice]:
    """Fixed grid of contiguous path groups covering range(total)."""
    if group_size < 1:
        raise ValueError("group_size must be positive")
    return [slice(lo, min(lo + group_size, total))
            for lo in range(0, total, group_size)]


def weighted_basis_sums(catalog: BasisCatalog, points: np.ndarray,
                        weights: np.ndarray, count: int,
                        out: np.ndarray) -> None:
    """Accumulate unnormalized weighted basis sums for one path block.

    ``points`` is (m, n_vars) with n_vars = k * dim covering the leading
    ``count`` catalog entries.  Dispatches to the blocked kernels for
    order <= 3 and to the reference basis matrix otherwise.
    """
    m, n_vars = points.shape
    if weights.shape != (m,):
        raise ValueError("weights must match the point rows")
    if catalog.order <= 3:
        gb = grouped_prefix(catalog, count, n_vars)
        _kernels.weighted_sums(gb, points, weights, out)
        return
    chunk = max(16, _GENERIC_BUDGET // max(count, 1))
    for lo in range(0, m, chunk):
        basis = eval_basis_matrix(catalog, points[lo:lo + chunk], count)
        out += weights[lo:lo + chunk] @ basis


def grouped_prefix(catalog: BasisCatalog, count: int, n_vars: int):
    """Pattern grouping of a catalog prefix, cached on the catalog."""
    key = (count, n_vars)
    gb = catalog._groups.get(key)
    if gb is None:
        gb = _kernels.group_basis_prefix(catalog, count, n_vars)
        catalog._groups[key] = gb
    return gb


def estimate_coefficients(catalog: BasisCatalog, batch: PathBatch,
                          targets: np.ndarray, cutoff_increment: int,
                          itm_mask: np.ndarray | None = None,
                          group_size: int = DEFAULT_GROUP_SIZE
                          ) -> ChaosCoefficients:
    """Estimate coefficients of the sub-basis measurable at ``cutoff_increment``.

    ``targets`` holds one value per path; with ``itm_mask`` given, masked-out
    paths contribute nothing to the sums while the divisor remains the full
    path count M.  The estimate for index alpha is
    (1/(M * alpha!)) * sum_l targets[l] * H_alpha(increments[l]).
    """
    m = batch.path_count
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (m,):
        raise ValueError(f"targets must have shape ({m},)")
    if itm_mask is not None:
        itm_mask = np.asarray(itm_mask)
        if itm_mask.shape != (m,) or itm_mask.dtype != np.bool_:
            raise ValueError(f"itm_mask must be a boolean array of shape ({m},)")
    k = int(cutoff_increment)
    count = catalog.cutoff(k)
    if (batch.steps, batch.dim) != (catalog.steps, catalog.dim):
        raise ValueError("batch increments do not match the catalog shape")
    n_vars = k * catalog.dim
    flat = batch.flat_increments()

    raw = np.zeros(count)
    for sl in group_slices(m, group_size):
        pts = flat[sl, :n_vars]
        w = targets[sl]
        if itm_mask is not None:
            keep = np.nonzero(itm_mask[sl])[0]
            if keep.size == 0:
                continue
            pts = pts[keep]
            w = w[keep]
        else:
            pts = np.ascontiguousarray(pts)
        if n_vars == 0:
            raw[0] += np.sum(w)
        else:
            weighted_basis_sums(catalog, pts, w, count, raw)
    values = raw / normalizers(catalog, count, m)
    return ChaosCoefficients(catalog=catalog, values=values,
                             cutoff_increment=k, sample_count=m)


def normalizers(catalog: BasisCatalog, count: int, sample_count: int
                ) -> np.ndarray:
    """Divisors M * alpha! for the leading ``count`` catalog entries."""
    return float(sample_count) * catalog.factorials[:count].astype(np.float64)


def _ls_block_rows(count: int) -> int:
    # keep one design chunk around 512 MB
    return max(256, min(_LS_BLOCK, (1 << 26) // max(count, 1)))


def _ls_direct(catalog: BasisCatalog, flat: np.ndarray, rows: np.ndarray,
               y: np.ndarray, n_vars: int, count: int, ridge: float
               ) -> np.ndarray:
    gram = np.zeros((count, count))
    rhs = np.zeros(count)
    step = _ls_block_rows(count)
    for lo in range(0, rows.size, step):
        sel = rows[lo:lo + step]
        x = eval_basis_matrix(catalog, flat[sel, :n_vars], count)
        gram += x.T @ x
        rhs += x.T @ y[lo:lo + step]
    scale = max(np.trace(gram) / count, 1.0)
    jitter = ridge
    for _ in range(7):
        try:
            if jitter:
                factor = cho_factor(gram + jitter * np.eye(count))
            else:
                factor = cho_factor(gram)
            return cho_solve(factor, rhs)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10 * scale)
    # hopelessly singular (far fewer rows than columns): minimum-norm answer
    return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def _ls_cg(catalog: BasisCatalog, flat: np.ndarray, rows: np.ndarray,
           y: np.ndarray, n_vars: int, count: int, ridge: float,
           tol: float, max_iter: int, x0: np.ndarray | None = None
           ) -> np.ndarray:
    if catalog.order <= 3 and n_vars > 0:
        gb = grouped_prefix(catalog, count, n_vars)
        pts = np.ascontiguousarray(flat[rows, :n_vars])
        rhs = np.zeros(count)
        _kernels.weighted_sums(gb, pts, y, rhs)

        def matvec(v: np.ndarray) -> np.ndarray:
            plan = _kernels.make_expansion_plan(gb, v)
            fitted = _kernels.expansion_values(gb, plan, pts)
            out = ridge * v
            _kernels.weighted_sums(gb, pts, fitted, out)
            return out
    else:
        step = _ls_block_rows(count)
        rhs = np.zeros(count)
        for lo in range(0, rows.size, step):
            sel = rows[lo:lo + step]
            x = eval_basis_matrix(catalog, flat[sel, :n_vars], count)
            rhs += x.T @ y[lo:lo + step]

        def matvec(v: np.ndarray) -> np.ndarray:
            out = ridge * v
            for lo in range(0, rows.size, step):
                sel = rows[lo:lo + step]
                x = eval_basis_matrix(catalog, flat[sel, :n_vars], count)
                out += x.T @ (x @ v)
            return out

    # Jacobi scaling from the population Gram diag E[H_a^2] = alpha!.
    # Measured on the worst masked system (Heston order 3, M=1e6, last
    # date): the exact sample diagonal gives the same iteration count, so
    # the residual spread is mask-induced correlation, not scale.
    diag = rows.size * catalog.factorials[:count].astype(np.float64) + ridge

    ref = np.sqrt(float(rhs @ (rhs / diag)))
    if ref == 0.0:
        return np.zeros(count)
    if x0 is None:
        beta = np.zeros(count)
        resid = rhs.copy()
    else:
        # warm start, e.g. from the previous exercise date's fit
        beta = np.array(x0, dtype=np.float64)
        resid = rhs - matvec(beta)
    z = resid / diag
    direction = z.copy()
    rz = float(resid @ z)
    global _last_cg_info
    if np.sqrt(rz) <= tol * ref:
        _last_cg_info = (0, np.sqrt(rz) / ref)
        return beta
    done = 0
    for it in range(max_iter):
        av = matvec(direction)
        curve = float(direction @ av)
        if curve <= 0.0:
            done = it
            break
        alpha = rz / curve
        beta += alpha * direction
        resid -= alpha * av
        done = it + 1
        if np.sqrt(float(resid @ (resid / diag))) <= tol * ref:
            break
        z = resid / diag
        rz_next = float(resid @ z)
        direction = z + (rz_next / rz) * direction
        rz = rz_next
    _last_cg_info = (done, np.sqrt(float(resid @ (resid / diag))) / ref)
    return beta


def estimate_coefficients_ls(catalog: BasisCatalog, batch: PathBatch,
                             targets: np.ndarray, cutoff_increment: int,
                             itm_mask: np.ndarray | None = None, *,
                             solver: str = "auto", ridge: float = 0.0,
                             tol: float = 1e-7, max_iter: int = 200,
                             x0: np.ndarray | None = None
                             ) -> ChaosCoefficients:
    """Least-squares fit of the measurable sub-basis to ``targets``.

    Minimizes sum over kept paths of (target - expansion)^2; with a mask
    the dropped paths are excluded from the fit entirely rather than
    zero-weighted.  Bases up to LS_DIRECT_LIMIT go through an explicit
    normal-equations Cholesky (with escalating jitter if the sample Gram
    is singular); larger ones use Jacobi-preconditioned conjugate
    gradients applying the design matrix blockwise in a fixed order, so
    results do not depend on scheduling.  ``x0`` warm-starts the
    iterative solver (ignored by the direct one); backward induction
    feeds each date the previous date's fit, whose catalog prefix is
    already close to the new solution.
    """
    m = batch.path_count
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (m,):
        raise ValueError(f"targets must have shape ({m},)")
    if itm_mask is not None:
        itm_mask = np.asarray(itm_mask)
        if itm_mask.shape != (m,) or itm_mask.dtype != np.bool_:
            raise ValueError(f"itm_mask must be a boolean array of shape ({m},)")
    if (batch.steps, batch.dim) != (catalog.steps, catalog.dim):
        raise ValueError("batch increments do not match the catalog shape")
    k = int(cutoff_increment)
    count = catalog.cutoff(k)
    n_vars = k * catalog.dim
    flat = batch.flat_increments()
    rows = np.flatnonzero(itm_mask) if itm_mask is not None else np.arange(m)

    if rows.size == 0:
        values = np.zeros(count)
    elif solver not in ("auto", "direct", "cg"):
        raise ValueError(f"unknown solver {solver!r}")
    else:
        which = solver
        if which == "auto":
            which = "direct" if count <= LS_DIRECT_LIMIT else "cg"
        y = targets[rows]
        if which == "direct":
            values = _ls_direct(catalog, flat, rows, y, n_vars, count, ridge)
        else:
            guess = None
            if x0 is not None:
                x0 = np.asarray(x0, dtype=np.float64)
                if x0.shape != (count,):
                    raise ValueError(f"x0 must have shape ({count},)")
                guess = x0
            values = _ls_cg(catalog, flat, rows, y, n_vars, count, ridge,
                            tol, max_iter, guess)
    return ChaosCoefficients(catalog=catalog, values=values,
                             cutoff_increment=k, sample_count=m)


def project_truncate(coeffs: ChaosCoefficients, cutoff_increment: int
                     ) -> ChaosCoefficients:
    """Condition on fewer increments: keep the catalog-prefix coefficients.

    Returns the length-cutoff(k) prefix; no recomputation, no re-fitting.
    """
    k = int(cutoff_increment)
    if k > coeffs.cutoff_increment:
        raise ValueError(
            f"cannot extend cutoff {coeffs.cutoff_increment} to {k}; "
            "conditioning only removes increments"
        )
    count = coeffs.catalog.cutoff(k)
    return ChaosCoefficients(
        catalog=coeffs.catalog,
        values=coeffs.values[:count].copy(),
        cutoff_increment=k,
        sample_count=coeffs.sample_count,
    )


def eval_conditional_expectation(coeffs: ChaosCoefficients, batch: PathBatch,
                                 path_index: int) -> float:
    """Evaluate the fitted expansion on one path of a batch."""
    if not 0 <= path_index < batch.path_count:
        raise IndexError(f"path {path_index} outside [0, {batch.path_count})")
    row = eval_basis_row(coeffs.catalog, batch.increments[path_index],
                         up_to=len(coeffs))
    return float(row @ coeffs.values)


def make_expansion_evaluator(catalog: BasisCatalog, values: np.ndarray,
                             cutoff_increment: int):
    """Vectorized evaluator points (m, k*dim) -> expansion values (m,).

    Builds the dense evaluation matrices once so repeated calls over path
    blocks only pay for matrix products.
    """
    k = int(cutoff_increment)
    count = catalog.cutoff(k)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (count,):
        raise ValueError(f"expected {count} coefficients, got {values.shape}")
    n_vars = k * catalog.dim
    if catalog.order <= 3:
        gb = grouped_prefix(catalog, count, n_vars)
        plan = _kernels.make_expansion_plan(gb, values)

        def evaluate(points: np.ndarray) -> np.ndarray:
            return _kernels.expansion_values(gb, plan, points)
    else:
        def evaluate(points: np.ndarray) -> np.ndarray:
            m = points.shape[0]
            out = np.empty(m)
            chunk = max(16, _GENERIC_BUDGET // max(count, 1))
            for lo in range(0, m, chunk):
                basis = eval_basis_matrix(catalog, points[lo:lo + chunk], count)
                out[lo:lo + chunk] = basis @ values
            return out

    return evaluate


def evaluate_expansion(coeffs: ChaosCoefficients, points: np.ndarray
                       ) -> np.ndarray:
    """Evaluate a fitted expansion on (m, k*dim) increment rows."""
    evaluator = make_expansion_evaluator(coeffs.catalog, coeffs.values,
                                         coeffs.cutoff_increment)
    return evaluator(np.ascontiguousarray(np.asarray(points, dtype=np.float64)))
