"""BLAS-blocked kernels for chaos coefficient sums and expansion evaluation.

For order <= 3 every basis function falls into one of seven Hermite degree
patterns: constant, H1(u), H2(u), H1(u)H1(v), H3(u), H2(u)H1(v) and
H1(u)H1(v)H1(w).  Grouping a catalog prefix by pattern turns both the
weighted basis sums  sum_l w[l] * H_alpha(x[l])  and the expansion values
sum_a lam[a] * H_alpha(x[l])  into a handful of dense matrix products over
a path block, keeping the dominant cost inside dgemm instead of per-index
Python loops.  Results are scattered back into catalog positions, so
callers never observe the regrouping.

Pair-product buffers are processed in fixed-size column blocks in
ascending order, so for a given input block the outputs are bitwise
reproducible regardless of how much memory the blocks would need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisCatalog

# Cap on doubles in a pair-product buffer (64 MB).
_PAIR_BUDGET = 1 << 23


def _pair_row_index(u: np.ndarray, v: np.ndarray, n_vars: int) -> np.ndarray:
    """Row of the strict pair (u < v) in u-major triu ordering."""
    u = u.astype(np.int64)
    v = v.astype(np.int64)
    return u * (n_vars - 1) - u * (u - 1) // 2 + (v - u - 1)


@dataclass(frozen=True)
class GroupedBasis:
    """A catalog prefix regrouped by Hermite degree pattern.

    ``pos_*`` arrays hold catalog positions (scatter targets), ``cols_*``
    the variable columns each pattern reads.  Triples are sorted by their
    leading strict pair so pair blocks map to contiguous runs.
    """

    n_vars: int
    size: int
    pos_lin: np.ndarray
    cols_lin: np.ndarray
    pos_sq: np.ndarray
    cols_sq: np.ndarray
    pos_pair: np.ndarray
    cols_pair: np.ndarray      # (g, 2), u < v
    pos_cube: np.ndarray
    cols_cube: np.ndarray
    pos_mix: np.ndarray
    cols_mix: np.ndarray       # (g, 2), [:, 0] carries degree 2, [:, 1] degree 1
    pos_trip: np.ndarray
    trip_pair_row: np.ndarray  # (g,), ascending row in the strict-pair list
    trip_w: np.ndarray         # (g,), third variable of each triple
    pairs_u: np.ndarray        # (P2,) strict pairs, u-major
    pairs_v: np.ndarray

    @property
    def pair_count(self) -> int:
        return self.pairs_u.shape[0]

    @property
    def has_cubics(self) -> bool:
        return bool(self.pos_cube.size or self.pos_mix.size or self.pos_trip.size)


def group_basis_prefix(catalog: BasisCatalog, count: int, n_vars: int
                       ) -> GroupedBasis:
    """Group the first ``count`` catalog entries (supported on ``n_vars``)."""
    if catalog.order > 3:
        raise ValueError("blocked kernels cover order <= 3 only")
    if count and catalog.last_active[:count].max(initial=0) * catalog.dim > n_vars:
        raise ValueError(f"{n_vars} variables cannot support {count} leading indices")
    deg = catalog.degrees[:count, :n_vars]
    td = catalog.total_degrees[:count]
    nnz = np.count_nonzero(deg, axis=1)

    def extract(mask: np.ndarray, width: int):
        pos = np.nonzero(mask)[0]
        if pos.size == 0:
            return pos, np.zeros((0, width), dtype=np.int64)
        _, cc = np.nonzero(deg[pos])
        return pos, cc.reshape(pos.size, width)

    pos_lin, cols_lin = extract(td == 1, 1)
    pos_sq, cols_sq = extract((td == 2) & (nnz == 1), 1)
    pos_pair, cols_pair = extract((td == 2) & (nnz == 2), 2)
    pos_cube, cols_cube = extract((td == 3) & (nnz == 1), 1)
    pos_mix, cols_mix = extract((td == 3) & (nnz == 2), 2)
    pos_trip, cols_trip = extract((td == 3) & (nnz == 3), 3)

    if pos_mix.size:
        # Orient each pair as (degree-2 variable, degree-1 variable).
        first_deg = deg[pos_mix, cols_mix[:, 0]]
        swap = first_deg == 1
        cols_mix = np.where(swap[:, None], cols_mix[:, ::-1], cols_mix)

    if n_vars >= 2:
        pairs_u, pairs_v = np.triu_indices(n_vars, k=1)
        pairs_u = pairs_u.astype(np.int64)
        pairs_v = pairs_v.astype(np.int64)
    else:
        pairs_u = np.zeros(0, dtype=np.int64)
        pairs_v = np.zeros(0, dtype=np.int64)

    if pos_trip.size:
        rows = _pair_row_index(cols_trip[:, 0], cols_trip[:, 1], n_vars)
        order = np.argsort(rows, kind="stable")
        pos_trip = pos_trip[order]
        trip_pair_row = rows[order]
        trip_w = cols_trip[order, 2]
    else:
        trip_pair_row = np.zeros(0, dtype=np.int64)
        trip_w = np.zeros(0, dtype=np.int64)

    return GroupedBasis(
        n_vars=n_vars,
        size=count,
        pos_lin=pos_lin, cols_lin=cols_lin[:, 0] if pos_lin.size else cols_lin.reshape(-1),
        pos_sq=pos_sq, cols_sq=cols_sq[:, 0] if pos_sq.size else cols_sq.reshape(-1),
        pos_pair=pos_pair, cols_pair=cols_pair,
        pos_cube=pos_cube, cols_cube=cols_cube[:, 0] if pos_cube.size else cols_cube.reshape(-1),
        pos_mix=pos_mix, cols_mix=cols_mix,
        pos_trip=pos_trip, trip_pair_row=trip_pair_row, trip_w=trip_w,
        pairs_u=pairs_u, pairs_v=pairs_v,
    )


def _pair_block(m: int) -> int:
    return max(64, _PAIR_BUDGET // max(m, 1))


def weighted_sums(gb: GroupedBasis, points: np.ndarray, weights: np.ndarray,
                  out: np.ndarray) -> None:
    """Accumulate sum_l weights[l] * H_alpha(points[l]) into ``out`` (catalog order)."""
    m, q = points.shape
    if q != gb.n_vars:
        raise ValueError(f"points have {q} variables, grouping expects {gb.n_vars}")
    out[0] += np.sum(weights)
    if q == 0 or gb.size <= 1:
        return
    if gb.pos_lin.size:
        out[gb.pos_lin] += (weights @ points)[gb.cols_lin]

    need_h2 = gb.pos_sq.size or gb.pos_mix.size or gb.pos_cube.size
    h2 = points * points - 1.0 if need_h2 else None
    if gb.pos_sq.size:
        out[gb.pos_sq] += (weights @ h2)[gb.cols_sq]

    need_wx = gb.pos_pair.size or gb.pos_mix.size or gb.pos_trip.size
    wx = points * weights[:, None] if need_wx else None
    if gb.pos_pair.size:
        second = points.T @ wx
        out[gb.pos_pair] += second[gb.cols_pair[:, 0], gb.cols_pair[:, 1]]
    if gb.pos_cube.size:
        h3 = points * h2 - 2.0 * points
        out[gb.pos_cube] += (weights @ h3)[gb.cols_cube]
    if gb.pos_mix.size:
        mixed = h2.T @ wx
        out[gb.pos_mix] += mixed[gb.cols_mix[:, 0], gb.cols_mix[:, 1]]
    if gb.pos_trip.size:
        block = _pair_block(m)
        total = gb.pair_count
        for lo in range(0, total, block):
            hi = min(lo + block, total)
            sel_lo, sel_hi = np.searchsorted(gb.trip_pair_row, [lo, hi])
            if sel_lo == sel_hi:
                continue
            pp = points[:, gb.pairs_u[lo:hi]] * points[:, gb.pairs_v[lo:hi]]
            third = pp.T @ wx  # (hi-lo, q)
            rows = gb.trip_pair_row[sel_lo:sel_hi] - lo
            out[gb.pos_trip[sel_lo:sel_hi]] += third[rows, gb.trip_w[sel_lo:sel_hi]]


@dataclass(frozen=True)
class ExpansionPlan:
    """Coefficient vector rearranged into dense matrices for evaluation."""

    constant: float
    lam_lin: np.ndarray | None
    lam_sq: np.ndarray | None
    lam_cube: np.ndarray | None
    pair_mat: np.ndarray | None
    mix_mat: np.ndarray | None
    trip_mat: np.ndarray | None  # (P2, n_vars)


def make_expansion_plan(gb: GroupedBasis, values: np.ndarray) -> ExpansionPlan:
    if values.shape != (gb.size,):
        raise ValueError(f"expected {gb.size} coefficients, got {values.shape}")
    q = gb.n_vars

    def gathered(pos, cols):
        vec = np.zeros(q)
        vec[cols] = values[pos]
        return vec

    lam_lin = gathered(gb.pos_lin, gb.cols_lin) if gb.pos_lin.size else None
    lam_sq = gathered(gb.pos_sq, gb.cols_sq) if gb.pos_sq.size else None
    lam_cube = gathered(gb.pos_cube, gb.cols_cube) if gb.pos_cube.size else None

    pair_mat = None
    if gb.pos_pair.size:
        pair_mat = np.zeros((q, q))
        u, v = gb.cols_pair[:, 0], gb.cols_pair[:, 1]
        pair_mat[u, v] = values[gb.pos_pair]
        pair_mat[v, u] = values[gb.pos_pair]
    mix_mat = None
    if gb.pos_mix.size:
        mix_mat = np.zeros((q, q))
        mix_mat[gb.cols_mix[:, 0], gb.cols_mix[:, 1]] = values[gb.pos_mix]
    trip_mat = None
    if gb.pos_trip.size:
        trip_mat = np.zeros((gb.pair_count, q))
        trip_mat[gb.trip_pair_row, gb.trip_w] = values[gb.pos_trip]

    return ExpansionPlan(
        constant=float(values[0]),
        lam_lin=lam_lin, lam_sq=lam_sq, lam_cube=lam_cube,
        pair_mat=pair_mat, mix_mat=mix_mat, trip_mat=trip_mat,
    )


def expansion_values(gb: GroupedBasis, plan: ExpansionPlan, points: np.ndarray
                     ) -> np.ndarray:
    """Evaluate sum_a lam[a] * H_alpha(points[l]) for every row l."""
    m, q = points.shape
    if q != gb.n_vars:
        raise ValueError(f"points have {q} variables, grouping expects {gb.n_vars}")
    out = np.full(m, plan.constant)
    if q == 0:
        return out
    if plan.lam_lin is not None:
        out += points @ plan.lam_lin
    need_h2 = plan.lam_sq is not None or plan.lam_cube is not None \
        or plan.mix_mat is not None
    h2 = points * points - 1.0 if need_h2 else None
    if plan.lam_sq is not None:
        out += h2 @ plan.lam_sq
    if plan.lam_cube is not None:
        h3 = points * h2 - 2.0 * points
        out += h3 @ plan.lam_cube
    if plan.pair_mat is not None:
        out += 0.5 * np.einsum("ij,ij->i", points, points @ plan.pair_mat)
    if plan.mix_mat is not None:
        out += np.einsum("ij,ij->i", points, h2 @ plan.mix_mat)
    if plan.trip_mat is not None:
        block = _pair_block(m)
        total = gb.pair_count
        for lo in range(0, total, block):
            hi = min(lo + block, total)
            sub = plan.trip_mat[lo:hi]
            if not sub.any():
                continue
            pp = points[:, gb.pairs_u[lo:hi]] * points[:, gb.pairs_v[lo:hi]]
            out += np.einsum("ij,ij->i", pp, points @ sub.T)
    return out
