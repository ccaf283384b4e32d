"""Truncated Wiener chaos basis: multi-index catalog and Hermite products.

Basis functions are tensor products of probabilists' Hermite polynomials
evaluated at normalized Brownian increments,

    H_alpha(g) = prod_{i=1..n} prod_{j=1..d} H_{alpha[i,j]}(g[i,j]),

indexed by multi-indices ``alpha`` with total degree at most ``order``.
The polynomials follow the probabilists' normalization (H_0 = 1, H_1 = x,
H_{i+1}(x) = x*H_i(x) - i*H_{i-1}(x)), for which jointly standard-normal
X, Y satisfy E[H_i(X) H_j(Y)] = i! * E[XY]^i * 1{i==j}.

The catalog stores indices in a graded order: ascending ``last_active``
(the last increment carrying a nonzero degree), then ascending total
degree, then ascending lexicographic on the flattened (increment,
dimension) entries.  With this order the leading ``cutoff(k)`` entries
are exactly the indices supported on the first k increments, so
conditioning a coefficient vector on the first k increments is a prefix
truncation, never a recomputation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

# Hard cap keeping factorials exact in int64 and recurrences well conditioned.
MAX_ORDER = 10
DEFAULT_MAX_BASIS_SIZE = 4_000_000


class BasisSizeError(ValueError):
    """Requested catalog exceeds the configured size budget."""


def hermite_eval(degree: int, x, max_degree: int = MAX_ORDER):
    """Evaluate the probabilists' Hermite polynomial H_degree at x.

    Uses the three-term recurrence H_{i+1}(x) = x*H_i(x) - i*H_{i-1}(x).
    Accepts scalars or arrays; returns the same shape.
    """
    if degree < 0:
        raise ValueError(f"Hermite degree must be nonnegative, got {degree}")
    if degree > max_degree:
        raise ValueError(f"Hermite degree {degree} exceeds cap {max_degree}")
    arr = np.asarray(x, dtype=np.float64)
    table = hermite_table(degree, arr)
    out = table[degree]
    return float(out) if np.ndim(x) == 0 else out


def hermite_table(order: int, x: np.ndarray) -> np.ndarray:
    """Stack H_0(x) .. H_order(x) along a new leading axis."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((order + 1,) + x.shape, dtype=np.float64)
    out[0] = 1.0
    if order >= 1:
        out[1] = x
    for i in range(1, order):
        out[i + 1] = x * out[i] - i * out[i - 1]
    return out


@dataclass(frozen=True)
class MultiIndex:
    """One chaos multi-index: a Hermite degree for every (increment, dimension) slot.

    ``degrees`` has shape (steps, dim); entry [i, j] is the degree attached to
    dimension j of increment i+1.  ``last_active`` is the 1-based index of the
    last increment with any nonzero degree (0 for the constant index) and
    ``factorial`` is the product of entrywise factorials (exact integer).
    """

    degrees: np.ndarray
    total_degree: int
    last_active: int
    factorial: int

    @classmethod
    def from_degrees(cls, degrees) -> "MultiIndex":
        deg = np.ascontiguousarray(np.asarray(degrees, dtype=np.uint8))
        if deg.ndim != 2:
            raise ValueError("degrees must be a (steps, dim) array")
        deg.setflags(write=False)
        nz_rows = np.nonzero(deg.any(axis=1))[0]
        last = int(nz_rows[-1]) + 1 if nz_rows.size else 0
        fact = 1
        for entry in deg.reshape(-1).tolist():
            fact *= math.factorial(int(entry))
        return cls(
            degrees=deg,
            total_degree=int(deg.sum()),
            last_active=last,
            factorial=fact,
        )


class BasisCatalog:
    """Ordered truncated chaos basis over ``steps`` increments of a ``dim``-dim motion.

    Rows of ``degrees`` (shape (size, steps*dim), flattened increment-major)
    are the multi-indices in catalog order.  ``cutoffs[k]`` counts the indices
    supported on the first k increments; ``degrees[:cutoffs[k]]`` is exactly
    that sub-basis.
    """

    __slots__ = (
        "order",
        "steps",
        "dim",
        "degrees",
        "total_degrees",
        "last_active",
        "factorials",
        "cutoffs",
        "_groups",
    )

    def __init__(self, order, steps, dim, degrees, total_degrees, last_active,
                 factorials, cutoffs):
        self.order = order
        self.steps = steps
        self.dim = dim
        self.degrees = degrees
        self.total_degrees = total_degrees
        self.last_active = last_active
        self.factorials = factorials
        self.cutoffs = cutoffs
        self._groups: dict[int, object] = {}
        for arr in (degrees, total_degrees, last_active, factorials, cutoffs):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.degrees.shape[0]

    def __len__(self) -> int:
        return self.size

    def cutoff(self, k: int) -> int:
        """Number of catalog indices supported on the first k increments."""
        if not 0 <= k <= self.steps:
            raise ValueError(f"cutoff increment {k} outside [0, {self.steps}]")
        return int(self.cutoffs[k])

    def __getitem__(self, a: int) -> MultiIndex:
        if not 0 <= a < self.size:
            raise IndexError(f"basis position {a} outside [0, {self.size})")
        deg = self.degrees[a].reshape(self.steps, self.dim)
        return MultiIndex(
            degrees=deg,
            total_degree=int(self.total_degrees[a]),
            last_active=int(self.last_active[a]),
            factorial=int(self.factorials[a]),
        )

    def __iter__(self):
        return (self[a] for a in range(self.size))


def catalog_size(order: int, steps: int, dim: int) -> int:
    """Cardinality binom(steps*dim + order, steps*dim) of the truncated basis."""
    q = steps * dim
    return math.comb(q + order, q)


def _degree_block(n_vars: int, degree: int) -> np.ndarray:
    """All degree-``degree`` multi-indices on ``n_vars`` variables, lex ascending."""
    if degree == 0:
        return np.zeros((1, n_vars), dtype=np.uint8)
    combos = np.fromiter(
        itertools.chain.from_iterable(
            itertools.combinations_with_replacement(range(n_vars), degree)
        ),
        dtype=np.int64,
    ).reshape(-1, degree)
    block = np.zeros((combos.shape[0], n_vars), dtype=np.uint8)
    rows = np.arange(combos.shape[0])
    for s in range(degree):
        block[rows, combos[:, s]] += 1
    # combinations_with_replacement enumerates supports in ascending order,
    # which is descending lex on the degree vectors; reverse for ascending.
    return block[::-1]


def monomial_powers(n_vars: int, max_degree: int) -> np.ndarray:
    """All exponent vectors on ``n_vars`` variables with total degree <= max_degree.

    Graded (degree-ascending, then lex) order; row 0 is the constant.
    """
    if n_vars < 1:
        raise ValueError("need at least one variable")
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    return np.vstack([_degree_block(n_vars, t) for t in range(max_degree + 1)])


def enumerate_basis(order: int, steps: int, dim: int,
                    max_size: int = DEFAULT_MAX_BASIS_SIZE) -> BasisCatalog:
    """Build the catalog of all multi-indices with total degree <= ``order``.

    Raises BasisSizeError before allocating anything when the cardinality
    binom(steps*dim + order, steps*dim) exceeds ``max_size``.
    """
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    if order > MAX_ORDER:
        raise ValueError(f"order {order} exceeds cap {MAX_ORDER}")
    if steps < 1:
        raise ValueError(f"need at least one increment, got steps={steps}")
    if dim < 1:
        raise ValueError(f"need at least one dimension, got dim={dim}")
    total = catalog_size(order, steps, dim)
    if total > max_size:
        raise BasisSizeError(
            f"catalog for order={order}, steps={steps}, dim={dim} has {total} "
            f"indices, over the budget of {max_size}"
        )

    q = steps * dim
    blocks = [_degree_block(q, t) for t in range(order + 1)]
    degrees = np.vstack(blocks)

    nonzero = degrees != 0
    any_nz = nonzero.any(axis=1)
    # Last nonzero variable -> its 1-based increment; constant row -> 0.
    last_var = q - 1 - np.argmax(nonzero[:, ::-1], axis=1)
    last_active = np.where(any_nz, last_var // dim + 1, 0).astype(np.int64)

    # Blocks are already (total degree asc, lex asc); a stable sort on
    # last_active alone yields the full catalog order.
    perm = np.argsort(last_active, kind="stable")
    degrees = np.ascontiguousarray(degrees[perm])
    last_active = last_active[perm]
    total_degrees = degrees.sum(axis=1, dtype=np.int64)

    fact_lut = np.array([math.factorial(i) for i in range(order + 1)],
                        dtype=np.int64)
    factorials = fact_lut[degrees].prod(axis=1, dtype=np.int64)

    cutoffs = np.searchsorted(last_active, np.arange(steps + 1), side="right")
    cutoffs = cutoffs.astype(np.int64)
    for k in range(steps + 1):
        expected = catalog_size(order, k, dim) if k else 1
        if cutoffs[k] != expected:
            raise RuntimeError(
                f"catalog enumeration inconsistent at increment {k}: "
                f"{cutoffs[k]} != {expected}"
            )

    return BasisCatalog(
        order=order,
        steps=steps,
        dim=dim,
        degrees=degrees,
        total_degrees=total_degrees,
        last_active=last_active,
        factorials=factorials,
        cutoffs=cutoffs,
    )


def eval_basis_row(catalog: BasisCatalog, increments, up_to: int | None = None
                   ) -> np.ndarray:
    """Evaluate the leading basis functions on a single increment vector.

    ``increments`` is (steps, dim) or flat (steps*dim,).  Returns the vector
    of H_alpha(increments) for the first ``up_to`` catalog entries (all, by
    default).  Entries with index below ``cutoff(k)`` only read the first k
    increments; later increments are multiplied by H_0 = 1 exactly, so
    perturbing them cannot change the output.
    """
    g = np.asarray(increments, dtype=np.float64)
    q = catalog.steps * catalog.dim
    if g.shape == (catalog.steps, catalog.dim):
        g = g.reshape(q)
    elif g.shape != (q,):
        raise ValueError(
            f"increments shape {g.shape} does not match "
            f"({catalog.steps}, {catalog.dim})"
        )
    count = catalog.size if up_to is None else int(up_to)
    if not 0 <= count <= catalog.size:
        raise ValueError(f"up_to {count} outside [0, {catalog.size}]")
    table = hermite_table(catalog.order, g)
    rows = catalog.degrees[:count]
    return np.prod(table[rows, np.arange(q)], axis=1)


def eval_basis_matrix(catalog: BasisCatalog, points: np.ndarray,
                      up_to: int | None = None) -> np.ndarray:
    """Dense basis matrix B[l, a] = H_alpha(a)(points[l]); reference kernel.

    ``points`` is (m, q_active) holding the first q_active = k*dim flattened
    increment entries; every requested index must be supported on them.
    Loops over catalog entries, so intended for modest sizes and as an
    independent check of the blocked kernels.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be (paths, variables)")
    m, q_active = pts.shape
    count = catalog.size if up_to is None else int(up_to)
    if not 0 <= count <= catalog.size:
        raise ValueError(f"up_to {count} outside [0, {catalog.size}]")
    if count and catalog.last_active[:count].max(initial=0) * catalog.dim > q_active:
        raise ValueError(
            f"{q_active} variables cannot support the first {count} indices"
        )
    table = hermite_table(catalog.order, pts)  # (order+1, m, q_active)
    out = np.ones((m, count), dtype=np.float64)
    for a in range(count):
        row = catalog.degrees[a, :q_active]
        for v in np.nonzero(row)[0]:
            out[:, a] *= table[row[v], :, v]
    return out
