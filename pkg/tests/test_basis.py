"""Hermite polynomials and multi-index catalog."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaospricer import (
    BasisSizeError,
    MultiIndex,
    catalog_size,
    enumerate_basis,
    eval_basis_matrix,
    eval_basis_row,
    hermite_eval,
    monomial_powers,
)
from chaospricer.basis import MAX_ORDER, hermite_table


def test_hermite_low_degrees_explicit():
    x = np.linspace(-3.0, 3.0, 41)
    np.testing.assert_allclose(hermite_eval(0, x), np.ones_like(x))
    np.testing.assert_allclose(hermite_eval(1, x), x)
    np.testing.assert_allclose(hermite_eval(2, x), x * x - 1.0)
    np.testing.assert_allclose(hermite_eval(3, x), x ** 3 - 3.0 * x)
    np.testing.assert_allclose(hermite_eval(4, x), x ** 4 - 6.0 * x * x + 3.0)


def test_hermite_scalar_and_errors():
    assert hermite_eval(2, 2.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        hermite_eval(-1, 0.0)
    with pytest.raises(ValueError):
        hermite_eval(MAX_ORDER + 1, 0.0)


def test_hermite_orthogonality_quadrature():
    # Gauss-Hermite quadrature integrates deg <= 2*nodes-1 exactly, so the
    # orthogonality relations E[H_a H_b] = a! 1{a=b} hold to round-off.
    x, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / np.sqrt(2.0 * np.pi)
    table = hermite_table(8, x)
    gram = (table * w) @ table.T
    expected = np.diag([math.factorial(a) for a in range(9)])
    np.testing.assert_allclose(gram, expected, atol=1e-8)


def test_hermite_orthogonality_monte_carlo():
    # Empirical check at 4 sigma, mirroring how the estimator uses the basis.
    rng = np.random.default_rng(7)
    g = rng.standard_normal(400_000)
    table = hermite_table(5, g)
    for a in range(6):
        for b in range(a, 6):
            prod = table[a] * table[b]
            mean = prod.mean()
            target = math.factorial(a) if a == b else 0.0
            # H_0*H_0 is constant, so keep a floor on the band
            bound = max(4.0 * prod.std() / np.sqrt(g.size), 1e-12)
            assert abs(mean - target) < bound, (a, b, mean, target)


@given(st.integers(0, 6), st.floats(-4, 4, allow_nan=False))
def test_hermite_recurrence_property(deg, x):
    if deg >= 2:
        lhs = hermite_eval(deg, x)
        rhs = x * hermite_eval(deg - 1, x) - (deg - 1) * hermite_eval(deg - 2, x)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_cardinality_formula_small_cases():
    # #A = binom(steps*dim + order, order) for every nd + p <= 12
    for steps in range(1, 12):
        for dim in range(1, 12):
            for order in range(0, min(12, MAX_ORDER + 1)):
                if steps * dim + order > 12:
                    continue
                cat = enumerate_basis(order, steps, dim)
                q = steps * dim
                assert len(cat) == math.comb(q + order, order)
                assert catalog_size(order, steps, dim) == len(cat)


def test_cutoff_prefix_counts():
    cat = enumerate_basis(2, 5, 2)
    for k in range(6):
        manual = sum(1 for a in range(len(cat)) if cat.last_active[a] <= k)
        assert cat.cutoff(k) == manual
        # prefix ordering: everything before the cutoff lives on the first
        # k increments, everything after does not
        assert (cat.last_active[: cat.cutoff(k)] <= k).all()
        assert (cat.last_active[cat.cutoff(k):] > k).all()
    assert cat.cutoff(0) == 1  # constant only
    assert cat.cutoff(5) == len(cat)
    with pytest.raises(ValueError):
        cat.cutoff(6)


def test_cutoff_matches_binomial_subcount():
    # the first-k sub-basis is itself a full total-degree catalog on k
    # increments, so its size is binom(k*dim + p, p)
    cat = enumerate_basis(3, 6, 2)
    for k in range(7):
        assert cat.cutoff(k) == math.comb(k * 2 + 3, 3)


def test_multiindex_properties():
    idx = MultiIndex.from_degrees([[0, 2], [1, 0], [0, 0]])
    assert idx.total_degree == 3
    assert idx.last_active == 2
    assert idx.factorial == 2
    const = MultiIndex.from_degrees(np.zeros((3, 2), dtype=int))
    assert const.last_active == 0
    assert const.factorial == 1


def test_catalog_entries_unique_and_sorted():
    cat = enumerate_basis(3, 3, 2)
    rows = {tuple(row) for row in cat.degrees.tolist()}
    assert len(rows) == len(cat)
    # catalog order is by last active increment, then total degree
    keys = list(zip(cat.last_active.tolist(), cat.total_degrees.tolist()))
    assert keys == sorted(keys)
    assert (cat.total_degrees <= 3).all()


def test_eval_basis_matrix_against_naive():
    rng = np.random.default_rng(3)
    cat = enumerate_basis(3, 4, 2)
    pts = rng.standard_normal((50, 8))
    mat = eval_basis_matrix(cat, pts)
    assert mat.shape == (50, len(cat))
    for a in (0, 1, 5, len(cat) // 2, len(cat) - 1):
        deg = cat.degrees[a]
        naive = np.ones(50)
        for var, d in enumerate(deg):
            if d:
                naive *= hermite_eval(int(d), pts[:, var])
        np.testing.assert_allclose(mat[:, a], naive, rtol=1e-12, atol=1e-12)


def test_eval_basis_row_matches_matrix():
    rng = np.random.default_rng(4)
    cat = enumerate_basis(2, 3, 2)
    pt = rng.standard_normal(6)
    row = eval_basis_row(cat, pt)
    mat = eval_basis_matrix(cat, pt[None, :])
    np.testing.assert_array_equal(row, mat[0])


def test_eval_basis_matrix_prefix():
    rng = np.random.default_rng(5)
    cat = enumerate_basis(2, 4, 1)
    count = cat.cutoff(2)
    pts = rng.standard_normal((20, 2))  # only first 2 increments available
    mat = eval_basis_matrix(cat, pts, count)
    assert mat.shape == (20, count)
    full = eval_basis_matrix(cat, rng.standard_normal((0, 4)))
    assert full.shape == (0, len(cat))
    with pytest.raises(ValueError):
        # first cutoff(3) columns need 3 increments, 2 provided
        eval_basis_matrix(cat, pts, cat.cutoff(3))


def test_size_guard():
    with pytest.raises(BasisSizeError):
        enumerate_basis(3, 50, 5, max_size=10_000)
    # guard triggers before allocation, so a huge request raises fast
    with pytest.raises(BasisSizeError):
        enumerate_basis(10, 200, 10, max_size=10 ** 6)


def test_monomial_powers_matches_catalog_layout():
    powers = monomial_powers(3, 2)
    assert powers.shape[0] == math.comb(3 + 2, 2)
    assert (powers.sum(axis=1) <= 2).all()
    rows = {tuple(r) for r in powers.tolist()}
    assert len(rows) == powers.shape[0]


@settings(max_examples=25)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 3))
def test_catalog_size_consistency(steps, dim, order):
    cat = enumerate_basis(order, steps, dim)
    assert len(cat) == catalog_size(order, steps, dim)
    assert cat.cutoff(steps) == len(cat)
