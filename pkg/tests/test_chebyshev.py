import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttcheb.chebyshev import (
    ChebyshevGrid,
    Domain,
    ExtrapolationError,
    Interpolant,
    apply_coeff_transform,
    basis_rank_one,
    build_coeff_matrix,
    chebyshev_nodes,
    chebyshev_values,
    coeffs_from_values,
    evaluate,
    evaluate_batch,
    evaluate_dense_oracle,
    grid_point,
    load_interpolant,
    save_interpolant,
)
from ttcheb.tt_core import TTTensor, mode_multiply, rank_one, tt_svd


def grid_values(grid, f):
    """Dense tensor of ``f`` on every grid node (array indices are 0-based)."""
    out = np.empty(grid.shape)
    for idx in itertools.product(*(range(s) for s in grid.shape)):
        out[idx] = f(grid_point(grid, [i + 1 for i in idx]))
    return out


def dense_coeffs_literal(values, orders):
    """Coefficients summed term by term, halving the first and last summand."""
    d = values.ndim
    out = np.zeros(values.shape)
    for j in itertools.product(*(range(n + 1) for n in orders)):
        acc = 0.0
        for k in itertools.product(*(range(n + 1) for n in orders)):
            term = values[k]
            for mu in range(d):
                n = orders[mu]
                if n == 0:
                    continue
                w = 0.5 if k[mu] in (0, n) else 1.0
                term *= w * math.cos(j[mu] * math.pi * k[mu] / n)
            acc += term
        for mu in range(d):
            n = orders[mu]
            if n == 0:
                continue
            acc *= (2.0 ** (1 if 0 < j[mu] < n else 0)) / n
        out[j] = acc
    return out


# ----------------------------------------------------------------------
# domains and nodes
# ----------------------------------------------------------------------

def test_domain_validation():
    with pytest.raises(ValueError):
        Domain.from_intervals([[1.0, 1.0]])
    with pytest.raises(ValueError):
        Domain.from_intervals([[2.0, 1.0]])


def test_nodes_endpoints():
    q = chebyshev_nodes(5)
    assert q[0] == 1.0 and q[-1] == -1.0
    assert len(q) == 6
    assert np.all(np.diff(q) < 0)


def test_grid_point_corner_and_midpoint():
    grid = ChebyshevGrid((4, 6), Domain.cube(-1.0, 1.0, 2))
    np.testing.assert_array_equal(grid_point(grid, (1, 1)), [1.0, 1.0])
    np.testing.assert_allclose(grid_point(grid, (3, 4)), [0.0, 0.0], atol=1e-15)
    g2 = ChebyshevGrid((4,), Domain.from_intervals([[2.0, 5.0]]))
    assert grid_point(g2, (3,))[0] == pytest.approx(3.5, abs=1e-15)


def test_grid_point_formula():
    grid = ChebyshevGrid((4,), Domain.from_intervals([[1.0, 1.5]]))
    assert grid_point(grid, (2,))[0] == pytest.approx(1.4267766953, abs=1e-10)


@pytest.mark.parametrize("idx", [(0, 1), (6, 1), (1, 8), (1,)])
def test_grid_point_out_of_bounds(idx):
    grid = ChebyshevGrid((4, 6), Domain.cube(0.0, 1.0, 2))
    with pytest.raises((IndexError, ValueError)):
        grid_point(grid, idx)


def test_grid_orders_domain_mismatch():
    with pytest.raises(ValueError):
        ChebyshevGrid((3, 3, 3), Domain.cube(0.0, 1.0, 2))


# ----------------------------------------------------------------------
# coefficient matrix and transform
# ----------------------------------------------------------------------

def test_coeff_matrix_n1():
    np.testing.assert_allclose(build_coeff_matrix(1), [[0.5, 0.5], [0.5, -0.5]], atol=1e-15)


def test_coeff_matrix_n0():
    np.testing.assert_array_equal(build_coeff_matrix(0), [[1.0]])


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_coeff_matrix_entries(n):
    f = build_coeff_matrix(n)
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    for j in range(n + 1):
        for k in range(n + 1):
            assert f[j, k] == pytest.approx(2.0 / n * w[j] * w[k] * math.cos(j * math.pi * k / n), abs=1e-15)


@pytest.mark.parametrize("n", [1, 3, 6, 11])
def test_coeff_matrix_constant_and_identity_function(n):
    f = build_coeff_matrix(n)
    np.testing.assert_allclose(f @ np.full(n + 1, 2.5), [2.5] + [0.0] * n, atol=1e-13)
    x = chebyshev_nodes(n)
    np.testing.assert_allclose(f @ x, np.eye(n + 1)[1], atol=1e-13)


@pytest.mark.parametrize("n", [0, 1, 2, 7, 16, 33, 64])
def test_fft_path_equals_dense_path(n):
    rng = np.random.default_rng(n)
    x = TTTensor([rng.standard_normal((1, n + 1, 3)), rng.standard_normal((3, n + 1, 2)),
                  rng.standard_normal((2, n + 1, 1))])
    a = apply_coeff_transform(x, (n, n, n), "fft")
    b = apply_coeff_transform(x, (n, n, n), "dense")
    for ca, cb in zip(a.cores, b.cores):
        assert np.abs(ca - cb).max() <= 1e-12 * max(1.0, np.abs(cb).max())


def test_transform_d5_random_tt():
    rng = np.random.default_rng(50)
    ranks = [1, 8, 8, 8, 8, 1]
    x = TTTensor([rng.standard_normal((ranks[k], 11, ranks[k + 1])) for k in range(5)])
    a = apply_coeff_transform(x, (10,) * 5, "fft")
    b = apply_coeff_transform(x, (10,) * 5, "dense")
    assert a.ranks == x.ranks
    for ca, cb in zip(a.cores, b.cores):
        assert np.abs(ca - cb).max() <= 1e-12 * max(1.0, np.abs(cb).max())


def test_transform_matches_mode_products():
    rng = np.random.default_rng(51)
    x = TTTensor([rng.standard_normal((1, 4, 2)), rng.standard_normal((2, 6, 1))])
    y = mode_multiply(mode_multiply(x, 1, build_coeff_matrix(3)), 2, build_coeff_matrix(5))
    z = apply_coeff_transform(x, (3, 5), "dense")
    np.testing.assert_allclose(z.full(), y.full(), atol=1e-13)


def test_transform_bad_method_or_shape():
    x = rank_one([np.ones(3), np.ones(3)])
    with pytest.raises(ValueError):
        apply_coeff_transform(x, (2, 2), "magic")
    with pytest.raises(ValueError):
        apply_coeff_transform(x, (2, 3))


def test_coeffs_constant_tensor():
    grid = ChebyshevGrid((3, 4, 2), Domain.cube(0.0, 1.0, 3))
    values = rank_one([np.full(4, 1.7), np.ones(5), np.ones(3)])
    c = coeffs_from_values(values, grid).coeffs.full()
    expect = np.zeros(grid.shape)
    expect[0, 0, 0] = 1.7
    np.testing.assert_allclose(c, expect, atol=1e-13)


def test_coeffs_single_product_polynomial():
    grid = ChebyshevGrid((3, 3), Domain.cube(-1.0, 1.0, 2))
    vals = grid_values(grid, lambda p: (2 * p[0] ** 2 - 1) * p[1])
    c = coeffs_from_values(tt_svd(vals), grid).coeffs.full()
    expect = np.zeros((4, 4))
    expect[2, 1] = 1.0  # 1-based (3, 2)
    np.testing.assert_allclose(c, expect, atol=1e-13)
    np.testing.assert_allclose(dense_coeffs_literal(vals, (3, 3)), expect, atol=1e-13)


@pytest.mark.parametrize("orders", [(2,), (3, 2), (2, 0, 3), (1, 2, 2, 1)])
def test_coeffs_match_literal_sum(orders):
    rng = np.random.default_rng(sum(orders))
    grid = ChebyshevGrid(orders, Domain.cube(0.0, 2.0, len(orders)))
    vals = rng.standard_normal(grid.shape)
    c = coeffs_from_values(tt_svd(vals), grid).coeffs.full()
    np.testing.assert_allclose(c, dense_coeffs_literal(vals, orders), atol=1e-12)


def test_coeffs_rank_preservation_and_linearity():
    rng = np.random.default_rng(52)
    grid = ChebyshevGrid((4, 5, 3), Domain.cube(0.0, 1.0, 3))
    f, g = rng.standard_normal(grid.shape), rng.standard_normal(grid.shape)
    cf = coeffs_from_values(tt_svd(f), grid)
    assert cf.coeffs.ranks == tt_svd(f).ranks
    cg = coeffs_from_values(tt_svd(g), grid).coeffs.full()
    ch = coeffs_from_values(tt_svd(2.0 * f - 3.0 * g), grid).coeffs.full()
    np.testing.assert_allclose(ch, 2.0 * cf.coeffs.full() - 3.0 * cg, atol=1e-12)


def test_interpolant_shape_check():
    grid = ChebyshevGrid((2, 2), Domain.cube(0.0, 1.0, 2))
    with pytest.raises(ValueError):
        Interpolant(rank_one([np.ones(3), np.ones(4)]), grid)


# ----------------------------------------------------------------------
# basis and evaluation
# ----------------------------------------------------------------------

def test_chebyshev_values_recurrence_matches_cosine():
    x = np.random.default_rng(53).uniform(-1, 1, 20)
    for xi in x:
        t = chebyshev_values(xi, 12)
        np.testing.assert_allclose(t, np.cos(np.arange(13) * np.arccos(xi)), atol=1e-13)


def test_basis_upper_corner_and_center():
    grid = ChebyshevGrid((5, 3), Domain.from_intervals([[1.0, 2.0], [0.0, 4.0]]))
    b = basis_rank_one(grid, [2.0, 4.0])
    assert b.ranks == (1, 1, 1)
    np.testing.assert_allclose(b.cores[0].ravel(), np.ones(6), atol=0)
    np.testing.assert_allclose(b.cores[1].ravel(), np.ones(4), atol=0)
    b = basis_rank_one(grid, [1.5, 2.0])
    np.testing.assert_allclose(b.cores[0].ravel(), [1, 0, -1, 0, 1, 0], atol=1e-15)


def test_basis_outside_domain():
    grid = ChebyshevGrid((3,), Domain.from_intervals([[1.0, 1.5]]))
    with pytest.raises(ExtrapolationError):
        basis_rank_one(grid, [1.6])
    b = basis_rank_one(grid, [1.75], allow_extrapolation=True)
    # reference coordinate 2: T_j(2) = 1, 2, 7, 26
    np.testing.assert_allclose(b.cores[0].ravel(), [1, 2, 7, 26], atol=1e-12)


def test_evaluate_dimension_mismatch():
    grid = ChebyshevGrid((2, 2), Domain.cube(0.0, 1.0, 2))
    interp = coeffs_from_values(rank_one([np.ones(3), np.ones(3)]), grid)
    with pytest.raises(ValueError):
        evaluate(interp, [0.5])


def test_evaluate_constant():
    grid = ChebyshevGrid((3, 2, 4), Domain.cube(-2.0, 3.0, 3))
    interp = coeffs_from_values(rank_one([np.full(4, -0.3), np.ones(3), np.ones(5)]), grid)
    for p in np.random.default_rng(54).uniform(-2, 3, (10, 3)):
        assert interp(p) == pytest.approx(-0.3, abs=1e-13)


def test_polynomial_exactness():
    grid = ChebyshevGrid((2, 3, 2), Domain.from_intervals([[0.0, 1.0], [-1.0, 2.0], [1.0, 1.5]]))
    f = lambda p: p[0] ** 2 * p[1] ** 3 * p[2] ** 2  # noqa: E731
    interp = coeffs_from_values(tt_svd(grid_values(grid, f)), grid)
    rng = np.random.default_rng(55)
    for _ in range(20):
        p = [rng.uniform(0, 1), rng.uniform(-1, 2), rng.uniform(1, 1.5)]
        assert abs(evaluate(interp, p) - f(p)) <= 1e-11


def test_node_reproduction():
    grid = ChebyshevGrid((4, 5, 3), Domain.cube(1.0, 1.5, 3))
    vals = grid_values(grid, lambda p: math.exp(-np.linalg.norm(p)) + p[0] * p[2])
    interp = coeffs_from_values(tt_svd(vals), grid)
    for idx in itertools.product(*(range(s) for s in grid.shape)):
        p = grid_point(grid, [i + 1 for i in idx])
        assert abs(evaluate(interp, p) - vals[idx]) <= 1e-10 * abs(vals[idx])


def test_evaluate_batch_matches_single():
    rng = np.random.default_rng(56)
    grid = ChebyshevGrid((3, 4), Domain.cube(0.0, 1.0, 2))
    interp = coeffs_from_values(tt_svd(rng.standard_normal(grid.shape)), grid)
    pts = rng.uniform(0, 1, (7, 2))
    np.testing.assert_allclose(evaluate_batch(interp, pts), [evaluate(interp, p) for p in pts], atol=1e-14)
    assert evaluate_batch(interp, np.zeros((0, 2))).shape == (0,)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4))
def test_evaluate_vs_dense_oracle(seed, d):
    rng = np.random.default_rng(seed)
    orders = tuple(int(n) for n in rng.integers(0, 7, size=d))
    lo = rng.uniform(-2, 2, d)
    grid = ChebyshevGrid(orders, Domain(tuple(lo), tuple(lo + rng.uniform(0.1, 3, d))))
    vals = rng.standard_normal(grid.shape)
    interp = coeffs_from_values(tt_svd(vals), grid)
    p = np.array(grid.domain.lower) + rng.uniform(0, 1, d) * (np.array(grid.domain.upper) - grid.domain.lower)
    assert abs(evaluate(interp, p) - evaluate_dense_oracle(vals, grid, p)) <= 1e-11


def test_dense_oracle_1d_matches_matrix_route():
    n = 9
    grid = ChebyshevGrid((n,), Domain.from_intervals([[-1.0, 1.0]]))
    vals = np.sin(3 * chebyshev_nodes(n))
    c = build_coeff_matrix(n) @ vals
    for x in np.linspace(-1, 1, 13):
        expect = c @ np.cos(np.arange(n + 1) * np.arccos(x))
        assert evaluate_dense_oracle(vals, grid, [x]) == pytest.approx(expect, abs=1e-13)


def test_dense_oracle_constant_and_size_guard():
    grid = ChebyshevGrid((2, 2), Domain.cube(0.0, 1.0, 2))
    assert evaluate_dense_oracle(np.full((3, 3), 4.0), grid, [0.3, 0.9]) == pytest.approx(4.0, abs=1e-13)
    big = ChebyshevGrid((100, 100, 100), Domain.cube(0.0, 1.0, 3))
    with pytest.raises(ValueError):
        evaluate_dense_oracle(np.zeros((1, 1, 1)), big, [0.5, 0.5, 0.5])


def test_interpolant_file_round_trip(tmp_path):
    rng = np.random.default_rng(57)
    grid = ChebyshevGrid((3, 2), Domain.from_intervals([[1.0, 1.5], [0.0, 2.0]]))
    interp = coeffs_from_values(tt_svd(rng.standard_normal(grid.shape)), grid)
    save_interpolant(interp, tmp_path / "i.ttc")
    back = load_interpolant(tmp_path / "i.ttc")
    assert back.grid == grid
    for a, b in zip(back.coeffs.cores, interp.coeffs.cores):
        np.testing.assert_array_equal(a, b)
    p = [1.2, 0.7]
    assert back(p) == pytest.approx(interp(p), rel=1e-14)
