"""Plain permanents: brute force, Ryser, and the multiplicity-aware path."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_counts, random_vectors
from permtomo.permanent import (
    NAIVE_MAX_N,
    RYSER_MAX_N,
    cycle_count,
    expand_gram,
    laplace_expand_check,
    permanent_multiplicity,
    permanent_naive,
    permanent_ryser,
)
from permtomo.types import GramSpec, GuardLimitError, scaled_rel_diff

complex_entries = st.complex_numbers(
    max_magnitude=10.0, allow_nan=False, allow_infinity=False
)


def square(n):
    return arrays(np.complex128, (n, n), elements=complex_entries)


# ---------------------------------------------------------------------------
# Known values
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_identity_and_ones(n):
    assert permanent_naive(np.eye(n)).value == pytest.approx(1.0)
    assert permanent_ryser(np.eye(n)).value == pytest.approx(1.0)
    assert permanent_ryser(np.ones((n, n))).value == pytest.approx(math.factorial(n), rel=1e-12)


@given(square(2))
def test_two_by_two(a):
    want = a[0, 0] * a[1, 1] + a[0, 1] * a[1, 0]
    for alg in (permanent_naive, permanent_ryser):
        got = alg(a).value
        assert got == pytest.approx(want, rel=1e-12, abs=1e-9)


def test_triangular_is_diagonal_product():
    a = np.triu(np.arange(1, 17, dtype=complex).reshape(4, 4))
    want = np.prod(np.diagonal(a))
    assert permanent_ryser(a).value == pytest.approx(want, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_naive_vs_ryser(n, seed):
    g = np.random.default_rng(seed)
    a = g.normal(size=(n, n)) + 1j * g.normal(size=(n, n))
    assert scaled_rel_diff(permanent_naive(a), permanent_ryser(a)) < 1e-11


def test_naive_vs_ryser_at_large_sizes():
    g = np.random.default_rng(3)
    for n in (7, 8, 9):
        a = g.normal(size=(n, n)) + 1j * g.normal(size=(n, n))
        assert scaled_rel_diff(permanent_naive(a), permanent_ryser(a)) < 1e-10


def test_row_scaling_robustness():
    """Scaling one row by 1e180 scales the permanent linearly, without overflow."""
    g = np.random.default_rng(11)
    a = g.normal(size=(6, 6)) + 1j * g.normal(size=(6, 6))
    base = permanent_ryser(a)
    scaled = a.copy()
    scaled[2] *= 1e180
    got = permanent_ryser(scaled)
    assert math.isfinite(got.log_abs)
    assert got.log_abs - base.log_abs == pytest.approx(math.log(1e180), rel=1e-12)
    assert got.angle == pytest.approx(base.angle, abs=1e-9)


def test_ryser_handles_zero_rows():
    a = np.ones((4, 4), dtype=complex)
    a[1] = 0
    assert permanent_ryser(a).is_zero


# ---------------------------------------------------------------------------
# Multiplicity-aware inclusion-exclusion
# ---------------------------------------------------------------------------


def test_expand_gram_layout():
    base = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=complex)
    spec = GramSpec(base, (2, 1), (1, 2))
    a = expand_gram(spec)
    assert a.shape == (3, 3)
    # rows repeat per row_mult, columns per col_mult
    assert np.array_equal(a, np.array([[1, 2, 2], [1, 2, 2], [3, 4, 4]], dtype=complex))


def test_multiplicity_vs_expanded_ryser(rng):
    for _ in range(60):
        m = int(rng.integers(1, 4))
        v = random_vectors(rng, m, int(rng.integers(1, 4)))
        base = v.conj() @ v.T
        row = random_counts(rng, m, 8).counts
        col = tuple(int(x) for x in rng.permutation(row))
        spec = GramSpec(base, row, col)
        if spec.size == 0:
            continue
        want = permanent_ryser(expand_gram(spec))
        assert scaled_rel_diff(permanent_multiplicity(spec), want) < 1e-10


def test_multiplicity_empty_spec():
    spec = GramSpec(np.eye(2, dtype=complex), (0, 0), (0, 0))
    assert permanent_multiplicity(spec).value == pytest.approx(1.0)


def test_laplace_expansion_residual(rng):
    for _ in range(25):
        m = int(rng.integers(1, 4))
        v = random_vectors(rng, m, int(rng.integers(1, 4)))
        base = v.conj() @ v.T
        counts = random_counts(rng, m, 10).counts
        if sum(counts) == 0:
            continue
        spec = GramSpec(base, counts, counts)
        assert laplace_expand_check(spec) < 1e-10


# ---------------------------------------------------------------------------
# Support pieces and guards
# ---------------------------------------------------------------------------


def test_cycle_count():
    assert cycle_count((0, 1, 2)) == 3
    assert cycle_count((1, 0, 2)) == 2
    assert cycle_count((1, 2, 0)) == 1
    assert cycle_count(()) == 0


def test_guard_limits():
    big = np.eye(NAIVE_MAX_N + 1, dtype=complex)
    with pytest.raises(GuardLimitError):
        permanent_naive(big)
    with pytest.raises(GuardLimitError):
        permanent_ryser(np.eye(RYSER_MAX_N + 1, dtype=complex))


def test_non_square_rejected():
    with pytest.raises(ValueError):
        permanent_ryser(np.ones((2, 3), dtype=complex))
