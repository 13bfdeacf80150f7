"""Large-N permanent-ratio kernel vs the exact small-N oracles.

Every route (coefficient convolution, d = 2 quadrature, diagonal closed
form, mixed count-grid) is cross-checked against permanent.py on sizes
where both run, and against internal expansion identities at sizes only
the kernel reaches.
"""
import itertools
import math

import numpy as np
import pytest

import permtomo.gramkernel as gk
from conftest import random_counts, random_vectors, trine_model
from permtomo.gramkernel import (
    MIXED_MAX_N,
    alpha_gram_totals,
    gram_total,
    mixed_gram_tables,
    pure_gram_tables,
)
from permtomo.permanent import (
    alpha_permanent_coloring,
    expand_gram,
    permanent_multiplicity,
)
from permtomo.types import GramSpec, GuardLimitError, scaled_rel_diff


def gram_of(v):
    return np.asarray(v).conj() @ np.asarray(v).T


def struck(counts, j):
    c = list(counts)
    c[j] -= 1
    return tuple(c)


def laplace_residual(v, counts, tab) -> float:
    """Row expansion of the full permanent over the ratio table; exact value N."""
    b = gram_of(v)
    n = sum(counts)
    lap = sum(counts[l] * counts[k] * r * b[l, k] for (l, k), r in tab.ratios.items())
    return abs(lap - n) / n


def mixed_laplace_residual(v, counts, d_a, tab) -> float:
    """Trace consistency of the weighted minor-ratio sum.

    Normalization of the ancilla-extended estimator forces the coefficient-
    weighted sum of minor ratios times overlaps to equal the total count,
    independent of the ancilla dimension (for orthogonal outcome vectors each
    diagonal term contributes exactly its count).
    """
    b = gram_of(v)
    n = sum(counts)
    lap = 0j
    for (l, k), r in tab.ratios.items():
        if l == k:
            lap += counts[k] * (counts[k] - 1 + d_a) * r * b[k, k]
        else:
            lap += counts[l] * counts[k] * r * b[l, k]
    return abs(lap - n) / n


def brute_path_minor(base, counts, l, k, alpha) -> complex:
    """Struck-copy cross minor by direct permutation enumeration.

    The cycle through the struck pair (the open path from column k's copy
    to row l's copy) carries one explicit weight alpha; closed cycles of
    the remainder are counted as usual.
    """
    types = [t for t, c in enumerate(counts) for _ in range(c)]
    n = len(types)
    a_exp = expand_gram(GramSpec(base, counts, counts))
    a0 = types.index(l)
    b0 = types.index(k)
    rows = [r for r in range(n) if r != a0]
    cols = [c for c in range(n) if c != b0]
    total = 0j
    for perm in itertools.permutations(cols):
        sigma = dict(zip(rows, perm))
        w = 1.0 + 0j
        for r, c in sigma.items():
            w *= a_exp[r, c]
        seen = set()
        cur = b0
        while cur in sigma:
            seen.add(cur)
            cur = sigma[cur]
        seen.add(cur)
        cycles = 0
        for r in rows:
            if r in seen:
                continue
            cycles += 1
            cur = r
            while cur not in seen:
                seen.add(cur)
                cur = sigma[cur]
        total += w * alpha ** (cycles + 1)
    return total


# ---------------------------------------------------------------------------
# Pure tables vs multiplicity permanents
# ---------------------------------------------------------------------------


def test_pure_tables_match_multiplicity_oracle(rng):
    for _ in range(25):
        d = int(rng.integers(1, 5))
        m = int(rng.integers(max(2, d - 1), 5))
        v = random_vectors(rng, m, d)
        base = gram_of(v)
        counts = random_counts(rng, m, 10).counts
        if sum(counts) == 0:
            continue
        tab = pure_gram_tables(v, counts)
        want = permanent_multiplicity(GramSpec(base, counts, counts))
        assert scaled_rel_diff(tab.full, want) < 1e-9
        assert scaled_rel_diff(tab.full, gram_total(v, counts)) < 1e-12
        active = [j for j, c in enumerate(counts) if c > 0]
        for l in active:
            for k in active:
                want = permanent_multiplicity(
                    GramSpec(base, struck(counts, l), struck(counts, k))
                )
                assert scaled_rel_diff(tab.minors[(l, k)], want) < 1e-9


def test_pure_ratio_table_is_exactly_hermitian(rng):
    v = random_vectors(rng, 4, 3)
    tab = pure_gram_tables(v, (3, 2, 0, 4))
    for (l, k), r in tab.ratios.items():
        assert tab.ratios[(k, l)] == r.conjugate()
        assert tab.minors[(k, l)].mantissa == tab.minors[(l, k)].mantissa.conjugate()


def test_pure_laplace_identity_small(rng):
    for _ in range(10):
        v = random_vectors(rng, 3, 2)
        counts = random_counts(rng, 3, 12).counts
        if sum(counts) == 0:
            continue
        tab = pure_gram_tables(v, counts)
        assert laplace_residual(v, counts, tab) < 1e-12


# ---------------------------------------------------------------------------
# d = 2 quadrature route
# ---------------------------------------------------------------------------


def test_quadrature_agrees_with_coefficient_route(rng):
    """Force both routes on the same N = 50 problems and compare everything."""
    saved = gk.PURE_COEFF_MAX_N
    try:
        for trial in range(6):
            m = int(rng.integers(2, 5))
            v = random_vectors(rng, m, 2)
            if trial % 2:
                v = v.real.astype(complex)
            counts = tuple(int(x) for x in rng.multinomial(50, np.ones(m) / m))
            gk.PURE_COEFF_MAX_N = 10**9
            tab_c = pure_gram_tables(v, counts)
            gk.PURE_COEFF_MAX_N = 40
            tab_q = pure_gram_tables(v, counts)
            assert scaled_rel_diff(tab_c.full, tab_q.full) < 1e-10
            for key in tab_c.minors:
                assert scaled_rel_diff(tab_c.minors[key], tab_q.minors[key]) < 1e-10
    finally:
        gk.PURE_COEFF_MAX_N = saved


def test_quadrature_large_n_internal_consistency():
    """At N far beyond every oracle the expansion identity still closes."""
    trine = trine_model().outcomes
    for split in ((500, 300, 200), (2000, 600, 100)):
        tab = pure_gram_tables(trine, split)
        assert laplace_residual(trine, split, tab) < 5e-13


def test_quadrature_skewed_counts():
    g = np.random.default_rng(17)
    v = random_vectors(g, 4, 2)
    counts = (1800, 150, 40, 10)
    tab = pure_gram_tables(v, counts)
    assert laplace_residual(v, counts, tab) < 5e-13


# ---------------------------------------------------------------------------
# Diagonal (orthogonal-family) closed form
# ---------------------------------------------------------------------------


def test_diagonal_fast_path_matches_generic(rng):
    """Orthogonal outcome families short-circuit; result must be identical."""
    v = np.zeros((3, 3), dtype=complex)
    v[0, 0] = 0.3
    v[1, 1] = 1.7j
    v[2, 2] = -0.9 + 0.1j
    counts = (3, 2, 4)
    fast_pure = pure_gram_tables(v, counts)
    fast_mixed = mixed_gram_tables(v, counts, 3)
    fast_tot = alpha_gram_totals(v, counts, [1, 2, 3])
    saved = gk._diag_norms
    gk._diag_norms = lambda *a: None
    try:
        slow_pure = pure_gram_tables(v, counts)
        slow_mixed = mixed_gram_tables(v, counts, 3)
        slow_tot = alpha_gram_totals(v, counts, [1, 2, 3])
    finally:
        gk._diag_norms = saved
    assert scaled_rel_diff(fast_pure.full, slow_pure.full) < 1e-12
    assert scaled_rel_diff(fast_mixed.full, slow_mixed.full) < 1e-12
    for key in fast_pure.ratios:
        assert fast_pure.ratios[key] == pytest.approx(slow_pure.ratios[key], abs=1e-13)
        assert fast_mixed.ratios[key] == pytest.approx(slow_mixed.ratios[key], abs=1e-13)
    for a, b in zip(fast_tot, slow_tot):
        assert scaled_rel_diff(a, b) < 1e-12


def test_single_outcome_rising_factorial():
    v = np.array([[0.6 + 0.3j, 0.4 - 0.2j]])
    norm2 = np.vdot(v[0], v[0]).real
    for d_a in (1, 2, 3, 4):
        for n in (1, 2, 5):
            tab = mixed_gram_tables(v, (n,), d_a)
            want = math.prod(d_a + j for j in range(n)) * norm2**n
            assert tab.full.value == pytest.approx(want, rel=1e-12)


def test_diagonal_path_cross_minors_vanish():
    tab = mixed_gram_tables(np.eye(2, dtype=complex), (2, 3), 2)
    assert tab.ratios[(0, 1)] == 0
    assert tab.minors[(1, 0)].is_zero


# ---------------------------------------------------------------------------
# Mixed tables
# ---------------------------------------------------------------------------


def test_mixed_tables_match_coloring_oracle(rng):
    for _ in range(12):
        d = int(rng.integers(1, 4))
        m = int(rng.integers(2, 4))
        v = random_vectors(rng, m, d)
        base = gram_of(v)
        counts = random_counts(rng, m, 7).counts
        n = sum(counts)
        if n == 0:
            continue
        spec = GramSpec(base, counts, counts)
        for d_a in (1, 2, 3):
            tab = mixed_gram_tables(v, counts, d_a)
            want = alpha_permanent_coloring(spec, d_a)
            assert scaled_rel_diff(tab.full, want) < 1e-9
            active = [j for j, c in enumerate(counts) if c > 0]
            for k in active:
                want_k = alpha_permanent_coloring(
                    GramSpec(base, struck(counts, k), struck(counts, k)), d_a
                )
                assert scaled_rel_diff(tab.minors[(k, k)], want_k) < 1e-9


def test_mixed_cross_minors_match_brute_paths(rng):
    for _ in range(6):
        m = int(rng.integers(2, 4))
        v = random_vectors(rng, m, 2)
        base = gram_of(v)
        counts = random_counts(rng, m, 6).counts
        if sum(counts) == 0 or sum(counts) > 6:
            continue
        for d_a in (2, 3):
            tab = mixed_gram_tables(v, counts, d_a)
            active = [j for j, c in enumerate(counts) if c > 0]
            for l in active:
                for k in active:
                    if l == k:
                        continue
                    want = brute_path_minor(base, counts, l, k, d_a)
                    got = tab.minors[(l, k)].value
                    scale = max(abs(tab.full.value), 1e-30)
                    assert abs(got - want) / scale < 1e-9


def test_mixed_reduces_to_pure_at_unit_ancilla(rng):
    v = random_vectors(rng, 3, 2)
    counts = (4, 2, 3)
    pure = pure_gram_tables(v, counts)
    mixed = mixed_gram_tables(v, counts, 1)
    assert scaled_rel_diff(pure.full, mixed.full) < 1e-12
    for key in pure.ratios:
        assert mixed.ratios[key] == pytest.approx(pure.ratios[key], rel=1e-11, abs=1e-13)


def test_mixed_diag_ratios_exactly_real_under_rescaling(rng):
    """Wildly rescaled outcome vectors must not leak phase into the diagonal."""
    v = random_vectors(rng, 4, 2)
    v[0] *= 1e-3
    v[1] *= 150j
    v[2] *= -0.02 + 0.9j
    counts = (3, 2, 1, 4)
    for d_a in (1, 2, 3):
        tab = mixed_gram_tables(v, counts, d_a)
        for (l, k), r in tab.ratios.items():
            if l == k:
                assert complex(r).imag == 0.0
            assert tab.ratios[(k, l)] == complex(r).conjugate()


def test_mixed_rescaling_law(rng):
    """per-ratios transform exactly under row rescaling of the outcome family."""
    v = random_vectors(rng, 3, 2)
    counts = (3, 1, 2)
    factors = np.array([2.0, 0.5j, -3.0 + 1.0j])
    tab = mixed_gram_tables(v, counts, 2)
    tab_s = mixed_gram_tables(v * factors[:, None], counts, 2)
    log_want = tab.full.log_abs + sum(
        2 * c * math.log(abs(f)) for c, f in zip(counts, factors)
    )
    assert tab_s.full.log_abs == pytest.approx(log_want, rel=1e-12)
    for (l, k), r in tab.ratios.items():
        want = r / (np.conj(factors[l]) * factors[k])
        assert tab_s.ratios[(l, k)] == pytest.approx(want, rel=1e-11, abs=1e-14)


def test_mixed_laplace_at_cap(rng):
    v = random_vectors(rng, 2, 2)
    for d_a in (2, 4):
        tab = mixed_gram_tables(v, (30, 18), d_a)
        assert mixed_laplace_residual(v, (30, 18), d_a, tab) < 5e-13


def test_alpha_totals_share_one_sweep(rng):
    v = random_vectors(rng, 3, 2)
    counts = (2, 3, 1)
    tots = alpha_gram_totals(v, counts, (1, 2, 3, 4))
    base = gram_of(v)
    spec = GramSpec(base, counts, counts)
    for d_a, tot in zip((1, 2, 3, 4), tots):
        assert scaled_rel_diff(tot, alpha_permanent_coloring(spec, d_a)) < 1e-9
    assert scaled_rel_diff(tots[0], pure_gram_tables(v, counts).full) < 1e-11


# ---------------------------------------------------------------------------
# Degenerate and guarded inputs
# ---------------------------------------------------------------------------


def test_empty_record_gives_unit_tables():
    v = random_vectors(np.random.default_rng(0), 2, 2)
    tab = pure_gram_tables(v, (0, 0))
    assert tab.full.value == 1 and not tab.ratios
    assert mixed_gram_tables(v, (0, 0), 3).full.value == 1


def test_impossible_record_raises():
    v = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    with pytest.raises(ZeroDivisionError):
        pure_gram_tables(v, (1, 1))
    with pytest.raises(ZeroDivisionError):
        mixed_gram_tables(v, (1, 1), 2)
    assert alpha_gram_totals(v, (1, 1), [2])[0].is_zero


def test_guard_limits(rng):
    v = random_vectors(rng, 2, 2)
    with pytest.raises(GuardLimitError):
        mixed_gram_tables(v, (MIXED_MAX_N, 1), 2)
    with pytest.raises(GuardLimitError):
        pure_gram_tables(random_vectors(rng, 3, 3), (200, 1, 1))
    with pytest.raises(GuardLimitError):
        gram_total(v, (gk.PURE_D2_MAX_N + 1, 0))
