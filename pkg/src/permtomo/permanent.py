"""Exact permanents and cycle-weighted permanents of complex matrices.

Plain permanents come in three flavors: brute-force enumeration (oracle),
Ryser inclusion-exclusion (general N x N), and a multiplicity-aware
inclusion-exclusion that never materializes matrices with repeated rows and
columns.  Cycle-weighted permanents (``sum_sigma alpha^cycles(sigma) *
prod_i A[i, sigma(i)]``) get a brute-force oracle, a subset-DP over cycle
covers, and a color-decomposition that reduces integer weights to plain
multiplicity permanents.  Everything returns a :class:`ScaledValue` because
the interesting values grow like products of factorials.
"""
from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .types import (
    GramSpec,
    GuardLimitError,
    ScaledValue,
    alpha_value,
    scaled_rel_diff,
    scaled_sum,
)

__all__ = [
    "NAIVE_MAX_N",
    "RYSER_MAX_N",
    "CYCLECOVER_MAX_N",
    "COLORING_MAX_COMPOSITIONS",
    "MULTIPLICITY_MAX_GRID",
    "cycle_count",
    "expand_gram",
    "permanent_naive",
    "permanent_ryser",
    "permanent_multiplicity",
    "laplace_expand_check",
    "alpha_permanent_naive",
    "alpha_permanent_cyclecover",
    "alpha_permanent_coloring",
    "alpha_laplace_border_expand",
]

# Guard limits.  Configuration constants, not mathematical boundaries: they
# keep the factorial / 2^N / 3^N algorithms from being launched at sizes
# where they could not finish.
NAIVE_MAX_N = 10
RYSER_MAX_N = 30
CYCLECOVER_MAX_N = 18
COLORING_MAX_COMPOSITIONS = 200_000
MULTIPLICITY_MAX_GRID = 4_000_000

_RYSER_BLOCK_BITS = 14
_MULT_CHUNK = 1 << 16
# Magnitude bound (in natural log) under which the multiplicity sum can run
# in plain float64 without risking overflow.
_PLAIN_LOG_LIMIT = 650.0


def _as_square(matrix) -> np.ndarray:
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _prescale_rows(a: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Divide each row by its largest magnitude; return (scaled, sum of logs).

    Returns None when some row is identically zero (permanent is zero).
    Row scaling factors multiply straight out of every permutation product,
    so they can be reapplied on the final log scale.
    """
    if a.shape[0] == 0:
        return a, 0.0
    mags = np.max(np.abs(a), axis=1)
    if np.any(mags == 0):
        return None
    # Scale by the power of two bracketing each row max.  Dividing by the raw
    # magnitude squares it inside numpy's complex division, which overflows or
    # underflows for subnormal rows; ldexp only touches exponents and is exact.
    exponents = np.frexp(mags)[1]
    shift = -exponents[:, None]
    scaled = np.ldexp(a.real, shift) + 1j * np.ldexp(a.imag, shift)
    return scaled, float(np.sum(exponents) * math.log(2.0))


def cycle_count(perm: Sequence[int]) -> int:
    """Number of disjoint cycles in the permutation ``i -> perm[i]``."""
    n = len(perm)
    seen = [False] * n
    cycles = 0
    for start in range(n):
        if seen[start]:
            continue
        cycles += 1
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
    return cycles


def expand_gram(spec: GramSpec) -> np.ndarray:
    """Materialize the N x N matrix with rows/columns repeated per multiplicity."""
    return np.repeat(np.repeat(spec.base, spec.row_mult, axis=0), spec.col_mult, axis=1)


# ---------------------------------------------------------------------------
# Plain permanents
# ---------------------------------------------------------------------------


def permanent_naive(matrix) -> ScaledValue:
    """Permanent by brute-force permutation enumeration (small-N oracle)."""
    a = _as_square(matrix)
    n = a.shape[0]
    if n > NAIVE_MAX_N:
        raise GuardLimitError(f"naive permanent guard: N = {n} > {NAIVE_MAX_N}")
    if n == 0:
        return ScaledValue.from_complex(1.0)
    scaled = _prescale_rows(a)
    if scaled is None:
        return ScaledValue.from_complex(0.0)
    a, log_scale = scaled
    rows = range(n)
    total = 0j
    for perm in itertools.permutations(range(n)):
        prod = 1.0 + 0j
        for i in rows:
            prod *= a[i, perm[i]]
        total += prod
    return ScaledValue(total, log_scale)


def permanent_ryser(matrix) -> ScaledValue:
    """Permanent via Ryser inclusion-exclusion over column subsets.

    The 2^N subsets are split into a precomputed table over the low
    ``_RYSER_BLOCK_BITS`` columns and a Gray-code walk over the remaining
    high columns, so each block of subsets is evaluated as one vectorized
    row-sum product.  Compensated summation kicks in above N = 20, where
    the alternating sum starts to cancel.
    """
    a = _as_square(matrix)
    n = a.shape[0]
    if n > RYSER_MAX_N:
        raise GuardLimitError(f"Ryser guard: N = {n} > {RYSER_MAX_N}")
    if n == 0:
        return ScaledValue.from_complex(1.0)
    scaled = _prescale_rows(a)
    if scaled is None:
        return ScaledValue.from_complex(0.0)
    a, log_scale = scaled

    b = min(n, _RYSER_BLOCK_BITS)
    cols = a.T  # cols[j] = column j as a length-n vector
    n_lo = 1 << b

    # Row sums for every subset of the low columns, plus subset parities.
    table = np.zeros((n_lo, n), dtype=np.complex128)
    parity = np.zeros(n_lo, dtype=np.int8)
    for j in range(b):
        step = 1 << j
        table[step : 2 * step] = table[:step] + cols[j]
        parity[step : 2 * step] = parity[:step] + 1
    sign_lo = 1.0 - 2.0 * (parity & 1)

    acc = 0j
    comp = 0j  # Kahan compensation, used for N > 20
    use_kahan = n > 20
    hi = np.zeros(n, dtype=np.complex128)
    hi_parity = 0
    n_hi = 1 << (n - b)
    gray_prev = 0
    for g in range(n_hi):
        gray = g ^ (g >> 1)
        changed = gray ^ gray_prev
        if changed:
            j = changed.bit_length() - 1
            if gray & changed:
                hi = hi + cols[b + j]
            else:
                hi = hi - cols[b + j]
            hi_parity ^= 1
        gray_prev = gray
        prods = np.prod(table + hi, axis=1)
        block = complex(np.dot(sign_lo, prods))
        if hi_parity:
            block = -block
        if use_kahan:
            y = block - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        else:
            acc += block
    if n % 2:
        acc = -acc
    return ScaledValue(acc, log_scale)


def _active_spec(spec: GramSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Base restricted to rows/columns with nonzero multiplicity."""
    rm = np.asarray(spec.row_mult)
    cm = np.asarray(spec.col_mult)
    rows = np.nonzero(rm)[0]
    cols = np.nonzero(cm)[0]
    return spec.base[np.ix_(rows, cols)], rm[rows], cm[cols]


def permanent_multiplicity(spec: GramSpec) -> ScaledValue:
    """Permanent of the expanded matrix, without expanding it.

    Ryser's column subsets collapse to bounded multi-subsets: a vector t
    with 0 <= t_k <= col_mult_k, entering with weight
    ``prod_k C(col_mult_k, t_k) * (-1)^(N - sum t)`` and row-sum product
    ``prod_r (sum_k t_k * base[r, k])^row_mult_r``.  Cost is
    O(M * N * prod_k (col_mult_k + 1)) instead of O(N * 2^N).
    """
    n = spec.size
    if n == 0:
        return ScaledValue.from_complex(1.0)
    base, rmult, cmult = _active_spec(spec)
    dims = tuple(int(c) + 1 for c in cmult)
    n_points = math.prod(dims)
    if n_points > MULTIPLICITY_MAX_GRID:
        raise GuardLimitError(
            f"multiplicity grid guard: {n_points} > {MULTIPLICITY_MAX_GRID} points"
        )

    log_binom = [
        np.array(
            [
                math.lgamma(c + 1) - math.lgamma(t + 1) - math.lgamma(c - t + 1)
                for t in range(c + 1)
            ]
        )
        for c in cmult
    ]
    # Worst-case log magnitude of a single term decides plain vs log-domain.
    row_caps = cmult @ np.abs(base).T
    with np.errstate(divide="ignore"):
        log_caps = np.log(row_caps)
    bound = float(sum(lb.max() for lb in log_binom))
    bound += float(np.sum(np.where(np.isfinite(log_caps), rmult * log_caps, 0.0)))
    plain = bound < _PLAIN_LOG_LIMIT

    if plain:
        binom = [
            np.array([float(math.comb(c, t)) for t in range(c + 1)]) for c in cmult
        ]
    rmult_f = rmult.astype(np.float64)
    acc = 0j
    comp = 0j
    run_log = -math.inf
    for start in range(0, n_points, _MULT_CHUNK):
        idx = np.arange(start, min(start + _MULT_CHUNK, n_points))
        t = np.stack(np.unravel_index(idx, dims), axis=1)
        sign = 1.0 - 2.0 * (np.sum(t, axis=1) & 1)
        row_sums = t @ base.T
        if plain:
            w = sign * np.prod(
                np.stack([binom[k][t[:, k]] for k in range(t.shape[1])], axis=1), axis=1
            )
            terms = w * np.prod(row_sums ** rmult[None, :], axis=1)
            block = complex(np.sum(terms))
            y = block - comp
            tt = acc + y
            comp = (tt - acc) - y
            acc = tt
        else:
            log_w = np.sum(
                np.stack([log_binom[k][t[:, k]] for k in range(t.shape[1])], axis=1),
                axis=1,
            )
            with np.errstate(divide="ignore"):
                log_mag = log_w + np.sum(rmult_f * np.log(np.abs(row_sums)), axis=1)
            phase = np.sum(rmult_f * np.angle(row_sums), axis=1)
            finite = np.isfinite(log_mag)
            if not np.any(finite):
                continue
            m = float(np.max(log_mag[finite]))
            if m > run_log:
                if run_log > -math.inf:
                    acc *= math.exp(run_log - m)
                run_log = m
            vals = np.exp(log_mag[finite] - run_log) * np.exp(1j * phase[finite])
            acc += complex(np.sum(sign[finite] * vals))
    sign_n = -1.0 if n % 2 else 1.0
    if plain:
        return ScaledValue.from_complex(sign_n * acc)
    if acc == 0 or run_log == -math.inf:
        return ScaledValue.from_complex(0.0)
    return ScaledValue(sign_n * acc, run_log)


def laplace_expand_check(spec: GramSpec) -> float:
    """Relative residual of the multiplicity-level Laplace row expansion.

    Expanding the permanent along every expanded row and regrouping by
    outcome type gives
    ``N * per = sum_{l,k} row_mult_l * col_mult_k * base[l, k] * per(minor)``
    where the minor drops one copy of row type l and column type k.  Both
    sides are evaluated independently; the return value is their relative
    difference (0 means the identity holds exactly).
    """
    n = spec.size
    if n < 1:
        raise ValueError("Laplace expansion needs at least one expanded row")
    direct = permanent_multiplicity(spec)
    rm = list(spec.row_mult)
    cm = list(spec.col_mult)
    terms = []
    for l, r_l in enumerate(rm):
        if r_l == 0:
            continue
        for k, c_k in enumerate(cm):
            if c_k == 0:
                continue
            minor = spec.with_mult(
                rm[:l] + [r_l - 1] + rm[l + 1 :], cm[:k] + [c_k - 1] + cm[k + 1 :]
            )
            weight = r_l * c_k * complex(spec.base[l, k])
            if weight == 0:
                continue
            terms.append(permanent_multiplicity(minor) * weight)
    expanded = scaled_sum(terms) * (1.0 / n)
    return scaled_rel_diff(direct, expanded)


# ---------------------------------------------------------------------------
# Cycle-weighted permanents
# ---------------------------------------------------------------------------


def alpha_permanent_naive(matrix, alpha) -> ScaledValue:
    """Cycle-weighted permanent by enumeration (small-N oracle).

    Computes ``sum_sigma alpha^cycles(sigma) * prod_i A[i, sigma(i)]``.
    At alpha = 1 this is the permanent; at alpha = -1 it is
    ``(-1)^N det(A)``.
    """
    a = _as_square(matrix)
    al = alpha_value(alpha)
    n = a.shape[0]
    if n > NAIVE_MAX_N:
        raise GuardLimitError(f"naive cycle-weighted guard: N = {n} > {NAIVE_MAX_N}")
    if n == 0:
        return ScaledValue.from_complex(1.0)
    scaled = _prescale_rows(a)
    if scaled is None:
        return ScaledValue.from_complex(0.0)
    a, log_scale = scaled
    total = 0j
    for perm in itertools.permutations(range(n)):
        prod = 1.0 + 0j
        for i in range(n):
            prod *= a[i, perm[i]]
        total += al ** cycle_count(perm) * prod
    return ScaledValue(total, log_scale)


def _cycle_weights(a: np.ndarray) -> list[complex]:
    """w[mask] = sum over directed cycles visiting exactly the vertices in mask.

    Each cycle is generated once, anchored at its smallest vertex, by a path
    DP: h(T, v) = weight of simple paths from the anchor through T ending at
    v, closed by the edge back to the anchor.
    """
    n = a.shape[0]
    w = [0j] * (1 << n)
    for anchor in range(n):
        w[1 << anchor] = complex(a[anchor, anchor])
        rest = list(range(anchor + 1, n))
        m = len(rest)
        if m == 0:
            continue
        # h[mask] is a length-n vector over absolute end vertices; entries
        # outside mask stay zero so plain dot products do the masking.
        h = np.zeros((1 << m, n), dtype=np.complex128)
        close = a[:, anchor]
        for mask in range(1, 1 << m):
            rel = mask
            vec = h[mask]
            while rel:
                low = rel & -rel
                rel ^= low
                v = rest[low.bit_length() - 1]
                prev = mask ^ low
                if prev == 0:
                    vec[v] = a[anchor, v]
                else:
                    vec[v] = complex(h[prev] @ a[:, v])
            abs_mask = (1 << anchor) | _rel_to_abs(mask, rest)
            w[abs_mask] = complex(vec @ close)
    return w


def _rel_to_abs(mask: int, members: list[int]) -> int:
    out = 0
    rel = mask
    while rel:
        low = rel & -rel
        rel ^= low
        out |= 1 << members[low.bit_length() - 1]
    return out


def _cover_values(a: np.ndarray, alpha: float) -> list[complex]:
    """f[mask] = cycle-weighted permanent of the principal submatrix on mask.

    Subset DP over cycle covers: the cycle through the smallest vertex of S
    is chosen explicitly, contributing ``alpha * w(C) * f(S without C)``.
    """
    n = a.shape[0]
    w = _cycle_weights(a)
    f = [0j] * (1 << n)
    f[0] = 1.0 + 0j
    for s in range(1, 1 << n):
        low = s & -s
        rest = s ^ low
        total = alpha * w[low] * f[rest]
        sub = rest
        while sub:
            c = sub | low
            wc = w[c]
            if wc != 0:
                total += alpha * wc * f[s ^ c]
            sub = (sub - 1) & rest
        f[s] = total
    return f


def alpha_permanent_cyclecover(matrix, alpha) -> ScaledValue:
    """Cycle-weighted permanent via subset DP over cycle covers.

    Equals :func:`alpha_permanent_naive` for any alpha, but reaches N = 18.
    Work grows as 3^N (submask enumeration) with O(2^N * N) memory, so the
    upper sizes take minutes; the guard exists to keep requests finite.
    """
    a = _as_square(matrix)
    al = alpha_value(alpha)
    n = a.shape[0]
    if n > CYCLECOVER_MAX_N:
        raise GuardLimitError(f"cycle-cover guard: N = {n} > {CYCLECOVER_MAX_N}")
    if n == 0:
        return ScaledValue.from_complex(1.0)
    scaled = _prescale_rows(a)
    if scaled is None:
        return ScaledValue.from_complex(0.0)
    a, log_scale = scaled
    f = _cover_values(a, al)
    return ScaledValue(f[-1], log_scale)


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """All ways to write ``total`` as an ordered sum of ``parts`` >= 0 terms."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for tail in _compositions(total - first, parts - 1):
            out.append((first,) + tail)
    return out


def alpha_permanent_coloring(spec: GramSpec, d_A) -> ScaledValue:
    """Integer-weight cycle permanent via color decomposition.

    For integer weight d_A, assigning each of the N copies one of d_A colors
    and requiring cycles to stay monochromatic turns ``alpha^cycles`` into a
    sum over color assignments.  Copies of the same outcome are
    exchangeable, so the sum collapses to compositions n_k = sum_c n_{k,c}
    with multinomial weight, each color class contributing an ordinary
    multiplicity permanent.
    """
    al = alpha_value(d_A)
    if al != int(al) or al < 1:
        raise ValueError(f"color decomposition needs an integer weight >= 1, got {d_A}")
    da = int(al)
    if spec.row_mult != spec.col_mult:
        raise ValueError("color decomposition requires equal row and column multiplicities")
    if spec.size == 0:
        return ScaledValue.from_complex(1.0)
    mults = spec.row_mult
    n_terms = math.prod(math.comb(n + da - 1, da - 1) for n in mults)
    if n_terms > COLORING_MAX_COMPOSITIONS:
        raise GuardLimitError(
            f"coloring guard: {n_terms} compositions > {COLORING_MAX_COMPOSITIONS}"
        )
    per_outcome = [_compositions(n, da) for n in mults]
    cache: dict[tuple[int, ...], ScaledValue] = {}

    def class_per(mult: tuple[int, ...]) -> ScaledValue:
        if mult not in cache:
            cache[mult] = permanent_multiplicity(spec.with_mult(mult, mult))
        return cache[mult]

    terms = []
    for split in itertools.product(*per_outcome):
        # split[k][c] = how many copies of outcome k carry color c
        log_weight = 0.0
        for n_k, comp in zip(mults, split):
            log_weight += math.lgamma(n_k + 1)
            for part in comp:
                log_weight -= math.lgamma(part + 1)
        term = ScaledValue.from_log_polar(log_weight)
        for c in range(da):
            term = term * class_per(tuple(comp[c] for comp in split))
        terms.append(term)
    return scaled_sum(terms)


def alpha_laplace_border_expand(
    spec: GramSpec, border_row, border_col, corner, d_A
) -> ScaledValue:
    """Cycle-weighted permanent of the bordered (N+1) x (N+1) matrix.

    The expanded matrix of ``spec`` is framed by one extra column
    (``border_col``, entries B[i, N+1]), one extra row (``border_row``,
    entries B[N+1, j]) and ``corner`` = B[N+1, N+1].  Expanding along the
    border gives

        per_a(B) = a * corner * per_a(A)
                 + sum_{i,j} bcol[i] * brow[j] * W(i, j)

    where W(i, j) sums permutations routing the border cycle in through
    column j and out through row i: a times a path weight from j to i,
    times the cycle-cover value of the untouched positions.  W depends on
    position i and j only through their outcome types, so one value per
    type pair suffices instead of N^2.
    """
    n = spec.size
    bcol = np.asarray(border_col, dtype=np.complex128)
    brow = np.asarray(border_row, dtype=np.complex128)
    if bcol.shape != (n,) or brow.shape != (n,):
        raise ValueError(f"border vectors must have expanded length {n}")
    if n + 1 > CYCLECOVER_MAX_N:
        raise GuardLimitError(f"bordered guard: N + 1 = {n + 1} > {CYCLECOVER_MAX_N}")
    al = alpha_value(d_A)
    e = expand_gram(spec)
    f = _cover_values(e, al)
    full = (1 << n) - 1
    total = al * complex(corner) * f[full]

    # Position classes: positions sharing (row type, col type) are
    # exchangeable under simultaneous row-and-column swaps of E.
    row_type = np.repeat(np.arange(spec.n_base), spec.row_mult)
    col_type = np.repeat(np.arange(spec.n_base), spec.col_mult)
    classes: dict[tuple[int, int], list[int]] = {}
    for pos in range(n):
        classes.setdefault((int(row_type[pos]), int(col_type[pos])), []).append(pos)
    class_list = list(classes.values())

    # W(i, j) for i = j: the border cycle is (i, N+1) alone; the rest is a
    # full cover of the other positions.
    diag_w = [al * f[full ^ (1 << members[0])] for members in class_list]

    # W(i, j) for i != j via a path DP from representative j to every i.
    off_w: dict[tuple[int, int], complex] = {}
    if n >= 2:
        for bj, members_j in enumerate(class_list):
            j = members_j[0]
            others = [p for p in range(n) if p != j]
            m = len(others)
            paths = np.zeros((1 << m, n), dtype=np.complex128)
            order = sorted(range(1 << m), key=int.bit_count)
            for mask in order[1:]:
                rel = mask
                vec = paths[mask]
                while rel:
                    low = rel & -rel
                    rel ^= low
                    v = others[low.bit_length() - 1]
                    prev = mask ^ low
                    if prev == 0:
                        vec[v] = e[j, v]
                    else:
                        vec[v] = complex(paths[prev] @ e[:, v])
            for bi, members_i in enumerate(class_list):
                i = members_i[0] if members_i[0] != j else (
                    members_i[1] if len(members_i) > 1 else -1
                )
                if i < 0:
                    continue
                ibit_rel = 1 << others.index(i)
                value = 0j
                for mask in range(1 << m):
                    if mask & ibit_rel:
                        continue
                    # path j -> (mask) -> i, direct edge when mask empty
                    pw = e[j, i] if mask == 0 else complex(paths[mask] @ e[:, i])
                    if pw == 0:
                        continue
                    rest_abs = full ^ (1 << j) ^ (1 << i) ^ _rel_to_abs(mask, others)
                    value += pw * f[rest_abs]
                off_w[(bi, bj)] = al * value

    for bi, members_i in enumerate(class_list):
        for bj, members_j in enumerate(class_list):
            bc = complex(np.sum(bcol[members_i]))
            br = complex(np.sum(brow[members_j]))
            if bi == bj:
                paired = complex(np.dot(bcol[members_i], brow[members_i]))
                total += paired * diag_w[bi]
                if len(members_i) >= 2:
                    total += (bc * br - paired) * off_w[(bi, bj)]
            else:
                total += bc * br * off_w[(bi, bj)]
    return ScaledValue.from_complex(total)
