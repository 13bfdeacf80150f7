"""Cancellation-free permanents of Gram matrices built from outcome vectors.

The estimators need permanents (and cycle-weighted permanents) of overlap
matrices ``A[l, k] = <phi_l|phi_k>`` with rows and columns repeated by the
observed counts.  Inclusion-exclusion evaluates those through alternating
sums whose cancellation grows exponentially with the total count, and its
grid cost explodes with the multiplicities; neither survives the count
regimes this package targets.  Working from the vectors themselves avoids
both.

Write ``T(m)`` for the coefficient array of the homogeneous polynomial
``prod_k (sum_i V[k, i] w_i)^{m_k}`` in the d variables ``w_i``.  Expanding
every overlap as ``sum_i conj(V[l, i]) V[k, i]`` and regrouping the
permanent's sum over assignments by which variable each factor picks gives

    per(A[r | c]) = sum_gamma gamma! * conj(T(r)_gamma) * T(c)_gamma,

a positively-weighted pairing with no inclusion-exclusion anywhere.  Row
multisets enter conjugated; equal multisets give manifestly nonnegative
sums.  Cycle-weighted permanents with integer weight reduce to these via
the color decomposition, evaluated as truncated products of exponential
generating arrays over the count grid; the open-cycle minors appearing in
the mixed-state estimator get the same treatment with one mixed-overlap
block.

Two coefficient layouts cover the dimension range: for d <= 2 a
one-dimensional polynomial with a per-coefficient log scale, for d >= 3 a
dense (d-1)-dimensional array with one scalar log offset.  Building
coefficients by convolution is itself exponentially ill-conditioned in the
total count once the outcome directions differ (each partial product lays
a linear phase ramp over a smooth positive profile, so the result sits
exp(-c*N) below the termwise magnitudes), which caps the coefficient
routes at modest N.  For d = 2 at large N the pairing is instead evaluated
through its positive integral representation: putting |w_1|^2 = s,
|w_2|^2 = 1 - s and averaging over the relative phase theta,

    per(A[n|n]) = (N+1)! * int_0^1 ds  avg_theta  prod_k |f_k(s, theta)|^(2 n_k),

whose theta-average is a trigonometric polynomial of degree <= 2N (exact
on 2N+1 uniform nodes) and whose s-integrand is a polynomial of degree
<= N (exact under Gauss-Legendre).  The result is a finite quadrature with
no truncation error and a pointwise-positive integrand, so no cancellation
at any count; struck-copy minors ride the same grid with one bounded
phase factor.

Log bookkeeping runs in extended precision.  At total counts around 10^4
the logs reach ~10^4 while downstream trace identities must hold to 1e-12,
so float64 log storage (ulp ~ 2e-12 there) is not enough; extended-
precision accumulators keep the quantization orders of magnitude below
that.  Mantissas stay complex128 throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import roots_legendre

from .types import GuardLimitError, ScaledValue

__all__ = [
    "GramTables",
    "pure_gram_tables",
    "mixed_gram_tables",
    "gram_total",
    "alpha_gram_totals",
    "PURE_D1_MAX_N",
    "PURE_D2_MAX_N",
    "PURE_COEFF_MAX_N",
    "DENSE_MAX_N",
    "DENSE_ARRAY_LIMIT",
    "MIXED_GRID_LIMIT",
    "MIXED_MAX_N",
]

PURE_D1_MAX_N = 100_000
PURE_D2_MAX_N = 20_000
# Dispatch point for d = 2: below this the coefficient route is both fast and
# accurate (its convolution cancellation grows like exp(c*N) with c ~ 0.1, so
# at N = 40 it still holds ~1e-14); above it the positive quadrature takes
# over.
PURE_COEFF_MAX_N = 40
DENSE_MAX_N = 150
DENSE_ARRAY_LIMIT = 2_000_000
MIXED_GRID_LIMIT = 200_000
# The count-grid route pairs coefficient tables at every sub-count, so it
# inherits the coefficient route's exp(c*N) cancellation; 48 keeps the
# error floor near 1e-13 even for large ancilla powers.
MIXED_MAX_N = 48

_LD = np.longdouble
_NEG_INF = _LD("-inf")

# log k! for k = 0..n, built by compensation-free cumsum in extended
# precision (accurate to ~1e-15 absolute even at k ~ 10^5, where lgamma's
# float64 result quantizes at ~1e-11).
_LOG_FACT = np.zeros(1, dtype=_LD)


def _log_fact(n: int) -> np.ndarray:
    global _LOG_FACT
    if _LOG_FACT.size <= n:
        grow = max(n + 1, 2 * _LOG_FACT.size)
        ks = np.arange(1, grow, dtype=_LD)
        _LOG_FACT = np.concatenate([np.zeros(1, dtype=_LD), np.cumsum(np.log(ks))])
    return _LOG_FACT[: n + 1]


def _log_abs_ld(z: complex):
    a = abs(z)
    return _LD(np.log(_LD(a))) if a > 0 else _NEG_INF


@dataclass(frozen=True)
class GramTables:
    """Permanent of a counted Gram matrix, its struck-copy minors, and ratios.

    ``minors[(l, k)]`` drops one copy of outcome l on the row (bra) side and
    one copy of outcome k on the column (ket) side; keys run over outcomes
    with nonzero counts.  ``ratios`` holds ``minors[(l, k)] / full`` as
    plain complex numbers, computed before any log leaves extended
    precision — these are what the estimators consume.  For the
    cycle-weighted case the off-diagonal minors carry the open-cycle weight
    factor expected by the estimator.
    """

    full: ScaledValue
    minors: dict[tuple[int, int], ScaledValue]
    ratios: dict[tuple[int, int], complex]


class _RawValue:
    """Pairing result held as complex mantissa + extended-precision log."""

    __slots__ = ("mant", "log")

    def __init__(self, mant: complex, log):
        self.mant = mant
        self.log = log

    @property
    def is_zero(self) -> bool:
        return self.mant == 0

    def to_scaled(self) -> ScaledValue:
        if self.is_zero:
            return ScaledValue.from_complex(0.0)
        return ScaledValue(self.mant, float(self.log))

    def ratio(self, other: "_RawValue") -> complex:
        if other.is_zero:
            raise ZeroDivisionError("ratio with zero permanent")
        if self.is_zero:
            return 0j
        return (self.mant / other.mant) * math.exp(float(self.log - other.log))

    def conj(self) -> "_RawValue":
        return _RawValue(self.mant.conjugate(), self.log)


# ---------------------------------------------------------------------------
# d <= 2: one-dimensional polynomials with per-coefficient log scales
# ---------------------------------------------------------------------------


class _Poly1:
    """Homogeneous polynomial in two variables; index j = power of w_1.

    Stored as ``mant[j] * exp(logm[j])`` with extended-precision logs, so
    the dynamic range of binomial powers at counts ~ 10^4 (hundreds of
    orders of magnitude within one polynomial) never touches float limits.
    Zero coefficients carry ``logm = -inf``.
    """

    __slots__ = ("mant", "logm", "degree")

    def __init__(self, mant: np.ndarray, logm: np.ndarray, degree: int):
        self.mant = mant
        self.logm = logm
        self.degree = degree

    @classmethod
    def one(cls) -> "_Poly1":
        return cls(np.ones(1, dtype=np.complex128), np.zeros(1, dtype=_LD), 0)

    @classmethod
    def from_power(cls, a: complex, b: complex, c: int) -> "_Poly1":
        """Coefficients of (a*w1 + b*w2)^c: C(c, j) a^j b^(c-j)."""
        mant = np.zeros(c + 1, dtype=np.complex128)
        logm = np.full(c + 1, _NEG_INF, dtype=_LD)
        if a == 0 and b == 0:
            if c == 0:
                mant[0], logm[0] = 1.0, 0.0
            return cls(mant, logm, c)
        if a == 0:
            mant[0] = complex(np.exp(1j * c * np.angle(b)))
            logm[0] = c * _log_abs_ld(b)
            return cls(mant, logm, c)
        if b == 0:
            mant[c] = complex(np.exp(1j * c * np.angle(a)))
            logm[c] = c * _log_abs_ld(a)
            return cls(mant, logm, c)
        lf = _log_fact(c)
        j = np.arange(c + 1, dtype=_LD)
        logm = (lf[c] - lf - lf[::-1]) + j * _log_abs_ld(a) + (c - j) * _log_abs_ld(b)
        jf = np.arange(c + 1, dtype=np.float64)
        mant = np.exp(1j * (jf * np.angle(a) + (c - jf) * np.angle(b)))
        return cls(mant.astype(np.complex128), logm, c)

    def mul(self, other: "_Poly1") -> "_Poly1":
        if other.degree > self.degree:
            return other.mul(self)
        short_m, short_l = other.mant, other.logm
        long_m, long_l = self.mant, self.logm
        out_deg = self.degree + other.degree
        n_long = long_m.size
        out_log = np.full(out_deg + 1, _NEG_INF, dtype=_LD)
        live = [
            p
            for p in range(short_m.size)
            if short_m[p] != 0 and np.isfinite(short_l[p])
        ]
        for p in live:
            np.maximum(
                out_log[p : p + n_long], short_l[p] + long_l, out=out_log[p : p + n_long]
            )
        out_mant = np.zeros(out_deg + 1, dtype=np.complex128)
        safe = np.where(np.isfinite(out_log), out_log, 0)
        for p in live:
            shift = (short_l[p] + long_l - safe[p : p + n_long]).astype(np.float64)
            out_mant[p : p + n_long] += (short_m[p] * long_m) * np.exp(shift)
        return _Poly1(out_mant, out_log, out_deg)


def _pair1(row: _Poly1, col: _Poly1) -> _RawValue:
    """gamma!-weighted pairing: per(A[r|c]) with r the conjugated side."""
    deg = row.degree
    lf = _log_fact(deg)
    cand = lf + lf[::-1] + row.logm + col.logm
    finite = np.isfinite(cand)
    if not np.any(finite):
        return _RawValue(0j, _LD(0))
    top = cand[finite].max()
    shift = (cand[finite] - top).astype(np.float64)
    if row is col:
        m = row.mant[finite]
        # conj(z)*z may pick up a spurious imaginary part under FMA
        # contraction; the aligned pairing is real by construction.
        terms = (m.real * m.real + m.imag * m.imag) * np.exp(shift)
    else:
        terms = np.conj(row.mant[finite]) * col.mant[finite] * np.exp(shift)
    return _RawValue(complex(np.sum(terms)), top)


# ---------------------------------------------------------------------------
# d >= 3: dense coefficient arrays with a scalar log offset
# ---------------------------------------------------------------------------


class _PolyD:
    """Homogeneous polynomial in d variables over gamma_1..gamma_{d-1}.

    ``mant`` has shape (degree+1,)^(d-1); the power of the last variable is
    implied by homogeneity.  One extended-precision scalar tracks the
    overall magnitude.
    """

    __slots__ = ("mant", "off", "degree", "nvar")

    def __init__(self, mant: np.ndarray, off, degree: int, nvar: int):
        self.mant = mant
        self.off = off
        self.degree = degree
        self.nvar = nvar

    @classmethod
    def one(cls, nvar: int) -> "_PolyD":
        return cls(np.ones((1,) * (nvar - 1), dtype=np.complex128), _LD(0), 0, nvar)

    @classmethod
    def from_power(cls, v: np.ndarray, c: int) -> "_PolyD":
        """Coefficients of (sum_i v_i w_i)^c: multinomial(c; gamma) prod v^gamma."""
        d = v.size
        if c == 0:
            return cls.one(d)
        shape = (c + 1,) * (d - 1)
        idx = np.indices(shape)
        last = c - idx.sum(axis=0)
        inside = last >= 0
        lf = _log_fact(c)
        log_mag = np.where(inside, lf[c] - lf[np.where(inside, last, 0)], _NEG_INF)
        for i in range(d - 1):
            log_mag = log_mag - lf[idx[i]]
        phase = np.zeros(shape)
        angles = np.angle(v)
        for i in range(d - 1):
            e = idx[i]
            if v[i] == 0:
                log_mag = np.where(e > 0, _NEG_INF, log_mag)
            else:
                log_mag = log_mag + e * _log_abs_ld(complex(v[i]))
                phase = phase + e * angles[i]
        if v[-1] == 0:
            log_mag = np.where(last > 0, _NEG_INF, log_mag)
        else:
            log_mag = log_mag + np.where(last > 0, last, 0) * _log_abs_ld(complex(v[-1]))
            phase = phase + np.where(last > 0, last * angles[-1], 0.0)
        finite = np.isfinite(log_mag)
        if not np.any(finite):
            return cls(np.zeros(shape, dtype=np.complex128), _LD(0), c, d)
        off = log_mag[finite].max()
        shift = np.where(finite, (log_mag - off).astype(np.float64), -np.inf)
        mant = np.exp(shift) * np.exp(1j * phase)
        mant[~finite] = 0
        return cls(mant.astype(np.complex128), off, c, d)

    def mul(self, other: "_PolyD") -> "_PolyD":
        if np.count_nonzero(other.mant) > np.count_nonzero(self.mant):
            return other.mul(self)
        out_deg = self.degree + other.degree
        axes = self.mant.ndim
        shape = (out_deg + 1,) * axes
        out = np.zeros(shape, dtype=np.complex128)
        small = other.mant
        big = self.mant
        big_shape = big.shape
        for pos in np.argwhere(small != 0):
            sl = tuple(slice(int(p), int(p) + big_shape[i]) for i, p in enumerate(pos))
            out[sl] += small[tuple(pos)] * big
        mx = float(np.max(np.abs(out))) if out.size else 0.0
        off = self.off + other.off
        if mx > 0:
            out /= mx
            off = off + _LD(math.log(mx))
        return _PolyD(out, off, out_deg, self.nvar)


_WEIGHT_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _dense_weights(degree: int, nvar: int) -> np.ndarray:
    """gamma!/degree! over the coefficient array, zero outside the simplex."""
    key = (degree, nvar)
    if key not in _WEIGHT_CACHE:
        shape = (degree + 1,) * (nvar - 1)
        idx = np.indices(shape)
        last = degree - idx.sum(axis=0)
        inside = last >= 0
        lf = _log_fact(degree)
        lw = lf[np.where(inside, last, 0)] - lf[degree]
        for i in range(nvar - 1):
            lw = lw + lf[idx[i]]
        _WEIGHT_CACHE[key] = np.where(inside, np.exp(lw.astype(np.float64)), 0.0)
    return _WEIGHT_CACHE[key]


def _pair_d(row: _PolyD, col: _PolyD) -> _RawValue:
    deg = row.degree
    w = _dense_weights(deg, row.nvar)
    if row is col:
        m = row.mant
        val = complex(np.sum(w * (m.real * m.real + m.imag * m.imag)))
    else:
        val = complex(np.sum(w * np.conj(row.mant) * col.mant))
    return _RawValue(val, row.off + col.off + _log_fact(deg)[deg])


# ---------------------------------------------------------------------------
# Dispatch helpers
# ---------------------------------------------------------------------------


def _check_vectors(vectors) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.complex128)
    if v.ndim != 2:
        raise ValueError("expected a stack of outcome vectors, shape (M, d)")
    return v


def _pure_guard(d: int, n: int) -> None:
    if d == 1:
        if n > PURE_D1_MAX_N:
            raise GuardLimitError(f"pairing guard: N = {n} > {PURE_D1_MAX_N}")
        return
    if d == 2:
        if n > PURE_D2_MAX_N:
            raise GuardLimitError(f"quadrature guard: N = {n} > {PURE_D2_MAX_N}")
        return
    if n > DENSE_MAX_N:
        raise GuardLimitError(f"dense coefficient guard: N = {n} > {DENSE_MAX_N}")
    if (n + 1) ** (d - 1) > DENSE_ARRAY_LIMIT:
        raise GuardLimitError(
            f"dense coefficient guard: (N+1)^(d-1) = {(n + 1) ** (d - 1)} "
            f"> {DENSE_ARRAY_LIMIT}"
        )


def _power(v: np.ndarray, c: int):
    if v.size <= 2:
        a = complex(v[0])
        b = complex(v[1]) if v.size == 2 else 0.0
        return _Poly1.from_power(a, b, c)
    return _PolyD.from_power(v, c)


def _unit(d: int):
    return _Poly1.one() if d <= 2 else _PolyD.one(d)


def _pair(row, col) -> _RawValue:
    if isinstance(row, _Poly1):
        return _pair1(row, col)
    return _pair_d(row, col)


def _counts_tuple(vectors: np.ndarray, counts: Sequence[int]) -> tuple[int, ...]:
    counts = tuple(int(c) for c in counts)
    if len(counts) != vectors.shape[0]:
        raise ValueError("need one count per outcome vector")
    if any(c < 0 for c in counts):
        raise ValueError("counts must be nonnegative")
    return counts


def _diag_norms(v: np.ndarray, active: Sequence[int]):
    """Squared norms of the active rows when they are exactly orthogonal.

    Returns None as soon as any cross inner product is nonzero; the fast
    closed form below is only taken when it is exact, so there is no
    tolerance to tune.
    """
    rows = v[list(active)]
    gram = rows.conj() @ rows.T
    if np.any(gram - np.diag(np.diagonal(gram)) != 0):
        return None
    return np.real(np.diagonal(gram))


def _log_rf(alpha: int, n: int):
    """log of the rising factorial alpha (alpha+1) ... (alpha + n - 1)."""
    if n <= 0:
        return _LD(0)
    return np.sum(np.log(np.arange(alpha, alpha + n, dtype=_LD)))


def _diag_tables(norms2, counts, active, alpha: int) -> GramTables:
    """Closed-form tables for mutually orthogonal outcome vectors.

    The counted Gram matrix is block diagonal with constant blocks
    ``g_k J_{n_k}``, so every cycle class stays inside one block and the
    weighted permanent factorizes outcome by outcome into rising
    factorials: per_alpha = prod_k g_k^{n_k} alpha(alpha+1)...(alpha+n_k-1).
    Striking one copy of outcome k from both sides divides out one factor
    g_k (alpha + n_k - 1); striking different outcomes leaves mismatched
    block sizes, so those minors vanish identically.
    """
    g_of: dict[int, float] = {}
    full_log = _LD(0)
    for i, k in enumerate(active):
        g = float(norms2[i])
        if g == 0.0:
            raise ZeroDivisionError(
                "per(A) vanished; the record is impossible under this model"
            )
        g_of[k] = g
        full_log = full_log + counts[k] * _LD(math.log(g)) + _log_rf(alpha, counts[k])
    full = ScaledValue(1.0, float(full_log))
    minors: dict[tuple[int, int], ScaledValue] = {}
    ratios: dict[tuple[int, int], complex] = {}
    for l in active:
        for k in active:
            if l == k:
                denom = g_of[k] * (alpha + counts[k] - 1)
                minors[(k, k)] = ScaledValue(
                    1.0, float(full_log - _LD(math.log(denom)))
                )
                ratios[(k, k)] = 1.0 / denom
            else:
                minors[(l, k)] = ScaledValue.from_complex(0.0)
                ratios[(l, k)] = 0j
    return GramTables(full, minors, ratios)


def _diag_total(norms2, counts, active, alpha: int) -> ScaledValue:
    log = _LD(0)
    for i, k in enumerate(active):
        g = float(norms2[i])
        if g == 0.0:
            raise ZeroDivisionError(
                "per(A) vanished; the record is impossible under this model"
            )
        log = log + counts[k] * _LD(math.log(g)) + _log_rf(alpha, counts[k])
    return ScaledValue(1.0, float(log))


# ---------------------------------------------------------------------------
# d = 2, large N: exact positive quadrature
# ---------------------------------------------------------------------------

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(n_s: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if n_s not in _GL_CACHE:
        x, w = roots_legendre(n_s)
        _GL_CACHE[n_s] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n_s]


def _combine_s(vals: np.ndarray, shifts: np.ndarray, w_s: np.ndarray) -> _RawValue:
    """sum_s w_s * vals_s * exp(shifts_s), returned at a consistent scale."""
    mag = np.abs(vals)
    pos = mag > 0
    if not np.any(pos):
        return _RawValue(0j, _LD(0))
    logs = shifts + np.log(np.where(pos, mag, 1.0))
    top = float(np.max(logs[pos]))
    total = complex(np.sum(w_s * vals * np.exp(shifts - top)))
    return _RawValue(total, _LD(top))


def _quad_tables_d2(
    v: np.ndarray, counts: tuple[int, ...], active: list[int], want_minors: bool
) -> tuple[_RawValue, dict[tuple[int, int], _RawValue]]:
    """Pairings for d = 2 via the exact positive quadrature.

    One shared (s, theta) grid serves the full permanent and every minor:
    with W = prod |f_m|^(2 n_m) the full integrand is W and the (l, k)
    minor's is W * f_l * conj(f_k) / (|f_l|^2 |f_k|^2), so the heavy
    exponential is computed once per grid point.
    """
    n_total = sum(counts)
    n_s = n_total // 2 + 1
    m_theta = 2 * n_total + 1
    s_nodes, w_s = _gl_nodes(n_s)
    phase = np.exp(2j * np.pi * np.arange(m_theta) / m_theta)
    na = np.array([counts[k] for k in active], dtype=np.float64)
    va = v[active]
    npairs = len(active) * (len(active) + 1) // 2 if want_minors else 0
    pair_idx = [
        (i, j) for i in range(len(active)) for j in range(i, len(active))
    ]

    full_vals = np.empty(n_s)
    shifts = np.empty(n_s)
    pair_vals = np.empty((npairs, n_s), dtype=np.complex128)

    chunk = max(1, 1_000_000 // m_theta)
    for lo in range(0, n_s, chunk):
        sl = slice(lo, min(lo + chunk, n_s))
        rs = np.sqrt(s_nodes[sl])[:, None]
        rc = np.sqrt(1.0 - s_nodes[sl])[:, None]
        fs = [va[m, 0] * rs * phase + va[m, 1] * rc for m in range(len(active))]
        mags = [np.abs(f) ** 2 for f in fs]
        with np.errstate(divide="ignore", invalid="ignore"):
            log_w = sum(n * np.log(a) for n, a in zip(na, mags))
        shift = np.max(log_w, axis=1)
        safe = np.where(np.isfinite(shift), shift, 0.0)
        e_w = np.exp(log_w - safe[:, None])
        full_vals[sl] = e_w.mean(axis=1)
        shifts[sl] = shift
        if want_minors:
            rs_ = [
                np.where(a > 1e-290, f / np.where(a > 0, a, 1.0), 0j)
                for f, a in zip(fs, mags)
            ]
            for p, (i, j) in enumerate(pair_idx):
                if i == j:
                    g = e_w * (rs_[i].real ** 2 + rs_[i].imag ** 2)
                else:
                    g = e_w * rs_[i] * np.conj(rs_[j])
                pair_vals[p, sl] = g.mean(axis=1)

    base = float(np.max(shifts))
    if not math.isfinite(base):
        return _RawValue(0j, _LD(0)), {}
    # One shared reference keeps the per-node scale factors bit-identical
    # across the full value and every minor, so their ratios stay exact to
    # the integrand level even when the absolute logs are ~1e5.
    sh_rel = shifts - base
    lf = _log_fact(n_total + 1)
    off = _LD(base)
    full_raw = _combine_s(full_vals.astype(np.complex128), sh_rel, w_s)
    full_raw = _RawValue(full_raw.mant, full_raw.log + off + lf[n_total + 1])
    minors: dict[tuple[int, int], _RawValue] = {}
    if want_minors:
        for p, (i, j) in enumerate(pair_idx):
            raw = _combine_s(pair_vals[p], sh_rel, w_s)
            minors[(active[i], active[j])] = _RawValue(
                raw.mant, raw.log + off + lf[n_total]
            )
    return full_raw, minors


# ---------------------------------------------------------------------------
# Pure tables: per(A) and all one-copy-struck minors
# ---------------------------------------------------------------------------


def pure_gram_tables(vectors, counts: Sequence[int]) -> GramTables:
    """Permanent and all struck-copy minors of the counted Gram matrix.

    ``minors[(l, k)] = per(A[n - e_l | n - e_k])``, indexed by original
    outcome numbers; only outcomes with nonzero counts appear.  One
    prefix/suffix sweep of polynomial products covers all of them, so the
    cost is a handful of long-polynomial multiplications rather than
    anything exponential.
    """
    v = _check_vectors(vectors)
    counts = _counts_tuple(v, counts)
    d = v.shape[1]
    active = [k for k, c in enumerate(counts) if c > 0]
    n_total = sum(counts)
    _pure_guard(d, n_total)
    if not active:
        return GramTables(ScaledValue.from_complex(1.0), {}, {})

    diag = _diag_norms(v, active)
    if diag is not None:
        return _diag_tables(diag, counts, active, 1)

    if d == 2 and n_total > PURE_COEFF_MAX_N:
        full_raw, raw_minors = _quad_tables_d2(v, counts, active, want_minors=True)
        if full_raw.is_zero:
            raise ZeroDivisionError(
                "per(A) vanished; the record is impossible under this model"
            )
        minors: dict[tuple[int, int], ScaledValue] = {}
        ratios: dict[tuple[int, int], complex] = {}
        for (l, k), raw in raw_minors.items():
            minors[(l, k)] = raw.to_scaled()
            ratios[(l, k)] = raw.ratio(full_raw)
            if l != k:
                mirrored = raw.conj()
                minors[(k, l)] = mirrored.to_scaled()
                ratios[(k, l)] = ratios[(l, k)].conjugate()
        return GramTables(full_raw.to_scaled(), minors, ratios)

    leaves = [_power(v[k], counts[k]) for k in active]
    m = len(leaves)
    prefix = [_unit(d)]
    for leaf in leaves:
        prefix.append(prefix[-1].mul(leaf))
    suffix = [_unit(d)]
    for leaf in reversed(leaves):
        suffix.append(suffix[-1].mul(leaf))
    suffix.reverse()  # suffix[i] = product of leaves[i:]

    full_raw = _pair(prefix[m], prefix[m])
    if full_raw.is_zero:
        raise ZeroDivisionError(
            "per(A) vanished; the record is impossible under this model"
        )
    reduced = []
    for i, k in enumerate(active):
        rest = prefix[i].mul(suffix[i + 1])
        reduced.append(rest.mul(_power(v[k], counts[k] - 1)))
    minors: dict[tuple[int, int], ScaledValue] = {}
    ratios: dict[tuple[int, int], complex] = {}
    for i, l in enumerate(active):
        for j, k in enumerate(active):
            if l > k:
                continue
            raw = _pair(reduced[i], reduced[j])
            minors[(l, k)] = raw.to_scaled()
            ratios[(l, k)] = raw.ratio(full_raw)
            if l != k:
                mirrored = raw.conj()
                minors[(k, l)] = mirrored.to_scaled()
                ratios[(k, l)] = ratios[(l, k)].conjugate()
    return GramTables(full_raw.to_scaled(), minors, ratios)


def gram_total(vectors, counts: Sequence[int]) -> ScaledValue:
    """per(A[n | n]) alone, when no minors are needed."""
    v = _check_vectors(vectors)
    counts = _counts_tuple(v, counts)
    active = [k for k, c in enumerate(counts) if c > 0]
    d = v.shape[1]
    n_total = sum(counts)
    _pure_guard(d, n_total)
    if not active:
        return ScaledValue.from_complex(1.0)
    diag = _diag_norms(v, active)
    if diag is not None:
        return _diag_total(diag, counts, active, 1)
    if d == 2 and n_total > PURE_COEFF_MAX_N:
        full_raw, _ = _quad_tables_d2(v, counts, active, want_minors=False)
        return full_raw.to_scaled()
    acc = _unit(d)
    for k in active:
        acc = acc.mul(_power(v[k], counts[k]))
    return _pair(acc, acc).to_scaled()


# ---------------------------------------------------------------------------
# Mixed tables: cycle-weighted permanent and minors via the count grid
# ---------------------------------------------------------------------------


def _mixed_guard(d: int, counts: Sequence[int]) -> tuple[int, ...]:
    active = tuple(k for k, c in enumerate(counts) if c > 0)
    n_total = sum(counts)
    if n_total > MIXED_MAX_N:
        raise GuardLimitError(f"mixed-state guard: N = {n_total} > {MIXED_MAX_N}")
    grid = math.prod(counts[k] + 1 for k in active) if active else 1
    if grid > MIXED_GRID_LIMIT:
        raise GuardLimitError(f"mixed grid guard: {grid} > {MIXED_GRID_LIMIT} points")
    _pure_guard(d, n_total)
    return active


def _unit_rows(v: np.ndarray, counts: tuple[int, ...], active: Sequence[int]):
    """Copy of ``v`` with the counted rows normalized, plus their log norms.

    A counted zero vector makes the record impossible (its outcome has
    probability zero), which surfaces as the vanishing-permanent error.
    """
    norms = np.sqrt(np.sum(np.abs(v) ** 2, axis=1))
    if any(norms[k] == 0.0 for k in active):
        raise ZeroDivisionError(
            "per(A) vanished; the record is impossible under this model"
        )
    v_unit = np.array(v, dtype=np.complex128)
    rows = list(active)
    v_unit[rows] /= norms[rows, None]
    log_norm = {k: _LD(math.log(norms[k])) for k in active}
    return v_unit, log_norm


class _Grid:
    """Count-grid scaffolding shared by the cycle-weighted evaluations."""

    def __init__(self, v: np.ndarray, counts: tuple[int, ...], active: Sequence[int], want_pairs: bool):
        self.active = tuple(active)
        self.dims = tuple(counts[k] + 1 for k in self.active)
        self.full_idx = tuple(n - 1 for n in self.dims)
        lf = _log_fact(max(self.dims))
        log_fact = lf[: self.dims[0]].reshape(-1, *([1] * (len(self.dims) - 1)))
        for ax in range(1, len(self.dims)):
            shape = [1] * len(self.dims)
            shape[ax] = -1
            log_fact = log_fact + lf[: self.dims[ax]].reshape(shape)
        self.log_fact = log_fact
        self.sizes = np.indices(self.dims).sum(axis=0)
        self.log_s, self.pairs = self._walk(v, counts, want_pairs)

    def _walk(self, v: np.ndarray, counts: tuple[int, ...], want_pairs: bool):
        """One depth-first product sweep filling per(A[t|t]) over the grid.

        When pair tables are requested, also fills
        ``per(A[t + e_k | t + e_l])`` (one extra bra of k, one extra ket of
        l) for every active l < k.
        """
        d = v.shape[1]
        active = self.active
        dims = self.dims
        powers = [[_power(v[k], t) for t in range(counts[k] + 1)] for k in active]
        singles = [_power(v[k], 1) for k in active]
        log_s = np.full(dims, _NEG_INF, dtype=_LD)
        pairs: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        if want_pairs:
            for i, l in enumerate(active):
                for k in active[i + 1 :]:
                    pairs[(l, k)] = (
                        np.zeros(dims, dtype=np.complex128),
                        np.full(dims, _NEG_INF, dtype=_LD),
                    )
        m = len(active)

        def descend(level: int, acc, idx: tuple[int, ...]):
            if level == m:
                s = _pair(acc, acc)
                if not s.is_zero:
                    log_s[idx] = s.log + _log_abs_ld(s.mant)
                if want_pairs:
                    bumped = [acc.mul(f) for f in singles]
                    for i in range(m):
                        for j in range(i + 1, m):
                            val = _pair(bumped[j], bumped[i])
                            if not val.is_zero:
                                mant, logv = pairs[(active[i], active[j])]
                                mant[idx] = val.mant
                                logv[idx] = val.log
                return
            for t in range(dims[level]):
                descend(level + 1, acc.mul(powers[level][t]), idx + (t,))

        descend(0, _unit(d), ())
        return log_s, pairs


def _grid_conv(a: np.ndarray, b: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Linear convolution of two count-grid arrays, truncated to the grid.

    Truncation is exact for every retained entry because supports are
    nonnegative: overshooting any axis can never convolve back down.
    """
    full = tuple(2 * n - 1 for n in dims)
    axes = tuple(range(len(dims)))
    fa = np.fft.fftn(a, s=full, axes=axes)
    fb = np.fft.fftn(b, s=full, axes=axes)
    out = np.fft.ifftn(fa * fb, axes=axes)
    return out[tuple(slice(0, n) for n in dims)]


def _grid_conv_real(a: np.ndarray, b: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Same convolution for real arrays; the result stays exactly real."""
    full = tuple(2 * n - 1 for n in dims)
    axes = tuple(range(len(dims)))
    fa = np.fft.rfftn(a, s=full, axes=axes)
    fb = np.fft.rfftn(b, s=full, axes=axes)
    out = np.fft.irfftn(fa * fb, s=full, axes=axes)
    return out[tuple(slice(0, n) for n in dims)]


def _normalized_egf(grid: _Grid):
    """Tilted, EGF-normalized array F plus the tilt rate and log offset."""
    top = grid.log_s[grid.full_idx]
    n_total = int(grid.sizes[grid.full_idx])
    if not (np.isfinite(top) and n_total):
        lam = _LD(0)
    else:
        lam = (top - grid.log_fact[grid.full_idx]) / n_total
    log_f = grid.log_s - grid.log_fact - lam * grid.sizes
    finite = np.isfinite(log_f)
    if not np.any(finite):
        return None
    f_off = np.max(log_f[finite])
    shift = np.where(finite, log_f - f_off, _NEG_INF).astype(np.float64)
    f_arr = np.where(finite, np.exp(shift), 0.0)
    return f_arr, lam, f_off


def _power_chain(f_arr: np.ndarray, f_off, dims: tuple[int, ...], d_A: int):
    """F, F^2, ..., F^{d_A} with per-step renormalization; offsets included."""
    chain = [(f_arr, f_off)]
    for _ in range(d_A - 1):
        prev, off = chain[-1]
        nxt = _grid_conv_real(prev, f_arr, dims)
        mx = float(np.max(np.abs(nxt)))
        if mx > 0:
            nxt = nxt / mx
            off = off + f_off + _LD(math.log(mx))
        else:
            off = off + f_off
        chain.append((nxt, off))
    return chain


def mixed_gram_tables(vectors, counts: Sequence[int], d_A: int) -> GramTables:
    """Cycle-weighted permanent per_{d_A} and its struck-copy minors.

    Evaluates the color decomposition as a truncated power of the
    exponential generating array ``F[t] = per(A[t|t]) / t!`` over the count
    grid: ``per_{d_A}(A[m|m]) = m! [x^m] F^{d_A}``.  Off-diagonal minors
    replace one color class by the open-cycle block
    ``G_{lk}[t] = per(A[t+e_k | t+e_l]) / t!`` and carry the weight d_A of
    the distinguished cycle.  A geometric tilt exp(-lambda |t|) flattens
    the factorial growth; it cancels identically in every extracted
    coefficient because extraction fixes the total degree.

    Outcome vectors are normalized internally (the convolution grids stay
    well balanced no matter how the caller scaled them) and the exact
    rescaling law of the permanents restores the caller's scaling in the
    reported values.  The full permanent and the struck-diagonal minors of
    a Hermitian Gram matrix are real by conjugation symmetry, and the real
    power chain keeps them exactly real here, so the ratio table is exactly
    Hermitian.
    """
    v = _check_vectors(vectors)
    counts = _counts_tuple(v, counts)
    if int(d_A) != d_A or d_A < 1:
        raise ValueError(f"ancilla dimension must be an integer >= 1, got {d_A}")
    d_A = int(d_A)
    active = _mixed_guard(v.shape[1], counts)
    if not active:
        return GramTables(ScaledValue.from_complex(1.0), {}, {})

    diag = _diag_norms(v, active)
    if diag is not None:
        return _diag_tables(diag, counts, active, d_A)

    v_unit, log_norm = _unit_rows(v, counts, active)
    log_corr = sum((2 * counts[k]) * log_norm[k] for k in active)

    grid = _Grid(v_unit, counts, active, want_pairs=True)
    dims = grid.dims
    egf = _normalized_egf(grid)
    if egf is None:
        raise ZeroDivisionError(
            "per(A) vanished; the record is impossible under this model"
        )
    f_arr, lam, f_off = egf
    chain = _power_chain(f_arr, f_off, dims, d_A)
    top_arr, top_off = chain[-1]

    def log_at(idx: tuple[int, ...], off):
        return off + grid.log_fact[idx] + lam * int(grid.sizes[idx])

    full_val = float(np.real(top_arr[grid.full_idx]))
    if full_val == 0:
        raise ZeroDivisionError(
            "per_dA(A) vanished; the record is impossible under this model"
        )
    full_log = log_at(grid.full_idx, top_off) + log_corr
    full = ScaledValue(full_val, float(full_log))

    minors: dict[tuple[int, int], ScaledValue] = {}
    ratios: dict[tuple[int, int], complex] = {}

    def put(l: int, k: int, val: complex, log) -> None:
        if val == 0:
            minors[(l, k)] = ScaledValue.from_complex(0.0)
            ratios[(l, k)] = 0j
        else:
            minors[(l, k)] = ScaledValue(val, float(log))
            ratios[(l, k)] = (val / full_val) * math.exp(float(log - full_log))

    for i, k in enumerate(active):
        idx = tuple(n - 2 if j == i else n - 1 for j, n in enumerate(dims))
        put(
            k,
            k,
            float(np.real(top_arr[idx])),
            log_at(idx, top_off) + log_corr - 2 * log_norm[k],
        )

    for i, l in enumerate(active):
        for j in range(i + 1, len(active)):
            k = active[j]
            mant, logv = grid.pairs[(l, k)]
            g_finite = np.isfinite(logv)
            idx = tuple(
                n - 2 if active[a] in (l, k) else n - 1 for a, n in enumerate(dims)
            )
            if not np.any(g_finite):
                put(l, k, 0j, _LD(0))
            else:
                log_g = logv - grid.log_fact - lam * grid.sizes
                g_off = np.max(log_g[g_finite])
                shift = np.where(g_finite, log_g - g_off, _NEG_INF).astype(np.float64)
                g_arr = np.where(g_finite, mant * np.exp(shift), 0.0)
                if d_A == 1:
                    conv, c_off = g_arr, g_off
                else:
                    lower, l_off = chain[d_A - 2]
                    conv = _grid_conv(g_arr, lower, dims)
                    c_off = g_off + l_off
                put(
                    l,
                    k,
                    d_A * complex(conv[idx]),
                    log_at(idx, c_off) + log_corr - log_norm[l] - log_norm[k],
                )
            prior = minors[(l, k)]
            minors[(k, l)] = ScaledValue(prior.mantissa.conjugate(), prior.log_scale)
            ratios[(k, l)] = ratios[(l, k)].conjugate()
    return GramTables(full, minors, ratios)


def alpha_gram_totals(vectors, counts: Sequence[int], d_A_values: Sequence[int]) -> list[ScaledValue]:
    """per_{d_A}(A[n|n]) for each requested integer d_A, sharing one grid sweep."""
    v = _check_vectors(vectors)
    counts = _counts_tuple(v, counts)
    das = [int(a) for a in d_A_values]
    if any(a < 1 for a in das):
        raise ValueError("ancilla dimensions must be >= 1")
    active = _mixed_guard(v.shape[1], counts)
    if not active:
        return [ScaledValue.from_complex(1.0) for _ in das]
    if not das:
        return []
    diag = _diag_norms(v, active)
    if diag is not None:
        try:
            return [_diag_total(diag, counts, active, a) for a in das]
        except ZeroDivisionError:
            return [ScaledValue.from_complex(0.0) for _ in das]
    try:
        v_unit, log_norm = _unit_rows(v, counts, active)
    except ZeroDivisionError:
        return [ScaledValue.from_complex(0.0) for _ in das]
    log_corr = sum((2 * counts[k]) * log_norm[k] for k in active)
    grid = _Grid(v_unit, counts, active, want_pairs=False)
    egf = _normalized_egf(grid)
    if egf is None:
        return [ScaledValue.from_complex(0.0) for _ in das]
    f_arr, lam, f_off = egf
    chain = _power_chain(f_arr, f_off, grid.dims, max(das))
    out = []
    for a in das:
        arr, off = chain[a - 1]
        val = float(np.real(arr[grid.full_idx]))
        if val == 0:
            out.append(ScaledValue.from_complex(0.0))
        else:
            log = off + grid.log_fact[grid.full_idx] + lam * int(grid.sizes[grid.full_idx])
            out.append(ScaledValue(val, float(log + log_corr)))
    return out
