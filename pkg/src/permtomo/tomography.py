"""Posterior-mean state estimators built on Gram-permanent ratio tables.

Given a measurement model and an unordered count record, the Bayesian mean
state under a unitarily invariant prior is an explicit matrix: the identity
plus a weighted sum of outer products ``|phi_k><phi_l|`` of the outcome
vectors, where each weight is a ratio of two multiplicity permanents of the
outcome Gram matrix.  :mod:`permtomo.gramkernel` produces those ratios; this
module assembles them into density matrices and scalar summaries.

Estimator weights only ever involve outcomes with a nonzero count, so zero
rows drop out before any permanent work happens.  Kernel tables are cached
on the model instance keyed by the count vector (and ancilla dimension), so
re-estimating on the same model reuses the expensive part.

Two priors are covered:

* the uniform prior on pure states (``estimate_pure``), and
* the induced prior on mixed states obtained by tracing a uniformly random
  pure state over an ancilla of dimension ``ancilla_dim``
  (``estimate_mixed``).  ``ancilla_dim=1`` reproduces the pure estimator.
"""

from __future__ import annotations

import math

import numpy as np

from .gramkernel import (
    GramTables,
    _log_fact,
    alpha_gram_totals,
    gram_total,
    mixed_gram_tables,
    pure_gram_tables,
)
from .types import (
    DensityMatrix,
    InvariantViolation,
    MeasurementModel,
    OutcomeRecord,
    ScaledValue,
)

__all__ = [
    "estimate_pure",
    "estimate_mixed",
    "estimate_vonneumann_closedform",
    "bloch_estimate_qubit",
    "density_from_bloch",
    "total_probability_pure",
    "total_probability_mixed",
    "scan_ancilla_totals",
]

_PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


def _check_pair(model: MeasurementModel, record: OutcomeRecord) -> None:
    if record.n_outcomes != model.n_outcomes:
        raise ValueError(
            f"record has {record.n_outcomes} counts but model has "
            f"{model.n_outcomes} outcomes"
        )


def _model_cache(model: MeasurementModel) -> dict:
    # The model dataclass is frozen; smuggle a mutable cache past that.
    cache = getattr(model, "_kernel_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(model, "_kernel_cache", cache)
    return cache


def _pure_tables(model: MeasurementModel, record: OutcomeRecord) -> GramTables:
    cache = _model_cache(model)
    key = ("pure", record.counts)
    tab = cache.get(key)
    if tab is None:
        try:
            tab = pure_gram_tables(model.outcomes, record.counts)
        except ZeroDivisionError as exc:
            raise ValueError(
                "record has zero probability under this model "
                "(the Gram permanent vanishes)"
            ) from exc
        cache[key] = tab
    return tab


def _mixed_tables(
    model: MeasurementModel, record: OutcomeRecord, ancilla_dim: int
) -> GramTables:
    cache = _model_cache(model)
    key = ("mixed", record.counts, ancilla_dim)
    tab = cache.get(key)
    if tab is None:
        try:
            tab = mixed_gram_tables(model.outcomes, record.counts, ancilla_dim)
        except ZeroDivisionError as exc:
            raise ValueError(
                "record has zero probability under this model "
                "(the Gram permanent vanishes)"
            ) from exc
        cache[key] = tab
    return tab


def _check_ancilla(ancilla_dim: int) -> int:
    d_a = int(ancilla_dim)
    if d_a != ancilla_dim or d_a < 1:
        raise ValueError(f"ancilla_dim must be a positive integer, got {ancilla_dim!r}")
    return d_a


def _weight_matrix(
    tab: GramTables, counts: tuple[int, ...], m: int, diag_shift: int
) -> np.ndarray:
    """Coefficient matrix W with ``W[k, l]`` multiplying ``|phi_k><phi_l|``.

    Off-diagonal weights are ``n_k n_l`` times the minor ratio; diagonal ones
    use ``n_k (n_k - 1 + diag_shift)`` with ``diag_shift = 1`` in the pure
    case (collapsing to ``n_k^2``) and ``diag_shift = ancilla_dim`` in the
    mixed case.
    """
    w = np.zeros((m, m), dtype=complex)
    for (l, k), ratio in tab.ratios.items():
        if l == k:
            w[k, k] = counts[k] * (counts[k] - 1 + diag_shift) * ratio
        else:
            w[k, l] = counts[k] * counts[l] * ratio
    return w


def estimate_pure(model: MeasurementModel, record: OutcomeRecord) -> DensityMatrix:
    """Bayesian mean state for a uniformly random pure state.

    Parameters
    ----------
    model:
        Measurement outcomes; need not be normalized (the estimate is
        invariant under rescaling individual outcome vectors).
    record:
        Counts per outcome.  An all-zero record returns the prior mean
        ``I / dim``.

    Returns
    -------
    DensityMatrix
        ``(I + sum_kl n_k n_l R_lk |phi_k><phi_l|) / (N + dim)`` where
        ``R_lk`` is the ratio of the (l, k) count-reduced Gram permanent to
        the full one.
    """
    _check_pair(model, record)
    d = model.dim
    n_total = record.total
    rho = np.eye(d, dtype=complex)
    if n_total:
        tab = _pure_tables(model, record)
        w = _weight_matrix(tab, record.counts, model.n_outcomes, 1)
        v = model.outcomes
        rho += np.einsum("ki,kl,lj->ij", v, w, v.conj())
    rho /= n_total + d
    return DensityMatrix.from_matrix(rho)


def estimate_mixed(
    model: MeasurementModel, record: OutcomeRecord, ancilla_dim: int
) -> DensityMatrix:
    """Bayesian mean state for the partial trace of a random pure state.

    The prior draws a uniformly random pure state on the system tensored
    with an ``ancilla_dim``-dimensional ancilla and traces the ancilla out;
    ``ancilla_dim=1`` reduces to :func:`estimate_pure`, larger values put
    weight on increasingly mixed states.

    Returns
    -------
    DensityMatrix
        ``(a I + sum_kl c_kl R_lk |phi_k><phi_l|) / (N + dim * a)`` with
        ``a = ancilla_dim``, diagonal coefficients ``n_k (n_k - 1 + a)``,
        off-diagonal ``n_k n_l``, and ``R_lk`` the mixed-prior minor ratios.
    """
    _check_pair(model, record)
    d_a = _check_ancilla(ancilla_dim)
    d = model.dim
    n_total = record.total
    rho = d_a * np.eye(d, dtype=complex)
    if n_total:
        tab = _mixed_tables(model, record, d_a)
        w = _weight_matrix(tab, record.counts, model.n_outcomes, d_a)
        v = model.outcomes
        rho += np.einsum("ki,kl,lj->ij", v, w, v.conj())
    rho /= n_total + d * d_a
    return DensityMatrix.from_matrix(rho)


def estimate_vonneumann_closedform(
    model: MeasurementModel, record: OutcomeRecord, ancilla_dim: int = 1
) -> DensityMatrix:
    """Closed-form mean state for repeated measurement of one orthonormal basis.

    When every outcome vector belongs to a single orthonormal basis the
    permanents factorize and the estimate collapses to

    ``sum_k (n_k + a) / (N + dim * a) |phi_k><phi_k|``.

    Raises
    ------
    ValueError
        If the outcomes do not form an orthonormal basis of the space
        (Gram deviation from the identity above 1e-10).
    """
    _check_pair(model, record)
    d_a = _check_ancilla(ancilla_dim)
    d = model.dim
    v = model.outcomes
    if model.n_outcomes != d:
        raise ValueError(
            f"need exactly dim={d} outcomes forming a basis, got {model.n_outcomes}"
        )
    gram = v.conj() @ v.T
    dev = float(np.max(np.abs(gram - np.eye(d))))
    if dev > 1e-10:
        raise ValueError(
            f"outcomes are not an orthonormal basis (Gram deviation {dev:.3e})"
        )
    n = np.asarray(record.counts, dtype=float)
    weights = (n + d_a) / (record.total + d * d_a)
    rho = np.einsum("k,ki,kj->ij", weights, v, v.conj())
    return DensityMatrix.from_matrix(rho)


def bloch_estimate_qubit(model: MeasurementModel, record: OutcomeRecord) -> np.ndarray:
    """Bloch vector (x, y, z) of the pure-prior mean state of a qubit.

    Evaluates the three Pauli expectations of the estimate directly from the
    ratio table, without building the density matrix.  Each component is
    real up to roundoff; an imaginary part above 1e-12 means the ratio
    table is inconsistent and raises :class:`InvariantViolation`.
    """
    _check_pair(model, record)
    if model.dim != 2:
        raise ValueError(f"Bloch vectors are for qubits; model has dim={model.dim}")
    n_total = record.total
    if n_total == 0:
        return np.zeros(3)
    tab = _pure_tables(model, record)
    w = _weight_matrix(tab, record.counts, model.n_outcomes, 1)
    v = model.outcomes
    out = np.zeros(3)
    for j, sigma in enumerate(_PAULI):
        overlap = v.conj() @ sigma @ v.T  # overlap[l, k] = <phi_l|sigma|phi_k>
        comp = complex(np.trace(w @ overlap)) / (n_total + 2)
        if abs(comp.imag) > 1e-12:
            raise InvariantViolation(
                f"Bloch component {j} has imaginary part {comp.imag:.3e}"
            )
        out[j] = comp.real
    return out


def density_from_bloch(vector: np.ndarray) -> DensityMatrix:
    """The qubit density matrix ``(I + v . sigma) / 2`` for ``|v| <= 1``."""
    vec = np.asarray(vector, dtype=float)
    if vec.shape != (3,):
        raise ValueError(f"Bloch vector must have shape (3,), got {vec.shape}")
    radius = float(np.linalg.norm(vec))
    if radius > 1.0 + 1e-12:
        raise ValueError(f"Bloch vector lies outside the unit ball: |v| = {radius:.6f}")
    rho = np.eye(2, dtype=complex)
    for comp, sigma in zip(vec, _PAULI):
        rho += comp * sigma
    return DensityMatrix.from_matrix(rho / 2.0)


def _log_fact_value(k: int) -> float:
    return float(_log_fact(k)[k])


def total_probability_pure(
    model: MeasurementModel, record: OutcomeRecord
) -> ScaledValue:
    """Probability of observing one ordered sequence with these counts.

    Marginalized over the uniform pure prior:
    ``(dim - 1)! / (N + dim - 1)! * per(Gram)``.  Requires at least one
    observed count, and a model whose groups resolve the identity for the
    result to be a probability.
    """
    _check_pair(model, record)
    n_total = record.total
    if n_total < 1:
        raise ValueError("total probability needs at least one observed count")
    d = model.dim
    full = gram_total(model.outcomes, record.counts)
    pref = _log_fact_value(d - 1) - _log_fact_value(n_total + d - 1)
    return full * ScaledValue.from_log_polar(pref)


def total_probability_mixed(
    model: MeasurementModel, record: OutcomeRecord, ancilla_dim: int
) -> ScaledValue:
    """Sequence probability under the traced-ancilla prior.

    ``(dim * a - 1)! / (N + dim * a - 1)! * per_a(Gram)`` where ``per_a``
    weights each permutation by ``a`` per cycle.
    """
    return scan_ancilla_totals(model, record, (ancilla_dim,))[int(ancilla_dim)]


def scan_ancilla_totals(
    model: MeasurementModel, record: OutcomeRecord, ancilla_dims
) -> dict[int, ScaledValue]:
    """Sequence probabilities for several ancilla dimensions in one sweep.

    The cycle-weighted permanents for all requested dimensions come from a
    single pass over the count lattice, so scanning is barely more expensive
    than a single evaluation.  Returns ``{ancilla_dim: probability}``.
    """
    _check_pair(model, record)
    dims = [_check_ancilla(a) for a in ancilla_dims]
    if not dims:
        raise ValueError("need at least one ancilla dimension")
    n_total = record.total
    if n_total < 1:
        raise ValueError("total probability needs at least one observed count")
    d = model.dim
    totals = alpha_gram_totals(model.outcomes, record.counts, dims)
    out = {}
    for d_a, per in zip(dims, totals):
        pref = _log_fact_value(d * d_a - 1) - _log_fact_value(n_total + d * d_a - 1)
        out[d_a] = per * ScaledValue.from_log_polar(pref)
    return out
