"""Synthetic measurement records: Born-rule probabilities and count sampling.

The closed-loop tests need data whose ground truth is known.  Given a true
state (pure or mixed) and a validated measurement model, this module
computes per-group outcome probabilities and draws multinomial counts from
them, pooling everything into the single flat count vector the estimators
consume.
"""

from __future__ import annotations

import numpy as np

from .types import (
    DensityMatrix,
    InvariantViolation,
    MeasurementModel,
    OutcomeRecord,
    PureState,
)

__all__ = ["born_probabilities", "sample_record"]

# Probability vectors should sum to 1 up to POVM roundoff; anything worse
# than this is a broken model or state, not noise.
_PROB_SUM_TOL = 1e-8
_PROB_NEG_TOL = 1e-12


def _state_matrix(state) -> np.ndarray:
    if isinstance(state, PureState):
        return state.projector()
    if isinstance(state, DensityMatrix):
        return state.matrix
    raise TypeError(
        f"true state must be a PureState or DensityMatrix, got {type(state).__name__}"
    )


def born_probabilities(state, model: MeasurementModel, group: int) -> np.ndarray:
    """Outcome probabilities ``<phi_k|rho|phi_k>`` for one POVM group.

    The group's outcomes must resolve the identity (``model.validated``),
    so the probabilities sum to 1 up to roundoff; the vector is clamped at
    0 and renormalized, and a deviation beyond 1e-8 raises instead of being
    silently absorbed.
    """
    if not model.validated:
        raise ValueError("model groups do not resolve the identity; cannot simulate")
    rho = _state_matrix(state)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(
            f"state dimension {rho.shape[0]} does not match model dim {model.dim}"
        )
    vecs = model.outcomes[list(model.groups[group])]
    p = np.einsum("ki,ij,kj->k", vecs.conj(), rho, vecs).real
    if np.any(p < -_PROB_NEG_TOL):
        raise InvariantViolation(
            f"negative Born probability {p.min():.3e} from group {group}"
        )
    p = np.where(p < 0, 0.0, p)
    total = float(p.sum())
    if abs(total - 1.0) > _PROB_SUM_TOL:
        raise InvariantViolation(
            f"group {group} probabilities sum to {total!r}, expected 1"
        )
    return p / total


def sample_record(
    state, model: MeasurementModel, shots_per_group, rng: np.random.Generator
) -> OutcomeRecord:
    """Multinomial counts for every group, pooled into one flat record.

    ``shots_per_group`` is either a single integer applied to every group or
    one integer per group.  Groups with zero shots contribute zero counts.
    """
    n_groups = model.n_groups
    if np.ndim(shots_per_group) == 0:
        shots = [int(shots_per_group)] * n_groups
    else:
        shots = [int(s) for s in shots_per_group]
        if len(shots) != n_groups:
            raise ValueError(
                f"got {len(shots)} shot counts for {n_groups} measurement groups"
            )
    if any(s < 0 for s in shots):
        raise ValueError("shot counts must be nonnegative")
    counts = np.zeros(model.n_outcomes, dtype=int)
    for g, n_shots in enumerate(shots):
        if n_shots == 0:
            continue
        p = born_probabilities(state, model, g)
        counts[list(model.groups[g])] += rng.multinomial(n_shots, p)
    return OutcomeRecord(tuple(int(c) for c in counts))
