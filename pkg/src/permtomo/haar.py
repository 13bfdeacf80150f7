"""Monte Carlo oracle: numerically integrate over uniformly random states.

Everything in this module is an estimator-independent cross-check.  States
are drawn from the unitarily invariant distribution (independent standard
complex Gaussian components, then normalized), likelihood weights are
accumulated in log space, and self-normalized averages come with
batch-means error bars, so closed-form results can be compared against
brute numerical integration at a known statistical resolution.

Reproducibility contract: each sample block derives its own generator from
``(seed, block_index)`` and the reduction order is fixed, so a given
``McConfig`` always produces bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .permanent import permanent_naive
from .types import (
    McConfig,
    McEstimate,
    MeasurementModel,
    OutcomeRecord,
    PureState,
)

__all__ = [
    "sample_haar_state",
    "mc_posterior_pure",
    "mc_posterior_mixed",
    "MainIdentityCheck",
    "verify_main_identity",
]


def sample_haar_state(dim: int, rng: np.random.Generator | None = None) -> PureState:
    """One state drawn from the unitary-invariant distribution on C^dim."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if rng is None:
        rng = np.random.default_rng()
    return PureState(_sample_block(dim, 1, rng)[0])


def _sample_block(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, dim) array of unit-norm rows with unitary-invariant law."""
    z = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1)[:, None]


def _mc_weighted_mean(cfg: McConfig, sample_dim, out_dim, log_weights, weighted_sum):
    """Self-normalized weighted mean of per-sample matrices, block by block.

    ``log_weights(states) -> (B,)`` may contain ``-inf`` for zero weight;
    ``weighted_sum(states, w) -> (out_dim, out_dim)`` accumulates the
    weighted state matrices of one block.  Per-block results are combined
    at the scale of the globally largest log weight, and the batch-means
    spread of the per-block ratios provides the standard error.
    """
    remaining = cfg.samples
    block = cfg.block_size
    results = []  # (log_max, weight_sum, matrix_sum) per block
    index = 0
    while remaining > 0:
        n_b = min(block, remaining)
        rng = np.random.default_rng([cfg.seed, index])
        states = _sample_block(sample_dim, n_b, rng)
        logw = log_weights(states)
        top = float(np.max(logw))
        if math.isfinite(top):
            w = np.exp(logw - top)
            results.append((top, float(np.sum(w)), weighted_sum(states, w)))
        else:
            results.append((-math.inf, 0.0, None))
        remaining -= n_b
        index += 1

    overall = max(r[0] for r in results)
    if not math.isfinite(overall):
        raise RuntimeError(
            "all Monte Carlo weights vanished; the record has zero likelihood "
            "everywhere on the sampled states"
        )
    weight = 0.0
    total = np.zeros((out_dim, out_dim), dtype=complex)
    for top, w_sum, mat in results:
        if w_sum > 0:
            scale = math.exp(top - overall)
            weight += w_sum * scale
            total += mat * scale
    mean = total / weight

    ratios = [mat / w_sum for top, w_sum, mat in results if w_sum > 0]
    n_batches = len(ratios)
    if n_batches >= 2:
        stack = np.stack(ratios)
        center = stack.mean(axis=0)
        dev = stack - center
        var = np.sum(dev.real**2 + dev.imag**2, axis=0) / (n_batches - 1)
        stderr = np.sqrt(var / n_batches)
    else:
        # a single usable batch carries no spread information
        stderr = np.zeros((out_dim, out_dim), dtype=float)
    return McEstimate(mean, stderr, n_batches)


def _active(record: OutcomeRecord) -> tuple[list[int], np.ndarray]:
    idx = [k for k, c in enumerate(record.counts) if c > 0]
    return idx, np.array([record.counts[k] for k in idx], dtype=float)


def mc_posterior_pure(
    model: MeasurementModel, record: OutcomeRecord, cfg: McConfig
) -> McEstimate:
    """Monte Carlo posterior mean over pure states.

    Samples uniformly random pure states ``psi`` and averages
    ``|psi><psi|`` weighted by the likelihood
    ``prod_k |<phi_k|psi>|^(2 n_k)``.  The result estimates the same matrix
    as :func:`permtomo.tomography.estimate_pure`, with batch-means error
    bars instead of exact permanents.
    """
    if record.n_outcomes != model.n_outcomes:
        raise ValueError("record length does not match the model")
    idx, n_act = _active(record)
    v_act = model.outcomes[idx]

    def log_weights(states: np.ndarray) -> np.ndarray:
        if not idx:
            return np.zeros(states.shape[0])
        overlap = np.abs(states @ v_act.conj().T) ** 2
        with np.errstate(divide="ignore"):
            return np.log(overlap) @ n_act

    def weighted_sum(states: np.ndarray, w: np.ndarray) -> np.ndarray:
        return (states * w[:, None]).T @ states.conj()

    return _mc_weighted_mean(cfg, model.dim, model.dim, log_weights, weighted_sum)


def mc_posterior_mixed(
    model: MeasurementModel, record: OutcomeRecord, ancilla_dim: int, cfg: McConfig
) -> McEstimate:
    """Monte Carlo posterior mean over ancilla-traced random pure states.

    Samples uniformly random pure states on system x ancilla, weights by
    ``prod_k (<Psi| (|phi_k><phi_k| x I) |Psi>)^(n_k)`` and averages the
    partial trace over the ancilla.  Cross-checks
    :func:`permtomo.tomography.estimate_mixed`.
    """
    if record.n_outcomes != model.n_outcomes:
        raise ValueError("record length does not match the model")
    d_a = int(ancilla_dim)
    if d_a != ancilla_dim or d_a < 1:
        raise ValueError(f"ancilla_dim must be a positive integer, got {ancilla_dim!r}")
    d_s = model.dim
    idx, n_act = _active(record)
    v_act = model.outcomes[idx]

    def log_weights(states: np.ndarray) -> np.ndarray:
        if not idx:
            return np.zeros(states.shape[0])
        blocks = states.reshape(-1, d_s, d_a)
        # <Psi| (|phi_k><phi_k| x I) |Psi> = || Z^dag phi_k ||^2 for Z = Psi as a matrix
        amp = np.einsum("ki,sia->ska", v_act.conj(), blocks)
        q = np.sum(np.abs(amp) ** 2, axis=2)
        with np.errstate(divide="ignore"):
            return np.log(q) @ n_act

    def weighted_sum(states: np.ndarray, w: np.ndarray) -> np.ndarray:
        blocks = states.reshape(-1, d_s, d_a)
        return np.einsum("s,sia,sja->ij", w, blocks, blocks.conj())

    return _mc_weighted_mean(cfg, d_s * d_a, d_s, log_weights, weighted_sum)


@dataclass(frozen=True)
class MainIdentityCheck:
    """Comparison of a Haar moment against its permanent closed form."""

    analytic: complex
    mc_mean: complex
    mc_stderr: float
    sigma_distance: float


def verify_main_identity(xs, ys, cfg: McConfig) -> MainIdentityCheck:
    """Check the permanent formula for a product of state overlaps.

    Estimates ``E[ prod_a <x_a|psi><psi|y_a> ]`` over uniformly random
    ``psi`` and compares with
    ``(d-1)!/(N+d-1)! * per(M)``, ``M[a][b] = <x_a|y_b>``.  Returns the
    deviation in batch-means standard errors; values below ~3 support the
    identity at the run's statistical resolution.
    """
    xs = np.asarray(xs, dtype=complex)
    ys = np.asarray(ys, dtype=complex)
    if xs.ndim != 2 or xs.shape != ys.shape:
        raise ValueError("need matching (N, dim) vector families")
    n_vec, dim = xs.shape
    if n_vec > 4:
        raise ValueError("Monte Carlo resolution limits the check to N <= 4 factors")
    gram = xs.conj() @ ys.T
    pref = math.factorial(dim - 1) / math.factorial(n_vec + dim - 1)
    analytic = complex(permanent_naive(gram).value) * pref

    remaining = cfg.samples
    block = cfg.block_size
    means = []
    index = 0
    while remaining > 0:
        n_b = min(block, remaining)
        rng = np.random.default_rng([cfg.seed, index])
        states = _sample_block(dim, n_b, rng)
        bra = states @ xs.conj().T  # <x_a|psi> per sample and factor
        ket = states.conj() @ ys.T  # <psi|y_a>
        vals = np.prod(bra * ket, axis=1)
        means.append((complex(np.mean(vals)), n_b))
        remaining -= n_b
        index += 1

    total = sum(m * n for m, n in means) / cfg.samples
    if len(means) >= 2:
        stack = np.array([m for m, _ in means])
        center = stack.mean()
        var = float(np.sum(np.abs(stack - center) ** 2)) / (len(means) - 1)
        stderr = math.sqrt(var / len(means))
    else:
        stderr = 0.0
    diff = abs(total - analytic)
    sigma = 0.0 if diff == 0 else (math.inf if stderr == 0 else diff / stderr)
    return MainIdentityCheck(analytic, total, stderr, sigma)
