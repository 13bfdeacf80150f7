"""Shared value types: states, measurement models, count records, Gram data.

Everything defined here is immutable after construction and safe to share
across threads.  Arrays are stored as read-only numpy views; validation runs
once in ``__post_init__`` and never mutates afterwards.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "STATE_NORM_TOL",
    "HERMITIAN_TOL",
    "TRACE_TOL",
    "EIG_FLOOR_TOL",
    "POVM_TOL",
    "GuardLimitError",
    "InvariantViolation",
    "PureState",
    "MeasurementModel",
    "PovmValidation",
    "validate_povm",
    "OutcomeRecord",
    "GramSpec",
    "gram_from_outcomes",
    "DensityMatrix",
    "check_density_invariants",
    "trace_distance",
    "ScaledValue",
    "scaled_sum",
    "scaled_rel_diff",
    "AlphaParam",
    "McConfig",
    "McEstimate",
    "RunManifest",
]

# Package-wide tolerance conventions.
STATE_NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIG_FLOOR_TOL = 1e-10
POVM_TOL = 1e-10


class GuardLimitError(RuntimeError):
    """An input exceeds a configured resource guard (cost would explode)."""


class InvariantViolation(RuntimeError):
    """A computed result violates one of its structural invariants."""


def _readonly_complex(data, name: str, ndim: int) -> np.ndarray:
    arr = np.array(data, dtype=np.complex128, order="C")
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# States and measurements
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PureState:
    """A unit vector in C^dim.

    Parameters
    ----------
    amplitudes:
        Complex components; their squared magnitudes must sum to 1 within
        ``STATE_NORM_TOL``.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = _readonly_complex(self.amplitudes, "amplitudes", 1)
        if amp.size < 1:
            raise ValueError("amplitudes must be non-empty")
        norm_sq = float(np.sum(np.abs(amp) ** 2))
        if abs(norm_sq - 1.0) > STATE_NORM_TOL * max(1.0, norm_sq):
            raise ValueError(f"state is not normalized: sum |psi_k|^2 = {norm_sq!r}")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        """|psi><psi| as a dense matrix."""
        return np.outer(self.amplitudes, self.amplitudes.conj())


def _group_deviations(outcomes: np.ndarray, groups, dim: int) -> tuple[float, ...]:
    devs = []
    eye = np.eye(dim)
    for idx in groups:
        block = outcomes[list(idx)]
        s = block.conj().T @ block  # sum_k |phi_k><phi_k| ... transposed below
        devs.append(float(np.max(np.abs(s.T - eye))))
    return tuple(devs)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """A collection of rank-1 POVM outcome vectors, partitioned into groups.

    ``outcomes`` holds the M outcome vectors as rows of an (M, dim) array;
    ``groups`` partitions the outcome indices 0..M-1, one tuple per POVM.
    Each group is expected to resolve the identity (sum of projectors = I);
    the ``validated`` flag records whether that holds within ``POVM_TOL``.
    Outcome vectors need not be unit norm.
    """

    dim: int
    outcomes: np.ndarray
    groups: tuple[tuple[int, ...], ...] = ()
    validated: bool = field(init=False, default=False)

    def __post_init__(self):
        vecs = _readonly_complex(self.outcomes, "outcomes", 2)
        if vecs.shape[1] != self.dim:
            raise ValueError(
                f"outcome vectors have length {vecs.shape[1]}, expected dim={self.dim}"
            )
        m = vecs.shape[0]
        groups = self.groups or (tuple(range(m)),)
        groups = tuple(tuple(int(i) for i in g) for g in groups)
        flat = sorted(i for g in groups for i in g)
        if flat != list(range(m)):
            raise ValueError("groups must partition the outcome indices exactly once")
        object.__setattr__(self, "outcomes", vecs)
        object.__setattr__(self, "groups", groups)
        devs = _group_deviations(vecs, groups, self.dim)
        object.__setattr__(self, "validated", max(devs) <= POVM_TOL)

    @property
    def n_outcomes(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @classmethod
    def from_group_vectors(cls, dim: int, group_vectors: Sequence[Sequence]) -> "MeasurementModel":
        """Build a model from a list of groups, each a list of outcome vectors."""
        stacked = []
        groups = []
        start = 0
        for vecs in group_vectors:
            vecs = [np.asarray(v, dtype=complex) for v in vecs]
            stacked.extend(vecs)
            groups.append(tuple(range(start, start + len(vecs))))
            start += len(vecs)
        return cls(dim=dim, outcomes=np.array(stacked), groups=tuple(groups))

    def rotated(self, unitary: np.ndarray) -> "MeasurementModel":
        """The model with every outcome vector mapped through ``unitary``."""
        u = np.asarray(unitary, dtype=complex)
        return MeasurementModel(self.dim, self.outcomes @ u.T, self.groups)

    def rescaled(self, factors: Sequence[complex]) -> "MeasurementModel":
        """The model with outcome k multiplied by ``factors[k]`` (all nonzero)."""
        f = np.asarray(factors, dtype=complex)
        if f.shape != (self.n_outcomes,) or np.any(f == 0):
            raise ValueError("need one nonzero factor per outcome")
        return MeasurementModel(self.dim, self.outcomes * f[:, None], self.groups)


@dataclass(frozen=True)
class PovmValidation:
    """Per-group deviation of sum |phi><phi| from the identity."""

    group_deviations: tuple[float, ...]
    max_deviation: float
    ok: bool


def validate_povm(model: MeasurementModel) -> PovmValidation:
    """Check the group-level resolution of unity for every POVM group.

    Returns the per-group maximum entrywise deviation of
    ``sum_k |phi_k><phi_k|`` from the identity.  The model's ``validated``
    flag is set iff every deviation is at most ``POVM_TOL``.
    """
    devs = _group_deviations(model.outcomes, model.groups, model.dim)
    worst = max(devs)
    return PovmValidation(devs, worst, worst <= POVM_TOL)


@dataclass(frozen=True)
class OutcomeRecord:
    """Unordered counts n_k of how often each outcome was observed."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def n_outcomes(self) -> int:
        return len(self.counts)


# ---------------------------------------------------------------------------
# Gram data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GramSpec:
    """An M x M matrix of pairwise overlaps plus row/column multiplicities.

    The expanded matrix repeats row l ``row_mult[l]`` times and column k
    ``col_mult[k]`` times; permanents of that expansion are what the
    multiplicity-aware algorithms compute without ever materializing it.
    """

    base: np.ndarray
    row_mult: tuple[int, ...]
    col_mult: tuple[int, ...]

    def __post_init__(self):
        base = _readonly_complex(self.base, "base", 2)
        if base.shape[0] != base.shape[1]:
            raise ValueError("base must be square")
        rm = tuple(int(x) for x in self.row_mult)
        cm = tuple(int(x) for x in self.col_mult)
        if len(rm) != base.shape[0] or len(cm) != base.shape[0]:
            raise ValueError("multiplicity length must match base dimension")
        if any(x < 0 for x in rm + cm):
            raise ValueError("multiplicities must be nonnegative")
        if sum(rm) != sum(cm):
            raise ValueError(
                f"row multiplicities sum to {sum(rm)} but column multiplicities to {sum(cm)}"
            )
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "row_mult", rm)
        object.__setattr__(self, "col_mult", cm)

    @property
    def n_base(self) -> int:
        return self.base.shape[0]

    @property
    def size(self) -> int:
        """Dimension N of the expanded square matrix."""
        return sum(self.row_mult)

    @property
    def is_symmetric_case(self) -> bool:
        """True when row and column multiplicities coincide and the base is Hermitian."""
        if self.row_mult != self.col_mult:
            return False
        return bool(np.max(np.abs(self.base - self.base.conj().T)) <= HERMITIAN_TOL)

    def with_mult(self, row_mult: Sequence[int], col_mult: Sequence[int]) -> "GramSpec":
        return GramSpec(self.base, tuple(row_mult), tuple(col_mult))


def gram_from_outcomes(model: MeasurementModel, record: OutcomeRecord) -> GramSpec:
    """Overlap matrix <phi_l|phi_k> with multiplicities given by the counts.

    The scalar product is conjugate-linear in the first (bra) slot, so
    ``base[l][k] = sum_i conj(phi_l[i]) * phi_k[i]``.
    """
    if record.n_outcomes != model.n_outcomes:
        raise ValueError(
            f"record has {record.n_outcomes} counts but model has {model.n_outcomes} outcomes"
        )
    v = model.outcomes
    base = v.conj() @ v.T
    return GramSpec(base, record.counts, record.counts)


# ---------------------------------------------------------------------------
# Density matrices
# ---------------------------------------------------------------------------


def check_density_invariants(matrix: np.ndarray, *, context: str = "density matrix") -> None:
    """Assert Hermiticity, unit trace and positivity; the one checker used everywhere.

    Raises
    ------
    InvariantViolation
        If any of the three structural conditions fails its tolerance.
    """
    herm = float(np.max(np.abs(matrix - matrix.conj().T)))
    if herm > HERMITIAN_TOL:
        raise InvariantViolation(f"{context}: not Hermitian (max deviation {herm:.3e})")
    tr = complex(np.trace(matrix))
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvariantViolation(f"{context}: trace {tr!r} differs from 1")
    lo = float(np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))[0])
    if lo < -EIG_FLOOR_TOL:
        raise InvariantViolation(f"{context}: smallest eigenvalue {lo:.3e} below -{EIG_FLOOR_TOL}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = _readonly_complex(self.matrix, "matrix", 2)
        if mat.shape != (self.dim, self.dim):
            raise ValueError(f"matrix shape {mat.shape} does not match dim={self.dim}")
        check_density_invariants(mat)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_matrix(cls, matrix) -> "DensityMatrix":
        matrix = np.asarray(matrix, dtype=complex)
        return cls(matrix.shape[0], matrix)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def trace_distance(a, b) -> float:
    """Half the sum of singular values of the difference of two states.

    Accepts :class:`DensityMatrix` instances or plain matrices; the standard
    reconstruction-error metric, 0 for equal states and at most 1.
    """
    ma = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a, dtype=complex)
    mb = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b, dtype=complex)
    return 0.5 * float(np.sum(np.linalg.svd(ma - mb, compute_uv=False)))


# ---------------------------------------------------------------------------
# Scaled scalars (mantissa * exp(log_scale))
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledValue:
    """A complex scalar stored as ``mantissa * exp(log_scale)``.

    Permanents of repeated-row matrices grow like products of factorials and
    overflow doubles long before the sizes of interest; this keeps the
    magnitude in the exponent.  The mantissa magnitude is normalized into
    [1, e), or is exactly 0 for the zero value.
    """

    mantissa: complex
    log_scale: float = 0.0

    def __post_init__(self):
        m = complex(self.mantissa)
        s = float(self.log_scale)
        if not (math.isfinite(m.real) and math.isfinite(m.imag) and math.isfinite(s)):
            raise ValueError("non-finite scaled value")
        if m == 0:
            m, s = 0j, 0.0
        else:
            shift = math.floor(math.log(abs(m)))
            m *= math.exp(-shift)
            s += shift
            # floor(log|m|) can land a hair outside [1, e) through rounding
            if abs(m) < 1.0:
                m *= math.e
                s -= 1.0
            elif abs(m) >= math.e:
                m /= math.e
                s += 1.0
        object.__setattr__(self, "mantissa", m)
        object.__setattr__(self, "log_scale", s)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_complex(cls, z: complex) -> "ScaledValue":
        return cls(complex(z), 0.0)

    @classmethod
    def from_log_polar(cls, log_mag: float, angle: float = 0.0) -> "ScaledValue":
        """Value exp(log_mag + i*angle); ``log_mag = -inf`` gives zero."""
        if log_mag == -math.inf:
            return cls(0j, 0.0)
        return cls(cmath.exp(1j * angle), log_mag)

    # -- views -------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0

    @property
    def value(self) -> complex:
        """The plain complex value; may overflow to inf for huge log_scale."""
        if self.is_zero:
            return 0j
        return self.mantissa * math.exp(self.log_scale) if self.log_scale < 709 else (
            self.mantissa * math.inf
        )

    @property
    def log_abs(self) -> float:
        return -math.inf if self.is_zero else self.log_scale + math.log(abs(self.mantissa))

    @property
    def angle(self) -> float:
        return cmath.phase(self.mantissa)

    # -- arithmetic --------------------------------------------------------

    def __mul__(self, other) -> "ScaledValue":
        if isinstance(other, ScaledValue):
            return ScaledValue(self.mantissa * other.mantissa, self.log_scale + other.log_scale)
        return ScaledValue(self.mantissa * complex(other), self.log_scale)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "ScaledValue":
        if isinstance(other, ScaledValue):
            if other.is_zero:
                raise ZeroDivisionError("division by zero ScaledValue")
            return ScaledValue(self.mantissa / other.mantissa, self.log_scale - other.log_scale)
        return ScaledValue(self.mantissa / complex(other), self.log_scale)

    def __neg__(self) -> "ScaledValue":
        return ScaledValue(-self.mantissa, self.log_scale)

    def __add__(self, other) -> "ScaledValue":
        if not isinstance(other, ScaledValue):
            other = ScaledValue.from_complex(other)
        return scaled_sum([self, other])

    def ratio(self, other: "ScaledValue") -> complex:
        """self / other as a plain complex number (assumes the ratio is representable)."""
        if other.is_zero:
            raise ZeroDivisionError("ratio with zero denominator")
        if self.is_zero:
            return 0j
        return (self.mantissa / other.mantissa) * math.exp(self.log_scale - other.log_scale)


def scaled_sum(values: Iterable[ScaledValue]) -> ScaledValue:
    """Sum of scaled values, accumulated at the scale of the largest term."""
    values = [v for v in values if not v.is_zero]
    if not values:
        return ScaledValue(0j, 0.0)
    top = max(v.log_scale for v in values)
    acc = 0j
    for v in values:
        acc += v.mantissa * math.exp(v.log_scale - top)
    return ScaledValue(acc, top)


def scaled_rel_diff(a: ScaledValue, b: ScaledValue) -> float:
    """|a - b| / max(|a|, |b|), computed without leaving scaled space."""
    if a.is_zero and b.is_zero:
        return 0.0
    top = max(a.log_abs, b.log_abs)
    za = 0j if a.is_zero else a.mantissa * math.exp(a.log_scale - top)
    zb = 0j if b.is_zero else b.mantissa * math.exp(b.log_scale - top)
    return abs(za - zb) / max(abs(za), abs(zb))


# ---------------------------------------------------------------------------
# Small parameter records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaParam:
    """Weight parameter of the cycle-weighted permanent.

    Production estimators use integer values >= 1 (the ancilla dimension);
    test paths may use any real value, e.g. -1 for the determinant check.
    """

    value: float

    @property
    def is_integer(self) -> bool:
        return float(self.value) == int(self.value)

    def as_production_int(self) -> int:
        if not self.is_integer or self.value < 1:
            raise ValueError(f"production paths need an integer alpha >= 1, got {self.value}")
        return int(self.value)


def alpha_value(alpha) -> float:
    """Accept AlphaParam, int or float and return the plain value."""
    if isinstance(alpha, AlphaParam):
        return float(alpha.value)
    return float(alpha)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo run parameters: sample count, seed, reduction block size."""

    samples: int
    seed: int = 0
    batch: int | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be >= 1 when given")

    @property
    def block_size(self) -> int:
        """Per-reduction block size; defaults to ~100 batches."""
        if self.batch is not None:
            return self.batch
        return max(1, -(-self.samples // 100))


@dataclass(frozen=True, eq=False)
class McEstimate:
    """Self-normalized Monte Carlo mean with per-entry batch-means errors."""

    mean: np.ndarray
    stderr: np.ndarray
    batches: int

    def __post_init__(self):
        mean = _readonly_complex(self.mean, "mean", 2)
        err = np.array(self.stderr, dtype=float)
        if err.shape != mean.shape or np.any(err < 0) or not np.all(np.isfinite(err)):
            raise ValueError("stderr must be finite, nonnegative, and match the mean shape")
        err.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stderr", err)

    def sigma_distance(self, reference: np.ndarray) -> np.ndarray:
        """|mean - reference| in units of stderr (inf where stderr is 0 and they differ)."""
        diff = np.abs(self.mean - np.asarray(reference))
        with np.errstate(divide="ignore", invalid="ignore"):
            sig = np.where(diff == 0, 0.0, diff / self.stderr)
        return sig


@dataclass(frozen=True)
class RunManifest:
    """Provenance block embedded in every CLI output for reproducibility."""

    command: str
    inputs: dict
    seed: int | None
    config: dict
    version: str
    duration_s: float
