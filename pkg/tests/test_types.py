"""Core containers: validation rules, scaled arithmetic, distance helpers."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import basis_model, random_unitary, trine_model
from permtomo.types import (
    AlphaParam,
    DensityMatrix,
    GramSpec,
    InvariantViolation,
    McConfig,
    McEstimate,
    MeasurementModel,
    OutcomeRecord,
    PureState,
    ScaledValue,
    check_density_invariants,
    gram_from_outcomes,
    scaled_rel_diff,
    scaled_sum,
    trace_distance,
    validate_povm,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
nonzeroish = st.complex_numbers(
    min_magnitude=1e-6, max_magnitude=1e6, allow_nan=False, allow_infinity=False
)


# ---------------------------------------------------------------------------
# ScaledValue
# ---------------------------------------------------------------------------


@given(nonzeroish)
def test_scaled_roundtrip(z):
    s = ScaledValue.from_complex(z)
    assert 1.0 <= abs(s.mantissa) < math.e + 1e-12
    assert s.value == pytest.approx(z, rel=1e-14)


def test_scaled_zero():
    s = ScaledValue.from_complex(0.0)
    assert s.is_zero
    assert s.value == 0
    assert (s * ScaledValue.from_complex(3.0)).is_zero


@given(nonzeroish, nonzeroish)
def test_scaled_mul_div(a, b):
    sa, sb = ScaledValue.from_complex(a), ScaledValue.from_complex(b)
    assert (sa * sb).value == pytest.approx(a * b, rel=1e-12)
    assert (sa / sb).value == pytest.approx(a / b, rel=1e-12)
    assert sa.ratio(sb) == pytest.approx(a / b, rel=1e-12)


@given(nonzeroish, nonzeroish)
def test_scaled_add(a, b):
    got = (ScaledValue.from_complex(a) + ScaledValue.from_complex(b)).value
    assert got == pytest.approx(a + b, rel=1e-9, abs=1e-9 * (abs(a) + abs(b)))


def test_scaled_huge_products_stay_finite():
    big = ScaledValue.from_complex(1e300)
    sq = big * big * big
    assert math.isfinite(sq.log_abs)
    assert sq.log_abs == pytest.approx(3 * math.log(1e300), rel=1e-12)


def test_scaled_from_log_polar():
    s = ScaledValue.from_log_polar(5000.0, math.pi / 3)
    assert s.log_abs == pytest.approx(5000.0)
    assert s.angle == pytest.approx(math.pi / 3)


def test_scaled_sum_matches_complex_sum():
    vals = [1.0, -2.5, 3j, 0.25 - 1j]
    got = scaled_sum(ScaledValue.from_complex(v) for v in vals)
    assert got.value == pytest.approx(sum(vals), rel=1e-12)


def test_scaled_rel_diff():
    a = ScaledValue.from_complex(1.0)
    b = ScaledValue.from_complex(1.0 + 1e-10)
    assert scaled_rel_diff(a, b) == pytest.approx(1e-10, rel=1e-3)
    assert scaled_rel_diff(a, a) == 0.0


# ---------------------------------------------------------------------------
# States and models
# ---------------------------------------------------------------------------


def test_pure_state_requires_unit_norm():
    PureState(np.array([1.0, 0.0], dtype=complex))
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 1.0], dtype=complex))


def test_pure_state_projector():
    plus = PureState(np.array([1.0, 1.0], dtype=complex) / np.sqrt(2))
    p = plus.projector()
    assert np.trace(p).real == pytest.approx(1.0)
    assert np.allclose(p, p.conj().T)
    assert plus.dim == 2


def test_model_validated_flags():
    assert trine_model().validated
    assert basis_model(3).validated
    bad = MeasurementModel(2, np.array([[1.0, 0.0]], dtype=complex))
    assert not bad.validated


def test_validate_povm_reports_deviation():
    rep = validate_povm(trine_model())
    assert rep.ok and rep.max_deviation < 1e-12
    rep = validate_povm(trine_model().rescaled([0.5, 1.0, 1.0]))
    assert not rep.ok and rep.max_deviation > 0.1


def test_model_rotation_preserves_povm(rng):
    u = random_unitary(rng, 2)
    rotated = trine_model().rotated(u)
    assert rotated.validated
    # unit-modulus rescaling also keeps every group resolution intact
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=3))
    assert trine_model().rescaled(phases).validated


def test_model_shape_errors():
    with pytest.raises(ValueError):
        MeasurementModel(2, np.zeros((3, 3), dtype=complex))
    with pytest.raises(ValueError):
        MeasurementModel.from_group_vectors(2, [])


def test_record_validation():
    rec = OutcomeRecord((2, 0, 1))
    assert rec.total == 3 and rec.n_outcomes == 3
    with pytest.raises(ValueError):
        OutcomeRecord((1, -1))


# ---------------------------------------------------------------------------
# Gram data
# ---------------------------------------------------------------------------


def test_gram_from_outcomes_orientation():
    """base[l][k] must be <phi_l|phi_k>: conjugate-linear in the first slot."""
    v = np.array([[1.0, 0.0], [0.0, 1j]], dtype=complex)
    spec = gram_from_outcomes(MeasurementModel(2, v), OutcomeRecord((1, 1)))
    assert spec.base[0, 1] == np.vdot(v[0], v[1])
    assert spec.base[1, 0] == np.vdot(v[1], v[0])
    assert spec.row_mult == (1, 1) and spec.col_mult == (1, 1)


def test_gram_spec_validation(rng):
    base = np.eye(2, dtype=complex)
    spec = GramSpec(base, (2, 1), (1, 2))
    assert spec.size == 3 and spec.n_base == 2
    assert not spec.is_symmetric_case
    assert spec.with_mult((1, 1), (1, 1)).is_symmetric_case
    with pytest.raises(ValueError):
        GramSpec(base, (1,), (1, 1))
    with pytest.raises(ValueError):
        GramSpec(base, (2, 1), (1, 1))  # unequal totals


# ---------------------------------------------------------------------------
# Density matrices
# ---------------------------------------------------------------------------


def test_density_invariant_checks():
    check_density_invariants(np.eye(2) / 2)
    with pytest.raises(InvariantViolation):
        check_density_invariants(np.eye(2))  # trace 2
    with pytest.raises(InvariantViolation):
        check_density_invariants(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(InvariantViolation):
        check_density_invariants(np.array([[1.5, 0.0], [0.0, -0.5]]))


def test_density_matrix_eigenvalues():
    rho = DensityMatrix.from_matrix(np.diag([0.75, 0.25]))
    assert rho.dim == 2
    assert np.allclose(sorted(rho.eigenvalues()), [0.25, 0.75])


def test_trace_distance_known_values():
    zero = np.diag([1.0, 0.0])
    one = np.diag([0.0, 1.0])
    assert trace_distance(zero, one) == pytest.approx(1.0)
    assert trace_distance(zero, zero) == 0.0
    assert trace_distance(zero, np.eye(2) / 2) == pytest.approx(0.5)
    assert trace_distance(DensityMatrix.from_matrix(zero), DensityMatrix.from_matrix(one)) == pytest.approx(1.0)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_trace_distance_is_a_metric(seed):
    g = np.random.default_rng(seed)

    def rand_rho():
        a = g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2))
        h = a @ a.conj().T
        return h / np.trace(h).real

    x, y, z = rand_rho(), rand_rho(), rand_rho()
    assert trace_distance(x, y) == pytest.approx(trace_distance(y, x))
    assert trace_distance(x, z) <= trace_distance(x, y) + trace_distance(y, z) + 1e-12
    assert 0.0 <= trace_distance(x, y) <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# Monte Carlo configs
# ---------------------------------------------------------------------------


def test_mc_config_block_size():
    assert McConfig(samples=1000).block_size == 10
    assert McConfig(samples=1000, batch=64).block_size == 64
    assert McConfig(samples=7).block_size == 1
    with pytest.raises(ValueError):
        McConfig(samples=0)
    with pytest.raises(ValueError):
        McConfig(samples=10, batch=0)


def test_mc_estimate_sigma_distance():
    est = McEstimate(
        mean=np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex),
        stderr=np.array([[0.1, 0.0], [0.0, 0.1]]),
        batches=100,
    )
    ref = np.array([[1.2, 0.0], [0.0, 1.0]])
    sig = est.sigma_distance(ref)
    assert sig[0, 0] == pytest.approx(2.0)
    assert sig[1, 1] == 0.0
    off = est.sigma_distance(np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert np.isinf(off[0, 1])


def test_alpha_param():
    assert AlphaParam(2.0).as_production_int() == 2
    assert not AlphaParam(1.5).is_integer
    with pytest.raises(ValueError):
        AlphaParam(1.5).as_production_int()
    with pytest.raises(ValueError):
        AlphaParam(0.0).as_production_int()
