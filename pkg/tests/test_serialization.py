"""JSON encoding: exact round-trips and strict schema rejection."""
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import sic_qubit_model, trine_model
from permtomo.serialization import (
    SchemaError,
    complex_from_json,
    complex_to_json,
    density_from_json,
    density_to_json,
    dumps_json,
    gram_from_json,
    gram_to_json,
    load_json_file,
    matrix_from_json,
    matrix_to_json,
    model_from_json,
    model_to_json,
    pure_state_from_json,
    pure_state_to_json,
    record_from_json,
    record_to_json,
    scaled_from_json,
    scaled_to_json,
    vector_from_json,
    vector_to_json,
)
from permtomo.types import (
    DensityMatrix,
    GramSpec,
    MeasurementModel,
    OutcomeRecord,
    PureState,
    ScaledValue,
)

finite_c = st.complex_numbers(max_magnitude=1e12, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------------------
# Scalars, vectors, matrices
# ---------------------------------------------------------------------------


@given(finite_c)
def test_complex_roundtrip_is_exact(z):
    encoded = json.loads(json.dumps(complex_to_json(z)))
    assert complex_from_json(encoded) == z


def test_complex_schema_errors():
    for bad in ([1.0], [1.0, 2.0, 3.0], "1+2j", {"re": 1}, [1.0, "x"], [True, 0.0]):
        with pytest.raises(SchemaError):
            complex_from_json(bad)


@given(st.lists(finite_c, min_size=1, max_size=6))
def test_vector_roundtrip(vals):
    v = np.array(vals, dtype=complex)
    back = vector_from_json(json.loads(json.dumps(vector_to_json(v))))
    assert np.array_equal(back, v)


def test_matrix_roundtrip_and_errors(rng):
    m = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)
    with pytest.raises(SchemaError):
        matrix_from_json([[[1.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]]])  # ragged
    with pytest.raises(SchemaError):
        matrix_from_json("nope")


# ---------------------------------------------------------------------------
# Domain objects
# ---------------------------------------------------------------------------


def test_model_roundtrip_preserves_groups_and_validation():
    for model in (trine_model(), sic_qubit_model()):
        back = model_from_json(json.loads(dumps_json(model_to_json(model))))
        assert back.dim == model.dim
        assert back.groups == model.groups
        assert np.array_equal(back.outcomes, model.outcomes)
        assert back.validated == model.validated


def test_unnormalized_model_roundtrips_unvalidated():
    model = MeasurementModel(2, np.array([[0.3, 0.1j]], dtype=complex))
    back = model_from_json(model_to_json(model))
    assert not back.validated
    assert np.array_equal(back.outcomes, model.outcomes)


def test_model_schema_errors():
    with pytest.raises(SchemaError):
        model_from_json({"dim": 2})
    with pytest.raises(SchemaError):
        model_from_json({"dim": 2, "groups": [[[1.0, 0.0]]]})  # vector, not pair list
    with pytest.raises(SchemaError):
        model_from_json({"dim": "two", "groups": []})


def test_record_roundtrip_and_errors():
    rec = OutcomeRecord((4, 0, 1))
    assert record_from_json(record_to_json(rec)).counts == rec.counts
    with pytest.raises(SchemaError):
        record_from_json({"counts": [1.5, 2]})
    with pytest.raises(SchemaError):
        record_from_json({"counts": [-1, 2]})
    with pytest.raises(SchemaError):
        record_from_json({"count": [1]})


def test_density_roundtrip():
    rho = DensityMatrix.from_matrix(np.array([[0.7, 0.1j], [-0.1j, 0.3]]))
    back = density_from_json(density_to_json(rho))
    assert np.array_equal(back.matrix, rho.matrix)
    with pytest.raises(SchemaError):
        density_from_json({"dim": 3, "rows": matrix_to_json(np.eye(2))})


def test_pure_state_roundtrip():
    psi = PureState(np.array([0.6, 0.8j], dtype=complex))
    back = pure_state_from_json(pure_state_to_json(psi))
    assert np.array_equal(back.amplitudes, psi.amplitudes)


def test_gram_roundtrip(rng):
    v = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
    spec = GramSpec(v.conj() @ v.T, (2, 0, 1), (1, 1, 1))
    back = gram_from_json(json.loads(dumps_json(gram_to_json(spec))))
    assert np.array_equal(back.base, spec.base)
    assert back.row_mult == spec.row_mult
    assert back.col_mult == spec.col_mult


def test_scaled_roundtrip_and_overflow_field():
    s = ScaledValue.from_complex(-2.5 + 1j)
    enc = scaled_to_json(s)
    assert enc["approx"] == pytest.approx(abs(s.value))
    back = scaled_from_json(enc)
    assert back.mantissa == s.mantissa and back.log_scale == s.log_scale
    huge = ScaledValue.from_log_polar(1e5)
    assert scaled_to_json(huge)["approx"] is None


# ---------------------------------------------------------------------------
# File-level behavior
# ---------------------------------------------------------------------------


def test_dumps_json_is_deterministic():
    a = dumps_json({"b": 1, "a": [1, 2]})
    b = dumps_json({"a": [1, 2], "b": 1})
    assert a == b
    assert a.endswith("\n")


def test_load_json_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"k": 1}\n')
    assert load_json_file(path) == {"k": 1}
    with pytest.raises(SchemaError):
        load_json_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(SchemaError):
        load_json_file(bad)
