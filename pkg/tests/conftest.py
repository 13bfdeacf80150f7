"""Shared builders for the test suite: reference models and random families.

Everything here is deterministic; tests that want randomness create their
own seeded generator (or use the ``rng`` fixture) so failures replay.
"""
import numpy as np
import pytest

from permtomo.types import MeasurementModel, OutcomeRecord


def trine_model() -> MeasurementModel:
    """Three symmetric real qubit outcomes at 120 degrees, weight 2/3."""
    angles = 2.0 * np.pi * np.arange(3) / 3.0
    vecs = np.sqrt(2.0 / 3.0) * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return MeasurementModel(2, vecs.astype(complex))


def sic_qubit_model() -> MeasurementModel:
    """Tetrahedral qubit POVM: four outcomes, informationally complete."""
    directions = [(0.0, 0.0, 1.0)]
    for j in range(3):
        phi = 2.0 * np.pi * j / 3.0
        directions.append(
            (
                2.0 * np.sqrt(2.0) / 3.0 * np.cos(phi),
                2.0 * np.sqrt(2.0) / 3.0 * np.sin(phi),
                -1.0 / 3.0,
            )
        )
    vecs = []
    for x, y, z in directions:
        theta = np.arccos(np.clip(z, -1.0, 1.0))
        phi = np.arctan2(y, x)
        amp = np.array(
            [np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)],
            dtype=complex,
        )
        vecs.append(amp / np.sqrt(2.0))
    return MeasurementModel(2, np.array(vecs))


def basis_model(dim: int) -> MeasurementModel:
    """One orthonormal-basis measurement in dimension ``dim``."""
    return MeasurementModel(dim, np.eye(dim, dtype=complex))


def mub_qubit_model() -> MeasurementModel:
    """Three mutually unbiased qubit bases as three POVM groups."""
    s = 1.0 / np.sqrt(2.0)
    z = np.eye(2, dtype=complex)
    x = np.array([[s, s], [s, -s]], dtype=complex)
    y = np.array([[s, 1j * s], [s, -1j * s]], dtype=complex)
    return MeasurementModel.from_group_vectors(2, [z, x, y])


def random_vectors(rng: np.random.Generator, m: int, dim: int) -> np.ndarray:
    """Generic complex outcome family; not a POVM, fine for kernel-level work."""
    v = rng.normal(size=(m, dim)) + 1j * rng.normal(size=(m, dim))
    return v / np.sqrt(dim)


def random_model(rng: np.random.Generator, m: int, dim: int) -> MeasurementModel:
    return MeasurementModel(dim, random_vectors(rng, m, dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_counts(rng: np.random.Generator, m: int, total_max: int) -> OutcomeRecord:
    """Multinomial counts over m outcomes, occasionally zeroing one slot."""
    total = int(rng.integers(1, total_max + 1))
    c = rng.multinomial(total, np.ones(m) / m)
    if m > 1 and rng.random() < 0.3:
        c[rng.integers(m)] = 0
    return OutcomeRecord(tuple(int(x) for x in c))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260822)
