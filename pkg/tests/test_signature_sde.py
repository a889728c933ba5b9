from dataclasses import replace

import numpy as np
import pytest

from algebra.words import BasisOrder, LinearFunctional, word_to_index
from system.signature_sde import (
    NoiseCovariance,
    assemble_system,
    build_vector_field_matrices,
    functional_to_output,
    ito_drift,
    output_to_functional,
)
from utils.errors import CorrelationError, InvariantViolationError


def _entries(M) -> set:
    coo = M.tocoo()
    return set(zip(coo.row.tolist(), coo.col.tolist()))


def test_vector_fields_degree_one():
    N1, N2 = build_vector_field_matrices(2, 1)
    assert N1.shape == (3, 3)
    assert _entries(N1) == {(1, 0)}
    assert _entries(N2) == {(2, 0)}


def test_vector_field_single_letter():
    (N1,) = build_vector_field_matrices(1, 2)
    assert _entries(N1) == {(1, 0), (2, 1)}


def test_vector_field_appends_letter():
    order = BasisOrder(3, 3)
    N = build_vector_field_matrices(3, 3)
    for word in [(), (2,), (1, 3)]:
        for i in range(1, 4):
            col = N[i - 1][:, word_to_index(word, order)].toarray().ravel()
            assert np.flatnonzero(col).tolist() == [word_to_index(word + (i,), order)]


@pytest.mark.parametrize("d, m", [(2, 3), (3, 3), (4, 5)])
def test_products_of_length_m_plus_one_vanish(d, m):
    rng = np.random.default_rng(d * 10 + m)
    N = build_vector_field_matrices(d, m)
    n = N[0].shape[0]
    e0 = np.zeros(n)
    e0[0] = 1.0
    for _ in range(200):
        letters = rng.integers(0, d, size=m + 1)
        product = N[letters[0]]
        for i in letters[1:]:
            product = product @ N[i]
        assert product.nnz == 0 or not np.any(product.data)
        # one factor fewer still reaches the top level from the empty word
        v = e0
        for i in letters[1:]:
            v = N[i] @ v
        assert np.any(v)


def test_drift_without_noise_is_time_field():
    N = build_vector_field_matrices(2, 1)
    A = ito_drift(N, NoiseCovariance(np.array([[1.0]])))
    assert (A != N[0]).nnz == 0


def test_drift_correction_term():
    order = BasisOrder(2, 2)
    N = build_vector_field_matrices(2, 2)
    A = ito_drift(N, NoiseCovariance(np.array([[1.0]]))).toarray()
    expected = N[0].toarray()
    expected[word_to_index((2, 2), order), 0] = 0.5
    assert np.array_equal(A, expected)


def test_drift_with_zero_covariance():
    N = build_vector_field_matrices(3, 2)
    A = ito_drift(N, NoiseCovariance(np.zeros((2, 2))))
    assert (A != N[0]).nnz == 0


def test_drift_is_nilpotent(small_system):
    A = small_system.A.toarray()
    assert np.any(np.linalg.matrix_power(A, small_system.m))
    assert not np.any(np.linalg.matrix_power(A, small_system.m + 1))


def test_noise_covariance_rejects_indefinite():
    with pytest.raises(CorrelationError):
        NoiseCovariance(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(CorrelationError):
        NoiseCovariance.from_correlation(np.array([[1.0, 0.5], [0.5, 2.0]]))


def test_noise_covariance_factor():
    K = NoiseCovariance.from_correlation(np.array([[1.0, -0.9], [-0.9, 1.0]]))
    F = K.factor()
    assert np.allclose(F @ F.T, K.K, atol=1e-14)
    assert K.labels == (2, 3)


def test_assemble_defaults():
    system = assemble_system(4, 5, NoiseCovariance.from_correlation(np.eye(3)))
    assert system.n == 1365
    assert system.z[0] == 1.0 and np.count_nonzero(system.z) == 1
    assert system.L.shape == (1, 1365) and system.L[0, 0] == 1.0
    assert len(system.noise_matrices) == 3


def test_assemble_from_functional():
    order = BasisOrder(3, 2)
    f = LinearFunctional({(): 1.0, (2,): 0.2, (3, 1): -0.5})
    system = assemble_system(3, 2, np.eye(2), L=f)
    assert np.array_equal(system.L[0], f.to_vector(order))
    assert output_to_functional(system.L, order) == f
    assert np.array_equal(functional_to_output([f, f], order), np.vstack([system.L, system.L]))


def test_verify_detects_tampering(small_system):
    small_system.verify()
    with pytest.raises(InvariantViolationError):
        replace(small_system, A=small_system.A * 2.0).verify()
    with pytest.raises(InvariantViolationError):
        replace(small_system, N=small_system.N[::-1]).verify()
    with pytest.raises(InvariantViolationError):
        replace(small_system, z=np.ones(3)).verify()
