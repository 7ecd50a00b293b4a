import math

import numpy as np
import pytest

from freedim.matrixcore import (
    DefectTooLarge,
    MatrixTuple,
    NonFinite,
    NotDivisible,
    OrbitOptions,
    align_matrix_units,
    canonical_units,
    eig_hermitian,
    fit_szarek_constant,
    format_htup,
    gue_hermitian,
    haar_unitary,
    hermitian_to_units,
    intertwiner_dimension,
    irreducible_decomposition,
    operator_norm,
    orbit_distance,
    parse_htup,
    random_hermitian_tuple,
    sorted_spectrum_distance,
    szarek_log_bound,
    tuple_op_norm,
    tuple_trace_norm,
    unit_defect,
    units_to_hermitian,
)


def _conjugate_units(units, v):
    return np.einsum("ij,stjk,lk->stil", v, units, v.conj())


def test_matrix_tuple_symmetrizes():
    t = MatrixTuple(np.array([[[0, 1], [0, 0]]], dtype=complex))
    assert np.allclose(t.mats[0], [[0, 0.5], [0.5, 0]])
    with pytest.raises(ValueError):
        MatrixTuple(np.zeros((1, 2, 3)))
    with pytest.raises(NonFinite):
        operator_norm(np.array([[np.nan]]))


def test_operator_norm_examples():
    assert operator_norm(np.diag([1.0, -2.0])) == pytest.approx(2)
    assert operator_norm(np.zeros((3, 3))) == 0
    assert operator_norm(np.array([[0, 1], [0, 0]])) == pytest.approx(1)


def test_tuple_norms():
    assert tuple_op_norm(MatrixTuple.of(np.diag([1.0, 0]), np.diag([0, 3.0]))) == pytest.approx(3)
    assert tuple_op_norm(MatrixTuple.of(np.eye(2), 2 * np.eye(2))) == pytest.approx(2)
    assert tuple_trace_norm(MatrixTuple.of(np.eye(5))) == pytest.approx(1)
    assert tuple_trace_norm(MatrixTuple.of(np.diag([3.0, 0, 0, 0]))) == pytest.approx(1.5)
    a = gue_hermitian(4, 1)
    assert tuple_trace_norm(MatrixTuple.of(a, a)) == pytest.approx(math.sqrt(2) * tuple_trace_norm(MatrixTuple.of(a)))


def test_eig_hermitian():
    vals, vecs = eig_hermitian(np.diag([2.0, 1.0]))
    assert np.allclose(vals, [1, 2])
    assert np.allclose(np.abs(vecs), [[0, 1], [1, 0]])
    vals, _ = eig_hermitian(np.array([[0, 1], [1, 0]]))
    assert np.allclose(vals, [-1, 1])
    a = gue_hermitian(8, 3)
    vals, vecs = eig_hermitian(a)
    assert np.linalg.norm(vecs @ np.diag(vals) @ vecs.conj().T - a) <= 1e-9


def test_haar_unitary():
    u = haar_unitary(1, 5)
    assert abs(abs(u[0, 0]) - 1) < 1e-12
    assert np.array_equal(haar_unitary(6, 9), haar_unitary(6, 9))
    rng = np.random.default_rng(0)
    mean = np.mean([abs(haar_unitary(4, rng)[0, 0]) ** 2 for _ in range(10_000)])
    assert abs(mean - 0.25) <= 0.01


def test_gue():
    g = gue_hermitian(1, 4)
    assert g.shape == (1, 1) and g[0, 0].imag == 0
    assert np.array_equal(gue_hermitian(5, 2), gue_hermitian(5, 2))
    radius = np.max(np.abs(np.linalg.eigvalsh(gue_hermitian(200, 11))))
    assert abs(radius - 2) <= 0.15


def test_orbit_distance_examples():
    a = MatrixTuple.of(np.diag([0.0, 2.0]))
    d, w = orbit_distance(a, a)
    assert d == 0 and np.allclose(w, np.eye(2))
    d, _ = orbit_distance(a, MatrixTuple.of(np.diag([1.0, 3.0])))
    assert d == pytest.approx(1.0, abs=1e-9)
    d, _ = orbit_distance(MatrixTuple.of(np.diag([0.0, 1.0])), MatrixTuple.of(np.diag([1.0, 0.0])))
    assert d <= 1e-9


def test_orbit_distance_witness_is_consistent():
    a, b = random_hermitian_tuple(2, 4, 1), random_hermitian_tuple(2, 4, 2)
    d, w = orbit_distance(a, b, OrbitOptions(restarts=4, seed=3))
    assert np.allclose(w @ w.conj().T, np.eye(4), atol=1e-10)
    assert tuple_trace_norm(a - b.conjugate_by(w)) == pytest.approx(d, abs=1e-12)
    assert d <= tuple_trace_norm(a - b) + 1e-12
    # distance to a conjugate is zero
    v = haar_unitary(4, 8)
    d, _ = orbit_distance(a, a.conjugate_by(v), OrbitOptions(restarts=4, seed=1))
    assert d <= 1e-6


def test_sorted_spectrum_distance():
    a = gue_hermitian(5, 1)
    assert sorted_spectrum_distance(a, a) == 0
    assert sorted_spectrum_distance(np.diag([0.0, 2]), np.diag([1.0, 3])) == pytest.approx(1)
    v = haar_unitary(5, 2)
    b = gue_hermitian(5, 3)
    assert sorted_spectrum_distance(a, v @ b @ v.conj().T) == pytest.approx(sorted_spectrum_distance(a, b))


def test_szarek():
    assert szarek_log_bound(3, 2.0, 2.0) == 0
    assert szarek_log_bound(2, 0.5, 6) == pytest.approx(4 * math.log(12))
    assert szarek_log_bound(2, 0.4, 6) > szarek_log_bound(2, 0.5, 6)
    assert fit_szarek_constant(samples=300) >= 1


@pytest.mark.parametrize("k,n", [(4, 2), (6, 3), (8, 2)])
def test_align_exact_units(k, n):
    units = canonical_units(k, n)
    assert unit_defect(units) <= 1e-14
    w, res = align_matrix_units(units, n)
    assert res <= 1e-10
    v = haar_unitary(k, k + n)
    w, res = align_matrix_units(_conjugate_units(units, v), n)
    assert res <= 1e-8


def test_align_entrywise_perturbation():
    rng = np.random.default_rng(4)
    units = _conjugate_units(canonical_units(4, 2), haar_unitary(4, rng))
    noise = rng.uniform(0, 1, units.shape) * np.exp(2j * np.pi * rng.uniform(size=units.shape))
    _, res = align_matrix_units(units + 1e-3 * noise, 2)
    assert res <= 1e-2


def test_align_errors():
    with pytest.raises(NotDivisible):
        align_matrix_units(np.zeros((2, 2, 5, 5)), 2)
    units = canonical_units(4, 2)
    units[0, 1] *= 2
    with pytest.raises(DefectTooLarge):
        align_matrix_units(units, 2)


def test_hermitian_encoding_roundtrip():
    units = _conjugate_units(canonical_units(6, 3), haar_unitary(6, 0))
    herm = units_to_hermitian(units)
    assert np.allclose(herm, herm.conj().transpose(0, 2, 1))
    assert np.allclose(hermitian_to_units(herm, 3), units)


def test_irreducible_decomposition():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    pauli = np.stack([x, z])
    amp = np.stack([np.kron(np.eye(3), m) for m in pauli])
    v = haar_unitary(6, 1)
    amp = np.einsum("ij,njk,lk->nil", v, amp, v.conj())
    blocks = irreducible_decomposition(amp)
    assert [(b.dim, b.multiplicity) for b in blocks] == [(2, 3)]
    assert intertwiner_dimension(pauli, amp) == 3
    diag = np.stack([np.diag([0.0, 0, 1])])
    assert sorted((b.dim, b.multiplicity) for b in irreducible_decomposition(diag)) == [(1, 1), (1, 2)]


def test_htup_roundtrip():
    t = random_hermitian_tuple(2, 3, 0)
    text = format_htup(t)
    assert text.startswith("HTUP1 3 2\n")
    assert parse_htup(text) == t
    with pytest.raises(ValueError):
        parse_htup("HTUP1 3 2\n0 0\n")
