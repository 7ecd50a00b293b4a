import numpy as np
import pytest

from freedim.matrixcore import MatrixTuple, random_hermitian_tuple
from freedim.mfcheck import (
    ModelSequence,
    RankTooSmall,
    SizeIncompatible,
    WrongArity,
    build_free_product_model,
    check_approximation_property,
    check_norm_convergence,
    classify_trend,
    krylov_basis,
    mf_report,
    mixed_word_battery,
    model_sequence,
    quasidiagonal_compress,
    two_projection_oracle,
)
from freedim.microstates import Amplification, MatrixModel, NormTable, Spectrum, target_norms
from freedim.ncpoly import PolyBattery, default_battery, evaluate, parse_poly

S01 = Spectrum((0.0, 1.0))
PAULI = MatrixTuple(np.stack([np.array([[0, 1], [1, 0]], dtype=complex), np.diag([1.0, -1.0]).astype(complex)]))


def poly(text):
    return parse_poly(text, 2)


@pytest.mark.parametrize("text,value", [
    ("X1", 1.0),
    ("X2", 1.0),
    ("X1*X2*X1", 1.0),
    ("X1*X2 - X2*X1", 0.5),
    ("X1 + X2", 2.0),
    ("X1 - X2", 1.0),
    ("1", 1.0),
])
def test_oracle_values(text, value):
    assert two_projection_oracle(poly(text)) == pytest.approx(value, abs=1e-9)


def test_oracle_matches_dense_angle_scan():
    w = poly("X1*X2*X1*X2 - 0.3*X2*X1 + 0.1i*X1")
    p = np.diag([1.0, 0.0])
    best = 0.0
    for th in np.linspace(0, np.pi / 2, 20001):
        v = np.array([np.cos(th), np.sin(th)])
        best = max(best, np.linalg.norm(evaluate(w, np.stack([p, np.outer(v, v)])), 2))
    # the one-dimensional representations
    for a in (0.0, 1.0):
        for b in (0.0, 1.0):
            best = max(best, np.linalg.norm(evaluate(w, np.array([[[a]], [[b]]])), 2))
    value = two_projection_oracle(w)
    assert best - 1e-9 <= value <= best + 1e-6


def test_oracle_arity():
    with pytest.raises(WrongArity):
        two_projection_oracle(parse_poly("X1", 3))


def test_model_sequence_validation():
    with pytest.raises(ValueError):
        ModelSequence(((4, random_hermitian_tuple(1, 4, 0)), (2, random_hermitian_tuple(1, 2, 0))), S01)
    with pytest.raises(ValueError):
        ModelSequence(((4, random_hermitian_tuple(1, 3, 0)),), S01)
    with pytest.raises(SizeIncompatible):
        model_sequence(Amplification(Spectrum((0.0,)), 2), [4, 5])


def test_classify_trend():
    assert classify_trend([1.0, 0.5, 0.1]) == "improving"
    assert classify_trend([0.1, 0.5, 1.0]) == "worsening"
    assert classify_trend([1.0, 1.0, 1.0]) == "flat"
    assert classify_trend([0.0, 0.0]) == "flat"


def test_convergence_equispaced_interval():
    battery = PolyBattery((parse_poly("1", 1), parse_poly("X1", 1), parse_poly("X1 - X1^2", 1)), 2)
    table = NormTable(battery, (1.0, 1.0, 0.25), 2.0)
    models = tuple((k, MatrixTuple(np.diag(np.linspace(0, 1, k))[None])) for k in (10, 20, 40))
    rep = check_norm_convergence(ModelSequence(models, table, certified=False), battery)
    worst = rep.deviation_table().max(axis=0)
    assert np.all(np.diff(worst) < 0)
    assert np.all(worst <= 2 / (np.array(rep.sizes) - 1) ** 2)
    assert rep.trend == "improving"


def test_convergence_exact_and_wrong_models():
    model = MatrixModel(PAULI)
    battery = default_battery(2, 3)
    ms = ModelSequence(((2, PAULI),), model)
    assert check_norm_convergence(ms, battery).max_final <= 1e-12
    wrong = ModelSequence(tuple((k, MatrixTuple(np.diag(np.repeat([0.0, 2.0], k // 2))[None])) for k in (4, 8)), S01)
    rep = check_norm_convergence(wrong, default_battery(1, 2))
    assert rep.max_final >= 1 and rep.trend == "flat"


def test_approximation_property():
    assert check_approximation_property(S01, [4, 5, 6], 0.05).passed
    amp = Amplification(Spectrum((0.0,)), 2)
    rep = check_approximation_property(amp, [4, 5], 0.05, restarts=2, iters=300)
    (k4, d4, ok4), (k5, d5, ok5) = rep.per_k
    assert ok4 and d4 <= 1e-10
    assert not ok5 and d5 >= 0.1
    assert check_approximation_property(MatrixModel(PAULI), [2, 4, 6], 0.05).passed


def test_free_product_model_vs_oracle():
    seq = model_sequence(S01, [2])
    battery = mixed_word_battery()
    assert len(battery) == 12
    fp = build_free_product_model(seq, seq, [40, 80], seeds=3)
    assert fp.certified and fp.sizes == [40, 80]
    oracle = target_norms(fp.presentation, battery)
    for _, t in fp.models:
        assert np.all(battery.norms(t) <= oracle + 1e-9)


def test_free_product_without_rotation_degenerates():
    seq = model_sequence(S01, [2])
    fp = build_free_product_model(seq, seq, [20], rotate=False)
    rep = check_norm_convergence(fp, mixed_word_battery())
    assert rep.max_final >= 0.4


def test_free_product_with_scalar_factor():
    seq = model_sequence(S01, [2])
    scalar = model_sequence(Spectrum((0.5,)), [1])
    fp = build_free_product_model(seq, scalar, [10, 20], seeds=[1, 2])
    rep = check_norm_convergence(fp, mixed_word_battery())
    assert rep.max_final <= 1e-10


def test_free_product_size_check():
    seq = model_sequence(S01, [2])
    with pytest.raises(SizeIncompatible):
        build_free_product_model(seq, seq, [21])
    with pytest.raises(ValueError):
        build_free_product_model(seq, seq, [20, 40], seeds=[1])


def test_krylov_compression_exactness():
    t = random_hermitian_tuple(1, 32, 0)
    rng = np.random.default_rng(1)
    vecs = rng.standard_normal((2, 32))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    small, rep = quasidiagonal_compress(t, 16, vecs, degree=3)
    assert small.k == 16 and rep.max_vector_defect <= 1e-9
    with pytest.raises(RankTooSmall):
        quasidiagonal_compress(random_hermitian_tuple(2, 32, 0), 16, vecs, degree=3)


def test_compression_full_space_and_blocks():
    t = random_hermitian_tuple(2, 6, 0)
    full, rep = quasidiagonal_compress(t, 6, np.eye(6)[:1], battery=default_battery(2, 2))
    assert rep.max_vector_defect <= 1e-12 and np.max(rep.norm_defects) <= 1e-10
    a, b = random_hermitian_tuple(1, 3, 1).mats[0], random_hermitian_tuple(1, 3, 2).mats[0]
    mats = np.zeros((1, 6, 6), dtype=complex)
    mats[0, :3, :3], mats[0, 3:, 3:] = a, b
    block = MatrixTuple(mats)
    battery = default_battery(1, 2)
    corner, rep = quasidiagonal_compress(block, 3, np.eye(6)[:1], battery=battery)
    assert rep.max_vector_defect <= 1e-12
    expected = np.abs(battery.norms(MatrixTuple(a[None])) - battery.norms(block))
    assert np.allclose(rep.norm_defects, expected, atol=1e-10)


def test_krylov_bases_are_nested():
    t = random_hermitian_tuple(2, 10, 3)
    v = np.eye(10)[:1]
    b4 = krylov_basis(t.mats, v, 4)
    b7 = krylov_basis(t.mats, v, 7)
    assert np.allclose(b7[:, :4], b4)
    assert np.allclose(b7.conj().T @ b7, np.eye(7), atol=1e-12)


def test_mf_report_shape():
    seq = model_sequence(S01, [2])
    fp = build_free_product_model(seq, seq, [10, 20], seeds=0)
    rep = mf_report(fp, mixed_word_battery(), [0], 0.08)
    assert rep["sizes"] == [10, 20] and len(rep["deviations"]) == 12
