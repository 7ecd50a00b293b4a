import math
from fractions import Fraction

import numpy as np
import pytest

from freedim.dimension import (
    DimensionReport,
    InconsistentMoments,
    InfeasibleScale,
    NotExact,
    TangentMode,
    TangentModel,
    TraceSpec,
    UnsupportedPresentation,
    delta_top_exponent,
    enumerate_strata,
    k2_tracial_exponent,
    ktop2_exponent,
    moment_defect,
    orbit_capacity,
    stability_probe,
    tangent_rank,
)
from freedim.matrixcore import MatrixTuple, random_hermitian_tuple
from freedim.microstates import (
    Amplification,
    DirectSum,
    FreeProduct,
    MatrixModel,
    NormTable,
    Spectrum,
    faithful_multiplicities,
    sample_exact_spectrum,
)
from freedim.ncpoly import default_battery

S01 = Spectrum((0.0, 1.0))
S012 = Spectrum((0.0, 1.0, 2.0))
PAULI = MatrixTuple(np.stack([np.array([[0, 1], [1, 0]], dtype=complex), np.diag([1.0, -1.0]).astype(complex)]))


def simultaneous(p):
    return TangentModel(TangentMode.SIMULTANEOUS, p)


@pytest.mark.parametrize("mult", [(1, 3), (2, 2), (3, 1), (1, 5), (4, 2)])
def test_rank_closed_form(mult):
    k = sum(mult)
    t = sample_exact_spectrum((0, 1), mult, k, seed=k).tuple
    assert tangent_rank(t, simultaneous(S01)) == k * k - sum(m * m for m in mult)


def test_scalar_rank_zero():
    t = sample_exact_spectrum((2.0,), (5,), 5, seed=0).tuple
    assert tangent_rank(t, simultaneous(Spectrum((2.0,)))) == 0


def test_independent_pair_rank():
    fp = FreeProduct(S01, S01)
    p = sample_exact_spectrum((0, 1), (4, 4), 8, seed=1).tuple
    q = sample_exact_spectrum((0, 1), (4, 4), 8, seed=2).tuple
    t = MatrixTuple(np.concatenate([p.mats, q.mats]))
    assert tangent_rank(t, TangentModel(TangentMode.INDEPENDENT, fp)) == 64


def test_rank_rejects_inexact():
    t = random_hermitian_tuple(1, 4, 0)
    with pytest.raises(NotExact):
        tangent_rank(t, simultaneous(S01))
    with pytest.raises(UnsupportedPresentation):
        TangentModel(TangentMode.INDEPENDENT, S01)


@pytest.mark.parametrize("npts", [2, 3, 4])
def test_balanced_stratum_maximizes(npts):
    p = Spectrum(tuple(float(x) for x in range(npts)))
    for k in range(npts, 13):
        strata = enumerate_strata(p, k, check=False)
        best = max(s.rank for s in strata)
        q, r = divmod(k, npts)
        assert best == k * k - (npts - r) * q * q - r * (q + 1) ** 2
        assert len(strata) == math.comb(k - 1, npts - 1)


def test_delta_top_examples():
    rep = delta_top_exponent(S01, [8, 12, 16])
    assert rep.values() == [0.5, 0.5, 0.5] and rep.exact == Fraction(1, 2)
    assert delta_top_exponent(Spectrum((1.0,)), [3, 4]).estimate == 0
    assert delta_top_exponent(FreeProduct(S01, S01), [8, 12]).exact == 1
    assert delta_top_exponent(FreeProduct(S01, S012), [6, 12]).exact == Fraction(7, 6)
    amp = Amplification(Spectrum((0.0,)), 2)
    assert delta_top_exponent(amp, [4, 8]).exact == Fraction(3, 4)
    assert delta_top_exponent(MatrixModel(PAULI), [4, 8]).exact == Fraction(3, 4)


def test_delta_top_odd_k_and_empty():
    rep = delta_top_exponent(S01, [5])
    assert rep.exact == Fraction(12, 25)
    rep = delta_top_exponent(Amplification(Spectrum((0.0,)), 2), [5])
    assert rep.estimate == -math.inf


def test_delta_top_additivity():
    for k in (6, 9, 12):
        parts = [delta_top_exponent(f, [k]).exact for f in (S01, S012)]
        assert delta_top_exponent(FreeProduct(S01, S012), [k]).exact == sum(parts)


def test_delta_top_unsupported():
    table = NormTable(default_battery(1, 1), (1.0, 1.0), 2.0)
    with pytest.raises(UnsupportedPresentation):
        delta_top_exponent(table, [4])


def test_ktop2_examples():
    rep = ktop2_exponent(S01, [20])
    assert rep.estimate == math.log(19) / 400
    assert ktop2_exponent(MatrixModel(PAULI), [4, 6, 8]).values() == [0.0, 0.0, 0.0]
    vals = ktop2_exponent(S012, list(range(10, 31))).values()
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_ktop2_free_products():
    finite = ktop2_exponent(FreeProduct(S01, S01), [8, 16, 32])
    assert math.isfinite(finite.estimate)
    assert [r.diagnostics["orbit_quotient_dim"] for r in finite.rows] == [4, 8, 16]
    assert finite.values()[-1] < finite.values()[0]
    diverging = ktop2_exponent(FreeProduct(S01, S012), [6, 12])
    assert diverging.estimate == math.inf


def test_report_json_roundtrip():
    rep = ktop2_exponent(FreeProduct(S01, S012), [6, 12])
    back = DimensionReport.from_dict(rep.to_dict())
    assert back.estimate == math.inf and back.values() == rep.values()
    rep = delta_top_exponent(S01, [4, 6])
    assert DimensionReport.from_dict(rep.to_dict()).exact == Fraction(1, 2)
    assert "estimate" in rep.table()


def test_trace_spec_validation():
    with pytest.raises(InconsistentMoments):
        TraceSpec({(): 1.0, (1,): 2.0, (1, 1): 1.0}, 2)
    with pytest.raises(InconsistentMoments):
        TraceSpec({(): 2.0}, 0)
    with pytest.raises(InconsistentMoments):
        TraceSpec.from_weights(S01, [0.7, 0.7], 2)
    ts = TraceSpec.from_weights(S01, [0.5, 0.5], 4)
    assert ts.moments[(1, 1, 1)] == pytest.approx(0.5)
    assert set(ts.truncated(2).moments) == {(), (1,), (1, 1)}


def test_moment_defect_examples():
    point = TraceSpec.from_weights(Spectrum((1.0,)), [1.0], 3)
    assert moment_defect(MatrixTuple(np.eye(3)[None]), point) <= 1e-12
    assert moment_defect(MatrixTuple(np.zeros((1, 3, 3))), point) == pytest.approx(1)
    half = TraceSpec.from_weights(S01, [0.5, 0.5], 4)
    t = MatrixTuple(np.diag([0.0, 0, 1, 1])[None])
    assert moment_defect(t, half) <= 1e-12
    odd = MatrixTuple(np.diag([0.0, 0, 1, 1, 1])[None])
    assert moment_defect(odd, half) <= 1 / 5 + 1e-12


def test_k2_tracial_examples():
    point = TraceSpec.from_weights(Spectrum((0.0,)), [1.0], 2)
    rep = k2_tracial_exponent(Spectrum((0.0,)), point, [4], 0.1, samples=10)
    assert rep.rows[0].diagnostics["net"] == 1 and rep.estimate == 0
    half = TraceSpec.from_weights(S01, [0.5, 0.5], 4)
    assert k2_tracial_exponent(S01, half, [6], 0.1, samples=20).estimate <= 0.1
    with pytest.raises(InfeasibleScale):
        k2_tracial_exponent(S01, half, [10], 0.1)


def test_k2_tracial_monotone_in_degree():
    half = TraceSpec.from_weights(S01, [0.5, 0.5], 4)
    vals = [k2_tracial_exponent(S01, half.truncated(m), [4], 0.1, samples=20, seed=1).estimate
            for m in (1, 2, 4)]
    assert vals[0] >= vals[1] >= vals[2]
    assert vals[0] > vals[2]


def test_orbit_capacity():
    half = TraceSpec.from_weights(S01, [0.5, 0.5], 2, name="half")
    delta0 = TraceSpec.from_weights(S01, [1.0, 0.0], 2, name="delta0")
    kw = dict(samples=16, seed=0)
    single = orbit_capacity(S01, [half], [4], 0.1, **kw)
    assert single.estimate == k2_tracial_exponent(S01, half, [4], 0.1, **kw).estimate
    assert orbit_capacity(S01, [half, half], [4], 0.1, **kw).estimate == single.estimate
    pair = orbit_capacity(S01, [delta0, half], [4], 0.1, **kw)
    assert pair.rows[-1].diagnostics["estimate_trace"] == "half"
    with pytest.raises(ValueError):
        orbit_capacity(S01, [], [4], 0.1)


def test_stability_probe():
    rep = stability_probe(S01, 2, [1], [0.5, 0.35, 0.25])
    assert 0.3 <= rep.alpha <= 0.7
    assert rep.monotone and len(rep.table) == 3
    flat = stability_probe(Spectrum((0.0,)), 1, [1, 2], [0.5, 0.25])
    assert abs(flat.alpha) <= 1e-12
    with pytest.raises(InfeasibleScale):
        stability_probe(S01, 2, [2], [0.5])


def test_direct_sum_delta_top():
    assert delta_top_exponent(DirectSum(S01, S01), [6, 9]).exact == Fraction(2, 3)
