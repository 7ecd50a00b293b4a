"""Dimension estimators built on exact-constraint varieties and sampled orbit nets.

The covering exponent of a microstate space is read off as the real dimension
of the variety of exact representations divided by k^2. For a finite-dimensional
algebra the variety is a finite union of unitary orbits (one per multiplicity
stratum), so its dimension is the largest rank of the conjugation tangent map.
That substitution is a modeling assumption and every report says so.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .covering import Metric, PointCloud, brute_force_cover, greedy_net, orbit_stratum_count
from .matrixcore import (
    MatrixTuple,
    OrbitOptions,
    as_tuple,
    gue_hermitian,
    haar_unitary,
    irreducible_decomposition,
    tuple_op_norm,
)
from .microstates import (
    DirectSum,
    FreeProduct,
    MicrostateParams,
    NormTable,
    PenaltyObjective,
    Presentation,
    Spectrum,
    balanced_multiplicities,
    default_radius,
    descend,
    explicit_model,
    faithful_multiplicities,
    membership_defect,
    presentation_battery,
    represent_blocks,
    sample_penalty,
    target_norms,
)
from .ncpoly import NcPolynomial, Word, all_words, compile_polys

RANK_TOL = 1e-8
AMBIGUITY_BAND = 1e-6
EXACT_TOL = 1e-8
ASSUMPTION = "exact-variety tangent dimension used as the covering exponent"


class NotExact(ValueError):
    pass


class UnsupportedPresentation(TypeError):
    pass


class InconsistentMoments(ValueError):
    pass


class InfeasibleScale(ValueError):
    pass


class TangentMode(str, Enum):
    SIMULTANEOUS = "SimultaneousConjugation"
    INDEPENDENT = "IndependentConjugation"


class DimensionMode(str, Enum):
    DELTA_TOP = "DeltaTop"
    KTOP2 = "KTop2"
    K2_TRACIAL = "K2Tracial"
    ORBIT_CAPACITY = "OrbitCapacity"


def free_factors(p: Presentation) -> list[Presentation]:
    """Flatten nested free products into their factors, left to right."""
    if isinstance(p, FreeProduct):
        return free_factors(p.left) + free_factors(p.right)
    return [p]


def _finite_dimensional(p: Presentation) -> bool:
    return explicit_model(p) is not None


@dataclass(frozen=True)
class TangentModel:
    mode: TangentMode
    presentation: Presentation

    def __post_init__(self):
        mode = TangentMode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode is TangentMode.INDEPENDENT:
            if not isinstance(self.presentation, (FreeProduct, DirectSum)):
                raise UnsupportedPresentation("independent conjugation needs a free product or direct sum")
            if not all(_finite_dimensional(f) for f in self.groups_of()):
                raise UnsupportedPresentation("independent conjugation needs finite-dimensional factors")

    def groups_of(self) -> list[Presentation]:
        if isinstance(self.presentation, DirectSum):
            return [self.presentation.left, self.presentation.right]
        return free_factors(self.presentation)

    def groups(self) -> list[range]:
        """Generator index ranges that are conjugated independently."""
        if self.mode is TangentMode.SIMULTANEOUS:
            return [range(self.presentation.num_generators)]
        out, start = [], 0
        for f in self.groups_of():
            out.append(range(start, start + f.num_generators))
            start += f.num_generators
        return out


# -- tangent ranks --------------------------------------------------------------------


def _anti_hermitian_basis(k: int) -> np.ndarray:
    basis = np.zeros((k * k, k, k), dtype=complex)
    pos = 0
    for i in range(k):
        basis[pos, i, i] = 1j
        pos += 1
    for i in range(k):
        for j in range(i + 1, k):
            basis[pos, i, j], basis[pos, j, i] = 1, -1
            basis[pos + 1, i, j] = basis[pos + 1, j, i] = 1j
            pos += 2
    return basis


def conjugation_singular_values(mats: np.ndarray) -> np.ndarray:
    """Singular values of H -> ([H, A_1], ..., [H, A_n]) over anti-Hermitian H, realified."""
    mats = np.asarray(mats)
    k = mats.shape[-1]
    basis = _anti_hermitian_basis(k)
    comm = np.einsum("bij,njk->bnik", basis, mats) - np.einsum("nij,bjk->bnik", mats, basis)
    flat = comm.reshape(k * k, -1)
    real = np.concatenate([flat.real, flat.imag], axis=1)
    return np.linalg.svd(real, compute_uv=False)


@dataclass(frozen=True)
class RankResult:
    rank: int
    ambiguous: bool
    gap: float  # smallest retained over largest singular value


def numerical_rank(s: np.ndarray, scale: float = 0.0) -> RankResult:
    """Rank relative to max(s[0], scale); ``scale`` keeps rounding noise of a null map at rank 0."""
    ref = max(float(s[0]) if s.size else 0.0, scale)
    if ref == 0:
        return RankResult(0, False, 0.0)
    rel = s / ref
    rank = int(np.sum(rel > RANK_TOL))
    ambiguous = bool(np.any((rel > RANK_TOL * 1e-2) & (rel < AMBIGUITY_BAND)))
    return RankResult(rank, ambiguous, float(rel[rank - 1]) if rank else 0.0)


def _exactness_defect(t: MatrixTuple, model: TangentModel) -> float:
    p = model.presentation
    parts = model.groups_of() if model.mode is TangentMode.INDEPENDENT else [p]
    worst = 0.0
    for group, part in zip(model.groups(), parts):
        sub = MatrixTuple(t.mats[group.start:group.stop])
        if isinstance(part, Spectrum):
            ev = np.linalg.eigvalsh(sub.mats[0])
            pts = np.array(part.points)
            worst = max(worst, float(np.max(np.min(np.abs(ev[:, None] - pts[None]), axis=1))))
            continue
        battery = presentation_battery(part, degree=2)
        targets = target_norms(part, battery)
        params = MicrostateParams(sub.k, 1.0, default_radius(part), battery)
        worst = max(worst, membership_defect(sub, targets, params)[0])
    return worst


def tangent_rank_detail(t, model: TangentModel, check: bool = True) -> tuple[int, bool]:
    t = as_tuple(t)
    if t.n != model.presentation.num_generators:
        raise ValueError("tuple and presentation disagree on the generator count")
    if check:
        defect = _exactness_defect(t, model)
        if defect > EXACT_TOL:
            raise NotExact(f"representative has defect {defect:.3g}")
    rank, ambiguous = 0, False
    for group in model.groups():
        mats = t.mats[group.start:group.stop]
        r = numerical_rank(conjugation_singular_values(mats), tuple_op_norm(MatrixTuple(mats)))
        rank += r.rank
        ambiguous |= r.ambiguous
    return rank, ambiguous


def tangent_rank(t, model: TangentModel, check: bool = True) -> int:
    """Real rank of the conjugation tangent map at an exact representative."""
    return tangent_rank_detail(t, model, check)[0]


# -- strata -------------------------------------------------------------------------


@dataclass(frozen=True)
class Stratum:
    multiplicities: tuple[int, ...]
    rank: int
    ambiguous: bool

    def exponent(self, k: int) -> Fraction:
        return Fraction(self.rank, k * k)


def _strata_source(p: Presentation):
    """(block dims, builder(mult, seed) -> MatrixTuple) for a finite-dimensional presentation."""
    if isinstance(p, Spectrum):
        pts = np.array(p.points)

        def build(mult, seed):
            d = np.repeat(pts, mult)
            u = haar_unitary(len(d), seed)
            return MatrixTuple(((u * d) @ u.conj().T)[None])

        return [1] * len(pts), build
    model = explicit_model(p)
    if model is None:
        raise UnsupportedPresentation(f"no finite-dimensional model for {p.kind}")
    blocks = irreducible_decomposition(model)
    return [b.dim for b in blocks], lambda mult, seed: represent_blocks(blocks, mult, seed)


def enumerate_strata(p: Presentation, k: int, seed: int = 0, check: bool = True) -> list[Stratum]:
    """Tangent rank of a Haar-conjugated representative of every faithful stratum at size k."""
    dims, build = _strata_source(p)
    model = TangentModel(TangentMode.SIMULTANEOUS, p)
    out = []
    for i, mult in enumerate(faithful_multiplicities(dims, k)):
        t = build(mult, [seed, k, i])
        rank, amb = tangent_rank_detail(t, model, check)
        out.append(Stratum(tuple(mult), rank, amb))
    return out


def _best(strata: list[Stratum]) -> Stratum:
    return max(strata, key=lambda s: (s.rank, [-m for m in s.multiplicities]))


# -- reports --------------------------------------------------------------------------


@dataclass
class DimensionRow:
    k: int
    value: float  # -inf when the microstate space is empty at this k
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DimensionReport:
    mode: DimensionMode
    rows: list[DimensionRow]
    estimate: float
    method: str
    exact: Fraction | None = None
    assumptions: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.rows:
            raise ValueError("a report needs at least one row")

    def values(self) -> list[float]:
        return [r.value for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "mode": DimensionMode(self.mode).value,
            "estimate": _json_float(self.estimate),
            "exact": None if self.exact is None else str(self.exact),
            "method": self.method,
            "assumptions": self.assumptions,
            "columns": ["k", "value", "diagnostics"],
            "rows": [[r.k, _json_float(r.value), r.diagnostics] for r in self.rows],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "DimensionReport":
        rows = [DimensionRow(int(k), float(v), diag) for k, v, diag in d["rows"]]
        exact = None if d.get("exact") is None else Fraction(d["exact"])
        return cls(DimensionMode(d["mode"]), rows, float(d["estimate"]), d["method"], exact,
                   list(d.get("assumptions", [])))

    def table(self) -> str:
        lines = [f"{'k':>4}  {'value':>12}"]
        for r in self.rows:
            lines.append(f"{r.k:>4}  {r.value:>12.6g}")
        lines.append(f"estimate {self.estimate:.6g} ({self.method})")
        return "\n".join(lines)


def _json_float(x: float):
    if x is None or math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def _last_finite(rows: list[DimensionRow]) -> DimensionRow | None:
    finite = [r for r in rows if math.isfinite(r.value)]
    return finite[-1] if finite else None


# -- delta_top ------------------------------------------------------------------------


def _factor_max(p: Presentation, k: int, seed: int) -> Stratum | None:
    strata = enumerate_strata(p, k, seed)
    return _best(strata) if strata else None


def delta_top_exponent(p: Presentation, k_list: Sequence[int], seed: int = 0) -> DimensionReport:
    """Covering exponent estimated as max over strata of tangent_rank / k^2.

    Free products are handled as independent conjugation of each factor, so the
    exponent is the sum of per-factor maxima.
    """
    if isinstance(p, NormTable):
        raise UnsupportedPresentation("norm tables have no exact representatives")
    factors = free_factors(p)
    if len(factors) > 1 and not all(_finite_dimensional(f) for f in factors):
        raise UnsupportedPresentation("free-product factors must be finite-dimensional")
    if len(factors) == 1 and not _finite_dimensional(p):
        raise UnsupportedPresentation(f"no exact representatives for {p.kind}")
    rows = []
    exact_at = {}
    for k in sorted(int(k) for k in k_list):
        best = [_factor_max(f, k, seed) for f in factors]
        if any(b is None for b in best):
            rows.append(DimensionRow(k, -math.inf, {"empty": True}))
            continue
        value = sum((b.exponent(k) for b in best), Fraction(0))
        exact_at[k] = value
        diag = {
            "rank": sum(b.rank for b in best),
            "strata": [list(b.multiplicities) for b in best],
            "exact": str(value),
            "rank_ambiguous": any(b.ambiguous for b in best),
        }
        rows.append(DimensionRow(k, float(value), diag))
    last = _last_finite(rows)
    method = "tangent rank, independent factors" if len(factors) > 1 else "tangent rank over strata"
    if last is None:
        return DimensionReport(DimensionMode.DELTA_TOP, rows, -math.inf, method, None, [ASSUMPTION])
    return DimensionReport(DimensionMode.DELTA_TOP, rows, last.value, method, exact_at[last.k], [ASSUMPTION])


# -- K_top^(2) --------------------------------------------------------------------------


def _stratum_count(p: Presentation, k: int) -> int:
    if isinstance(p, Spectrum):
        return orbit_stratum_count(p, k)
    dims, _ = _strata_source(p)
    return sum(1 for _ in faithful_multiplicities(dims, k))


def _joint_representative(factors, k: int, seed: int) -> MatrixTuple | None:
    mats = []
    for i, f in enumerate(factors):
        dims, build = _strata_source(f)
        if isinstance(f, Spectrum):
            # the balanced stratum has the largest rank for a spectrum
            mult = balanced_multiplicities(dims, k)
        else:
            strata = enumerate_strata(f, k, seed, check=False)
            mult = _best(strata).multiplicities if strata else None
        if mult is None:
            return None
        mats.append(build(mult, [seed, k, 1000 + i]).mats)
    return MatrixTuple(np.concatenate(mats))


def ktop2_exponent(p: Presentation, k_list: Sequence[int], omega: float = 0.1, seed: int = 0,
                   samples: int = 24, epsilon: float = 0.05) -> DimensionReport:
    """Orbit covering exponent log(o_2)/k^2.

    Finite-dimensional presentations: the exact set is a finite union of unitary
    orbits, so o_2 is the stratum count at every omega. Free products of
    finite-dimensional factors: the orbit quotient has dimension
    q = sum of factor tangent ranks - joint tangent rank, giving
    (q log(1/omega) + log #strata) / k^2; when q grows faster than k the
    omega -> 0 limit diverges and the estimate is +inf. Norm tables fall back
    to orbit nets of penalty-sampled clouds.
    """
    rows = []
    factors = free_factors(p)
    if len(factors) == 1 and _finite_dimensional(p):
        for k in sorted(int(k) for k in k_list):
            count = _stratum_count(p, k)
            value = math.log(count) / (k * k) if count else -math.inf
            rows.append(DimensionRow(k, value, {"strata": count}))
        last = _last_finite(rows)
        est = last.value if last else -math.inf
        return DimensionReport(DimensionMode.KTOP2, rows, est, "stratum count", None, [ASSUMPTION])
    if len(factors) > 1 and all(_finite_dimensional(f) for f in factors):
        quotients = []
        for k in sorted(int(k) for k in k_list):
            joint = _joint_representative(factors, k, seed)
            if joint is None:
                rows.append(DimensionRow(k, -math.inf, {"empty": True}))
                continue
            per_factor = tangent_rank(joint, TangentModel(TangentMode.INDEPENDENT, p), check=False)
            simultaneous = tangent_rank(joint, TangentModel(TangentMode.SIMULTANEOUS, p), check=False)
            q = per_factor - simultaneous
            count = math.prod(_stratum_count(f, k) for f in factors)
            value = (q * math.log(1 / omega) + math.log(count)) / (k * k)
            quotients.append((k, q))
            rows.append(DimensionRow(k, value, {"orbit_quotient_dim": q, "strata": count, "omega": omega}))
        last = _last_finite(rows)
        est = last.value if last else -math.inf
        method = "orbit quotient dimension"
        if len(quotients) >= 2:
            (k0, q0), (k1, q1) = quotients[0], quotients[-1]
            if q0 > 0 and (q1 / k1) >= 1.5 * (q0 / k0):
                est, method = math.inf, "orbit quotient grows like k^2; omega -> 0 limit diverges"
        return DimensionReport(DimensionMode.KTOP2, rows, est, method, None, [ASSUMPTION])
    if isinstance(p, NormTable):
        for k in sorted(int(k) for k in k_list):
            if k > 8:
                raise InfeasibleScale("sampled orbit nets are limited to k <= 8")
            cloud = penalty_cloud(p, k, samples, epsilon, seed)
            if cloud is None:
                rows.append(DimensionRow(k, -math.inf, {"empty": True}))
                continue
            net = len(greedy_net(cloud, omega, Metric.ORBIT2, opts=OrbitOptions(restarts=2, seed=seed)))
            rows.append(DimensionRow(k, math.log(net) / (k * k), {"net": net, "points": cloud.size,
                                                                  "evidence": "cloud lower bound"}))
        last = _last_finite(rows)
        est = last.value if last else -math.inf
        return DimensionReport(DimensionMode.KTOP2, rows, est, "sampled orbit net", None, [ASSUMPTION])
    raise UnsupportedPresentation(f"no K_top^(2) route for {p.kind}")


def penalty_cloud(p: Presentation, k: int, samples: int, epsilon: float, seed: int) -> PointCloud | None:
    battery = presentation_battery(p)
    targets = target_norms(p, battery)
    params = MicrostateParams(k, epsilon, default_radius(p), battery)
    pts = []
    for i in range(samples):
        ms = sample_penalty(p, params, seed=[seed, k, i], targets=targets)
        if ms.ok:
            pts.append(ms.tuple.mats)
    if not pts:
        return None
    return PointCloud(np.stack(pts), provenance=f"penalty k={k} seed={seed}")


# -- traces and moments -------------------------------------------------------------------


@dataclass(frozen=True)
class TraceSpec:
    """Moments tau(X_w) of a tracial state for all words w of length <= m."""

    moments: Mapping[Word, complex]
    m: int
    num_generators: int = 1
    name: str = ""

    def __post_init__(self):
        moments = {tuple(w): complex(v) for w, v in self.moments.items()}
        if abs(moments.get((), 1.0) - 1.0) > 1e-12:
            raise InconsistentMoments("the empty word must have moment 1")
        moments[()] = 1.0 + 0j
        for w, v in moments.items():
            if len(w) > self.m:
                raise ValueError(f"word {w} longer than m={self.m}")
            rev = moments.get(tuple(reversed(w)))
            if rev is not None and abs(rev - np.conj(v)) > 1e-9:
                raise InconsistentMoments(f"moments of {w} and its reversal are not conjugate")
        object.__setattr__(self, "moments", moments)
        if self.num_generators == 1:
            _check_hankel(moments, self.m)

    @property
    def words(self) -> list[Word]:
        return sorted(self.moments, key=lambda w: (len(w), w))

    @classmethod
    def from_tuple(cls, t, m: int, name: str = "") -> "TraceSpec":
        """Normalized trace of a matrix tuple."""
        t = as_tuple(t)
        comp = compile_polys([NcPolynomial.word(w, t.n) for w in all_words(t.n, m)])
        vals = comp.word_values(t.mats)
        moments = {w: np.trace(vals[i]) / t.k for i, w in enumerate(comp.words)}
        return cls(moments, m, t.n, name)

    @classmethod
    def from_weights(cls, p: Presentation, weights: Sequence[float], m: int, name: str = "") -> "TraceSpec":
        """Convex combination of the normalized traces on the irreducible pieces of ``p``."""
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-12:
            raise InconsistentMoments("weights must be a probability vector")
        if isinstance(p, Spectrum):
            if len(weights) != len(p.points):
                raise ValueError("one weight per spectrum point")
            pieces = [np.array([[[x]]], dtype=complex) for x in p.points]
        else:
            model = explicit_model(p)
            if model is None:
                raise UnsupportedPresentation(f"no finite-dimensional model for {p.kind}")
            blocks = irreducible_decomposition(model)
            if len(weights) != len(blocks):
                raise ValueError(f"one weight per irreducible piece ({len(blocks)})")
            pieces = [b.mats for b in blocks]
        n = p.num_generators
        words = all_words(n, m)
        moments = {w: 0j for w in words}
        for wt, mats in zip(weights, pieces):
            spec = cls.from_tuple(MatrixTuple(mats), m)
            for w in words:
                moments[w] += wt * spec.moments[w]
        return cls(moments, m, n, name)

    def truncated(self, m: int) -> "TraceSpec":
        return TraceSpec({w: v for w, v in self.moments.items() if len(w) <= m}, m, self.num_generators,
                         self.name)


def _check_hankel(moments: Mapping[Word, complex], m: int):
    half = m // 2
    try:
        h = np.array([[moments[(1,) * (i + j)] for j in range(half + 1)] for i in range(half + 1)])
    except KeyError:
        return
    if np.min(np.linalg.eigvalsh(h.real)) < -1e-9:
        raise InconsistentMoments("moment Hankel matrix is not positive semidefinite")


def moment_defect(t, ts: TraceSpec) -> float:
    """max over words of |tau_k(A_w) - tau(x_w)|."""
    t = as_tuple(t)
    words = ts.words
    comp = compile_polys([NcPolynomial.word(w, t.n) for w in words])
    vals = comp.word_values(t.mats)
    index = {w: i for i, w in enumerate(comp.words)}
    return float(max(abs(np.trace(vals[index[w]]) / t.k - ts.moments[w]) for w in words))


def moment_cloud(ts: TraceSpec, k: int, radius: float, samples: int, epsilon: float, seed: int,
                 iters: int = 300) -> PointCloud | None:
    """Moment-constrained tuples: GUE starts descended onto the moment constraints."""
    n = ts.num_generators
    words = [w for w in ts.words if w]
    comp = compile_polys([NcPolynomial.word(w, n) for w in words] or [NcPolynomial.identity(n)])
    index = np.array([comp.words.index(w) for w in words], dtype=int)
    targets = np.array([ts.moments[w] for w in words])
    objective = PenaltyObjective(comp, np.zeros(0), index, targets, norm_weight=0.0)
    pts = []
    for i in range(samples):
        rng = np.random.default_rng([seed, k, i])
        x0 = np.stack([gue_hermitian(k, rng, radius / 4) for _ in range(n)])
        x, _ = descend(objective, x0, radius, iters)
        if moment_defect(x, ts) <= epsilon:
            pts.append(x)
    if not pts:
        return None
    return PointCloud(np.stack(pts), provenance=f"moments m={ts.m} k={k} seed={seed}")


def k2_tracial_exponent(p: Presentation, ts: TraceSpec, k_list: Sequence[int], omega: float,
                        samples: int = 40, epsilon: float = 0.01, seed: int = 0) -> DimensionReport:
    """log(orbit net of a moment-constrained cloud) / k^2; a sampled lower estimate."""
    if ts.num_generators != p.num_generators:
        raise ValueError("trace and presentation disagree on the generator count")
    radius = default_radius(p)
    rows = []
    for k in sorted(int(k) for k in k_list):
        if k > 8:
            raise InfeasibleScale("sampled orbit nets are limited to k <= 8")
        cloud = moment_cloud(ts, k, radius, samples, epsilon, seed)
        if cloud is None:
            rows.append(DimensionRow(k, -math.inf, {"empty": True}))
            continue
        net = len(greedy_net(cloud, omega, Metric.ORBIT2, opts=OrbitOptions(restarts=2, seed=seed)))
        rows.append(DimensionRow(k, math.log(net) / (k * k),
                                 {"net": net, "points": cloud.size, "evidence": "cloud lower bound"}))
    last = _last_finite(rows)
    est = last.value if last else -math.inf
    return DimensionReport(DimensionMode.K2_TRACIAL, rows, est, f"sampled orbit net, trace {ts.name or '?'}",
                           None, [ASSUMPTION, "cloud counts bound the covering number from below"])


def orbit_capacity(p: Presentation, traces: Sequence[TraceSpec], k_list: Sequence[int], omega: float,
                   **kw) -> DimensionReport:
    """Max of the tracial exponent over a supplied list of traces."""
    if not traces:
        raise ValueError("at least one trace is required")
    reports = [k2_tracial_exponent(p, ts, k_list, omega, **kw) for ts in traces]
    best = max(range(len(reports)), key=lambda i: (reports[i].estimate, -i))
    rows = []
    for j, k in enumerate(sorted(int(k) for k in k_list)):
        vals = [r.rows[j].value for r in reports]
        i = int(np.argmax(vals))
        rows.append(DimensionRow(k, vals[i], {"argmax": i, "trace": traces[i].name, "values": vals}))
    rep = DimensionReport(DimensionMode.ORBIT_CAPACITY, rows, reports[best].estimate,
                          "max over supplied traces", None, reports[best].assumptions)
    rep.rows[-1].diagnostics["estimate_trace"] = traces[best].name or str(best)
    rep.rows[-1].diagnostics["estimate_argmax"] = best
    return rep


# -- stability -------------------------------------------------------------------------


@dataclass
class StabilityReport:
    table: list[tuple[int, float, int]]  # (k, omega, lower-bound count)
    alpha: float
    log_c: float
    monotone: bool


def stability_probe(p: Presentation, k0: int, k_multiples: Sequence[int], omega_grid: Sequence[float],
                    epsilon: float = 0.05, metric="OpNorm") -> StabilityReport:
    """Fit log N_k(omega) / k^2 = log C + alpha log(1/omega) from brute-force lower counts."""
    omega_grid = sorted(omega_grid, reverse=True)
    table = []
    for q in k_multiples:
        k = q * k0
        if k > 3:
            raise InfeasibleScale(f"brute force is limited to k <= 3, got {k}")
        for w in omega_grid:
            est = brute_force_cover(p, k, w, epsilon, metric)
            table.append((k, w, est.lower))
    x = np.array([math.log(1 / w) for _, w, _ in table])
    y = np.array([math.log(c) / (k * k) for k, _, c in table])
    if np.ptp(x) == 0:
        alpha, log_c = 0.0, float(np.mean(y))
    else:
        alpha, log_c = (float(v) for v in np.polyfit(x, y, 1))
    monotone = True
    for k in {k for k, _, _ in table}:
        counts = [c for kk, _, c in table if kk == k]
        monotone &= all(b >= a for a, b in zip(counts, counts[1:]))
    return StabilityReport(table, alpha, log_c, monotone)
