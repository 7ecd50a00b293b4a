"""Matrix-model checks: norm convergence, nonempty microstates, free-product models.

Also hosts the exact norm of the universal C*-algebra of two projections and a
Krylov compression used to witness quasidiagonality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .matrixcore import ConvergenceFailure, MatrixTuple, as_tuple, haar_unitary
from .microstates import (
    FreeProduct,
    MicrostateParams,
    OracleUnavailable,
    Presentation,
    Spectrum,
    default_radius,
    explicit_model,
    membership_defect,
    presentation_battery,
    presentation_hash,
    presentation_to_dict,
    sample_from_model,
    sample_penalty,
    target_norms,
)
from .ncpoly import NcPolynomial, PolyBattery, compile_polys, format_poly

ORACLE_TOL = 1e-9


class WrongArity(ValueError):
    pass


class SizeIncompatible(ValueError):
    pass


class RankTooSmall(ValueError):
    pass


# -- two projections ------------------------------------------------------------


def _norm2x2(m: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a (N, 2, 2) stack."""
    fro = np.sum(np.abs(m) ** 2, axis=(1, 2))
    det = np.abs(m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0])
    disc = np.sqrt(np.maximum(fro * fro - 4 * det * det, 0.0))
    return np.sqrt((fro + disc) / 2)


def _value_and_slope(comp, theta: np.ndarray):
    """w(p, q(theta)) and its theta-derivative for a batch of angles."""
    c, s = np.cos(theta), np.sin(theta)
    num = theta.shape[0]
    gens = np.zeros((2, num, 2, 2), dtype=complex)
    gens[0, :, 0, 0] = 1.0
    gens[1, :, 0, 0] = c * c
    gens[1, :, 0, 1] = gens[1, :, 1, 0] = c * s
    gens[1, :, 1, 1] = s * s
    dq = np.empty((num, 2, 2), dtype=complex)
    s2, c2 = np.sin(2 * theta), np.cos(2 * theta)
    dq[:, 0, 0], dq[:, 0, 1], dq[:, 1, 0], dq[:, 1, 1] = -s2, c2, c2, s2
    nw = len(comp.words)
    vals = np.empty((nw, num, 2, 2), dtype=complex)
    ders = np.zeros((nw, num, 2, 2), dtype=complex)
    vals[0] = np.eye(2)
    for w in range(1, nw):
        par, let = comp.parent[w], comp.letter[w]
        vals[w] = vals[par] @ gens[let]
        ders[w] = ders[par] @ gens[let]
        if let == 1:
            ders[w] += vals[par] @ dq
    coeffs = comp.coeffs[0]
    return np.tensordot(coeffs, vals, axes=1), np.tensordot(coeffs, ders, axes=1)


def two_projection_oracle(w: NcPolynomial, tol: float = ORACLE_TOL) -> float:
    """||w(p, q)|| in the universal C*-algebra of two projections p, q.

    Irreducible representations are the four characters and the 2x2 family
    p = diag(1, 0), q(theta) = [[c^2, cs], [cs, s^2]]. The endpoints theta = 0 and
    pi/2 contain all four characters, so the norm is the sup over [0, pi/2].
    The sup is certified by branch and bound: on an interval of half-width h
    around theta_0, ||w|| <= max(||W0 - h W1||, ||W0 + h W1||) + L2 h^2 / 2,
    where W1 is the derivative and L2 bounds the second derivative.
    """
    if w.num_indeterminates != 2:
        raise WrongArity(f"expected 2 indeterminates, got {w.num_indeterminates}")
    if w.is_zero():
        return 0.0
    comp = compile_polys([w])
    # ||q'|| = 1 and ||q''|| = 2, so a word with m q-letters has ||w''|| <= m^2 + m
    curv = sum(abs(c) * (m * m + m) for m, c in ((sum(1 for a in word if a == 2), c) for word, c in w.terms))
    ends = np.array([0.0, math.pi / 2])
    best = float(np.max(_norm2x2(_value_and_slope(comp, ends)[0])))
    pieces = 256
    h = (math.pi / 2) / (2 * pieces)
    mids = (np.arange(pieces) + 0.5) * 2 * h
    for _ in range(60):
        val, der = _value_and_slope(comp, mids)
        best = max(best, float(np.max(_norm2x2(val))))
        upper = np.maximum(_norm2x2(val - h * der), _norm2x2(val + h * der)) + curv * h * h / 2
        open_ = upper > best + tol
        if not np.any(open_):
            return best
        mids = mids[open_]
        h /= 2
        mids = np.concatenate([mids - h, mids + h])
    raise ConvergenceFailure("two-projection bound did not certify")


# -- model sequences -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelSequence:
    """Matrix models (k, tuple) at strictly increasing sizes for one presentation."""

    models: tuple[tuple[int, MatrixTuple], ...]
    presentation: Presentation
    certified: bool = True

    def __post_init__(self):
        models = tuple((int(k), as_tuple(t)) for k, t in self.models)
        ks = [k for k, _ in models]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("model sizes must be strictly increasing")
        n = self.presentation.num_generators
        for k, t in models:
            if t.k != k or t.n != n:
                raise ValueError(f"model at k={k} has shape ({t.n}, {t.k}); expected ({n}, {k})")
        object.__setattr__(self, "models", models)

    @property
    def sizes(self) -> list[int]:
        return [k for k, _ in self.models]

    def __len__(self):
        return len(self.models)


def model_sequence(p: Presentation, sizes: Sequence[int], seed=None) -> ModelSequence:
    """Exact models of ``p`` at the given sizes built from its irreducible pieces."""
    models = []
    for k in sorted(sizes):
        t = sample_from_model(p, k, seed)
        if t is None:
            raise SizeIncompatible(f"no faithful model of size {k}")
        models.append((k, t))
    return ModelSequence(tuple(models), p)


@dataclass
class ConvergenceReport:
    sizes: list[int]
    per_poly: list[tuple[int, list[float]]]
    max_final: float
    trend: str

    def deviation_table(self) -> np.ndarray:
        return np.array([dev for _, dev in self.per_poly])


def classify_trend(series: Sequence[float], rel: float = 0.1, floor: float = 1e-12) -> str:
    """Compare the mean of the last third of ``series`` with the first third."""
    series = np.asarray(series, dtype=float)
    third = max(1, len(series) // 3)
    first, last = float(np.mean(series[:third])), float(np.mean(series[-third:]))
    if max(first, last) <= floor:
        return "flat"
    if last < first * (1 - rel) and first - last > floor:
        return "improving"
    if last > first * (1 + rel) and last - first > floor:
        return "worsening"
    return "flat"


def check_norm_convergence(ms: ModelSequence, battery: PolyBattery) -> ConvergenceReport:
    """Per-polynomial |norm at model k - target| along the sequence."""
    targets = target_norms(ms.presentation, battery)
    table = np.array([np.abs(battery.norms(t) - targets) for _, t in ms.models]).T
    per_poly = [(j, [float(x) for x in row]) for j, row in enumerate(table)]
    worst = table.max(axis=0)
    return ConvergenceReport(ms.sizes, per_poly, float(worst[-1]), classify_trend(worst))


@dataclass
class ApproximationReport:
    epsilon: float
    seed: int
    per_k: list[tuple[int, float, bool]]

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.per_k)


def check_approximation_property(p: Presentation, k_list: Sequence[int], epsilon: float,
                                 battery: PolyBattery | None = None, seed: int = 0,
                                 restarts: int = 3, iters: int = 500) -> ApproximationReport:
    """Search for microstates at every k; pass iff each best defect is <= epsilon.

    Candidates are exact representations built from a finite-dimensional model
    (when one of size k exists) and penalty-sampler runs from GUE starts.
    """
    battery = battery or presentation_battery(p)
    targets = target_norms(p, battery)
    radius = default_radius(p)
    rows = []
    for k in k_list:
        params = MicrostateParams(int(k), epsilon, radius, battery)
        best = math.inf
        exact = sample_from_model(p, int(k), seed=[seed, int(k)])
        if exact is not None:
            best = membership_defect(exact, targets, params)[0]
        r = 0
        while best > epsilon and r < restarts:
            ms = sample_penalty(p, params, seed=[seed, int(k), r], iters=iters, targets=targets)
            best = min(best, ms.defect)
            r += 1
        rows.append((int(k), float(best), bool(best <= epsilon)))
    return ApproximationReport(epsilon, seed, rows)


# -- free products ---------------------------------------------------------------


def _repeat_to(ms: ModelSequence, t: int) -> np.ndarray:
    for k, tup in reversed(ms.models):
        if t % k == 0:
            reps = t // k
            return np.stack([np.kron(np.eye(reps), g) for g in tup.mats])
    raise SizeIncompatible(f"no model size in {ms.sizes} divides {t}")


def _two_projection_class(p: Presentation) -> bool:
    return isinstance(p, Spectrum) and len(p.points) <= 2


def build_free_product_model(a: ModelSequence, b: ModelSequence, sizes: Sequence[int], seeds=0,
                             rotate: bool = True) -> ModelSequence:
    """Models of the free product: block-repeated factor models in general position.

    At each size t both factor models are repeated up to size t and the second
    family is conjugated by an independent Haar unitary. ``seeds`` is one seed
    or one per size.
    """
    sizes = sorted(int(t) for t in sizes)
    if np.ndim(seeds) == 0:
        seeds = [[int(seeds), t] for t in sizes]
    elif len(seeds) != len(sizes):
        raise ValueError("need one seed per size")
    models = []
    for t, sd in zip(sizes, seeds):
        left = _repeat_to(a, t)
        right = _repeat_to(b, t)
        if rotate:
            u = haar_unitary(t, sd)
            right = u @ right @ u.conj().T
        models.append((t, MatrixTuple(np.concatenate([left, right]))))
    pres = FreeProduct(a.presentation, b.presentation)
    certified = _two_projection_class(a.presentation) and _two_projection_class(b.presentation)
    return ModelSequence(tuple(models), pres, certified=certified)


def mixed_word_battery(count: int = 12) -> PolyBattery:
    """Identity, both letters, then the first alternating words in two letters."""
    polys = [NcPolynomial.identity(2), NcPolynomial.variable(1, 2), NcPolynomial.variable(2, 2)]
    length = 2
    while len(polys) < count:
        for start in (1, 2):
            word = tuple(start if i % 2 == 0 else 3 - start for i in range(length))
            polys.append(NcPolynomial.word(word, 2))
        x, y = NcPolynomial.variable(1, 2), NcPolynomial.variable(2, 2)
        if length == 2:
            polys.append(x * y - y * x)
            polys.append(x * y + y * x)
        length += 1
    return PolyBattery(tuple(polys[:count]), max(q.degree for q in polys[:count]), f"mixed-words-{count}")


# -- quasidiagonal compression ---------------------------------------------------


@dataclass
class CompressionReport:
    rank: int
    vector_defects: np.ndarray  # (num_generators, num_vectors) ||(1-p) A_i xi||
    norm_defects: np.ndarray | None
    projection: np.ndarray  # (k, rank) orthonormal basis of the range

    @property
    def max_vector_defect(self) -> float:
        return float(np.max(self.vector_defects)) if self.vector_defects.size else 0.0


def _add_vector(basis: list, v: np.ndarray, tol: float) -> bool:
    for _ in range(2):
        for q in basis:
            v = v - q * (q.conj() @ v)
    nv = np.linalg.norm(v)
    if nv <= tol:
        return False
    basis.append(v / nv)
    return True


def _krylov_stream(mats: np.ndarray, vectors: np.ndarray, tol: float):
    """Yield (level, q) for an orthonormal basis grown breadth first from ``vectors``."""
    k = mats.shape[-1]
    basis: list = []
    frontier = list(vectors)
    level = 0
    while frontier and len(basis) < k:
        nxt = []
        for v in frontier:
            if _add_vector(basis, v.astype(complex), tol):
                yield level, basis[-1]
                nxt.extend(g @ basis[-1] for g in mats)
        frontier = nxt
        level += 1


def krylov_basis(mats: np.ndarray, vectors: np.ndarray, target_rank: int, degree: int | None = None,
                 tol: float = 1e-10) -> np.ndarray:
    """First ``target_rank`` vectors of the breadth-first Krylov filtration.

    The bases for increasing ranks are nested. With ``degree`` set, the span of all
    words of length <= degree applied to the vectors must fit in ``target_rank``.
    The basis is topped up with coordinate vectors if the Krylov space saturates.
    """
    k = mats.shape[-1]
    basis = []
    for level, q in _krylov_stream(mats, vectors, tol):
        if len(basis) == target_rank:
            if degree is not None and level <= degree:
                raise RankTooSmall(f"Krylov span of degree {degree} exceeds rank {target_rank}")
            break
        basis.append(q)
    e = 0
    while len(basis) < target_rank and e < k:
        _add_vector(basis, np.eye(k)[e].astype(complex), tol)
        e += 1
    return np.stack(basis, axis=1)


def quasidiagonal_compress(t, target_rank: int, vectors, degree: int | None = None,
                           battery: PolyBattery | None = None) -> tuple[MatrixTuple, CompressionReport]:
    """Compress a tuple to a Krylov subspace containing the given vectors.

    ``vector_defects[i, j] = ||(1 - p) A_i xi_j||``; with a battery the report also
    carries | ||P(pAp)|| - ||P(A)|| | per polynomial.
    """
    t = as_tuple(t)
    if not 1 <= target_rank <= t.k:
        raise ValueError(f"target_rank must lie in [1, {t.k}]")
    vecs = np.atleast_2d(np.asarray(vectors, dtype=complex))
    if vecs.shape[1] != t.k:
        raise ValueError("vectors must live in C^k")
    basis = krylov_basis(t.mats, vecs, target_rank, degree)
    compressed = MatrixTuple(basis.conj().T @ t.mats @ basis)
    proj = basis @ basis.conj().T
    images = np.einsum("nab,vb->nva", t.mats, vecs)
    resid = images - np.einsum("ab,nvb->nva", proj, images)
    vector_defects = np.linalg.norm(resid, axis=2)
    norm_defects = None
    if battery is not None:
        norm_defects = np.abs(battery.norms(compressed) - battery.norms(t))
    return compressed, CompressionReport(target_rank, vector_defects, norm_defects, basis)


# -- reports ------------------------------------------------------------------------


def mf_report(ms: ModelSequence, battery: PolyBattery, seeds, tolerance: float) -> dict:
    """Machine-readable summary of a convergence check."""
    rep = check_norm_convergence(ms, battery)
    return {
        "presentation_hash": presentation_hash(ms.presentation),
        "presentation": presentation_to_dict(ms.presentation),
        "battery_label": battery.label,
        "battery": [format_poly(q) for q in battery.polys],
        "sizes": rep.sizes,
        "deviations": [dev for _, dev in rep.per_poly],
        "max_final": rep.max_final,
        "trend": rep.trend,
        "tolerance": tolerance,
        "pass": bool(rep.max_final <= tolerance),
        "certified": ms.certified,
        "seeds": seeds,
    }
