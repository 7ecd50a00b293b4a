"""Presentations of generator families and their norm-microstate spaces."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .matrixcore import (
    MatrixTuple,
    NotDivisible,
    align_matrix_units,
    as_tuple,
    block_diag_tuple,
    canonical_units,
    gue_hermitian,
    haar_unitary,
    hermitian_to_units,
    irreducible_decomposition,
    operator_norm,
    read_htup,
    tuple_op_norm,
    units_to_hermitian,
)
from .ncpoly import (
    DimensionMismatch,
    NcPolynomial,
    PolyBattery,
    all_words,
    compile_polys,
    default_battery,
    evaluate,
    format_poly,
    parse_poly,
)

RADIUS_PENALTY = 1e6


class OracleUnavailable(LookupError):
    pass


class BadMultiplicities(ValueError):
    pass


class LayoutMismatch(ValueError):
    pass


# -- presentations ----------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    """Single self-adjoint generator with finite spectrum ``points``."""

    points: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if not pts or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("spectrum points must be nonempty and strictly increasing")
        object.__setattr__(self, "points", pts)

    kind = "spectrum"
    num_generators = 1


@dataclass(frozen=True, eq=False)
class MatrixModel:
    """Generators given explicitly by a matrix tuple."""

    tuple: MatrixTuple

    kind = "matrix_model"

    @property
    def num_generators(self) -> int:
        return self.tuple.n


@dataclass(frozen=True, eq=False)
class NormTable:
    """Abstract generators known only through the norms of a battery."""

    battery: PolyBattery
    targets: tuple[float, ...]
    radius: float
    check: bool = True

    kind = "norm_table"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(float(t) for t in self.targets))
        if len(self.targets) != len(self.battery):
            raise ValueError("one target per battery polynomial required")
        if not self.check:
            return
        if any(t < 0 for t in self.targets):
            raise ValueError("targets must be nonnegative")
        n = self.battery.num_indeterminates
        one = self.battery.polys.index(NcPolynomial.identity(n))
        if abs(self.targets[one] - 1.0) > 1e-12:
            raise ValueError("the identity polynomial must have target 1")
        deg1 = [self.targets[self.battery.polys.index(NcPolynomial.variable(i, n))] for i in range(1, n + 1)]
        if self.radius <= max(deg1):
            raise ValueError("radius must exceed every degree-1 target")

    @property
    def num_generators(self) -> int:
        return self.battery.num_indeterminates


@dataclass(frozen=True, eq=False)
class FreeProduct:
    """Unital full free product; generators of ``left`` come first."""

    left: "Presentation"
    right: "Presentation"

    kind = "free_product"

    @property
    def num_generators(self) -> int:
        return self.left.num_generators + self.right.num_generators


@dataclass(frozen=True, eq=False)
class DirectSum:
    """Orthogonal sum; generators x_i + 0 followed by 0 + y_j."""

    left: "Presentation"
    right: "Presentation"

    kind = "direct_sum"

    @property
    def num_generators(self) -> int:
        return self.left.num_generators + self.right.num_generators


@dataclass(frozen=True, eq=False)
class Amplification:
    """base (x) M_n: generators base (x) I_n followed by the n*n Hermitian unit encodings."""

    base: "Presentation"
    n: int

    kind = "amplification"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def num_generators(self) -> int:
        return self.base.num_generators + self.n * self.n


Presentation = Union[Spectrum, MatrixModel, NormTable, FreeProduct, DirectSum, Amplification]


def explicit_model(p: Presentation) -> MatrixTuple | None:
    """A faithful finite-dimensional model of the generators, if one is known."""
    if isinstance(p, Spectrum):
        return MatrixTuple(np.diag(np.array(p.points, dtype=complex))[None])
    if isinstance(p, MatrixModel):
        return p.tuple
    if isinstance(p, DirectSum):
        a, b = explicit_model(p.left), explicit_model(p.right)
        if a is None or b is None:
            return None
        za = np.zeros((a.n, b.k, b.k), dtype=complex)
        zb = np.zeros((b.n, a.k, a.k), dtype=complex)
        left = block_diag_tuple([a.mats, za])
        right = block_diag_tuple([zb, b.mats])
        return MatrixTuple(np.concatenate([left, right]))
    if isinstance(p, Amplification):
        base = explicit_model(p.base)
        if base is None:
            return None
        n, m = p.n, base.k
        gens = [np.kron(g, np.eye(n)) for g in base.mats]
        units = units_to_hermitian(canonical_units(m * n, n))
        return MatrixTuple(np.concatenate([np.stack(gens), units]))
    return None


def generator_norm_bounds(p: Presentation) -> np.ndarray:
    """Norms of the individual generators (targets of the degree-1 words)."""
    n = p.num_generators
    polys = [NcPolynomial.variable(i, n) for i in range(1, n + 1)]
    return np.array([poly_norm(p, q) for q in polys])


def default_radius(p: Presentation) -> float:
    if isinstance(p, NormTable):
        return float(p.radius)
    return float(np.max(generator_norm_bounds(p))) + 1.0


# -- polynomial norms in the presented algebra -------------------------------


def _lift(poly: NcPolynomial, offset: int, n: int) -> NcPolynomial:
    images = [NcPolynomial.variable(i + offset, n) for i in range(1, poly.num_indeterminates + 1)]
    return poly.substitute(images, n)


def _restrict(poly: NcPolynomial, keep: range, n_new: int) -> NcPolynomial:
    """Set the indeterminates outside ``keep`` to zero and renumber the rest."""
    images = []
    for i in range(1, poly.num_indeterminates + 1):
        if i in keep:
            images.append(NcPolynomial.variable(i - keep.start + 1, n_new))
        else:
            images.append(NcPolynomial.from_dict({}, n_new))
    return poly.substitute(images, n_new)


def _projection_image(points: tuple[float, ...], index: int) -> NcPolynomial:
    """Affine image a + (b-a) X_index of a projection, in two indeterminates."""
    if len(points) == 1:
        return NcPolynomial.constant(points[0], 2)
    a, b = points
    return NcPolynomial.constant(a, 2) + (b - a) * NcPolynomial.variable(index, 2)


def _two_projection_class(p: FreeProduct) -> bool:
    return all(isinstance(f, Spectrum) and len(f.points) <= 2 for f in (p.left, p.right))


def poly_norm(p: Presentation, poly: NcPolynomial, models=None) -> float:
    """||poly(x_1, ..., x_n)|| in the C*-algebra described by ``p``."""
    if poly.num_indeterminates != p.num_generators:
        raise DimensionMismatch(
            f"polynomial in {poly.num_indeterminates} indeterminates, presentation has {p.num_generators}"
        )
    if isinstance(p, Spectrum):
        total = 0.0
        for lam in p.points:
            val = sum(c * lam ** len(w) for w, c in poly.terms)
            total = max(total, abs(val))
        return float(total)
    if isinstance(p, NormTable):
        try:
            return p.targets[p.battery.polys.index(poly)]
        except ValueError:
            raise OracleUnavailable(f"{format_poly(poly)} is not in the norm table") from None
    if isinstance(p, DirectSum):
        na, nb = p.left.num_generators, p.right.num_generators
        left = _restrict(poly, range(1, na + 1), na)
        right = _restrict(poly, range(na + 1, na + nb + 1), nb)
        return max(poly_norm(p.left, left, models), poly_norm(p.right, right, models))
    if isinstance(p, FreeProduct):
        if _two_projection_class(p):
            from .mfcheck import two_projection_oracle

            images = [_projection_image(p.left.points, 1), _projection_image(p.right.points, 2)]
            return two_projection_oracle(poly.substitute(images, 2))
        if models is not None:
            return float(_model_norms(models, [poly])[0][0])
        raise OracleUnavailable("free product outside the two-projection class and no model sequence given")
    model = explicit_model(p)
    if model is None:
        raise OracleUnavailable(f"no model for {p.kind}")
    return operator_norm(evaluate(poly, model))


def _model_norms(models, polys):
    """Norms at the largest model and the spread against the previous one."""
    ks = sorted(models.models, key=lambda item: item[0])
    comp = compile_polys(polys)
    last = np.linalg.norm(comp.evaluate(ks[-1][1].mats), ord=2, axis=(1, 2))
    if len(ks) > 1:
        prev = np.linalg.norm(comp.evaluate(ks[-2][1].mats), ord=2, axis=(1, 2))
        spread = np.abs(last - prev)
    else:
        spread = np.full_like(last, np.inf)
    return last, spread


def target_norms_with_uncertainty(p: Presentation, battery: PolyBattery, models=None):
    """Target norms plus a per-polynomial uncertainty (zero when certified)."""
    if battery.num_indeterminates != p.num_generators:
        raise DimensionMismatch("battery and presentation disagree on the generator count")
    if isinstance(p, NormTable):
        if battery.prefix_of(p.battery):
            return np.array(p.targets[: len(battery)]), np.zeros(len(battery))
        return np.array([poly_norm(p, q) for q in battery.polys]), np.zeros(len(battery))
    if isinstance(p, FreeProduct) and not _two_projection_class(p):
        if models is None:
            raise OracleUnavailable("free product outside the two-projection class and no model sequence given")
        return _model_norms(models, battery.polys)
    model = explicit_model(p)
    if model is not None:
        return battery.norms(model), np.zeros(len(battery))
    return np.array([poly_norm(p, q, models) for q in battery.polys]), np.zeros(len(battery))


def target_norms(p: Presentation, battery: PolyBattery, models=None) -> np.ndarray:
    return target_norms_with_uncertainty(p, battery, models)[0]


# -- batteries adapted to a presentation -------------------------------------


def _rref_nullspace(mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Null space of ``mat`` in reduced echelon form, pivots on the last columns."""
    _, s, vh = np.linalg.svd(mat)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    basis = vh[rank:].conj()  # rows span the null space
    if basis.shape[0] == 0:
        return basis
    work = basis[:, ::-1].copy()
    rows, cols = work.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(work[r:, c])))
        if abs(work[piv, c]) < 1e-9:
            continue
        work[[r, piv]] = work[[piv, r]]
        work[r] /= work[r, c]
        for i in range(rows):
            if i != r:
                work[i] -= work[i, c] * work[r]
        r += 1
    work = work[:r, ::-1]
    work = work / np.max(np.abs(work), axis=1, keepdims=True)
    # snap rounding noise so that rational relations print cleanly
    return np.round(work.real, 11) + 1j * np.round(work.imag, 11)


def relation_polys(model, degree: int) -> list[NcPolynomial]:
    """Polynomials of degree <= ``degree`` vanishing on ``model``.

    The space of such relations is computed exactly (up to rounding) from the null
    space of the word-evaluation map, so the returned polynomials span it.
    """
    model = as_tuple(model)
    n = model.n
    words = all_words(n, degree)
    comp = compile_polys([NcPolynomial.word(w, n) for w in words])
    values = comp.word_values(model.mats)
    index = [comp.words.index(w) for w in words]
    evalmat = values[index].reshape(len(words), -1).T
    null = _rref_nullspace(evalmat)
    out = []
    for row in null:
        poly = NcPolynomial.from_dict({w: c for w, c in zip(words, row) if c != 0}, n)
        if not poly.is_zero():
            out.append(poly)
    return out


def _relation_degree(p: Presentation, model: MatrixTuple) -> int:
    if isinstance(p, Spectrum):
        return max(1, len(p.points))
    if model.n == 1:
        return max(2, len(np.unique(np.round(np.linalg.eigvalsh(model.mats[0]), 9))))
    return 2


def presentation_relations(p: Presentation) -> list[NcPolynomial]:
    n = p.num_generators
    if isinstance(p, NormTable):
        return []
    model = explicit_model(p)
    if model is not None:
        return relation_polys(model, _relation_degree(p, model))
    if isinstance(p, (FreeProduct, DirectSum)):
        na = p.left.num_generators
        out = [_lift(r, 0, n) for r in presentation_relations(p.left)]
        out += [_lift(r, na, n) for r in presentation_relations(p.right)]
        if isinstance(p, DirectSum):
            out = [r for r in out if () not in r.as_dict()]
        return out
    return []


def presentation_battery(p: Presentation, degree: int = 2, cap: int = 10_000) -> PolyBattery:
    """Words of length <= ``degree`` followed by defining relations of ``p``."""
    if isinstance(p, NormTable):
        return p.battery
    words = default_battery(p.num_generators, degree, cap)
    label = f"{p.kind}-d{degree}+rel"
    return words.extended(presentation_relations(p), label=label)


# -- microstates --------------------------------------------------------------


@dataclass(frozen=True)
class MicrostateParams:
    k: int
    epsilon: float
    radius: float
    battery: PolyBattery

    def __post_init__(self):
        if self.k < 1 or self.epsilon <= 0 or self.radius <= 0:
            raise ValueError("need k >= 1, epsilon > 0 and radius > 0")


@dataclass(frozen=True, eq=False)
class Microstate:
    tuple: MatrixTuple
    defect: float
    params: MicrostateParams

    @property
    def ok(self) -> bool:
        return self.defect <= self.params.epsilon


def _check_lengths(t: MatrixTuple, targets, params: MicrostateParams):
    if len(targets) != len(params.battery):
        raise DimensionMismatch("battery and targets differ in length")
    if t.n < params.battery.num_indeterminates:
        raise DimensionMismatch("tuple has fewer matrices than the battery needs")
    if t.k != params.k:
        raise DimensionMismatch(f"tuple is {t.k}x{t.k}, params say k={params.k}")


def membership_defect(t, targets, params: MicrostateParams) -> tuple[float, int]:
    """Largest |norm - target| over the battery; index -1 flags the radius constraint."""
    t = as_tuple(t)
    _check_lengths(t, targets, params)
    dev = np.abs(params.battery.norms(t) - np.asarray(targets, dtype=float))
    worst = int(np.argmax(dev))
    defect = float(dev[worst])
    over = max(0.0, tuple_op_norm(t) - params.radius) * RADIUS_PENALTY
    if over > defect:
        return over, -1
    return defect, worst


def membership_defect_interval(t, targets, uncertainty, params: MicrostateParams) -> tuple[float, float]:
    """Range of the membership defect when each target is known only to +-uncertainty."""
    t = as_tuple(t)
    _check_lengths(t, targets, params)
    norms = params.battery.norms(t)
    targets = np.asarray(targets, dtype=float)
    unc = np.asarray(uncertainty, dtype=float)
    gap = np.abs(norms - targets)
    over = max(0.0, tuple_op_norm(t) - params.radius) * RADIUS_PENALTY
    hi = max(float(np.max(gap + unc)), over)
    lo = max(float(np.max(np.maximum(gap - unc, 0.0))), over)
    return lo, hi


def semi_membership_defect(t, targets, params: MicrostateParams) -> float:
    """One-sided defect: only norms exceeding their targets count."""
    t = as_tuple(t)
    _check_lengths(t, targets, params)
    dev = params.battery.norms(t) - np.asarray(targets, dtype=float)
    over = max(0.0, tuple_op_norm(t) - params.radius) * RADIUS_PENALTY
    return float(max(0.0, np.max(dev), over))


def sample_exact_spectrum(points, multiplicities, k: int, seed=None, *, battery=None,
                          epsilon: float = 1e-10) -> Microstate:
    """U diag(points repeated) U^* with U Haar."""
    points = tuple(float(x) for x in points)
    mult = [int(m) for m in multiplicities]
    if len(mult) != len(points) or any(m < 1 for m in mult) or sum(mult) != k:
        raise BadMultiplicities(f"multiplicities {mult} do not partition k={k} over {len(points)} points")
    u = haar_unitary(k, seed)
    d = np.repeat(np.array(points), mult)
    t = MatrixTuple(((u * d) @ u.conj().T)[None])
    pres = Spectrum(points)
    battery = battery or presentation_battery(pres, degree=3)
    params = MicrostateParams(k, epsilon, default_radius(pres), battery)
    defect, _ = membership_defect(t, target_norms(pres, battery), params)
    return Microstate(t, defect, params)


def faithful_multiplicities(dims: Sequence[int], k: int):
    """All vectors m with every m_j >= 1 and sum m_j * dims[j] == k."""
    dims = list(dims)

    def rec(j, rest):
        if j == len(dims) - 1:
            if rest >= dims[j] and rest % dims[j] == 0:
                yield (rest // dims[j],)
            return
        tail = sum(dims[j + 1:])
        m = 1
        while m * dims[j] + tail <= rest:
            for more in rec(j + 1, rest - m * dims[j]):
                yield (m,) + more
            m += 1

    if not dims:
        return iter(())
    return rec(0, k)


def balanced_multiplicities(dims: Sequence[int], k: int) -> tuple[int, ...] | None:
    """The faithful multiplicity vector with the most even spread, or None."""
    best, score = None, None
    for m in faithful_multiplicities(dims, k):
        s = (max(m) - min(m), m)
        if score is None or s < score:
            best, score = m, s
    return best


def represent_blocks(blocks, mult, seed=None) -> MatrixTuple:
    """Direct sum of mult[j] copies of each irreducible block, Haar-conjugated."""
    pieces = [np.stack([np.kron(np.eye(m), g) for g in b.mats]) for b, m in zip(blocks, mult)]
    mats = block_diag_tuple(pieces)
    if seed is not None:
        u = haar_unitary(mats.shape[-1], seed)
        mats = u @ mats @ u.conj().T
    return MatrixTuple(mats)


def sample_from_model(p: Presentation, k: int, seed=None) -> MatrixTuple | None:
    """An exact microstate at size k built from the irreducible pieces of the model of ``p``.

    Returns None when no faithful representation of dimension k exists.
    """
    model = explicit_model(p)
    if model is None:
        return None
    blocks = irreducible_decomposition(model)
    mult = balanced_multiplicities([b.dim for b in blocks], k)
    if mult is None:
        return None
    return represent_blocks(blocks, mult, seed)


# -- penalty sampler ----------------------------------------------------------


def _clip_spectrum(mats: np.ndarray, radius: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mats)
    if np.all(np.abs(vals) <= radius):
        return mats
    vals = np.clip(vals, -radius, radius)
    return (vecs * vals[:, None, :]) @ vecs.conj().transpose(0, 2, 1)


def _norm_penalty(mats, compiled, targets):
    """Squared-hinge penalty on singular values and its gradient w.r.t. each generator."""
    words = compiled.word_values(mats)
    polys = np.tensordot(compiled.coeffs, words, axes=1)
    u, s, vh = np.linalg.svd(polys)
    over = np.maximum(s - targets[:, None], 0.0)
    under = np.maximum(targets - s[:, 0], 0.0)
    loss = float(np.sum(over**2) + np.sum(under**2))
    defect = float(np.max(np.abs(s[:, 0] - targets)))
    gpoly = (u * (2 * over)[:, None, :]) @ vh
    gpoly -= (2 * under)[:, None, None] * (u[:, :, :1] @ vh[:, :1, :])
    gword = np.tensordot(compiled.coeffs.conj().T, gpoly, axes=1)
    return loss, defect, words, gword


def _backprop_words(compiled, mats, words, gword):
    grad = np.zeros_like(mats)
    gword = gword.copy()
    for w in range(len(compiled.words) - 1, 0, -1):
        par, let = compiled.parent[w], compiled.letter[w]
        grad[let] += words[par].conj().T @ gword[w]
        gword[par] += gword[w] @ mats[let]
    return (grad + grad.conj().transpose(0, 2, 1)) / 2


def _moment_penalty(words_all, moment_index, moment_targets, k):
    z = np.trace(words_all[moment_index], axis1=1, axis2=2) / k
    diff = z - moment_targets
    loss = float(np.sum(np.abs(diff) ** 2))
    g = np.zeros_like(words_all)
    g[moment_index] += (2 * diff / k)[:, None, None] * np.eye(words_all.shape[-1])
    return loss, float(np.max(np.abs(diff))) if diff.size else 0.0, g


@dataclass
class PenaltyObjective:
    """Squared-hinge norm penalty plus optional squared moment mismatches.

    Calling it returns (loss, defect, gradient); ``moment_index`` indexes the
    compiled word list. ``norm_weight=0`` keeps only the moment terms.
    """

    compiled: object
    targets: np.ndarray
    moment_index: np.ndarray | None = None
    moment_targets: np.ndarray | None = None
    norm_weight: float = 1.0

    def __call__(self, mats):
        if self.norm_weight:
            loss, defect, words, gword = _norm_penalty(mats, self.compiled, self.targets)
            loss *= self.norm_weight
            gword *= self.norm_weight
        else:
            words = self.compiled.word_values(mats)
            loss, defect, gword = 0.0, 0.0, np.zeros_like(words)
        if self.moment_index is not None and len(self.moment_index):
            ml, md, mg = _moment_penalty(words, self.moment_index, self.moment_targets, mats.shape[-1])
            loss += ml
            gword = gword + mg
            defect = max(defect, md) if self.norm_weight else md
        return loss, defect, _backprop_words(self.compiled, mats, words, gword)


def descend(objective, mats0: np.ndarray, radius: float, iters: int):
    """Projected gradient descent with BB steps and Armijo backtracking.

    Projection is spectral clipping to [-radius, radius]. Returns the iterate with
    the smallest reported defect and that defect.
    """
    x = _clip_spectrum(mats0, radius)
    loss, defect, grad = objective(x)
    best_x, best_defect = x, defect
    step = 1.0 / max(1.0, float(np.max(np.abs(grad))))
    for _ in range(iters):
        if loss < 1e-28:
            break
        g2 = float(np.sum(np.abs(grad) ** 2))
        t = step
        for _ in range(40):
            cand = _clip_spectrum(x - t * grad, radius)
            c_loss, c_defect, c_grad = objective(cand)
            moved = float(np.sum(np.abs(cand - x) ** 2))
            if c_loss <= loss - 1e-4 * min(t * g2, moved / max(t, 1e-300)) + 1e-15 * loss:
                break
            t *= 0.5
        else:
            break
        s = cand - x
        y = c_grad - grad
        sy = float(np.sum(np.real(s.conj() * y)))
        step = float(np.sum(np.abs(s) ** 2)) / sy if sy > 1e-300 else 2 * t
        step = min(max(step, 1e-8), 1e4)
        x, loss, defect, grad = cand, c_loss, c_defect, c_grad
        if defect < best_defect:
            best_x, best_defect = x, defect
    return best_x, best_defect


def _start(p: Presentation, k: int, rng, bounds=None) -> np.ndarray:
    bounds = generator_norm_bounds(p) if bounds is None else bounds
    return np.stack([gue_hermitian(k, rng, max(b, 1e-3) / 2) for b in bounds])


def sample_penalty(p: Presentation, params: MicrostateParams, seed=None, iters: int = 500,
                   targets=None) -> Microstate:
    """Search for a low-defect microstate from a GUE start.

    The returned defect may exceed ``params.epsilon``; callers decide.
    """
    rng = np.random.default_rng(seed)
    battery = params.battery
    targets = target_norms(p, battery) if targets is None else np.asarray(targets, dtype=float)
    n = battery.num_indeterminates
    deg1 = [battery.polys.index(NcPolynomial.variable(i, n)) for i in range(1, n + 1)]
    x0 = _start(p, params.k, rng, bounds=targets[deg1])
    x, _ = descend(PenaltyObjective(battery.compiled, targets), x0, params.radius, iters)
    t = MatrixTuple(x)
    defect, _ = membership_defect(t, targets, params)
    return Microstate(t, defect, params)


# -- compositions -------------------------------------------------------------


def _mats(x) -> np.ndarray:
    if isinstance(x, Microstate):
        return x.tuple.mats
    return as_tuple(x).mats


def compose_direct_sum(a, b) -> MatrixTuple:
    """(A_i + 0 ; 0 + B_j) at size k1 + k2."""
    am, bm = _mats(a), _mats(b)
    k1, k2 = am.shape[-1], bm.shape[-1]
    left = block_diag_tuple([am, np.zeros((am.shape[0], k2, k2))])
    right = block_diag_tuple([np.zeros((bm.shape[0], k1, k1)), bm])
    return MatrixTuple(np.concatenate([left, right]))


def compose_free_product(base, blocks_a: Sequence, blocks_b: Sequence) -> MatrixTuple:
    """Pad a joint microstate with per-factor blocks: base_i + A_i^(1) + ... + A_i^(q)."""
    basem = _mats(base)
    if len(blocks_a) != len(blocks_b):
        raise LayoutMismatch("both factors need the same number of blocks")
    if not blocks_a:
        return MatrixTuple(basem)
    am = [_mats(b) for b in blocks_a]
    bm = [_mats(b) for b in blocks_b]
    na, nb = am[0].shape[0], bm[0].shape[0]
    if na + nb != basem.shape[0]:
        raise LayoutMismatch(f"base has {basem.shape[0]} generators, blocks give {na}+{nb}")
    k1 = am[0].shape[-1]
    if any(x.shape != (na, k1, k1) for x in am) or any(x.shape != (nb, k1, k1) for x in bm):
        raise LayoutMismatch("blocks must share shape")
    first = block_diag_tuple([basem[:na]] + am)
    second = block_diag_tuple([basem[na:]] + bm)
    return MatrixTuple(np.concatenate([first, second]))


def project_presence(joint, n: int) -> MatrixTuple:
    """Keep the first ``n`` matrices of a joint microstate."""
    m = _mats(joint)
    if not 1 <= n <= m.shape[0]:
        raise ValueError(f"n must lie in [1, {m.shape[0]}]")
    return MatrixTuple(m[:n])


def compress_by_matrix_units(t, n: int, max_defect: float = 0.25) -> tuple[MatrixTuple, float]:
    """Recover base microstates from an amplified tuple whose last n*n entries encode matrix units.

    Returns the k/n tuple of (1,1) corners of W^* A_i W and the largest
    ||W^* A_i W - B_i (x) I_n||.
    """
    m = _mats(t)
    k = m.shape[-1]
    if k % n:
        raise NotDivisible(f"{n} does not divide {k}")
    nb = m.shape[0] - n * n
    if nb < 1:
        raise DimensionMismatch("tuple has no base generators in front of the unit candidates")
    units = hermitian_to_units(m[nb:], n)
    w, _ = align_matrix_units(units, n, max_defect=max_defect)
    rotated = w.conj().T @ m[:nb] @ w
    corners = rotated[:, 0::n, 0::n]
    residual = max(operator_norm(r - np.kron(c, np.eye(n))) for r, c in zip(rotated, corners))
    return MatrixTuple(corners), float(residual)


# -- JSON ------------------------------------------------------------------------


def presentation_to_dict(p: Presentation) -> dict:
    if isinstance(p, Spectrum):
        return {"kind": "spectrum", "points": list(p.points)}
    if isinstance(p, MatrixModel):
        m = p.tuple.mats
        return {"kind": "matrix_model", "matrices": [[[[z.real, z.imag] for z in row] for row in g] for g in m]}
    if isinstance(p, NormTable):
        return {
            "kind": "norm_table",
            "n": p.num_generators,
            "battery": [format_poly(q) for q in p.battery.polys],
            "targets": list(p.targets),
            "radius": p.radius,
        }
    if isinstance(p, (FreeProduct, DirectSum)):
        return {"kind": p.kind, "left": presentation_to_dict(p.left), "right": presentation_to_dict(p.right)}
    if isinstance(p, Amplification):
        return {"kind": "amplification", "base": presentation_to_dict(p.base), "n": p.n}
    raise TypeError(f"not a presentation: {p!r}")


def presentation_from_dict(d: dict, root: Path | None = None) -> Presentation:
    kind = d.get("kind")
    root = root or Path(".")
    if kind == "spectrum":
        return Spectrum(tuple(d["points"]))
    if kind == "matrix_model":
        if "path" in d:
            return MatrixModel(read_htup(root / d["path"]))
        arr = np.array(d["matrices"], dtype=float)
        return MatrixModel(MatrixTuple(arr[..., 0] + 1j * arr[..., 1]))
    if kind == "norm_table":
        n = int(d["n"])
        polys = tuple(parse_poly(s, n) for s in d["battery"])
        degree = max(q.degree for q in polys)
        battery = PolyBattery(polys, degree, d.get("label", "norm-table"))
        return NormTable(battery, tuple(d["targets"]), float(d["radius"]))
    if kind in ("free_product", "direct_sum"):
        cls = FreeProduct if kind == "free_product" else DirectSum
        return cls(presentation_from_dict(d["left"], root), presentation_from_dict(d["right"], root))
    if kind == "amplification":
        return Amplification(presentation_from_dict(d["base"], root), int(d["n"]))
    raise ValueError(f"unknown presentation kind {kind!r}")


def load_presentation(path: str | Path) -> Presentation:
    path = Path(path)
    return presentation_from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)


def presentation_hash(p: Presentation) -> str:
    blob = json.dumps(presentation_to_dict(p), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
