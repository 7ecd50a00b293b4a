"""Hermitian tuples, metrics, random sources and unitary-orbit alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from ._kernels import orbit_descent
from .ncpoly import DimensionMismatch

HERMITIAN_TOL = 1e-12


class NonFinite(ValueError):
    pass


class ConvergenceFailure(RuntimeError):
    pass


class NotDivisible(ValueError):
    pass


class DefectTooLarge(ValueError):
    pass


def hermitian(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return (m + m.conj().T) / 2


@dataclass(frozen=True, eq=False)
class MatrixTuple:
    """n Hermitian k x k matrices stored as one (n, k, k) complex array."""

    mats: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.mats, dtype=complex)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] < 1:
            raise DimensionMismatch(f"expected shape (n, k, k), got {mats.shape}")
        mats = (mats + mats.conj().transpose(0, 2, 1)) / 2
        mats.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @classmethod
    def of(cls, *mats) -> MatrixTuple:
        return cls(np.stack([np.asarray(m, dtype=complex) for m in mats]))

    @property
    def n(self) -> int:
        return self.mats.shape[0]

    @property
    def k(self) -> int:
        return self.mats.shape[1]

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.mats)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return MatrixTuple(self.mats[i])
        return self.mats[i]

    def conjugate_by(self, u: np.ndarray) -> MatrixTuple:
        return MatrixTuple(u @ self.mats @ u.conj().T)

    def __sub__(self, other: MatrixTuple) -> MatrixTuple:
        return MatrixTuple(self.mats - other.mats)

    def __eq__(self, other):
        return isinstance(other, MatrixTuple) and np.array_equal(self.mats, other.mats)

    __hash__ = None


def as_tuple(t) -> MatrixTuple:
    return t if isinstance(t, MatrixTuple) else MatrixTuple(t)


def operator_norm(m) -> float:
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise NonFinite("matrix has non-finite entries")
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, ord=2))


def tuple_op_norm(t) -> float:
    mats = as_tuple(t).mats
    if not np.all(np.isfinite(mats)):
        raise NonFinite("tuple has non-finite entries")
    return float(np.max(np.linalg.norm(mats, ord=2, axis=(1, 2))))


def tuple_trace_norm(t) -> float:
    """sqrt(sum_i tau_k(A_i^* A_i)) with the normalized trace tau_k = Tr/k."""
    mats = as_tuple(t).mats
    return float(np.sqrt(np.sum(np.abs(mats) ** 2) / mats.shape[1]))


def eig_hermitian(m) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and an orthonormal eigenvector matrix."""
    try:
        return np.linalg.eigh(hermitian(m))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(k: int, seed=None) -> np.ndarray:
    """Haar-distributed unitary: Ginibre QR with the phases of diag(R) removed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = _rng(seed)
    z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def gue_hermitian(k: int, seed=None, scale: float = 1.0) -> np.ndarray:
    """GUE matrix whose entries have variance scale**2 / k (spectrum edge ~ 2*scale)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = _rng(seed)
    sigma = scale / np.sqrt(k)
    z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) * (sigma / np.sqrt(2))
    upper = np.triu(z, 1)
    diag = rng.standard_normal(k) * sigma
    return upper + upper.conj().T + np.diag(diag)


def sorted_spectrum_distance(a, b) -> float:
    """l2 distance of ascending spectra under the normalized trace."""
    a, b = hermitian(a), hermitian(b)
    if a.shape != b.shape:
        raise DimensionMismatch("matrices of different sizes")
    la, lb = np.linalg.eigvalsh(a), np.linalg.eigvalsh(b)
    return float(np.sqrt(np.sum((la - lb) ** 2) / a.shape[0]))


@dataclass(frozen=True)
class OrbitOptions:
    restarts: int = 8
    tolerance: float = 1e-10
    max_iter: int = 3000
    seed: int = 0
    spectral_start: bool = True


def _spectral_alignment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    weights = np.cos(np.arange(1, n + 1) * 0.7548776662466927) + 1.5
    _, va = np.linalg.eigh(np.tensordot(weights, a, axes=1))
    _, vb = np.linalg.eigh(np.tensordot(weights, b, axes=1))
    return va @ vb.conj().T


def orbit_distance(a, b, opts: OrbitOptions | None = None, **kwargs) -> tuple[float, np.ndarray]:
    """Upper bound on min_W ||a - W b W^*||_2 and the witness W.

    Multi-start Riemannian descent on the unitary group; restart 0 starts from the
    spectral alignment of a generic combination of the generators, the others from
    Haar-random unitaries. Ties between restarts go to the lowest index.
    """
    opts = opts or OrbitOptions(**kwargs)
    a, b = as_tuple(a), as_tuple(b)
    if a.mats.shape != b.mats.shape:
        raise DimensionMismatch(f"shapes {a.mats.shape} and {b.mats.shape} differ")
    am, bm = a.mats, b.mats
    k = a.k
    if np.array_equal(am, bm):
        return 0.0, np.eye(k, dtype=complex)
    rng = _rng(opts.seed)
    starts = []
    if opts.spectral_start:
        starts.append(_spectral_alignment(am, bm))
    while len(starts) < max(opts.restarts, 1):
        starts.append(haar_unitary(k, rng))
    w, _, _ = orbit_descent(am, bm, np.stack(starts), opts.tolerance, opts.max_iter)
    # exact recomputation at the returned witnesses
    dists = np.array([tuple_trace_norm(am - wi @ bm @ wi.conj().T) for wi in w])
    best = int(np.argmin(dists))
    baseline = tuple_trace_norm(am - bm)
    if baseline <= dists[best]:
        return baseline, np.eye(k, dtype=complex)
    return float(dists[best]), w[best]


def szarek_log_bound(k: int, delta: float, c: float) -> float:
    """log of (c/delta)^(k^2), the size bound for a delta-net of U(k)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if c < 1:
        raise ValueError("c must be >= 1")
    return k * k * math.log(c / delta)


def fit_szarek_constant(k: int = 2, delta: float = 0.5, samples: int = 2000, seed: int = 0) -> float:
    """Empirical constant c with |greedy delta-net of sampled U(k)| = (c/delta)^(k^2)."""
    rng = _rng(seed)
    us = np.stack([haar_unitary(k, rng) for _ in range(samples)])
    centers: list[np.ndarray] = []
    for u in us:
        if not centers or np.min(np.linalg.norm(np.stack(centers) - u, ord=2, axis=(1, 2))) >= delta:
            centers.append(u)
    return max(1.0, delta * len(centers) ** (1.0 / (k * k)))


def canonical_units(k: int, n: int) -> np.ndarray:
    """I_{k/n} (x) e_st stacked as (n, n, k, k)."""
    if k % n:
        raise NotDivisible(f"{n} does not divide {k}")
    m = k // n
    out = np.zeros((n, n, k, k), dtype=complex)
    for s in range(n):
        for t in range(n):
            e = np.zeros((n, n))
            e[s, t] = 1.0
            out[s, t] = np.kron(np.eye(m), e)
    return out


def units_to_hermitian(units: np.ndarray) -> np.ndarray:
    """Hermitian encoding of matrix units, (n, n, k, k) -> (n*n, k, k).

    Slot (s, s) holds E_ss, slot (s, t) with s < t holds E_st + E_ts and slot (t, s)
    holds i(E_st - E_ts).
    """
    n = units.shape[0]
    out = np.empty((n * n,) + units.shape[2:], dtype=complex)
    for s in range(n):
        for t in range(n):
            if s == t:
                out[s * n + t] = units[s, s]
            elif s < t:
                out[s * n + t] = units[s, t] + units[t, s]
            else:
                out[s * n + t] = 1j * (units[t, s] - units[s, t])
    return out


def hermitian_to_units(herm: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`units_to_hermitian`."""
    herm = np.asarray(herm, dtype=complex)
    if herm.shape[0] != n * n:
        raise DimensionMismatch(f"expected {n * n} unit candidates, got {herm.shape[0]}")
    k = herm.shape[-1]
    out = np.empty((n, n, k, k), dtype=complex)
    for s in range(n):
        out[s, s] = herm[s * n + s]
        for t in range(s + 1, n):
            h, g = herm[s * n + t], herm[t * n + s]
            out[s, t] = (h - 1j * g) / 2
            out[t, s] = (h + 1j * g) / 2
    return out


def unit_defect(units: np.ndarray) -> float:
    """Largest violation of the matrix-unit relations (products, adjoints, partition of 1)."""
    units = np.asarray(units, dtype=complex)
    n, k = units.shape[0], units.shape[-1]
    worst = operator_norm(units[range(n), range(n)].sum(axis=0) - np.eye(k))
    for s1 in range(n):
        for t1 in range(n):
            e = units[s1, t1]
            worst = max(worst, operator_norm(e.conj().T - units[t1, s1]))
            for t2 in range(n):
                prod = e @ units[t1, t2]
                worst = max(worst, operator_norm(prod - units[s1, t2]))
                for s2 in range(n):
                    if s2 != t1:
                        worst = max(worst, operator_norm(e @ units[s2, t2]))
    return worst


def _polar_unitary(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def align_matrix_units(units, n: int, max_defect: float = 0.25) -> tuple[np.ndarray, float]:
    """Unitary W with W^* E_st W close to I_{k/n} (x) e_st.

    ``units`` is an (n, n, k, k) array (or n*n matrices in row-major (s, t) order).
    Range projections come from spectral truncation of the Hermitian parts of the
    diagonal units at 1/2; the off-diagonal blocks are rebuilt from polar factors of
    the compressed units p_s E_s1 p_1, and the assembled isometry is made unitary by
    a final polar step. Returns W and the summed operator-norm residual.
    """
    units = np.asarray(units, dtype=complex)
    if units.ndim == 3:
        units = units.reshape((n, n) + units.shape[1:])
    if units.shape[:2] != (n, n):
        raise DimensionMismatch(f"expected {n}x{n} units, got {units.shape[:2]}")
    k = units.shape[-1]
    if k % n:
        raise NotDivisible(f"{n} does not divide {k}")
    delta = unit_defect(units)
    if delta > max_defect:
        raise DefectTooLarge(f"unit defect {delta:.3g} exceeds {max_defect}")
    m = k // n
    ranges = []
    for s in range(n):
        vals, vecs = np.linalg.eigh(hermitian(units[s, s]))
        keep = vals > 0.5
        if keep.sum() != m:
            raise DefectTooLarge(f"projection {s} has rank {keep.sum()}, expected {m}")
        ranges.append(vecs[:, keep])
    # Loewdin orthonormalization of the family of ranges
    stacked = _polar_unitary(np.concatenate(ranges, axis=1))
    ranges = [stacked[:, s * m:(s + 1) * m] for s in range(n)]
    y1 = ranges[0]
    cols = np.empty((k, m, n), dtype=complex)
    cols[:, :, 0] = y1
    for s in range(1, n):
        v = _polar_unitary(ranges[s].conj().T @ units[s, 0] @ y1)
        cols[:, :, s] = ranges[s] @ v
    # column (i, s) -> index i*n + s matches the I_m (x) e_st layout
    w = _polar_unitary(cols.reshape(k, k))
    residual = alignment_residual(units, w)
    return w, residual


def alignment_residual(units: np.ndarray, w: np.ndarray) -> float:
    n, k = units.shape[0], units.shape[-1]
    canon = canonical_units(k, n)
    wh = w.conj().T
    return float(sum(operator_norm(wh @ units[s, t] @ w - canon[s, t]) for s in range(n) for t in range(n)))


def commutant_basis(mats: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Basis (d, k, k) of {X : X A_i = A_i X for all i}."""
    mats = np.asarray(mats, dtype=complex)
    k = mats.shape[-1]
    eye = np.eye(k)
    # vec(XA - AX) with row-major vec: (I (x) A^T - A (x) I) vec(X)
    blocks = [np.kron(eye, a.T) - np.kron(a, eye) for a in mats]
    op = np.concatenate(blocks, axis=0)
    _, s, vh = np.linalg.svd(op)
    scale = max(s[0] if s.size else 0.0, 1.0)
    rank = int(np.sum(s > tol * scale))
    return vh[rank:].conj().reshape(-1, k, k)


def intertwiner_dimension(x: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> int:
    """dim {T : T x_i = y_i T} for tuples x (n, a, a), y (n, b, b)."""
    a, b = x.shape[-1], y.shape[-1]
    blocks = [np.kron(np.eye(b), xi.T) - np.kron(yi, np.eye(a)) for xi, yi in zip(x, y)]
    op = np.concatenate(blocks, axis=0)
    s = np.linalg.svd(op, compute_uv=False)
    scale = max(s[0] if s.size else 0.0, 1.0)
    return int(a * b - np.sum(s > tol * scale))


@dataclass(frozen=True)
class IrreducibleBlock:
    mats: np.ndarray  # (n, d, d) irreducible representation
    multiplicity: int  # occurrences inside the decomposed tuple

    @property
    def dim(self) -> int:
        return self.mats.shape[-1]


def irreducible_decomposition(t, seed: int = 12345, tol: float = 1e-8) -> list[IrreducibleBlock]:
    """Inequivalent irreducible summands of the unital *-algebra generated by ``t``.

    A generic Hermitian element of the commutant has the irreducible invariant
    subspaces as eigenspaces; equivalent summands are merged by intertwiner tests.
    """
    mats = as_tuple(t).mats
    basis = commutant_basis(mats)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    c = np.tensordot(coeffs, basis, axes=1)
    vals, vecs = np.linalg.eigh(hermitian(c))
    spread = max(1.0, float(np.ptp(vals)))
    groups: list[list[int]] = [[0]]
    for i in range(1, len(vals)):
        if vals[i] - vals[groups[-1][-1]] <= tol * spread * 100:
            groups[-1].append(i)
        else:
            groups.append([i])
    pieces = []
    for g in groups:
        v = vecs[:, g]
        pieces.append(v.conj().T @ mats @ v)
    blocks: list[list] = []
    for piece in pieces:
        for entry in blocks:
            rep = entry[0]
            if rep.shape == piece.shape and intertwiner_dimension(rep, piece) > 0:
                entry[1] += 1
                break
        else:
            blocks.append([piece, 1])
    return [IrreducibleBlock(rep, mult) for rep, mult in blocks]


def block_diag_tuple(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Generator-wise block diagonal of tuples with shapes (n, k_j, k_j)."""
    n = blocks[0].shape[0]
    return np.stack([scipy.linalg.block_diag(*[b[i] for b in blocks]) for i in range(n)])


# -- HTUP1 ------------------------------------------------------------------


def format_htup(t) -> str:
    t = as_tuple(t)
    lines = [f"HTUP1 {t.k} {t.n}"]
    for m in t.mats:
        for row in m:
            lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    return "\n".join(lines) + "\n"


def parse_htup(text: str) -> MatrixTuple:
    tokens = text.split()
    if len(tokens) < 3 or tokens[0] != "HTUP1":
        raise ValueError("not an HTUP1 file")
    k, n = int(tokens[1]), int(tokens[2])
    values = np.array([float(x) for x in tokens[3:]])
    if values.size != 2 * n * k * k:
        raise ValueError(f"expected {2 * n * k * k} numbers, found {values.size}")
    z = values[0::2] + 1j * values[1::2]
    return MatrixTuple(z.reshape(n, k, k))


def write_htup(t, path: str | Path) -> None:
    Path(path).write_text(format_htup(t), encoding="utf-8")


def read_htup(path: str | Path) -> MatrixTuple:
    return parse_htup(Path(path).read_text(encoding="utf-8"))


def random_hermitian_tuple(n: int, k: int, seed=None, scale: float = 1.0) -> MatrixTuple:
    rng = _rng(seed)
    return MatrixTuple(np.stack([gue_hermitian(k, rng, scale) for _ in range(n)]))


def stack_tuples(ts: Iterable) -> np.ndarray:
    return np.stack([as_tuple(t).mats for t in ts])
