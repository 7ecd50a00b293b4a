"""Hot loops, each with a numba kernel and a pure-numpy fallback.

The backend is chosen once at import time from ``FREEDIM_BACKEND``
(``numba`` or ``numpy``); numba is used by default when importable.
Both paths return identical results up to floating-point rounding.
"""

from __future__ import annotations

import os

import numpy as np

_requested = os.environ.get("FREEDIM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"FREEDIM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numpy":
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"

METRIC_OP = 0
METRIC_TRACE2 = 1


# -- unitary-orbit descent --------------------------------------------------

# relative slack in the Armijo test; below it decreases of f are rounding noise
_NOISE = 1e-14


def _objective_np(a, b, w):
    k = a.shape[-1]
    wb = w[:, None] @ b[None] @ w.conj().transpose(0, 2, 1)[:, None]
    diff = a[None] - wb
    f = np.sum(np.abs(diff) ** 2, axis=(1, 2, 3)) / k
    egrad = -(4.0 / k) * np.sum(a[None] @ w[:, None] @ b[None], axis=1)
    omega = w.conj().transpose(0, 2, 1) @ egrad
    xi = (omega - omega.conj().transpose(0, 2, 1)) / 2
    return f, xi


def _cayley_np(x):
    k = x.shape[-1]
    eye = np.broadcast_to(np.eye(k), x.shape)
    return np.linalg.solve(eye - x / 2, eye + x / 2)


def _orbit_descent_np(a, b, w0, tol, max_iter):
    w = w0.copy()
    r = w.shape[0]
    f, xi = _objective_np(a, b, w)
    gnorm = np.sqrt(np.sum(np.abs(xi) ** 2, axis=(1, 2)))
    step = np.full(r, 0.5)
    active = gnorm > tol
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        t = step[idx].copy()
        xi_a = xi[idx]
        g2 = gnorm[idx] ** 2
        accepted = np.zeros(len(idx), dtype=bool)
        w_new, f_new, xi_new = w[idx].copy(), f[idx].copy(), xi_a.copy()
        for _ in range(60):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            cand = w[idx[todo]] @ _cayley_np(-t[todo, None, None] * xi_a[todo])
            fc, xc = _objective_np(a, b, cand)
            fo = f[idx[todo]]
            ok = fc <= fo - 1e-4 * t[todo] * g2[todo] + _NOISE * np.abs(fo)
            sel = todo[ok]
            w_new[sel], f_new[sel], xi_new[sel] = cand[ok], fc[ok], xc[ok]
            accepted[sel] = True
            t[todo[~ok]] *= 0.5
        active[idx[~accepted]] = False
        good = idx[accepted]
        ta = t[accepted]
        s_vec = -ta[:, None, None] * xi_a[accepted]
        y_vec = xi_new[accepted] - xi_a[accepted]
        sy = np.abs(np.sum(np.real(s_vec.conj() * y_vec), axis=(1, 2)))
        ss = np.sum(np.abs(s_vec) ** 2, axis=(1, 2))
        bb = np.where(sy > 1e-300, ss / np.maximum(sy, 1e-300), 2 * ta)
        step[good] = np.minimum(np.maximum(bb, 1e-6), 1e3)
        w[good], f[good], xi[good] = w_new[accepted], f_new[accepted], xi_new[accepted]
        gnorm[good] = np.sqrt(np.sum(np.abs(xi[good]) ** 2, axis=(1, 2)))
        active[good] = gnorm[good] > tol
    return w, f, gnorm


@njit(cache=True)
def _objective_nb(a, b, w):
    n = a.shape[0]
    k = a.shape[1]
    wh = np.ascontiguousarray(w.conj().T)
    f = 0.0
    egrad = np.zeros((k, k), dtype=np.complex128)
    for i in range(n):
        wb = w @ b[i]
        diff = a[i] - wb @ wh
        f += np.sum(diff.real**2 + diff.imag**2)
        egrad += a[i] @ wb
    f /= k
    egrad *= -4.0 / k
    omega = wh @ egrad
    xi = (omega - omega.conj().T) / 2
    return f, np.ascontiguousarray(xi)


@njit(cache=True)
def _cayley_nb(x):
    k = x.shape[0]
    eye = np.eye(k, dtype=np.complex128)
    return np.linalg.solve(eye - x / 2, eye + x / 2)


@njit(cache=True)
def _orbit_descent_single_nb(a, b, w0, tol, max_iter):
    w = w0.copy()
    f, xi = _objective_nb(a, b, w)
    g2 = np.sum(xi.real**2 + xi.imag**2)
    step = 0.5
    for _ in range(max_iter):
        if np.sqrt(g2) <= tol:
            break
        t = step
        accepted = False
        for _ in range(60):
            cand = w @ _cayley_nb(-t * xi)
            fc, xc = _objective_nb(a, b, cand)
            if fc <= f - 1e-4 * t * g2 + _NOISE * abs(f):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        s = -t * xi
        y = xc - xi
        sy = abs(np.sum((s.conj() * y).real))
        ss = np.sum(s.real**2 + s.imag**2)
        step = ss / sy if sy > 1e-300 else 2 * t
        step = min(max(step, 1e-6), 1e3)
        w, f, xi = cand, fc, xc
        g2 = np.sum(xi.real**2 + xi.imag**2)
    return w, f, np.sqrt(g2)


def orbit_descent(a, b, w0, tol, max_iter):
    """Minimize ||a - W b W^*||_2^2 over U(k) from each start in ``w0`` (r, k, k)."""
    a = np.ascontiguousarray(a, dtype=np.complex128)
    b = np.ascontiguousarray(b, dtype=np.complex128)
    w0 = np.ascontiguousarray(w0, dtype=np.complex128)
    if not HAVE_NUMBA:
        return _orbit_descent_np(a, b, w0, tol, max_iter)
    ws, fs, gs = [], [], []
    for start in w0:
        w, f, g = _orbit_descent_single_nb(a, b, start, tol, max_iter)
        ws.append(w)
        fs.append(f)
        gs.append(g)
    return np.stack(ws), np.array(fs), np.array(gs)


# -- greedy packings and nets on distance matrices --------------------------


@njit(cache=True)
def _greedy_packing_nb(d, omega):
    n = d.shape[0]
    kept = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        ok = True
        for j in range(m):
            if d[i, kept[j]] < omega:
                ok = False
                break
        if ok:
            kept[m] = i
            m += 1
    return kept[:m]


def _greedy_packing_np(d, omega):
    kept: list[int] = []
    for i in range(d.shape[0]):
        if not kept or np.all(d[i, kept] >= omega):
            kept.append(i)
    return np.array(kept, dtype=np.int64)


@njit(cache=True)
def _greedy_cover_nb(d, omega):
    n = d.shape[0]
    covered = np.zeros(n, dtype=np.bool_)
    centers = np.empty(n, dtype=np.int64)
    m = 0
    remaining = n
    while remaining > 0:
        best = -1
        best_count = -1
        for i in range(n):
            c = 0
            for j in range(n):
                if not covered[j] and d[i, j] < omega:
                    c += 1
            if c > best_count:
                best_count = c
                best = i
        centers[m] = best
        m += 1
        for j in range(n):
            if not covered[j] and d[best, j] < omega:
                covered[j] = True
                remaining -= 1
    return centers[:m]


def _greedy_cover_np(d, omega):
    n = d.shape[0]
    covers = d < omega
    covered = np.zeros(n, dtype=bool)
    centers: list[int] = []
    while not covered.all():
        counts = np.sum(covers & ~covered[None, :], axis=1)
        best = int(np.argmax(counts))  # first maximum = lowest index
        centers.append(best)
        covered |= covers[best]
    return np.array(centers, dtype=np.int64)


def greedy_packing(d, omega: float) -> np.ndarray:
    """Index-order maximal subset whose pairwise distances are all >= omega."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    if HAVE_NUMBA:
        return _greedy_packing_nb(d, float(omega))
    return _greedy_packing_np(d, float(omega))


def greedy_cover(d, omega: float) -> np.ndarray:
    """Greedy set cover by open omega-balls centered at cloud points."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    if HAVE_NUMBA:
        return _greedy_cover_nb(d, float(omega))
    return _greedy_cover_np(d, float(omega))


# -- pairwise distances -----------------------------------------------------


@njit(cache=True)
def _pairwise_trace2_nb(x, k):
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for t in range(x.shape[1]):
                z = x[i, t] - x[j, t]
                s += z.real * z.real + z.imag * z.imag
            out[i, j] = out[j, i] = np.sqrt(s / k)
    return out


@njit(cache=True)
def _pairwise_op_nb(mats):
    # mats: (N, n, k, k) Hermitian
    N = mats.shape[0]
    out = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            best = 0.0
            for g in range(mats.shape[1]):
                ev = np.linalg.eigvalsh(mats[i, g] - mats[j, g])
                v = max(abs(ev[0]), abs(ev[-1]))
                if v > best:
                    best = v
            out[i, j] = out[j, i] = best
    return out


def pairwise_trace2(mats) -> np.ndarray:
    """Normalized-trace distances for a cloud of shape (N, n, k, k)."""
    mats = np.ascontiguousarray(mats, dtype=np.complex128)
    N, k = mats.shape[0], mats.shape[-1]
    flat = mats.reshape(N, -1)
    if HAVE_NUMBA:
        return _pairwise_trace2_nb(flat, k)
    sq = np.sum(np.abs(flat) ** 2, axis=1)
    gram = np.real(flat @ flat.conj().T)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * gram, 0.0) / k
    # recompute tiny entries directly; the Gram identity loses digits there
    out = np.sqrt(d2)
    close = np.argwhere(out < 1e-6)
    for i, j in close:
        out[i, j] = np.sqrt(np.sum(np.abs(flat[i] - flat[j]) ** 2) / k)
    np.fill_diagonal(out, 0.0)
    return out


def pairwise_op(mats) -> np.ndarray:
    """max_i ||A_i - B_i||_op for a cloud of Hermitian tuples (N, n, k, k)."""
    mats = np.ascontiguousarray(mats, dtype=np.complex128)
    if HAVE_NUMBA:
        return _pairwise_op_nb(mats)
    N = mats.shape[0]
    out = np.zeros((N, N))
    for i in range(N - 1):
        diff = mats[i][None] - mats[i + 1:]
        ev = np.linalg.eigvalsh(diff)
        out[i, i + 1:] = np.max(np.abs(ev), axis=(1, 2))
    return out + out.T


# -- brute-force grids over Hermitian tuples --------------------------------


@njit(cache=True)
def _coords_to_mats_nb(coords, n, k, out):
    pos = 0
    for g in range(n):
        for i in range(k):
            out[g, i, i] = coords[pos]
            pos += 1
        for i in range(k):
            for j in range(i + 1, k):
                z = coords[pos] + 1j * coords[pos + 1]
                out[g, i, j] = z
                out[g, j, i] = np.conj(z)
                pos += 2


def coords_to_mats(coords: np.ndarray, n: int, k: int) -> np.ndarray:
    """Real coordinates (..., n*k*k) to Hermitian stacks (..., n, k, k)."""
    coords = np.asarray(coords, dtype=float)
    lead = coords.shape[:-1]
    out = np.zeros(lead + (n, k, k), dtype=complex)
    c = coords.reshape(lead + (n, k * k))
    iu = np.triu_indices(k, 1)
    out[..., np.arange(k), np.arange(k)] = c[..., :k]
    off = c[..., k:]
    z = off[..., 0::2] + 1j * off[..., 1::2]
    out[..., iu[0], iu[1]] = z
    out[..., iu[1], iu[0]] = np.conj(z)
    return out


@njit(cache=True)
def _grid_single_nb(axis, dims, k, powcoef, targets, eps, semi):
    """Members of a grid over M_k^sa for a single generator.

    Polynomials are given by power coefficients ``powcoef`` (P, d+1); norms are
    max over eigenvalues of |p(lambda)|.
    """
    G = axis.shape[0]
    total = G**dims
    coords = np.empty(dims)
    mats = np.zeros((1, k, k), dtype=np.complex128)
    members = np.empty(total, dtype=np.int64)
    m = 0
    P, D = powcoef.shape
    for idx in range(total):
        r = idx
        for t in range(dims - 1, -1, -1):
            coords[t] = axis[r % G]
            r //= G
        if k == 1:
            ev = np.array([coords[0]])
        elif k == 2:
            mid = 0.5 * (coords[0] + coords[1])
            rad = np.sqrt(0.25 * (coords[0] - coords[1]) ** 2 + coords[2] ** 2 + coords[3] ** 2)
            ev = np.array([mid - rad, mid + rad])
        else:
            _coords_to_mats_nb(coords, 1, k, mats)
            ev = np.linalg.eigvalsh(mats[0])
        defect = 0.0
        for p in range(P):
            best = 0.0
            for lam in ev:
                acc = powcoef[p, D - 1]
                for q in range(D - 2, -1, -1):
                    acc = acc * lam + powcoef[p, q]
                v = abs(acc)
                if v > best:
                    best = v
            dev = best - targets[p]
            if not semi and -dev > dev:
                dev = -dev
            if dev > defect:
                defect = dev
        if defect <= eps:
            members[m] = idx
            m += 1
    return members[:m]


@njit(cache=True)
def _grid_multi_nb(axis, dims, n, k, parent, letter, coeffs, targets, eps, semi):
    G = axis.shape[0]
    total = G**dims
    coords = np.empty(dims)
    mats = np.zeros((n, k, k), dtype=np.complex128)
    W = coeffs.shape[1]
    words = np.zeros((W, k, k), dtype=np.complex128)
    members = np.empty(total, dtype=np.int64)
    m = 0
    for idx in range(total):
        r = idx
        for t in range(dims - 1, -1, -1):
            coords[t] = axis[r % G]
            r //= G
        _coords_to_mats_nb(coords, n, k, mats)
        words[0] = np.eye(k, dtype=np.complex128)
        for w in range(1, W):
            words[w] = words[parent[w]] @ mats[letter[w]]
        defect = 0.0
        for p in range(coeffs.shape[0]):
            acc = np.zeros((k, k), dtype=np.complex128)
            for w in range(W):
                if coeffs[p, w] != 0:
                    acc += coeffs[p, w] * words[w]
            s = np.linalg.svd(acc)[1]
            dev = s[0] - targets[p]
            if not semi and -dev > dev:
                dev = -dev
            if dev > defect:
                defect = dev
        if defect <= eps:
            members[m] = idx
            m += 1
    return members[:m]


def _grid_coords_np(axis, dims, idx):
    G = axis.shape[0]
    digits = np.empty((idx.size, dims), dtype=np.int64)
    r = idx.copy()
    for t in range(dims - 1, -1, -1):
        digits[:, t] = r % G
        r //= G
    return axis[digits]


def _grid_np(axis, dims, n, k, compiled, powcoef, targets, eps, semi, chunk=200_000):
    G = axis.shape[0]
    total = G**dims
    found = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        mats = coords_to_mats(_grid_coords_np(axis, dims, idx), n, k)
        if powcoef is not None:
            ev = np.linalg.eigvalsh(mats[:, 0])
            vals = np.zeros((idx.size, powcoef.shape[0], k), dtype=complex)
            for q in range(powcoef.shape[1] - 1, -1, -1):
                vals = vals * ev[:, None, :] + powcoef[None, :, q, None]
            norms = np.max(np.abs(vals), axis=2)
        else:
            words = np.empty((idx.size, len(compiled.words), k, k), dtype=complex)
            words[:, 0] = np.eye(k)
            for w in range(1, len(compiled.words)):
                words[:, w] = words[:, compiled.parent[w]] @ mats[:, compiled.letter[w]]
            polys = np.einsum("pw,cwij->cpij", compiled.coeffs, words)
            norms = np.linalg.norm(polys, ord=2, axis=(2, 3))
        dev = norms - targets[None, :]
        if not semi:
            dev = np.abs(dev)
        found.append(idx[np.max(dev, axis=1) <= eps])
    return np.concatenate(found) if found else np.zeros(0, dtype=np.int64)


def grid_members(axis, n, k, compiled, targets, eps, semi, powcoef=None) -> np.ndarray:
    """Flat indices of grid points of (M_k^sa)^n within defect ``eps``.

    ``powcoef`` switches to the eigenvalue path for a single generator.
    """
    axis = np.ascontiguousarray(axis, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    dims = n * k * k
    if HAVE_NUMBA:
        if powcoef is not None:
            return _grid_single_nb(axis, dims, k, np.ascontiguousarray(powcoef), targets, eps, semi)
        return _grid_multi_nb(axis, dims, n, k, compiled.parent, compiled.letter,
                              np.ascontiguousarray(compiled.coeffs), targets, eps, semi)
    return _grid_np(axis, dims, n, k, compiled, powcoef, targets, eps, semi)


def grid_coords(axis, n, k, idx) -> np.ndarray:
    return _grid_coords_np(np.asarray(axis, dtype=float), n * k * k, np.asarray(idx, dtype=np.int64))


@njit(cache=True)
def _coord_dist_nb(x, y, n, k, metric, mats_a, mats_b):
    if metric == METRIC_TRACE2:
        s = 0.0
        pos = 0
        for g in range(n):
            for i in range(k):
                z = x[pos] - y[pos]
                s += z * z
                pos += 1
            for i in range(k * (k - 1)):
                z = x[pos] - y[pos]
                s += 2 * z * z
                pos += 1
        return np.sqrt(s / k)
    diff = x - y
    if k == 1:
        best = 0.0
        for g in range(n):
            v = abs(diff[g])
            if v > best:
                best = v
        return best
    _coords_to_mats_nb(diff, n, k, mats_a)
    best = 0.0
    for g in range(n):
        ev = np.linalg.eigvalsh(mats_a[g])
        v = max(abs(ev[0]), abs(ev[-1]))
        if v > best:
            best = v
    return best


@njit(cache=True)
def _coord_packing_nb(x, n, k, metric, omega):
    N = x.shape[0]
    kept = np.empty(N, dtype=np.int64)
    mats_a = np.zeros((n, k, k), dtype=np.complex128)
    mats_b = np.zeros((n, k, k), dtype=np.complex128)
    m = 0
    for i in range(N):
        ok = True
        for j in range(m):
            if _coord_dist_nb(x[i], x[kept[j]], n, k, metric, mats_a, mats_b) < omega:
                ok = False
                break
        if ok:
            kept[m] = i
            m += 1
    return kept[:m]


def _coord_dists_np(x, ref, n, k, metric):
    if metric == METRIC_TRACE2:
        w = np.tile(np.concatenate([np.ones(k), 2 * np.ones(k * (k - 1))]), n)
        return np.sqrt(np.sum(w * (ref - x[None]) ** 2, axis=1) / k)
    diff = coords_to_mats(ref - x[None], n, k)
    return np.max(np.abs(np.linalg.eigvalsh(diff)), axis=(1, 2))


def coord_packing(x, n, k, metric, omega) -> np.ndarray:
    """Index-order greedy packing (pairwise >= omega) of coordinate vectors."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if HAVE_NUMBA:
        return _coord_packing_nb(x, n, k, metric, float(omega))
    kept: list[int] = []
    for i in range(x.shape[0]):
        if not kept or np.all(_coord_dists_np(x[i], x[kept], n, k, metric) >= omega):
            kept.append(i)
    return np.array(kept, dtype=np.int64)
