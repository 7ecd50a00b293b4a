"""Covering and packing counts of finite clouds and of brute-force grids.

All balls are open: a center c covers x when d(c, x) < omega. Packings keep
points at pairwise distance >= omega, so every maximal omega-packing is itself
an omega-net and any omega-net has at least as many centers as a 2*omega-packing.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .matrixcore import MatrixTuple, OrbitOptions, as_tuple, orbit_distance, stack_tuples
from .microstates import (
    Presentation,
    Spectrum,
    default_radius,
    presentation_battery,
    target_norms,
)
from .ncpoly import NcPolynomial

GRID_LIMIT = 10_000_000


class GridTooLarge(ValueError):
    pass


class WrongKind(TypeError):
    pass


class Metric(str, Enum):
    OP = "OpNorm"
    TRACE2 = "Trace2"
    ORBIT2 = "Orbit2"

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, Metric):
            return value
        for m in cls:
            if value in (m.value, m.name, m.value.lower()):
                return m
        raise ValueError(f"unknown metric {value!r}")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A finite sample of tuples with common shape, stored as an (N, n, k, k) array."""

    points: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        pts = self.points
        if not isinstance(pts, np.ndarray):
            pts = stack_tuples(pts)
        pts = np.asarray(pts, dtype=complex)
        if pts.ndim == 3:
            pts = pts[:, None]
        if pts.ndim != 4 or pts.shape[0] == 0 or pts.shape[-1] != pts.shape[-2]:
            raise ValueError("cloud must be a nonempty stack of shape (N, n, k, k)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def k(self) -> int:
        return self.points.shape[-1]

    def __len__(self):
        return self.size

    def __getitem__(self, i) -> MatrixTuple:
        return MatrixTuple(self.points[i])


@dataclass(frozen=True)
class CoveringEstimate:
    """Bracket [log_lower, log_upper] for a covering number at scale omega.

    ``evidence`` says what the bracket is about: ``cloud`` (the sampled points
    only), ``grid`` (a discretized microstate set, off by at most ``slack`` in
    the metric) or ``exact``.
    """

    omega: float
    metric: Metric
    log_lower: float
    log_upper: float
    num_points: int
    k: int = 0
    epsilon: float = float("nan")
    seed: int | None = None
    slack: float = 0.0
    evidence: str = "cloud"

    def __post_init__(self):
        if not (math.isfinite(self.log_lower) and math.isfinite(self.log_upper)):
            raise ValueError("bounds must be finite")
        if self.log_lower > self.log_upper:
            raise ValueError("log_lower exceeds log_upper")

    @property
    def lower(self) -> int:
        return int(round(math.exp(self.log_lower)))

    @property
    def upper(self) -> int:
        return int(round(math.exp(self.log_upper)))


CSV_FIELDS = ["metric", "k", "omega", "epsilon", "log_lower", "log_upper", "num_points", "seed"]


def estimates_to_csv(estimates: Iterable[CoveringEstimate], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for e in estimates:
        seed = "" if e.seed is None else e.seed
        writer.writerow([e.metric.value, e.k, repr(e.omega), repr(e.epsilon), repr(e.log_lower),
                         repr(e.log_upper), e.num_points, seed])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- distances --------------------------------------------------------------------


def pairwise_distances(c: PointCloud, metric, opts: OrbitOptions | None = None) -> np.ndarray:
    """Symmetric distance matrix of a cloud.

    Orbit2 entries for a single generator are exact (sorted spectra). For several
    generators they come from the unitary-orbit optimizer and are upper bounds;
    the smaller of the two directions is kept.
    """
    metric = Metric.parse(metric)
    if metric is Metric.OP:
        return _kernels.pairwise_op(c.points)
    if metric is Metric.TRACE2:
        return _kernels.pairwise_trace2(c.points)
    if c.n == 1:
        ev = np.linalg.eigvalsh(c.points[:, 0])
        diag = np.zeros(c.points.shape, dtype=complex)
        diag[:, 0, np.arange(c.k), np.arange(c.k)] = ev
        return _kernels.pairwise_trace2(diag)
    opts = opts or OrbitOptions()
    N = c.size
    d = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            dij, _ = orbit_distance(c.points[i], c.points[j], opts)
            dji, _ = orbit_distance(c.points[j], c.points[i], opts)
            d[i, j] = d[j, i] = min(dij, dji)
    return d


def _as_distances(c, metric, distances, opts):
    if distances is not None:
        return np.asarray(distances, dtype=float)
    return pairwise_distances(c, metric, opts)


def max_packing(c: PointCloud, omega: float, metric, distances=None, opts=None) -> np.ndarray:
    """Index-order maximal subset with pairwise distances >= omega."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return _kernels.greedy_packing(_as_distances(c, metric, distances, opts), omega)


def greedy_net(c: PointCloud, omega: float, metric, distances=None, opts=None) -> np.ndarray:
    """Centers from the cloud whose open omega-balls cover every cloud point.

    The smaller of a greedy set cover and the index-order maximal packing
    (which is also a net), so the net is never larger than that packing.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    d = _as_distances(c, metric, distances, opts)
    cover = _kernels.greedy_cover(d, omega)
    pack = _kernels.greedy_packing(d, omega)
    return cover if len(cover) <= len(pack) else pack


def covers(d: np.ndarray, centers: Sequence[int], omega: float) -> bool:
    d = np.asarray(d)
    return bool(np.all(np.min(d[np.asarray(centers)], axis=0) < omega))


def sandwich(c: PointCloud, omega: float, metric, distances=None, opts=None) -> tuple[int, int, int]:
    """(|packing at 2 omega|, |net at omega|, |packing at omega|)."""
    d = _as_distances(c, metric, distances, opts)
    return (len(max_packing(c, 2 * omega, metric, d)), len(greedy_net(c, omega, metric, d)),
            len(max_packing(c, omega, metric, d)))


def cloud_estimate(c: PointCloud, omega: float, metric, *, epsilon: float = float("nan"), seed=None,
                   distances=None, opts=None) -> CoveringEstimate:
    """Bracket the omega-covering number of the sampled cloud."""
    metric = Metric.parse(metric)
    low, net, _ = sandwich(c, omega, metric, distances, opts)
    return CoveringEstimate(omega, metric, math.log(low), math.log(net), c.size, c.k, epsilon, seed)


# -- exact strata and brute force --------------------------------------------------


def orbit_stratum_count(p: Presentation, k: int) -> int:
    """Unitary orbits of exact-spectrum microstates: compositions of k into |points| parts."""
    if not isinstance(p, Spectrum):
        raise WrongKind(f"orbit strata are defined for spectra, not {p.kind}")
    return math.comb(k - 1, len(p.points) - 1) if k >= len(p.points) else 0


def _power_coefficients(polys: Sequence[NcPolynomial], degree: int) -> np.ndarray:
    out = np.zeros((len(polys), degree + 1), dtype=complex)
    for j, q in enumerate(polys):
        for w, c in q.terms:
            out[j, len(w)] += c
    return out


def _cover_line(x: np.ndarray, omega: float) -> int:
    """Minimal number of open omega-intervals centered at points of x covering x."""
    x = np.sort(np.asarray(x, dtype=float))
    count, i, N = 0, 0, len(x)
    while i < N:
        # farthest center still covering x[i]
        j = int(np.searchsorted(x, x[i] + omega, side="left")) - 1
        reach = x[j] + omega
        i = int(np.searchsorted(x, reach, side="left"))
        count += 1
    return count


def brute_force_cover(p: Presentation, k: int, omega: float, epsilon: float, metric="OpNorm",
                      grid_step: float | None = None, *, battery=None, semi: bool = True,
                      limit: int = GRID_LIMIT) -> CoveringEstimate:
    """Covering count of the grid points of (M_k^sa)^n that are (semi-)microstates.

    The grid is {h*j} in every real coordinate, clipped to the box
    [-b, b] with b = min(R, max generator norm + epsilon). Each true microstate
    lies within ``slack`` of a grid point in the chosen metric, though grid points
    only certify the constraint up to the grid resolution.
    """
    metric = Metric.parse(metric)
    if k > 3:
        raise GridTooLarge("brute force is limited to k <= 3")
    n = p.num_generators
    if metric is Metric.ORBIT2 and n != 1:
        raise WrongKind("Orbit2 brute force is implemented for a single generator")
    battery = battery or presentation_battery(p, degree=max(2, len(getattr(p, "points", ())) or 2))
    targets = target_norms(p, battery)
    deg1 = [battery.polys.index(NcPolynomial.variable(i, n)) for i in range(1, n + 1)]
    box = min(default_radius(p), float(np.max(targets[deg1])) + epsilon)
    dims = n * k * k
    if grid_step is None:
        grid_step = epsilon / 2
        while (2 * math.floor(box / grid_step) + 1) ** dims > limit:
            grid_step *= 1.25
    half = math.floor(box / grid_step + 1e-9)
    axis = grid_step * np.arange(-half, half + 1)
    if float(len(axis)) ** dims > limit:
        raise GridTooLarge(f"{len(axis)}^{dims} grid points exceed {limit}")
    comp = battery.compiled
    powcoef = _power_coefficients(battery.polys, battery.degree_bound) if n == 1 else None
    idx = _kernels.grid_members(axis, n, k, comp, targets, float(epsilon), bool(semi), powcoef)
    if idx.size == 0:
        raise ValueError("no grid point satisfies the constraints; refine the grid")
    x = _kernels.grid_coords(axis, n, k, idx)
    if metric is Metric.TRACE2:
        slack = grid_step / 2 * math.sqrt(n * (2 * k - 1))
    else:
        slack = grid_step / 2 * k
    if k == 1 and n == 1:
        count = _cover_line(x[:, 0], omega)
        return CoveringEstimate(omega, metric, math.log(count), math.log(count), int(idx.size), k, epsilon,
                                None, slack, "grid")
    if metric is Metric.ORBIT2:
        mats = _kernels.coords_to_mats(x, 1, k)
        ev = np.linalg.eigvalsh(mats[:, 0])
        x = np.concatenate([ev, np.zeros((ev.shape[0], k * (k - 1)))], axis=1)
        code = _kernels.METRIC_TRACE2
    else:
        code = _kernels.METRIC_TRACE2 if metric is Metric.TRACE2 else _kernels.METRIC_OP
    low = len(_kernels.coord_packing(x, n, k, code, 2 * omega))
    high = len(_kernels.coord_packing(x, n, k, code, omega))
    return CoveringEstimate(omega, metric, math.log(low), math.log(high), int(idx.size), k, epsilon,
                            None, slack, "grid")
