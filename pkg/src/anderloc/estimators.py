"""Disorder-ensemble Monte Carlo estimates.

Every estimator draws realizations ``0..count-1`` of the disorder under a
master seed, evaluates a per-realization quantity, and reduces in
realization order. Work units may run on a thread pool; the reduction
order is fixed, so results are bit-identical for any thread count.
Solver failures abort the whole estimate rather than dropping samples.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .geometry import CellIndex, Configuration, cell_indicator, hausdorff_dist
from .model import (
    Box,
    ModelConfig,
    assemble_hamiltonian,
    cube_around,
    make_grid,
    sample_disorder,
)
from .spectral import (
    EigenSet,
    EnergyWindow,
    ResolventSolver,
    SpectralError,
    eigenpairs_in_window,
    ground_energy,
)

__all__ = [
    "EnsembleEstimate",
    "BsQuery",
    "BsResult",
    "LifshitzPoint",
    "DynamicalResult",
    "EigenfunctionProfile",
    "run_ensemble",
    "frac_moment",
    "frac_moment_profile",
    "bs_estimate",
    "ef_correlator",
    "ef_correlator_profile",
    "wegner_curve",
    "lifshitz_tail",
    "estimate_spectral_bottom",
    "dynamical_proxy",
    "eigenfunction_decay_profile",
]

log = logging.getLogger(__name__)


@dataclass
class EnsembleEstimate:
    mean: float
    stderr: float
    count: int
    seed: int
    samples: np.ndarray | None = None

    @classmethod
    def from_samples(cls, values, seed: int, keep: bool = False) -> "EnsembleEstimate":
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise SpectralError("non-finite per-realization value")
        count = len(values)
        mean = float(math.fsum(values) / count)
        stderr = float(values.std(ddof=1) / math.sqrt(count)) if count >= 2 else float("nan")
        return cls(mean, stderr, count, seed, values.copy() if keep else None)

    @property
    def rel_stderr(self) -> float:
        return self.stderr / abs(self.mean) if self.mean else float("inf")


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("ANDERLOC_THREADS", "1") or 1)
    return max(1, int(threads))


def run_ensemble(config: ModelConfig, per_realization: Callable, count: int, seed: int,
                 threads: int | None = None) -> np.ndarray:
    """Stack ``per_realization(disorder)`` over realizations 0..count-1.

    The output is ordered by realization index whatever the pool size.
    """
    if count < 1:
        raise ValueError("ensemble size must be at least 1")

    def work(i):
        return np.asarray(per_realization(sample_disorder(config, seed, i)), dtype=float)

    nthreads = _threads(threads)
    if nthreads == 1:
        rows = [work(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            rows = list(pool.map(work, range(count)))
    return np.stack(rows)


def _cells(grid, points) -> list:
    out = []
    for p in points:
        c = p if isinstance(p, CellIndex) else cell_indicator(p, grid)
        if c.empty:
            raise SpectralError(f"configuration {c.center} has an empty cell on this grid")
        out.append(c)
    return out


def frac_moment_profile(config: ModelConfig, pairs: Sequence, z: complex, s: float, count: int,
                        seed: int = 0, domain: Box | None = None, threads: int | None = None,
                        keep_samples: bool = False) -> list:
    """E ||chi_x (H - z)^{-1} chi_y||^s for several (x, y) on common realizations."""
    if not 0 < s <= 1:
        raise ValueError("fractional power s must lie in (0, 1]")
    grid = make_grid(config, domain)
    xs = _cells(grid, [p[0] for p in pairs])
    ys = _cells(grid, [p[1] for p in pairs])

    def one(disorder):
        H = assemble_hamiltonian(config, domain, disorder)
        solver = ResolventSolver(H, z)
        return [solver.block_norm(x, y) ** s for x, y in zip(xs, ys)]

    table = run_ensemble(config, one, count, seed, threads)
    return [EnsembleEstimate.from_samples(table[:, j], seed, keep_samples)
            for j in range(len(pairs))]


def frac_moment(config: ModelConfig, x, y, z: complex, s: float, count: int, seed: int = 0,
                domain: Box | None = None, threads: int | None = None,
                keep_samples: bool = False) -> EnsembleEstimate:
    """Monte Carlo fractional moment of one resolvent block."""
    return frac_moment_profile(config, [(x, y)], z, s, count, seed, domain, threads,
                               keep_samples)[0]


@dataclass
class BsQuery:
    """Finite grid standing in for the supremum over (Omega, z, x, y)."""

    window: EnergyWindow
    L: float
    s: float
    pairs: list
    re_z: Sequence[float]
    im_z: Sequence[float] = (1e-1, 1e-2, 1e-3)
    domains: Sequence = (None,)

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if not self.pairs or not self.re_z or not self.im_z or not self.domains:
            raise ValueError("query grids must be nonempty")
        for e in self.re_z:
            if not self.window.contains(e):
                raise ValueError(f"Re z = {e} outside the energy window")
        for t in self.im_z:
            if not 0 < t < 1:
                raise ValueError("Im z values must lie in (0, 1)")
        for x, y in self.pairs:
            if hausdorff_dist(x, y) < self.L - 1e-12:
                raise ValueError(f"pair {x!r}, {y!r} is closer than L={self.L}")


@dataclass
class BsResult:
    estimate: EnsembleEstimate
    witness: dict
    table: np.ndarray


def bs_estimate(config: ModelConfig, query: BsQuery, count: int, seed: int = 0,
                threads: int | None = None) -> BsResult:
    """Largest fractional-moment estimate over the query grid, with its argmax."""
    zs = [complex(re, im) for re in query.re_z for im in query.im_z]
    grids = [make_grid(config, dom) for dom in query.domains]
    cells = [(_cells(g, [p[0] for p in query.pairs]), _cells(g, [p[1] for p in query.pairs]))
             for g in grids]

    def one(disorder):
        out = []
        for dom, (xs, ys) in zip(query.domains, cells):
            H = assemble_hamiltonian(config, dom, disorder)
            for z in zs:
                solver = ResolventSolver(H, z)
                out.extend(solver.block_norm(x, y) ** query.s for x, y in zip(xs, ys))
        return out

    samples = run_ensemble(config, one, count, seed, threads)
    shape = (len(query.domains), len(zs), len(query.pairs))
    means = np.array([math.fsum(col) / count for col in samples.T]).reshape(shape)
    flat = int(np.argmax(means))
    di, zi, pi = np.unravel_index(flat, shape)
    est = EnsembleEstimate.from_samples(samples[:, flat], seed)
    dom = query.domains[di]
    witness = {
        "domain": None if dom is None else {"lo": list(dom.lo), "hi": list(dom.hi)},
        "z": [zs[zi].real, zs[zi].imag],
        "x": np.asarray(query.pairs[pi][0], dtype=float).tolist(),
        "y": np.asarray(query.pairs[pi][1], dtype=float).tolist(),
    }
    return BsResult(est, witness, means)


def _window_eigs(H, window: EnergyWindow, max_pairs: int) -> EigenSet:
    return eigenpairs_in_window(H, window, max_pairs=max_pairs)


def ef_correlator_profile(config: ModelConfig, pairs: Sequence, window: EnergyWindow, count: int,
                          seed: int = 0, domain: Box | None = None, threads: int | None = None,
                          max_pairs: int = 2000, keep_samples: bool = False) -> list:
    """E sum_{E in window} ||chi_x P_E chi_y|| for several pairs."""
    grid = make_grid(config, domain)
    xs = _cells(grid, [p[0] for p in pairs])
    ys = _cells(grid, [p[1] for p in pairs])

    def one(disorder):
        H = assemble_hamiltonian(config, domain, disorder)
        es = _window_eigs(H, window, max_pairs)
        V = es.vectors
        return [float(np.sum(np.linalg.norm(V[x.rows], axis=0) * np.linalg.norm(V[y.rows], axis=0)))
                for x, y in zip(xs, ys)]

    table = run_ensemble(config, one, count, seed, threads)
    return [EnsembleEstimate.from_samples(table[:, j], seed, keep_samples)
            for j in range(len(pairs))]


def ef_correlator(config: ModelConfig, x, y, window: EnergyWindow, count: int, seed: int = 0,
                  domain: Box | None = None, threads: int | None = None,
                  max_pairs: int = 2000, keep_samples: bool = False) -> EnsembleEstimate:
    """Eigenfunction correlator of one pair of cells.

    Rank-one projectors are assumed; with simple spectrum (almost sure for
    absolutely continuous disorder) ||chi_x P_E chi_y|| = ||chi_x v|| ||chi_y v||.
    """
    return ef_correlator_profile(config, [(x, y)], window, count, seed, domain, threads,
                                 max_pairs, keep_samples)[0]


def wegner_curve(config: ModelConfig, x, center: float, widths: Sequence[float], count: int,
                 seed: int = 0, domain: Box | None = None, threads: int | None = None,
                 keep_samples: bool = False) -> list:
    """E Tr(chi_x P_J) for windows J = [center - w/2, center + w/2].

    Returns a list of (width, EnsembleEstimate). For a deterministic
    (zero-disorder) model the curve is a step function, not linear.
    """
    widths = [float(w) for w in widths]
    if any(w < 0 for w in widths):
        raise ValueError("window widths must be nonnegative")
    grid = make_grid(config, domain)
    (cx,) = _cells(grid, [x])
    wmax = max(widths)
    outer = EnergyWindow(center - wmax / 2, center + wmax / 2)

    def one(disorder):
        H = assemble_hamiltonian(config, domain, disorder)
        es = eigenpairs_in_window(H, outer)
        weight = np.linalg.norm(es.vectors[cx.rows], axis=0) ** 2
        out = []
        for w in widths:
            if w == 0:
                out.append(0.0)
                continue
            sel = np.abs(es.values - center) <= w / 2
            out.append(float(weight[sel].sum()))
        return out

    table = run_ensemble(config, one, count, seed, threads)
    return [(w, EnsembleEstimate.from_samples(table[:, j], seed, keep_samples))
            for j, w in enumerate(widths)]


def estimate_spectral_bottom(config: ModelConfig, count: int, seed: int = 0,
                             domain: Box | None = None, threads: int | None = None) -> float:
    """Proxy for the almost-sure spectral infimum: min E_0 over an ensemble minus 2 stderr."""
    e0 = run_ensemble(config, lambda dis: [ground_energy(assemble_hamiltonian(config, domain, dis))],
                      count, seed, threads)[:, 0]
    stderr = e0.std(ddof=1) / math.sqrt(len(e0)) if len(e0) > 1 else 0.0
    return float(e0.min() - 2 * stderr)


@dataclass
class LifshitzPoint:
    L: float
    probability: float
    ci_low: float
    ci_high: float
    hits: int
    count: int


def lifshitz_tail(config: ModelConfig, Ls: Sequence[float], E_ref: float, count: int,
                  seed: int = 0, center=None, threads: int | None = None,
                  confidence: float = 0.95):
    """Empirical P(E_0(H on B_L(center)) <= E_ref + 1/L) with Wilson intervals.

    Returns (points, slope) where slope is the least-squares slope of
    log P against log L over points with P > 0 (None if fewer than two).
    """
    if center is None:
        center = np.zeros(config.d * config.n)
    center = np.asarray(center, dtype=float).reshape(-1)
    Ls = [float(L) for L in Ls]

    def one(disorder):
        out = []
        for L in Ls:
            H = assemble_hamiltonian(config, cube_around(center, L), disorder)
            out.append(1.0 if ground_energy(H) <= E_ref + 1.0 / L else 0.0)
        return out

    table = run_ensemble(config, one, count, seed, threads)
    points = []
    for j, L in enumerate(Ls):
        hits = int(table[:, j].sum())
        ci = stats.binomtest(hits, count).proportion_ci(confidence, method="wilson")
        points.append(LifshitzPoint(L, hits / count, float(ci.low), float(ci.high), hits, count))
    pos = [(math.log(p.L), math.log(p.probability)) for p in points if p.probability > 0]
    slope = None
    if len(pos) >= 2:
        slope = float(np.polyfit(*zip(*pos), 1)[0])
    return points, slope


@dataclass
class DynamicalResult:
    sup_time: EnsembleEstimate
    correlator_bound: EnsembleEstimate
    dominated: bool
    worst_ratio: float


def dynamical_proxy(config: ModelConfig, x, y, window: EnergyWindow, times: Sequence[float],
                    count: int, seed: int = 0, domain: Box | None = None,
                    threads: int | None = None, keep_samples: bool = False) -> DynamicalResult:
    """Time-sup of ||chi_x e^{-itH} P_I chi_y|| against sum_E ||chi_x P_E chi_y||.

    ``dominated`` reports whether the first never exceeded the second in
    any realization (up to a 1e-12 relative rounding allowance).
    """
    times = np.asarray(times, dtype=float)
    grid = make_grid(config, domain)
    cx, cy = _cells(grid, [x, y])

    def one(disorder):
        H = assemble_hamiltonian(config, domain, disorder)
        es = eigenpairs_in_window(H, window)
        A, B = es.vectors[cx.rows], es.vectors[cy.rows]
        bound = float(np.sum(np.linalg.norm(A, axis=0) * np.linalg.norm(B, axis=0)))
        best = 0.0
        for t in times:
            phase = np.exp(-1j * t * es.values)
            best = max(best, float(np.linalg.norm((A * phase) @ B.T, 2)) if len(es) else 0.0)
        return [best, bound]

    table = run_ensemble(config, one, count, seed, threads)
    ratio = np.where(table[:, 1] > 0, table[:, 0] / np.where(table[:, 1] > 0, table[:, 1], 1), 0)
    dominated = bool(np.all(table[:, 0] <= table[:, 1] * (1 + 1e-12) + 1e-300))
    return DynamicalResult(
        EnsembleEstimate.from_samples(table[:, 0], seed, keep_samples),
        EnsembleEstimate.from_samples(table[:, 1], seed, keep_samples),
        dominated,
        float(ratio.max()),
    )


@dataclass
class EigenfunctionProfile:
    energy: float
    center: tuple
    cells: np.ndarray
    masses: np.ndarray
    distances: np.ndarray

    def envelope(self):
        """Largest cell amplitude ||chi_u phi|| at each distance from the center."""
        dist = np.round(self.distances, 9)
        uniq = np.unique(dist)
        amp = np.sqrt(self.masses)
        return uniq, np.array([amp[dist == r].max() for r in uniq])

    def decay_rate(self, floor: float = 1e-14) -> float:
        """Slope of -log(envelope) against distance (least squares)."""
        r, a = self.envelope()
        keep = a > floor
        if keep.sum() < 3:
            return float("nan")
        return float(-np.polyfit(r[keep], np.log(a[keep]), 1)[0])


def eigenfunction_decay_profile(H, eigs: EigenSet | EnergyWindow) -> list:
    """Localization center and cell masses of each eigenfunction.

    Cells here form a disjoint cover: each node belongs to the unit cell
    around the nearest integer point (half-open, rounding up on ties), so
    the masses of a normalized vector sum to one.
    """
    es = eigs if isinstance(eigs, EigenSet) else eigenpairs_in_window(H, eigs)
    coords = H.coordinates()
    labels = np.floor(coords + 0.5).astype(np.int64)
    cells, inverse = np.unique(labels, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n, d = H.grid.n, H.grid.d
    profiles = []
    for E, v in zip(es.values, es.vectors.T):
        v = v / np.linalg.norm(v)
        masses = np.bincount(inverse, weights=np.abs(v) ** 2, minlength=len(cells))
        top = np.flatnonzero(masses == masses.max())
        # np.unique sorts rows lexicographically, so the first maximizer wins ties
        ci = int(top[0])
        center = cells[ci]
        c_conf = Configuration(center.reshape(n, d))
        dists = np.array([hausdorff_dist(c_conf, Configuration(u.reshape(n, d))) for u in cells])
        profiles.append(EigenfunctionProfile(float(E), tuple(center.tolist()), cells, masses, dists))
    return profiles
