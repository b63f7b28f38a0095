"""Finite-volume n-particle Hamiltonians with alloy disorder and pair interaction.

The operator on a box (or a union of boxes) in R^{dn} is

    H = -Laplacian + sum_j [V_0(x_j) + sum_zeta eta_zeta U(x_j - zeta)]
        + alpha_W * sum_{j<k} w(x_j - x_k)

discretized by second-order central differences on the grid hZ^{dn}
with Dirichlet conditions (nodes outside the open domain are removed).
In strict-lattice mode h = 1 and the Laplacian is the graph Laplacian of
Z^{dn} restricted to the box, i.e. the discrete Anderson model.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import GridSpec, Partition

__all__ = [
    "Box",
    "SingleSiteProfile",
    "DisorderDistribution",
    "InteractionSpec",
    "ModelConfig",
    "DisorderSample",
    "SparseOperator",
    "CoveringError",
    "axis_nodes",
    "make_grid",
    "lattice_box",
    "cube_around",
    "sample_disorder",
    "assemble_hamiltonian",
    "assemble_partial",
    "covering_margin",
]

_EPS = 1e-9


class CoveringError(ValueError):
    """The translated single-site bumps leave part of space uncovered."""


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box prod_i (lo_i, hi_i)."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("box corners differ in dimension")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lo, hi = np.array(self.lo), np.array(self.hi)
        return np.all((pts > lo + _EPS) & (pts < hi - _EPS), axis=1)

    @classmethod
    def power(cls, box: "Box", n: int) -> "Box":
        return cls(box.lo * n, box.hi * n)


def lattice_box(m: int, d: int = 1, start: int = 1) -> Box:
    """Open box whose integer points are start..start+m-1 along each axis."""
    return Box((start - 1,) * d, (start + m,) * d)


def cube_around(center: Sequence[float], L: float) -> Box:
    """The open max-norm ball of radius L around a point (of any dimension)."""
    c = np.asarray(center, dtype=float).reshape(-1)
    return Box(tuple(c - L), tuple(c + L))


@dataclass(frozen=True)
class SingleSiteProfile:
    """Nonnegative bump U supported in the closed max-norm ball of radius r_U."""

    shape: str = "box"
    amplitude: float = 1.0
    r_U: float = 0.5

    def __post_init__(self):
        if self.shape not in ("box", "tent", "smooth-bump"):
            raise ValueError(f"unknown single-site shape {self.shape!r}")
        if self.amplitude < 0:
            raise ValueError("single-site amplitude must be nonnegative")
        if self.r_U <= 0:
            raise ValueError("r_U must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate U at points of shape (..., d)."""
        r = np.abs(np.asarray(x, dtype=float)).max(axis=-1)
        inside = r <= self.r_U + _EPS
        if self.shape == "box":
            return np.where(inside, self.amplitude, 0.0)
        if self.shape == "tent":
            return self.amplitude * np.clip(1.0 - r / self.r_U, 0.0, None)
        t = np.minimum(r / self.r_U, 1.0 - 1e-12) ** 2
        return np.where(r < self.r_U, self.amplitude * np.exp(1.0 - 1.0 / (1.0 - t)), 0.0)


@dataclass(frozen=True)
class DisorderDistribution:
    """Single-site coupling law, supported on [0, eta_max]."""

    density: str = "uniform"
    eta_max: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if self.density not in ("uniform", "truncated-exponential"):
            raise ValueError(f"unknown disorder density {self.density!r}")
        if self.eta_max < 0:
            raise ValueError("eta_max must be nonnegative")
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    @property
    def mean(self) -> float:
        if self.density == "uniform" or self.eta_max == 0:
            return 0.5 * self.eta_max
        lam, b = self.rate, self.eta_max
        return 1.0 / lam - b / math.expm1(lam * b)

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniform [0, 1) variates to couplings by inverse CDF."""
        if self.density == "uniform" or self.eta_max == 0:
            return self.eta_max * u
        lam = self.rate
        return -np.log1p(-u * (-math.expm1(-lam * self.eta_max))) / lam


@dataclass(frozen=True)
class InteractionSpec:
    """Pair interaction w as a function of the max-norm distance r.

    ``sign='repulsive'`` gives w = +w_reg, ``'signed'`` gives the attractive
    w = -w_reg. Polynomial kinds are capped at the grid spacing (or the
    core radius) so that w stays bounded.
    """

    kind: str = "none"
    c_w: float = 0.0
    mu_w: float = 1.0
    gamma_w: float = 1.0
    p_w: float = 1.0
    core: float = 1.0
    sign: str = "repulsive"

    def __post_init__(self):
        if self.kind not in ("none", "exponential", "polynomial", "hard-core-regularized"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.sign not in ("repulsive", "signed"):
            raise ValueError(f"unknown interaction sign {self.sign!r}")
        if self.c_w < 0:
            raise ValueError("c_w must be nonnegative")
        if self.kind == "exponential" and not (0 < self.gamma_w <= 1 and self.mu_w > 0):
            raise ValueError("exponential interaction needs mu_w > 0, gamma_w in (0, 1]")
        if self.kind in ("polynomial", "hard-core-regularized") and self.p_w <= 0:
            raise ValueError("polynomial interaction needs p_w > 0")
        if self.kind == "hard-core-regularized" and self.core <= 0:
            raise ValueError("core radius must be positive")

    def bound(self, r) -> np.ndarray:
        """The decreasing envelope w_b(r)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "none":
            return np.zeros_like(r)
        if self.kind == "exponential":
            return self.c_w * np.exp(-self.mu_w * r**self.gamma_w)
        with np.errstate(divide="ignore"):
            return self.c_w * r ** (-self.p_w)

    def __call__(self, r, h: float = 1.0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind in ("none", "exponential"):
            val = self.bound(r)
        elif self.kind == "polynomial":
            val = self.bound(np.maximum(r, h))
        else:
            val = self.bound(np.maximum(r, self.core))
        return val if self.sign == "repulsive" else -val


@dataclass(frozen=True)
class ModelConfig:
    d: int = 1
    n: int = 1
    mode: str = "strict-lattice"
    h: float = 1.0
    domain: tuple = ()
    background: float = 0.0
    background_cos: float = 0.0
    single_site: SingleSiteProfile = field(default_factory=SingleSiteProfile)
    disorder: DisorderDistribution = field(default_factory=DisorderDistribution)
    interaction: InteractionSpec = field(default_factory=InteractionSpec)
    alpha_W: float = 0.0
    check_covering: bool = True

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("need d >= 1 and n >= 1")
        if self.mode not in ("strict-lattice", "continuum-discretized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "strict-lattice":
            object.__setattr__(self, "h", 1.0)
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        inv = 1.0 / self.h
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError(f"1/h must be an integer, got h={self.h}")
        if self.alpha_W < 0:
            raise ValueError("alpha_W must be nonnegative")
        dom = self.domain
        if isinstance(dom, Box):
            dom = (dom,)
        dom = tuple(dom)
        for b in dom:
            if b.dim != self.d:
                raise ValueError("domain boxes must live in R^d")
        object.__setattr__(self, "domain", dom)
        if self.check_covering and covering_margin(self) <= 0:
            raise CoveringError(
                "covering condition fails: the single-site bumps leave gaps "
                f"(shape={self.single_site.shape}, r_U={self.single_site.r_U}, h={self.h})"
            )

    @property
    def safety_R(self) -> float:
        return self.single_site.r_U + 6.0

    @property
    def steps_per_unit(self) -> int:
        return int(round(1.0 / self.h))

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["domain"] = [{"lo": list(b.lo), "hi": list(b.hi)} for b in self.domain]
        out.pop("check_covering")
        return out

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def background_at(self, x: np.ndarray) -> np.ndarray:
        """Z^d-periodic background V_0 at points of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        v = np.full(x.shape[:-1], self.background)
        if self.background_cos:
            v = v + self.background_cos * np.cos(2 * np.pi * x).sum(axis=-1)
        return v


def axis_nodes(lo: float, hi: float, h: float) -> np.ndarray:
    """Grid points of hZ strictly inside (lo, hi)."""
    m = int(round(1.0 / h))
    k0 = math.floor(lo * m + _EPS) + 1
    k1 = math.ceil(hi * m - _EPS) - 1
    return np.arange(k0, k1 + 1) / m


def make_grid(config: ModelConfig, domain_n: Box | None = None) -> GridSpec:
    """Grid for a box in R^{dn}, or for Omega^n when ``domain_n`` is None."""
    d, n, h = config.d, config.n, config.h
    if domain_n is not None:
        if domain_n.dim != d * n:
            raise ValueError(f"domain box has dimension {domain_n.dim}, expected {d * n}")
        axes = tuple(axis_nodes(a, b, h) for a, b in zip(domain_n.lo, domain_n.hi))
        if any(len(a) == 0 for a in axes):
            raise ValueError("domain box contains no grid nodes")
        return GridSpec(axes=axes, h=h, n=n, d=d)
    if not config.domain:
        raise ValueError("model has no domain and no box was given")
    lo = np.min([b.lo for b in config.domain], axis=0)
    hi = np.max([b.hi for b in config.domain], axis=0)
    one = tuple(axis_nodes(a, b, h) for a, b in zip(lo, hi))
    axes = one * n
    if len(config.domain) == 1:
        return GridSpec(axes=axes, h=h, n=n, d=d)
    mesh = np.meshgrid(*one, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    inside = np.zeros(len(pts), dtype=bool)
    for b in config.domain:
        inside |= b.contains(pts)
    inside = inside.reshape(tuple(len(a) for a in one))
    mask = np.ones((), dtype=bool)
    for _ in range(n):
        mask = np.multiply.outer(mask, inside)
    return GridSpec(axes=axes, h=h, n=n, d=d, mask=mask.reshape(-1))


_TILE = 16


def _zigzag(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


class DisorderSample:
    """One realization of the couplings eta_zeta, zeta in Z^d.

    Values are generated lazily in tiles of 16^d sites; each tile draws from
    its own Philox stream keyed by (seed, index, tile). The value at a site
    is therefore a fixed function of (seed, index, zeta), independent of
    which region was requested first.
    """

    def __init__(self, dist: DisorderDistribution, d: int, seed: int, index: int,
                 overrides: dict | None = None):
        self.dist = dist
        self.d = d
        self.seed = int(seed)
        self.index = int(index)
        self.overrides = dict(overrides or {})
        self._tiles: dict = {}

    def _tile(self, key: tuple) -> np.ndarray:
        tile = self._tiles.get(key)
        if tile is None:
            ss = np.random.SeedSequence(
                self.seed, spawn_key=(self.index,) + tuple(_zigzag(k) for k in key)
            )
            u = np.random.Generator(np.random.Philox(ss)).random(_TILE**self.d)
            tile = self.dist.transform(u).reshape((_TILE,) * self.d)
            self._tiles[key] = tile
        return tile

    def eta(self, sites) -> np.ndarray:
        """Couplings at integer sites given as an (m, d) array."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        out = np.empty(len(sites))
        tiles = np.floor_divide(sites, _TILE)
        local = sites - tiles * _TILE
        for i, (t, loc) in enumerate(zip(map(tuple, tiles), map(tuple, local))):
            out[i] = self._tile(t)[loc]
        for i, s in enumerate(map(tuple, sites)):
            if s in self.overrides:
                out[i] = self.overrides[s]
        return out

    def with_value(self, site, value: float) -> "DisorderSample":
        """Copy with the coupling at one site replaced."""
        over = dict(self.overrides)
        over[tuple(int(v) for v in np.atleast_1d(site))] = float(value)
        new = DisorderSample(self.dist, self.d, self.seed, self.index, over)
        new._tiles = self._tiles
        return new

    def sites_for(self, config: ModelConfig) -> np.ndarray:
        """Sites in Z^d within r_U of the model's domain."""
        r = config.single_site.r_U
        lo = np.min([b.lo for b in config.domain], axis=0) - r
        hi = np.max([b.hi for b in config.domain], axis=0) + r
        ranges = [np.arange(math.ceil(a), math.floor(b) + 1) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*ranges, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def as_map(self, config: ModelConfig) -> dict:
        sites = self.sites_for(config)
        return dict(zip(map(tuple, sites.tolist()), self.eta(sites).tolist()))


def sample_disorder(config: ModelConfig, seed: int, index: int) -> DisorderSample:
    """Realization number ``index`` of the disorder under master ``seed``."""
    return DisorderSample(config.disorder, config.d, seed, index)


@dataclass(frozen=True)
class SparseOperator:
    """Assembled finite-volume Hamiltonian (CSR, real symmetric)."""

    matrix: sp.csr_matrix
    grid: GridSpec
    config_hash: str
    seed: int | None = None
    index: int | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def coordinates(self) -> np.ndarray:
        return self.grid.coordinates()

    def dump_coo(self, path) -> None:
        """Write 'row col value' lines (upper and lower triangle)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8") as fh:
            for i in order:
                fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]!r}\n")


def _dirichlet_1d(m: int) -> sp.csr_matrix:
    return sp.diags([2.0 * np.ones(m), -np.ones(m - 1), -np.ones(m - 1)], [0, 1, -1],
                    format="csr")


@lru_cache(maxsize=64)
def _laplacian_cached(shape: tuple, h: float, mask_bytes: bytes | None) -> sp.csr_matrix:
    lap = None
    for m in shape:
        one = _dirichlet_1d(m)
        if lap is None:
            lap = one
        else:
            lap = sp.kron(lap, sp.identity(m, format="csr"), format="csr") + sp.kron(
                sp.identity(lap.shape[0], format="csr"), one, format="csr"
            )
    lap = lap / (h * h)
    if mask_bytes is not None:
        keep = np.flatnonzero(np.frombuffer(mask_bytes, dtype=bool))
        lap = lap[keep][:, keep]
    lap = sp.csr_matrix(lap)
    lap.sort_indices()
    return lap


def laplacian(grid: GridSpec) -> sp.csr_matrix:
    """Dirichlet Laplacian (nonnegative) on the grid's node set."""
    mask = None if grid.mask is None else np.asarray(grid.mask, dtype=bool).tobytes()
    return _laplacian_cached(grid.shape, grid.h, mask)


def _particle_axes(grid: GridSpec, j: int) -> tuple:
    return grid.axes[j * grid.d:(j + 1) * grid.d]


def _one_particle_potential(config: ModelConfig, axes: tuple,
                            disorder: DisorderSample | None) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    v = config.background_at(pts)
    if disorder is None:
        return v
    r = config.single_site.r_U
    ranges = [np.arange(math.ceil(a[0] - r - _EPS), math.floor(a[-1] + r + _EPS) + 1)
              for a in axes]
    zmesh = np.meshgrid(*ranges, indexing="ij")
    sites = np.stack([z.reshape(-1) for z in zmesh], axis=1)
    eta = disorder.eta(sites)
    U = config.single_site
    for zeta, e in zip(sites, eta):
        if e != 0.0:
            v = v + e * U(pts - zeta)
    return v


def _broadcast_particle(values: np.ndarray, j: int, n: int, d: int) -> np.ndarray:
    shape = [1] * (n * d)
    shape[j * d:(j + 1) * d] = values.shape
    return values.reshape(shape)


def interaction_diagonal(config: ModelConfig, grid: GridSpec,
                         partition: Partition | None = None) -> np.ndarray:
    """alpha_W * sum_{j<k} w(x_j - x_k) on the full product grid (flat)."""
    n, d = config.n, config.d
    total = np.zeros(grid.shape)
    if config.alpha_W == 0 or config.interaction.kind == "none" or n < 2:
        return total.reshape(-1)
    for j in range(n):
        for k in range(j + 1, n):
            if partition is not None and not partition.same_block(j, k):
                continue
            diff = None
            for a in range(d):
                xa = np.asarray(grid.axes[j * d + a])
                xb = np.asarray(grid.axes[k * d + a])
                comp = np.abs(xa[:, None] - xb[None, :])
                shape = [1] * (n * d)
                shape[j * d + a] = len(grid.axes[j * d + a])
                shape[k * d + a] = len(grid.axes[k * d + a])
                comp = comp.reshape(shape)
                diff = comp if diff is None else np.maximum(diff, comp)
            total = total + config.interaction(diff, h=config.h)
    return (config.alpha_W * total).reshape(-1)


def potential_diagonal(config: ModelConfig, grid: GridSpec, disorder: DisorderSample | None,
                       partition: Partition | None = None) -> np.ndarray:
    """Full potential on operator rows."""
    n, d = config.n, config.d
    total = np.zeros(grid.shape)
    for j in range(n):
        v1 = _one_particle_potential(config, _particle_axes(grid, j), disorder)
        total = total + _broadcast_particle(v1, j, n, d)
    flat = total.reshape(-1) + interaction_diagonal(config, grid, partition)
    return flat[grid.kept_flat()] if grid.mask is not None else flat


def _assemble(config, domain_n, disorder, partition):
    if config.check_covering and covering_margin(config) <= 0:
        raise CoveringError("covering condition fails for this model")
    grid = make_grid(config, domain_n)
    lap = laplacian(grid)
    diag = potential_diagonal(config, grid, disorder, partition)
    H = (lap + sp.diags(diag, format="csr")).tocsr()
    H.sort_indices()
    return SparseOperator(
        matrix=H,
        grid=grid,
        config_hash=config.hash(),
        seed=None if disorder is None else disorder.seed,
        index=None if disorder is None else disorder.index,
    )


def assemble_hamiltonian(config: ModelConfig, domain_n: Box | None = None,
                         disorder: DisorderSample | None = None) -> SparseOperator:
    """Assemble H^{(n)} on ``domain_n`` (a box in R^{dn}) or on Omega^n.

    ``disorder=None`` means all couplings vanish.
    """
    return _assemble(config, domain_n, disorder, None)


def assemble_partial(config: ModelConfig, domain_n: Box | None, disorder: DisorderSample | None,
                     partition: Partition) -> SparseOperator:
    """Same as :func:`assemble_hamiltonian` with inter-block interactions removed."""
    if not isinstance(partition, Partition):
        raise TypeError("partition must be a Partition")
    if partition.n != config.n:
        raise ValueError(f"partition is for n={partition.n}, model has n={config.n}")
    return _assemble(config, domain_n, disorder, partition)


def covering_margin(config: ModelConfig) -> float:
    """min over grid nodes of one unit cell of sum_zeta U(x - zeta)."""
    d, m = config.d, int(round(1.0 / config.h))
    cell = np.arange(m) / m
    mesh = np.meshgrid(*([cell] * d), indexing="ij")
    pts = np.stack([c.reshape(-1) for c in mesh], axis=1)
    reach = math.ceil(config.single_site.r_U) + 1
    offsets = np.arange(-reach, reach + 1)
    zmesh = np.meshgrid(*([offsets] * d), indexing="ij")
    sites = np.stack([z.reshape(-1) for z in zmesh], axis=1)
    total = np.zeros(len(pts))
    for zeta in sites:
        total += config.single_site(pts - zeta)
    return float(total.min())
