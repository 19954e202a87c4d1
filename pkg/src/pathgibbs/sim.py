"""Euler-Maruyama sampling of the finite-volume dynamics.

Two boundary regimes are supported: a frozen outside path xi (``solve_finite_volume``,
the kernel samplers) and the zero outside configuration with product initial law
(``sample_Pn``). Periodization tiles independent replicas around a central one,
and ``shift_average`` estimates expectations under the shift-averaged law.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import rng as rngmod
from .drift import DriftSpec
from .lattice import Box, Site, as_site, enlarge, neighbourhood
from .paths import Field, Layout, LocalFunction, PathConfig, TimeGrid
from .stats import Estimate

# replicas per vectorized batch are sized so one batch holds ~2M floats
CHUNK_FLOATS = 2_000_000


def chunk_size(rows: int, M: int) -> int:
    return int(min(4096, max(16, CHUNK_FLOATS // (rows * (M + 1)))))


class SimulationError(FloatingPointError):
    """The Euler scheme produced a non-finite state."""


# ---------------------------------------------------------------------------
# initial laws; the reference measure m is the standard Gaussian throughout

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def log_reference(x):
    return -0.5 * np.square(x) - _LOG_SQRT_2PI


@dataclass(frozen=True)
class Dirac:
    z: float = 0.0

    def sample(self, g: np.random.Generator, size) -> np.ndarray:
        return np.full(size, float(self.z))

    def log_density(self, x):
        raise ValueError("a Dirac initial law has no density with respect to m")

    def relative_entropy(self) -> float:
        return math.inf

    def second_moment(self) -> float:
        return float(self.z) ** 2

    def describe(self) -> dict:
        return {"kind": "dirac", "z": float(self.z)}


@dataclass(frozen=True)
class GaussianProduct:
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("gaussian_product needs a positive variance")

    def sample(self, g: np.random.Generator, size) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * g.standard_normal(size)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        lq = -0.5 * (x - self.mean) ** 2 / self.var - 0.5 * math.log(self.var) - _LOG_SQRT_2PI
        return lq - log_reference(x)

    def relative_entropy(self) -> float:
        """KL(N(mean, var) || N(0, 1))."""
        return 0.5 * (self.var + self.mean**2 - 1.0 - math.log(self.var))

    def second_moment(self) -> float:
        return self.var + self.mean**2

    def describe(self) -> dict:
        return {"kind": "gaussian_product", "mean": self.mean, "var": self.var}


@dataclass(frozen=True, eq=False)
class DensityProduct:
    """Product of a one-site law q given by its Lebesgue log-density and a
    sampler. Relative entropy against m is computed by quadrature."""

    logpdf: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, tuple], np.ndarray]
    name: str = "density_product"

    def sample(self, g, size):
        return np.asarray(self.sampler(g, size), dtype=float)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return self.logpdf(x) - log_reference(x)

    def relative_entropy(self) -> float:
        from scipy.integrate import quad

        def integrand(x):
            lq = float(self.logpdf(np.array(x)))
            return math.exp(lq) * (lq - float(log_reference(x))) if lq > -700 else 0.0

        val, _ = quad(integrand, -np.inf, np.inf, limit=200)
        return float(val)

    def second_moment(self) -> float:
        from scipy.integrate import quad

        val, _ = quad(lambda x: x * x * math.exp(float(self.logpdf(np.array(x)))), -np.inf, np.inf)
        return float(val)

    def describe(self) -> dict:
        return {"kind": "density_product", "name": self.name}


InitialLaw = Dirac | GaussianProduct | DensityProduct

REFERENCE = GaussianProduct(0.0, 1.0)


def initial_law(spec: dict) -> InitialLaw:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "dirac":
        return Dirac(float(spec.pop("z", 0.0)))
    if kind == "gaussian_product":
        return GaussianProduct(float(spec.pop("mean", 0.0)), float(spec.pop("var", 1.0)))
    raise ValueError(f"initial law {kind!r} cannot be built from a config block")


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    d: int = 1
    n: int = 1
    M: int = 200
    R: int = 1000
    seed: int = 0
    boundary: str = "zero"
    threads: int = 1

    def __post_init__(self):
        if self.n < 1 or self.M < 1 or self.R < 1 or self.d < 1:
            raise ValueError("SimConfig needs d, n, M, R >= 1")
        if self.boundary not in ("zero", "periodic"):
            raise ValueError(f"boundary must be 'zero' or 'periodic', got {self.boundary!r}")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.M)

    @property
    def box(self) -> Box:
        return Box.cubic(self.n, self.d)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """R replicas of the finite-volume law on the box, zero outside.

    ``paths`` has shape (R, |box|, M+1) and ``increments`` (R, |box|, M) holds
    the Gaussian increments sqrt(h) Z used by the scheme.
    """

    config: SimConfig
    drift: DriftSpec
    law: InitialLaw
    box: Box
    paths: np.ndarray
    increments: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    @property
    def grid(self) -> TimeGrid:
        return self.config.grid

    @property
    def R(self) -> int:
        return self.paths.shape[0]

    def __len__(self) -> int:
        return self.R

    def replica(self, r: int) -> PathConfig:
        return PathConfig(self.grid, self.box.sites, self.paths[r])

    @property
    def replicas(self) -> list[PathConfig]:
        return [self.replica(r) for r in range(self.R)]

    def layout(self, centers=None) -> Layout:
        centers = self.box.sites if centers is None else centers
        if self.config.boundary == "periodic":
            return Layout(self.box.sites, centers, "periodic", self.config.n)
        return Layout(self.box.sites, centers, "zero")

    def padded(self, rows=slice(None)) -> np.ndarray:
        """Replica paths with the zero row appended when the boundary is zero."""
        vals = self.paths[rows]
        if self.config.boundary == "zero":
            pad = np.zeros(vals.shape[:-2] + (1, vals.shape[-1]))
            vals = np.concatenate([vals, pad], axis=-2)
        return vals


def _integrate(drift: DriftSpec, layout: Layout, values: np.ndarray, noise: np.ndarray,
               grid: TimeGrid) -> np.ndarray:
    """In-place Euler-Maruyama on the center rows of ``values``; the other rows
    are read as given. Returns the drift values, shape (B, n_centers, M)."""
    centers = layout.center_rows()
    field = Field(values, layout, grid)
    h = grid.h
    B = values.shape[0]
    out = np.empty((B, len(centers), grid.M))
    # overflow is reported below as a SimulationError, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.M):
            bk = drift.at(field, k)
            out[:, :, k] = bk
            values[:, centers, k + 1] = values[:, centers, k] + bk * h + noise[:, :, k]
    bad = ~np.isfinite(values[:, centers, :]).all(axis=(1, 2))
    if bad.any():
        raise SimulationError(
            f"non-finite state in {int(bad.sum())} replica(s), first batch index "
            f"{int(np.flatnonzero(bad)[0])}; drift {drift.name}"
        )
    return out


def _map_chunks(fn, starts, threads: int):
    if threads <= 1 or len(starts) <= 1:
        return [fn(s) for s in starts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, starts))


def solve_finite_volume(b: DriftSpec, lam: Box, xi: PathConfig, g: np.random.Generator,
                        grid: TimeGrid | None = None) -> PathConfig:
    """One sample of the dynamics in ``lam`` with outside frozen to ``xi`` and
    initial values xi_lam(0).

    ``xi`` must cover ``lam`` (for the initial values) and every site read by
    the drift from inside ``lam``. The result carries the increments and drift
    values in ``meta``.
    """
    grid = grid or xi.grid
    if grid != xi.grid:
        raise ValueError("xi is not on the requested grid")
    needed = neighbourhood(lam, b.range).union(lam)
    missing = [s for s in needed if s not in xi]
    if missing:
        raise ValueError(f"xi does not cover sites {missing[:5]} needed by the drift")
    layout = Layout(xi.sites, lam.sites, "error")
    values = np.array(xi.values, dtype=float)[None]
    rows = layout.center_rows()
    values[:, rows, 1:] = 0.0
    noise = math.sqrt(grid.h) * g.standard_normal((1, len(rows), grid.M))
    drifts = _integrate(b, layout, values, noise, grid)
    return PathConfig(grid, xi.sites, values[0], meta={
        "increments": dict(zip(lam.sites, noise[0])),
        "drift": dict(zip(lam.sites, drifts[0])),
    })


def run_frozen(b: DriftSpec, layout: Layout, values: np.ndarray, noise: np.ndarray,
               grid: TimeGrid) -> np.ndarray:
    """Batched frozen-boundary solve. ``values`` (B, rows, M+1) holds the
    boundary paths and the initial values of the center rows; it is copied."""
    values = np.array(values, dtype=float)
    rows = layout.center_rows()
    values[:, rows, 1:] = 0.0
    _integrate(b, layout, values, noise, grid)
    return values


def sample_Pn(b: DriftSpec, n: int, mu: InitialLaw, grid: TimeGrid, R: int, seed: int,
              d: int | None = None, boundary: str = "zero", threads: int = 1) -> Ensemble:
    """R independent replicas on {-n..n-1}^d: X(0) ~ mu per site, zero outside.

    Replica r uses the stream (seed, SIM, r) only: initial values first, then
    the Gaussian increments in (site, step) order.
    """
    d = b.d if d is None else d
    config = SimConfig(d=d, n=n, M=grid.M, R=R, seed=seed, boundary=boundary, threads=threads)
    box = config.box
    S = len(box)
    layout = (Layout(box.sites, box.sites, "periodic", n) if boundary == "periodic"
              else Layout(box.sites, box.sites, "zero"))
    sqh = math.sqrt(grid.h)

    size = chunk_size(layout.n_rows, grid.M)

    def chunk(r0):
        r1 = min(r0 + size, R)
        B = r1 - r0
        values = np.zeros((B, layout.n_rows, grid.M + 1))
        noise = np.empty((B, S, grid.M))
        for j, r in enumerate(range(r0, r1)):
            g = rngmod.stream(seed, rngmod.SIM, r)
            values[j, :S, 0] = mu.sample(g, S)
            noise[j] = sqh * g.standard_normal((S, grid.M))
        _integrate(b, layout, values, noise, grid)
        return values[:, :S, :], noise

    parts = _map_chunks(chunk, list(range(0, R, size)), threads)
    paths = np.concatenate([p for p, _ in parts])
    incs = np.concatenate([z for _, z in parts])
    paths.setflags(write=False)
    incs.setflags(write=False)
    return Ensemble(config, b, mu, box, paths, incs)


# ---------------------------------------------------------------------------
# periodization and shift averaging


def _block_offsets(d: int) -> list[tuple[int, ...]]:
    return list(itertools.product((-1, 0, 1), repeat=d))


def tile_assignment(e: Ensemble, r: int, seed: int) -> np.ndarray:
    """Replica index for each of the 3^d blocks around block 0 (product order
    of {-1,0,1}^d); the central block is replica r, the others are distinct
    replicas chosen by the stream (seed, TILE, r)."""
    d = e.config.d
    nb = 3**d
    if e.R < nb:
        raise ValueError(f"periodization needs at least {nb} replicas, ensemble has {e.R}")
    g = rngmod.stream(seed, rngmod.TILE, r)
    others = g.choice(e.R - 1, size=nb - 1, replace=False)
    others = others + (others >= r)
    out = np.empty(nb, dtype=np.intp)
    centre = _block_offsets(d).index((0,) * d)
    out[centre] = r
    out[np.arange(nb) != centre] = others
    return out


def _locate(s: Site, n: int) -> tuple[tuple[int, ...], Site]:
    block = tuple((c + n) // (2 * n) for c in s)
    local = tuple(c - 2 * n * k for c, k in zip(s, block))
    return block, local


def periodized_neighborhood(e: Ensemble, r: int, seed: int) -> PathConfig:
    """Replica r on the central box surrounded by 3^d - 1 independent replicas,
    one per neighbouring block of side 2n."""
    n, d = e.config.n, e.config.d
    tiles = tile_assignment(e, r, seed)
    sites, rows = [], []
    idx = e.box.index()
    for b_id, block in enumerate(_block_offsets(d)):
        for s in e.box.sites:
            sites.append(tuple(c + 2 * n * k for c, k in zip(s, block)))
            rows.append(e.paths[tiles[b_id], idx[s]])
    return PathConfig(e.grid, tuple(sites), np.array(rows))


def shift_average(g: LocalFunction, e: Ensemble, seed: int) -> Estimate:
    """(1/|box|) sum_i E[g(theta_i X^per)]; replicas are the independent unit."""
    n, d = e.config.n, e.config.d
    blocks = _block_offsets(d)
    idx = e.box.index()
    block_id = np.empty((len(e.box), len(g.support)), dtype=np.intp)
    local_row = np.empty_like(block_id)
    for a, i in enumerate(e.box.sites):
        for c, j in enumerate(g.support):
            block, local = _locate(tuple(x + y for x, y in zip(i, j)), n)
            if block not in blocks:
                raise ValueError(
                    f"support of {g.name} is too large for one periodization layer (n={n})"
                )
            block_id[a, c] = blocks.index(block)
            local_row[a, c] = idx[local]
    per_replica = np.empty(e.R)
    size = chunk_size(len(e.box) * len(g.support), e.grid.M)
    for r0 in range(0, e.R, size):
        r1 = min(r0 + size, e.R)
        tiles = np.stack([tile_assignment(e, r, seed) for r in range(r0, r1)])
        reps = tiles[:, block_id]  # (B, |box|, |G|)
        vals = e.paths[reps, local_row[None], :]  # (B, |box|, |G|, M+1)
        per_replica[r0:r1] = np.asarray(g.fn(vals)).mean(axis=1)
    return Estimate.from_samples(per_replica)
