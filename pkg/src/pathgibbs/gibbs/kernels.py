"""Local kernels on path space.

* reference kernel: Brownian motions inside Lambda started at xi(0), xi
  frozen outside;
* ``sample_kernel_h``: the finite-volume dynamics with frozen boundary, which
  is the reference kernel tilted by exp(-H_Lambda);
* ``kernel_hplus``: the kernel tilted by exp(-H_{Lambda^+}), sampled by self-
  normalized importance sampling from ``sample_kernel_h``. The log-weight of a
  proposal is the boundary sum over Lambda^+ \\ Lambda, whose Ito sums run
  against the frozen increments of xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..drift import DriftSpec
from ..lattice import Box, enlarge, neighbourhood
from ..paths import Field, Layout, LocalFunction, PathConfig, TimeGrid
from ..sim import run_frozen, solve_finite_volume
from ..stats import Estimate, ess, normalize_log_weights
from .hamiltonian import brownian_boundary, site_terms

ESS_FRACTION = 0.1


def sample_kernel_h(b: DriftSpec, lam: Box, xi: PathConfig, g: np.random.Generator) -> PathConfig:
    return solve_finite_volume(b, lam, xi, g)


def kernel_support(b: DriftSpec, lam: Box) -> Box:
    """Sites the tilted kernel reads: Lambda and (Lambda^+) + Delta."""
    return neighbourhood(enlarge(lam, b.range), b.range).union(lam)


def boundary_sites(b: DriftSpec, lam: Box) -> tuple:
    return enlarge(lam, b.range).difference(lam)


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    grid: TimeGrid
    sites: tuple
    paths: np.ndarray
    log_weights: np.ndarray
    ess_fraction: float = ESS_FRACTION

    @property
    def N(self) -> int:
        return len(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights)

    @property
    def ess(self) -> float:
        return ess(self.log_weights)

    @property
    def reliable(self) -> bool:
        return self.ess >= self.ess_fraction * self.N

    @property
    def partition(self) -> Estimate:
        """Estimate of Z_Lambda(xi) = E[exp(log-weight)] under the proposal."""
        return Estimate.from_samples(np.exp(self.log_weights))

    def replica(self, j: int) -> PathConfig:
        return PathConfig(self.grid, self.sites, self.paths[j])

    def expect(self, g: LocalFunction) -> float:
        idx = {s: r for r, s in enumerate(self.sites)}
        rows = np.array([idx[s] for s in g.support], dtype=np.intp)
        return float(self.weights @ g.apply(self.paths, rows))


def tilted_batch(b: DriftSpec, lam: Box, layout: Layout, xi_values: np.ndarray, N: int,
                 seed: int, keys, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """N proposals per boundary in ``xi_values`` (B, rows, M+1).

    Proposal noise for boundary b comes from the stream (seed, KERNEL, keys[b]).
    Returns proposal paths (B, N, rows, M+1) and log-weights (B, N).
    """
    B, rows, width = xi_values.shape
    sim_layout = layout.with_centers(lam.sites)
    bd_layout = layout.with_centers(boundary_sites(b, lam))
    sqh = math.sqrt(grid.h)
    noise = np.empty((B, N, len(lam), grid.M))
    for j, key in enumerate(keys):
        noise[j] = sqh * rngmod.stream(seed, rngmod.KERNEL, int(key)).standard_normal((N, len(lam), grid.M))
    start = np.broadcast_to(xi_values[:, None], (B, N, rows, width)).reshape(B * N, rows, width)
    vals = run_frozen(b, sim_layout, start, noise.reshape(B * N, len(lam), grid.M), grid)
    if bd_layout.centers:
        lw = site_terms(b, Field(vals, bd_layout, grid)).sum(axis=-1)
    else:
        lw = np.zeros(B * N)
    if not np.all(np.isfinite(lw)):
        raise FloatingPointError("non-finite importance weight in tilted kernel")
    return vals.reshape(B, N, rows, width), lw.reshape(B, N)


def kernel_hplus(b: DriftSpec, lam: Box, xi: PathConfig, N: int, seed: int, key: int = 0,
                 ess_fraction: float = ESS_FRACTION) -> tuple[WeightedEnsemble, Estimate]:
    """Weighted sample of the Lambda^+-tilted kernel at boundary xi, plus the
    partition-function estimate."""
    need = kernel_support(b, lam)
    missing = [s for s in need if s not in xi]
    if missing:
        raise ValueError(f"xi must cover Lambda^+ + Delta; missing {missing[:5]}")
    xi = xi.restrict(need.sites)
    layout = Layout(xi.sites, lam.sites, "error")
    vals, lw = tilted_batch(b, lam, layout, xi.values[None], N, seed, [key], xi.grid)
    we = WeightedEnsemble(xi.grid, xi.sites, vals[0], lw[0], ess_fraction)
    return we, we.partition


def partition_mean(b: DriftSpec, lam: Box, grid: TimeGrid, n_boundaries: int, N: int,
                   seed: int) -> Estimate:
    """Nested Monte Carlo of E_W[Z_Lambda(xi)] with xi a product of Brownian
    motions started from the standard Gaussian."""
    need = kernel_support(b, lam)
    z = np.empty(n_boundaries)
    for r in range(n_boundaries):
        xi = brownian_boundary(need.sites, grid, seed, key=r)
        _, est = kernel_hplus(b, lam, xi, N, seed, key=r)
        z[r] = est.mean
    return Estimate.from_samples(z)
