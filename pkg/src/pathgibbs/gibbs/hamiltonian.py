"""Girsanov Hamiltonians and log-densities on discretized paths.

Per-site term at i:  I_i = sum_k b_k(theta_i X) (X_i(t_{k+1}) - X_i(t_k))
                            - (h/2) sum_k b_k(theta_i X)^2
and H_Lambda = -sum_{i in Lambda} I_i. Drift values are left-point, so
exp(-H_Lambda) has expectation one under Brownian proposals exactly, not just
in the limit h -> 0.
"""

from __future__ import annotations

import math

import numpy as np

from .. import rng as rngmod
from ..drift import DriftSpec, zero
from ..lattice import Box, neighbourhood
from ..paths import Field, Layout, PathConfig, TimeGrid, concat, ito_sum
from ..sim import Ensemble, InitialLaw, chunk_size, run_frozen
from ..stats import Estimate


def site_terms(b: DriftSpec, field: Field) -> np.ndarray:
    """I_i for every center of the field; shape (*batch, n_centers)."""
    o = (0,) * field.d
    drifts = b.path(field)
    x = field.path(o)
    return ito_sum(drifts, x) - 0.5 * field.grid.h * np.sum(drifts * drifts, axis=-1)


def _check_cover(b: DriftSpec, lam: Box, omega: PathConfig) -> None:
    need = neighbourhood(lam, b.range)
    missing = [s for s in need if s not in omega]
    if missing:
        raise ValueError(f"configuration does not cover {missing[:5]} (needed around {len(lam)} sites)")


def hamiltonian(b: DriftSpec, lam: Box, omega: PathConfig) -> float:
    """H_Lambda(omega) = -sum_{i in Lambda} I_i(omega)."""
    _check_cover(b, lam, omega)
    field = Field(omega.values, Layout(omega.sites, lam.sites, "error"), omega.grid)
    h = -float(np.sum(site_terms(b, field)))
    if not math.isfinite(h):
        raise FloatingPointError(f"non-finite Hamiltonian for drift {b.name}")
    return h


def girsanov_log_density(b: DriftSpec, n: int, X: PathConfig, mu: InitialLaw) -> float:
    """log dP_n/dW at X: sum_i log f(X_i(0)) - H_{Lambda_n}(X 0_{outside})."""
    d = b.d
    box = Box.cubic(n, d)
    if set(X.sites) != set(box.sites):
        raise ValueError("X must be a configuration on the box {-n..n-1}^d")
    outside = [s for s in neighbourhood(box, b.range) if s not in box]
    full = concat(X, PathConfig.zeros(X.grid, outside)) if outside else X
    init = float(np.sum(mu.log_density(X.values[:, 0])))
    return init - hamiltonian(b, box, full)


def drift_paths(b: DriftSpec, e: Ensemble, centers=None, rows=slice(None)) -> np.ndarray:
    """Drift values b_k(theta_i X), k < M, for replicas ``rows``; shape
    (R', n_centers, M). Outside the box the ensemble's boundary rule applies."""
    layout = e.layout(centers)
    return b.path(Field(e.padded(rows), layout, e.grid))


def ensemble_site_terms(b: DriftSpec, e: Ensemble, centers=None) -> np.ndarray:
    """I_i for every replica and center; shape (R, n_centers)."""
    layout = e.layout(centers)
    out = np.empty((e.R, len(layout.centers)))
    size = chunk_size(layout.n_rows, e.grid.M)
    for r0 in range(0, e.R, size):
        rows = slice(r0, min(r0 + size, e.R))
        out[rows] = site_terms(b, Field(e.padded(rows), layout, e.grid))
    return out


def log_densities(b: DriftSpec, e: Ensemble, mu: InitialLaw | None = None) -> np.ndarray:
    """girsanov_log_density for every replica of an ensemble sampled on the box."""
    mu = e.law if mu is None else mu
    init = np.sum(mu.log_density(e.paths[:, :, 0]), axis=1)
    return init + ensemble_site_terms(b, e).sum(axis=1)


def brownian_proposals(lam: Box, xi: PathConfig, N: int, seed: int, start: int = 0) -> np.ndarray:
    """Draws start..start+N-1 of the reference kernel: Brownian inside lam from
    xi_lam(0), xi frozen elsewhere. Draw j uses the stream (seed, PROBE, j)."""
    layout = Layout(xi.sites, lam.sites, "error")
    grid = xi.grid
    sqh = math.sqrt(grid.h)
    noise = np.empty((N, len(lam), grid.M))
    for j in range(N):
        noise[j] = sqh * rngmod.stream(seed, rngmod.PROBE, start + j).standard_normal((len(lam), grid.M))
    vals = np.broadcast_to(xi.values, (N,) + xi.values.shape)
    return run_frozen(zero(lam.d), layout, vals, noise, grid)


def girsanov_normalization(b: DriftSpec, lam: Box, xi: PathConfig, N: int, seed: int) -> Estimate:
    """Monte Carlo estimate of E[exp(-H_Lambda)] under the reference kernel with
    boundary xi; equals one for every admissible drift."""
    _check_cover(b, lam, xi)
    layout = Layout(xi.sites, lam.sites, "error")
    out = np.empty(N)
    size = chunk_size(len(xi.sites), xi.grid.M)
    for j0 in range(0, N, size):
        j1 = min(j0 + size, N)
        vals = brownian_proposals(lam, xi, j1 - j0, seed, start=j0)
        out[j0:j1] = np.exp(site_terms(b, Field(vals, layout, xi.grid)).sum(axis=-1))
    return Estimate.from_samples(out)


def brownian_boundary(sites, grid: TimeGrid, seed: int, key: int = 0,
                      init_sd: float = 1.0) -> PathConfig:
    """A Brownian configuration (initial values N(0, init_sd^2)) drawn from the
    stream (seed, INIT, key), for use as a frozen boundary."""
    g = rngmod.stream(seed, rngmod.INIT, key)
    sites = tuple(sorted(sites))
    x0 = init_sd * g.standard_normal(len(sites))
    inc = math.sqrt(grid.h) * g.standard_normal((len(sites), grid.M))
    vals = np.concatenate([x0[:, None], x0[:, None] + np.cumsum(inc, axis=1)], axis=1)
    return PathConfig(grid, sites, vals)
