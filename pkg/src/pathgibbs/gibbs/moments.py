"""Weighted second moments of running maxima for the frozen-boundary dynamics.

For each box size n the report holds E ||X*(1)||^2_gamma over the box, the
bracket 1 + ||xi_Lambda(0)||^2_gamma + ||xi*_outside(1)||^2_gamma (the outside
part truncated to the sites the drift reads) and their ratio. The ratio must
stay bounded in n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..drift import DriftSpec
from ..lattice import Box, gamma_vector, neighbourhood
from ..paths import Layout, TimeGrid
from ..sim import InitialLaw, chunk_size, run_frozen
from ..stats import Estimate, weighted_slope


@dataclass
class MomentRow:
    n: int
    norm: Estimate
    bracket: float
    ratio: Estimate
    site_second_moment: Estimate

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "norm_mean": self.norm.mean,
            "norm_stderr": self.norm.stderr,
            "bracket": self.bracket,
            "ratio_mean": self.ratio.mean,
            "ratio_stderr": self.ratio.stderr,
            "site_second_moment_mean": self.site_second_moment.mean,
            "site_second_moment_stderr": self.site_second_moment.stderr,
            "replicas": self.norm.n_samples,
        }


@dataclass
class MomentReport:
    rows: list[MomentRow]
    slope: float
    slope_stderr: float
    tolerance: float
    z_threshold: float = 3.0

    @property
    def slope_z(self) -> float:
        if self.slope_stderr == 0.0:
            return 0.0 if self.slope == 0.0 else math.copysign(math.inf, self.slope)
        return self.slope / self.slope_stderr

    @property
    def spread(self) -> float:
        r = [row.ratio.mean for row in self.rows]
        return max(r) / min(r)

    @property
    def bounded(self) -> bool:
        return self.spread <= self.tolerance

    @property
    def no_trend(self) -> bool:
        return abs(self.slope_z) <= self.z_threshold

    @property
    def passed(self) -> bool:
        return self.bounded and self.no_trend

    def as_dict(self) -> dict:
        return {
            "rows": [r.as_dict() for r in self.rows],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "slope_z": self.slope_z,
            "spread": self.spread,
            "tolerance": self.tolerance,
            "bounded": self.bounded,
            "no_trend": self.no_trend,
            "pass": self.passed,
        }


def sample_frozen_constant(b: DriftSpec, n: int, xi_value: float, mu: InitialLaw | None,
                           grid: TimeGrid, R: int, seed: int, key: tuple = ()) -> np.ndarray:
    """R replicas on the cubic box with every outside path frozen at the
    constant ``xi_value``. Initial values inside are ``xi_value`` when ``mu`` is
    None, else drawn from ``mu``. Replica r uses the stream (seed, SIM, r, *key);
    with an empty key this is the stream of ``sample_Pn``, so xi = 0 with a
    Dirac law at 0 reproduces it exactly.

    Returns the box paths, shape (R, |box|, M+1).
    """
    box = Box.cubic(n, b.d)
    outside = neighbourhood(box, b.range).difference(box)
    support = box.sites + outside
    layout = Layout(support, box.sites, "error")
    S = len(box)
    sqh = math.sqrt(grid.h)
    out = np.empty((R, S, grid.M + 1))
    size = chunk_size(len(support), grid.M)
    for r0 in range(0, R, size):
        r1 = min(r0 + size, R)
        vals = np.full((r1 - r0, len(support), grid.M + 1), float(xi_value))
        noise = np.empty((r1 - r0, S, grid.M))
        for j, r in enumerate(range(r0, r1)):
            g = rngmod.stream(seed, rngmod.SIM, r, *key)
            if mu is not None:
                vals[j, :S, 0] = mu.sample(g, S)
            noise[j] = sqh * g.standard_normal((S, grid.M))
        out[r0:r1] = run_frozen(b, layout, vals, noise, grid)[:, :S, :]
    return out


def moment_row(b: DriftSpec, n: int, xi_value: float, mu: InitialLaw | None,
               grid: TimeGrid, R: int, seed: int) -> MomentRow:
    d = b.d
    box = Box.cubic(n, d)
    outside = neighbourhood(box, b.range).difference(box)
    # one key per size keeps the rows independent for the slope fit
    paths = sample_frozen_constant(b, n, xi_value, mu, grid, R, seed, key=(n,))
    gam = gamma_vector(box.sites, d)
    star2 = np.max(np.abs(paths), axis=-1) ** 2
    norm = Estimate.from_samples(star2 @ gam)
    init2 = xi_value**2 if mu is None else mu.second_moment()
    out_sum = float(gamma_vector(outside, d).sum()) if outside else 0.0
    bracket = 1.0 + init2 * float(gam.sum()) + xi_value**2 * out_sum
    ratio = Estimate(norm.mean / bracket, norm.stderr / bracket, norm.n_samples)
    site = Estimate.from_samples(star2.mean(axis=1))
    return MomentRow(n, norm, bracket, ratio, site)


def moment_bound_report(b: DriftSpec, sizes, xi_value: float = 0.0,
                        mu: InitialLaw | None = None, R: int = 10_000, seed: int = 0,
                        grid: TimeGrid | None = None, tolerance: float = 2.0) -> MomentReport:
    grid = grid or TimeGrid(200)
    rows = [moment_row(b, int(n), xi_value, mu, grid, R, seed) for n in sizes]
    slope, se = weighted_slope([r.n for r in rows], [r.ratio.mean for r in rows],
                               [r.ratio.stderr for r in rows])
    return MomentReport(rows, slope, se, tolerance)
