"""Statistical check of the equilibrium equation

    E_{P_n}[g] = E_{xi ~ P_n} [ E_{Pi^{H,+}_Lambda(xi, .)} [g] ]

for local test functions g. Each outer replica xi contributes the paired
difference g(xi) - (weighted inner mean of g), so outer replicas are the
independent unit of the z-score.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..drift import DriftSpec
from ..lattice import Box, enlarge
from ..paths import Layout, LocalFunction, TimeGrid
from ..sim import CHUNK_FLOATS, Ensemble, InitialLaw, sample_Pn
from ..stats import Estimate, ess, normalize_log_weights
from .kernels import ESS_FRACTION, kernel_support, tilted_batch


class PreconditionError(ValueError):
    pass


@dataclass
class DlrEntry:
    name: str
    left: Estimate
    right: Estimate
    diff: Estimate
    z: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate_left": self.left.as_dict(),
            "estimate_right": self.right.as_dict(),
            "mean": self.diff.mean,
            "stderr": self.diff.stderr,
            "n": self.diff.n_samples,
            "z": self.z,
            "pass": self.passed,
        }


@dataclass
class DlrReport:
    entries: list[DlrEntry]
    threshold: float
    ess_stats: dict
    geometry: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def as_dict(self) -> dict:
        return {
            "tests": [e.as_dict() for e in self.entries],
            "threshold": self.threshold,
            "ess_stats": self.ess_stats,
            "geometry": self.geometry,
            "pass": self.passed,
        }


def check_geometry(b: DriftSpec, n: int, lam: Box, tests: list[LocalFunction]) -> dict:
    box = Box.cubic(n, b.d)
    lam_p = enlarge(lam, b.range)
    lam_pp = enlarge(lam_p, b.range)
    if not lam_pp.issubset(box):
        raise PreconditionError(
            f"Lambda^++ = {list(lam_pp)} is not inside the box {{-{n}..{n - 1}}}^{b.d}"
        )
    for g in tests:
        if not all(s in box for s in g.support):
            raise PreconditionError(f"support of {g.name} leaves the box")
    return {"n": n, "lambda": [list(s) for s in lam], "lambda_plus": [list(s) for s in lam_p],
            "lambda_plus_plus": [list(s) for s in lam_pp]}


def dlr_check(b: DriftSpec, n: int, lam: Box, mu: InitialLaw, tests: list[LocalFunction],
              outer: int, inner: int, seed: int, grid: TimeGrid, threshold: float = 3.0,
              ess_fraction: float = ESS_FRACTION, ensemble: Ensemble | None = None,
              threads: int = 1) -> DlrReport:
    geometry = check_geometry(b, n, lam, tests)
    if ensemble is None:
        ensemble = sample_Pn(b, n, mu, grid, outer, seed, threads=threads)
    e = ensemble
    if e.config.n != n or e.R < outer:
        raise PreconditionError("ensemble does not match the requested box or budget")

    need = kernel_support(b, lam).union([s for g in tests for s in g.support])
    box_idx = e.box.index()
    support = [s for s in need.sites if s in box_idx]
    src_rows = np.array([box_idx[s] for s in support], dtype=np.intp)
    layout = Layout(support, lam.sites, "zero")
    sup_idx = {s: r for r, s in enumerate(support)}
    test_rows = [np.array([sup_idx[s] for s in g.support], dtype=np.intp) for g in tests]

    left = np.empty((len(tests), outer))
    right = np.empty((len(tests), outer))
    ess_vals = np.empty(outer)
    per = max(1, CHUNK_FLOATS // (inner * layout.n_rows * (grid.M + 1)))
    for r0 in range(0, outer, per):
        r1 = min(r0 + per, outer)
        xi = e.paths[r0:r1][:, src_rows, :]
        xi = np.concatenate([xi, np.zeros((r1 - r0, 1, grid.M + 1))], axis=1)
        vals, lw = tilted_batch(b, lam, layout, xi, inner, seed, range(r0, r1), grid)
        w = normalize_log_weights(lw)
        ess_vals[r0:r1] = [ess(row) for row in lw]
        for t, (g, rows) in enumerate(zip(tests, test_rows)):
            left[t, r0:r1] = g.apply(xi, rows)
            right[t, r0:r1] = np.sum(w * g.apply(vals, rows), axis=1)

    entries = []
    for t, g in enumerate(tests):
        diff = Estimate.from_samples(left[t] - right[t])
        z = diff.z(0.0)
        entries.append(DlrEntry(g.name, Estimate.from_samples(left[t]),
                                Estimate.from_samples(right[t]), diff, z, abs(z) <= threshold))
    failures = int(np.sum(ess_vals < ess_fraction * inner))
    ess_stats = {
        "min": float(ess_vals.min()),
        "median": float(np.median(ess_vals)),
        "mean": float(ess_vals.mean()),
        "threshold": ess_fraction * inner,
        "failures": failures,
        "failure_rate": failures / outer,
        "inner": inner,
        "outer": outer,
    }
    return DlrReport(entries, threshold, ess_stats, geometry)
