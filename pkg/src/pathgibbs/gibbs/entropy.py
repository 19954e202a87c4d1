"""Relative entropy per site of the finite-volume law against Wiener measure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..drift import DriftSpec
from ..sim import Ensemble, InitialLaw, chunk_size
from ..stats import Estimate, combined_z
from .hamiltonian import drift_paths, log_densities


def entropy_per_site(b: DriftSpec, e: Ensemble, mu: InitialLaw | None = None) -> Estimate:
    """Monte Carlo mean of log dP_n/dW over the ensemble, divided by |Lambda_n|."""
    if e.config.boundary != "zero":
        raise ValueError("entropy needs an ensemble with zero boundary")
    return Estimate.from_samples(log_densities(b, e, mu) / len(e.box))


def _sq_integrals(b: DriftSpec, e: Ensemble) -> np.ndarray:
    """h sum_k b_k(theta_i X)^2 per replica and site; shape (R, |box|)."""
    out = np.empty((e.R, len(e.box)))
    size = chunk_size(len(e.box) + 1, e.grid.M)
    for r0 in range(0, e.R, size):
        rows = slice(r0, min(r0 + size, e.R))
        bp = drift_paths(b, e, rows=rows)
        out[rows] = e.grid.h * np.sum(bp * bp, axis=-1)
    return out


def entropy_per_site_formula(b: DriftSpec, e: Ensemble, mu: InitialLaw | None = None) -> Estimate:
    """I(q; m) + (1 / (2 |Lambda_n|)) sum_i E int b^2 dt.

    The martingale part of the log-density has mean zero, so only the
    quadratic term is estimated.
    """
    mu = e.law if mu is None else mu
    kl = mu.relative_entropy()
    quad = 0.5 * _sq_integrals(b, e).mean(axis=1)
    est = Estimate.from_samples(quad)
    return Estimate(kl + est.mean, est.stderr, est.n_samples)


@dataclass
class EntropyReport:
    n: int
    direct: Estimate
    formula: Estimate
    initial_entropy: float
    max_site_energy: float
    bound: float

    @property
    def z(self) -> float:
        return combined_z(self.direct, self.formula)

    @property
    def agree(self) -> bool:
        return abs(self.z) <= 3.0

    @property
    def within_bound(self) -> bool:
        return self.direct.mean - 3.0 * self.direct.stderr <= self.bound

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "direct": self.direct.as_dict(),
            "formula": self.formula.as_dict(),
            "z": self.z,
            "agree": self.agree,
            "initial_entropy": self.initial_entropy,
            "max_site_energy": self.max_site_energy,
            "bound": self.bound,
            "within_bound": self.within_bound,
        }


def entropy_report(b: DriftSpec, e: Ensemble, mu: InitialLaw | None = None) -> EntropyReport:
    """Both estimators plus the bound I(q; m) + (1/2) max_i E int b^2 dt."""
    mu = e.law if mu is None else mu
    sq = _sq_integrals(b, e)
    kl = mu.relative_entropy()
    quad = Estimate.from_samples(0.5 * sq.mean(axis=1))
    formula = Estimate(kl + quad.mean, quad.stderr, quad.n_samples)
    site_energy = float(sq.mean(axis=0).max())
    return EntropyReport(e.config.n, entropy_per_site(b, e, mu), formula, kl,
                         site_energy, kl + 0.5 * site_energy)
