"""Free-energy estimators for an ensemble simulated under a known drift beta
and evaluated against a candidate drift b.

Both are averaged over interior sites, whose distance to the box complement
exceeds the diameter of the interaction range; this keeps the frozen zero
boundary out of the per-site averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..drift import DriftSpec
from ..lattice import Box, InteractionRange, add
from ..paths import ito_sum
from ..sim import Ensemble, InitialLaw, chunk_size
from ..stats import Estimate, combined_z
from .hamiltonian import drift_paths


def interior_sites(box: Box, delta: InteractionRange) -> tuple:
    margin = InteractionRange.cube(delta.diameter, delta.d).offsets if delta.diameter else ()
    inside = tuple(s for s in box if all(add(s, o) in box for o in margin))
    if not inside:
        raise ValueError(
            f"no site of the box lies at distance > {delta.diameter} from its complement"
        )
    return inside


def _margin_range(b: DriftSpec, beta: DriftSpec) -> InteractionRange:
    return b.range if b.range.diameter >= beta.range.diameter else beta.range


def _per_replica(e: Ensemble, centers, fn) -> np.ndarray:
    out = np.empty(e.R)
    size = chunk_size(len(e.box) + 1, e.grid.M)
    for r0 in range(0, e.R, size):
        rows = slice(r0, min(r0 + size, e.R))
        out[rows] = fn(rows)
    return out


def free_energy_mismatch(b: DriftSpec, beta: DriftSpec, e: Ensemble) -> Estimate:
    """(1/2) E int (beta - b)^2 dt per interior site, beta being the drift the
    ensemble was simulated with."""
    centers = interior_sites(e.box, _margin_range(b, beta))
    h = e.grid.h

    def fn(rows):
        diff = drift_paths(beta, e, centers, rows) - drift_paths(b, e, centers, rows)
        return 0.5 * h * np.sum(diff * diff, axis=-1).mean(axis=-1)

    return Estimate.from_samples(_per_replica(e, centers, fn))


def free_energy_definition(b: DriftSpec, e: Ensemble, mu: InitialLaw | None = None) -> Estimate:
    """Entropy minus initial entropy minus energy, per interior site.

    With the ensemble drift beta, the entropy per site is I(q; m) plus
    (1/2) E int beta^2 dt, the initial-marginal entropy is I(q; m), and the
    energy is E[int b dX_0 - (1/2) int b^2 dt] with the Ito sum taken against
    the simulated increments. The I(q; m) terms cancel but the law must still
    be a product law with a density.
    """
    mu = e.law if mu is None else mu
    kl = mu.relative_entropy()
    if not np.isfinite(kl):
        raise ValueError("initial law needs finite relative entropy per site")
    beta = e.drift
    centers = interior_sites(e.box, _margin_range(b, beta))
    idx = e.box.index()
    crow = np.array([idx[s] for s in centers], dtype=np.intp)
    h = e.grid.h

    def fn(rows):
        bb = drift_paths(b, e, centers, rows)
        be = drift_paths(beta, e, centers, rows)
        x = e.paths[rows][:, crow, :]
        energy = ito_sum(bb, x) - 0.5 * h * np.sum(bb * bb, axis=-1)
        entropy = kl + 0.5 * h * np.sum(be * be, axis=-1)
        return (entropy - kl - energy).mean(axis=-1)

    return Estimate.from_samples(_per_replica(e, centers, fn))


@dataclass
class FreeEnergyReport:
    mismatch: Estimate
    definition: Estimate
    interior: tuple

    @property
    def z(self) -> float:
        return combined_z(self.mismatch, self.definition)

    @property
    def agree(self) -> bool:
        return abs(self.z) <= 3.0

    def as_dict(self) -> dict:
        return {
            "mismatch": self.mismatch.as_dict(),
            "definition": self.definition.as_dict(),
            "z": self.z,
            "agree": self.agree,
            "interior_sites": [list(s) for s in self.interior],
        }


def free_energy_report(b: DriftSpec, e: Ensemble, mu: InitialLaw | None = None) -> FreeEnergyReport:
    return FreeEnergyReport(
        free_energy_mismatch(b, e.drift, e),
        free_energy_definition(b, e, mu),
        interior_sites(e.box, _margin_range(b, e.drift)),
    )
