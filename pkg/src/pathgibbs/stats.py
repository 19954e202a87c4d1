"""Monte Carlo estimates and the small amount of statistics the checks need."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# absolute floor used when an estimate is deterministic (stderr == 0) so that
# float rounding in sums of h does not register as a failure
EXACT_ATOL = 1e-12


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_samples: int

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float).reshape(-1)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite Monte Carlo samples")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(mean, se, n)

    @classmethod
    def exact(cls, value: float, n: int = 1) -> "Estimate":
        return cls(float(value), 0.0, n)

    def z(self, target: float = 0.0) -> float:
        return zscore(self.mean - target, self.stderr)

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr + EXACT_ATOL

    def as_dict(self, name: str | None = None, **extra) -> dict:
        out = {"mean": self.mean, "stderr": self.stderr, "n": self.n_samples}
        if name is not None:
            out["name"] = name
        out.update(extra)
        return out


def zscore(diff: float, se: float) -> float:
    if se > 0:
        return float(diff / se)
    return 0.0 if abs(diff) <= EXACT_ATOL else math.copysign(math.inf, diff)


def combined_z(a: Estimate, b: Estimate) -> float:
    """z-score of a - b treating the two estimates as independent."""
    return zscore(a.mean - b.mean, math.hypot(a.stderr, b.stderr))


def agree(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    return abs(a.mean - b.mean) <= k * math.hypot(a.stderr, b.stderr) + EXACT_ATOL


def weighted_slope(x, y, se) -> tuple[float, float]:
    """Weighted least-squares slope of y on x with known per-point standard
    errors; returns (slope, stderr of slope)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    se = np.asarray(se, dtype=float)
    if np.any(se <= 0):
        # deterministic points: fall back to ordinary least squares
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        dof = max(len(x) - 2, 1)
        s2 = float(resid @ resid) / dof
        var = s2 / float(((x - x.mean()) ** 2).sum())
        return float(coef[1]), math.sqrt(var)
    w = 1.0 / se**2
    xw = (w * x).sum() / w.sum()
    sxx = (w * (x - xw) ** 2).sum()
    slope = (w * (x - xw) * y).sum() / sxx
    return float(slope), float(math.sqrt(1.0 / sxx))


def ess(log_weights) -> float:
    """(sum w)^2 / sum w^2 from unnormalized log weights."""
    lw = np.asarray(log_weights, dtype=float)
    a = lw - lw.max()
    w = np.exp(a)
    return float(w.sum() ** 2 / (w * w).sum())


def normalize_log_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    a = np.exp(lw - lw.max(axis=-1, keepdims=True))
    return a / a.sum(axis=-1, keepdims=True)
