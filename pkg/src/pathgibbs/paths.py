"""Discretized paths on [0, 1] and finite families of them indexed by sites.

A :class:`PathConfig` holds one path per site of a finite support on a shared
uniform grid. :class:`Field` is the read-only view a drift functional gets:
``field.at(offset, k)`` returns the value at site ``center + offset`` and grid
index ``k`` for every center (and every batch element) at once.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .lattice import Box, Site, add, as_site, neg


@dataclass(frozen=True)
class TimeGrid:
    M: int

    def __post_init__(self):
        if int(self.M) < 1:
            raise ValueError("time grid needs M >= 1")

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) / self.M

    def index_of(self, t: float) -> int:
        """Nearest grid index to time t in [0, 1]."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"time {t} outside [0, 1]")
        return int(round(t * self.M))

    def delay_index(self, k: int, delay: float) -> int:
        """Grid index of 0 v (t_k - delay), snapped down to the grid."""
        lag = int(np.ceil(delay * self.M - 1e-9))
        return max(0, k - lag)


def running_max(p: np.ndarray, k: int | None = None) -> np.ndarray | float:
    """max_{j <= k} |p_j| over grid points. With k=None, the whole running
    maximum path is returned (last axis is time)."""
    p = np.asarray(p, dtype=float)
    if k is None:
        return np.maximum.accumulate(np.abs(p), axis=-1)
    M = p.shape[-1] - 1
    if not 0 <= k <= M:
        raise IndexError(f"grid index {k} outside 0..{M}")
    return np.max(np.abs(p[..., : k + 1]), axis=-1)


def ito_sum(integrand: np.ndarray, p: np.ndarray) -> np.ndarray | float:
    """Left-point sum  sum_k integrand[k] * (p[k+1] - p[k])."""
    integrand = np.asarray(integrand, dtype=float)
    p = np.asarray(p, dtype=float)
    if integrand.shape[-1] != p.shape[-1] - 1:
        raise ValueError(
            f"integrand has {integrand.shape[-1]} steps but path has "
            f"{p.shape[-1] - 1}"
        )
    return np.sum(integrand * np.diff(p, axis=-1), axis=-1)


@dataclass(frozen=True, eq=False)
class PathConfig:
    """Paths on a finite support; ``values[s]`` is the path of ``sites[s]``."""

    grid: TimeGrid
    sites: tuple[Site, ...]
    values: np.ndarray
    meta: Mapping = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        sites = tuple(as_site(s) for s in self.sites)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(sites), self.grid.M + 1):
            raise ValueError(
                f"values must have shape ({len(sites)}, {self.grid.M + 1}), "
                f"got {values.shape}"
            )
        if len(set(sites)) != len(sites):
            raise ValueError("duplicate sites in path configuration")
        values.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {s: r for r, s in enumerate(sites)})

    @classmethod
    def from_mapping(cls, grid: TimeGrid, paths: Mapping) -> "PathConfig":
        sites = sorted(as_site(s) for s in paths)
        lookup = {as_site(s): v for s, v in paths.items()}
        vals = np.array([np.asarray(lookup[s], dtype=float) for s in sites])
        return cls(grid, tuple(sites), vals.reshape(len(sites), grid.M + 1))

    @classmethod
    def zeros(cls, grid: TimeGrid, sites: Iterable[Site]) -> "PathConfig":
        sites = tuple(sorted(as_site(s) for s in sites))
        return cls(grid, sites, np.zeros((len(sites), grid.M + 1)))

    @classmethod
    def empty(cls, grid: TimeGrid) -> "PathConfig":
        return cls(grid, (), np.zeros((0, grid.M + 1)))

    @property
    def support(self) -> tuple[Site, ...]:
        return self.sites

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, s) -> bool:
        return as_site(s) in self._index

    def __getitem__(self, s) -> np.ndarray:
        s = as_site(s)
        try:
            return self.values[self._index[s]]
        except KeyError:
            raise KeyError(f"site {s} is outside the configuration support") from None

    def items(self):
        return ((s, self.values[r]) for r, s in enumerate(self.sites))

    def restrict(self, sites: Iterable[Site]) -> "PathConfig":
        sites = tuple(sorted(as_site(s) for s in sites))
        rows = [self._index[s] for s in sites]
        return PathConfig(self.grid, sites, self.values[rows])

    def shifted(self, i: Site) -> "PathConfig":
        """theta_i: (theta_i omega)_j = omega_{i+j}."""
        i = as_site(i)
        return PathConfig(
            self.grid, tuple(add(s, neg(i)) for s in self.sites), self.values
        )

    def at_time(self, k: int) -> dict[Site, float]:
        return {s: float(self.values[r, k]) for r, s in enumerate(self.sites)}


def concat(inner: PathConfig, outer: PathConfig) -> PathConfig:
    """Configuration equal to ``inner`` on its support and ``outer`` elsewhere."""
    if inner.grid != outer.grid:
        raise ValueError("cannot concatenate paths on different grids")
    overlap = set(inner.sites) & set(outer.sites)
    if overlap:
        raise ValueError(f"supports overlap at {sorted(overlap)[:3]}")
    if not inner.sites:
        return outer
    if not outer.sites:
        return inner
    merged = dict(outer.items())
    merged.update(inner.items())
    return PathConfig.from_mapping(inner.grid, merged)


class Layout:
    """Row bookkeeping for a stacked array of paths.

    ``support`` lists the sites that own a row. ``centers`` are the sites at
    which a drift is evaluated. Reading ``center + offset`` outside the support
    either raises (``outside="error"``), returns a zero row appended at index
    ``len(support)`` (``outside="zero"``), or wraps modulo the cubic box
    {-n..n-1}^d (``outside="periodic"``).
    """

    def __init__(
        self,
        support: Sequence[Site],
        centers: Sequence[Site],
        outside: str = "error",
        period: int | None = None,
    ):
        if outside not in ("error", "zero", "periodic"):
            raise ValueError(f"unknown outside policy {outside!r}")
        if outside == "periodic" and period is None:
            raise ValueError("periodic layout needs the box parameter n")
        self.support = tuple(as_site(s) for s in support)
        self.centers = tuple(as_site(s) for s in centers)
        self.outside = outside
        self.period = period
        self.index = {s: r for r, s in enumerate(self.support)}
        self.n_rows = len(self.support) + (1 if outside == "zero" else 0)
        self._cache: dict[Site, np.ndarray] = {}

    @property
    def zero_row(self) -> int | None:
        return len(self.support) if self.outside == "zero" else None

    def _row(self, s: Site) -> int:
        if s in self.index:
            return self.index[s]
        if self.outside == "zero":
            return len(self.support)
        if self.outside == "periodic":
            n = self.period
            wrapped = tuple((c + n) % (2 * n) - n for c in s)
            if wrapped in self.index:
                return self.index[wrapped]
        raise KeyError(f"site {s} is not covered by the configuration support")

    def rows(self, offset) -> np.ndarray:
        offset = as_site(offset)
        try:
            return self._cache[offset]
        except KeyError:
            r = np.array([self._row(add(c, offset)) for c in self.centers], dtype=np.intp)
            self._cache[offset] = r
            return r

    def center_rows(self) -> np.ndarray:
        return np.array([self.index[c] for c in self.centers], dtype=np.intp)

    def with_centers(self, centers: Sequence[Site]) -> "Layout":
        return Layout(self.support, centers, self.outside, self.period)


class Field:
    """Shifted view of stacked paths: the configuration seen from each center.

    ``values`` has shape ``(*batch, layout.n_rows, M + 1)``; results of
    ``at``/``upto``/``path`` have the batch shape followed by one axis over
    the layout centers.
    """

    def __init__(self, values: np.ndarray, layout: Layout, grid: TimeGrid):
        if values.shape[-2] != layout.n_rows or values.shape[-1] != grid.M + 1:
            raise ValueError(
                f"values shape {values.shape} does not match layout rows "
                f"{layout.n_rows} and grid M={grid.M}"
            )
        self.values = values
        self.layout = layout
        self.grid = grid

    @property
    def d(self) -> int:
        return len(self.layout.centers[0])

    @property
    def M(self) -> int:
        return self.grid.M

    def at(self, offset, k: int) -> np.ndarray:
        return self.values[..., self.layout.rows(offset), k]

    def upto(self, offset, k: int) -> np.ndarray:
        return self.values[..., self.layout.rows(offset), : k + 1]

    def path(self, offset) -> np.ndarray:
        return self.values[..., self.layout.rows(offset), :]

    @classmethod
    def of_config(cls, omega: PathConfig, centers=None, outside="error") -> "Field":
        """Single-configuration view (batch shape ``()``); default center is
        the origin."""
        if centers is None:
            d = len(omega.sites[0]) if omega.sites else 1
            centers = [(0,) * d]
        layout = Layout(omega.sites, centers, outside=outside)
        vals = omega.values
        if outside == "zero":
            vals = np.vstack([vals, np.zeros((1, omega.grid.M + 1))])
        return cls(vals, layout, omega.grid)


def site_label(s: Site) -> str:
    return ",".join(str(c) for c in s)


def parse_site_label(label: str) -> Site:
    return tuple(int(c) for c in label.split(","))


def write_csv(omega: PathConfig, fh) -> None:
    """Long format (site, t_k, value); floats written with repr for exact
    round trips."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["site", "t_k", "value"])
    t = omega.grid.times
    for s, path in omega.items():
        lab = site_label(s)
        for k in range(omega.grid.M + 1):
            w.writerow([lab, repr(float(t[k])), repr(float(path[k]))])


def read_csv(fh, grid: TimeGrid) -> PathConfig:
    r = csv.DictReader(fh)
    paths: dict[Site, list[float]] = {}
    for row in r:
        paths.setdefault(parse_site_label(row["site"]), []).append(float(row["value"]))
    return PathConfig.from_mapping(grid, paths)


def dumps(omega: PathConfig, header: Mapping) -> tuple[str, str]:
    """CSV body and JSON header for a path configuration."""
    buf = io.StringIO()
    write_csv(omega, buf)
    return buf.getvalue(), json.dumps(dict(header), sort_keys=True, indent=2)


def loads(body: str, header: str) -> PathConfig:
    h = json.loads(header)
    omega = read_csv(io.StringIO(body), TimeGrid(int(h["M"])))
    return PathConfig(omega.grid, omega.sites, omega.values, meta=h)


def box_config(box: Box, grid: TimeGrid, values: np.ndarray) -> PathConfig:
    return PathConfig(grid, box.sites, values)


@dataclass(frozen=True, eq=False)
class LocalFunction:
    """A functional of a configuration that reads only ``support`` (sites
    relative to the origin). ``fn`` maps an array of shape
    ``(..., len(support), M + 1)`` to ``(...)``."""

    name: str
    support: tuple[Site, ...]
    fn: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(as_site(s) for s in self.support))

    def __call__(self, omega: PathConfig) -> float:
        vals = np.stack([omega[s] for s in self.support])
        return float(self.fn(vals))

    def apply(self, values: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Evaluate on stacked paths; ``rows`` gives the row of each support
        site, shape (len(support),) or (..., len(support))."""
        if rows.ndim == 1:
            return self.fn(values[..., rows, :])
        return self.fn(np.take_along_axis(values, rows[..., None], axis=-2))

    @property
    def diameter(self) -> int:
        return max(
            max(abs(a - b) for a, b in zip(s, t)) for s in self.support for t in self.support
        )


_TRANSFORMS = {
    "identity": lambda x: x,
    "square": lambda x: x * x,
    "positive": lambda x: (x > 0).astype(float),
}


def value_at(s: Site, t: float, transform: str = "identity", cap: float | None = None,
             M: int | None = None) -> LocalFunction:
    """g(omega) = transform(omega_s(t)), optionally capped above (x ^ cap).

    The time is snapped to the nearest grid point of whatever grid the
    function is evaluated on.
    """
    s = as_site(s)
    tf = _TRANSFORMS[transform]

    def fn(vals):
        m = vals.shape[-1] - 1
        x = vals[..., 0, int(round(t * m))]
        if cap is not None:
            x = np.minimum(x, cap)
        return tf(x)

    label = f"{transform}(X{list(s)}({t:g}))"
    if cap is not None:
        label = f"{transform}(min(X{list(s)}({t:g}),{cap:g}))"
    return LocalFunction(label, (s,), fn)


def constant_function(c: float, d: int = 1) -> LocalFunction:
    return LocalFunction(f"const({c:g})", ((0,) * d,), lambda v: np.full(v.shape[:-2], float(c)))
