"""Geometry of the integer lattice: sites, boxes, shifts, enlargements and
the summable weight sequence used for weighted l2 norms.

Sites are plain tuples of ints. A configuration is anything that maps sites
to values (a dict, or a :class:`pathgibbs.paths.PathConfig`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Site = tuple[int, ...]


def site(*coords: int) -> Site:
    return tuple(int(c) for c in coords)


def add(i: Site, j: Site) -> Site:
    if len(i) != len(j):
        raise ValueError(f"dimension mismatch: {i} vs {j}")
    return tuple(a + b for a, b in zip(i, j))


def neg(i: Site) -> Site:
    return tuple(-a for a in i)


def sup_norm(i: Site) -> int:
    return max((abs(a) for a in i), default=0)


def as_site(x, d: int | None = None) -> Site:
    """Coerce an int or a sequence of ints to a site tuple."""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        s = (int(x),)
    else:
        s = tuple(int(c) for c in x)
    if d is not None and len(s) != d:
        raise ValueError(f"site {s} does not have dimension {d}")
    return s


@dataclass(frozen=True)
class Box:
    """A finite, nonempty set of sites stored as a sorted tuple."""

    sites: tuple[Site, ...]

    def __post_init__(self):
        if not self.sites:
            raise ValueError("a box must be nonempty")
        dims = {len(s) for s in self.sites}
        if len(dims) != 1:
            raise ValueError("all sites of a box must share one dimension")
        object.__setattr__(self, "sites", tuple(sorted(set(self.sites))))

    @classmethod
    def of(cls, sites: Iterable) -> "Box":
        return cls(tuple(as_site(s) for s in sites))

    @classmethod
    def cubic(cls, n: int, d: int) -> "Box":
        """The box {-n, ..., n-1}^d."""
        if n < 1 or d < 1:
            raise ValueError("cubic box needs n >= 1 and d >= 1")
        return cls(tuple(itertools.product(range(-n, n), repeat=d)))

    @property
    def d(self) -> int:
        return len(self.sites[0])

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, i) -> bool:
        return tuple(i) in self._set

    @property
    def _set(self) -> frozenset:
        # cached lazily; dataclass is frozen so go through object.__setattr__
        try:
            return self.__dict__["_cached_set"]
        except KeyError:
            s = frozenset(self.sites)
            object.__setattr__(self, "_cached_set", s)
            return s

    def issubset(self, other: "Box") -> bool:
        return self._set <= other._set

    def union(self, other: "Box | Iterable[Site]") -> "Box":
        return Box(tuple(self._set | set(other)))

    def difference(self, other: "Box | Iterable[Site]") -> tuple[Site, ...]:
        other = set(other)
        return tuple(s for s in self.sites if s not in other)

    def shifted(self, i: Site) -> "Box":
        """The box {j - i : j in self}, i.e. the domain of theta_i applied to a
        configuration defined on self."""
        return Box(tuple(add(s, neg(i)) for s in self.sites))

    def index(self) -> dict[Site, int]:
        return {s: k for k, s in enumerate(self.sites)}


@dataclass(frozen=True)
class InteractionRange:
    """The finite window of offsets a drift may read. Always contains 0."""

    offsets: tuple[Site, ...]

    def __post_init__(self):
        offs = tuple(dict.fromkeys(tuple(int(c) for c in o) for o in self.offsets))
        if not offs:
            raise ValueError("interaction range must be nonempty")
        d = len(offs[0])
        if any(len(o) != d for o in offs):
            raise ValueError("offsets must share one dimension")
        if (0,) * d not in offs:
            raise ValueError("interaction range must contain the origin")
        object.__setattr__(self, "offsets", offs)

    @classmethod
    def of(cls, offsets: Iterable, d: int | None = None) -> "InteractionRange":
        return cls(tuple(as_site(o, d) for o in offsets))

    @classmethod
    def cube(cls, radius: int, d: int) -> "InteractionRange":
        r = range(-radius, radius + 1)
        return cls(tuple(itertools.product(r, repeat=d)))

    @classmethod
    def origin(cls, d: int) -> "InteractionRange":
        return cls(((0,) * d,))

    @property
    def d(self) -> int:
        return len(self.offsets[0])

    def __len__(self) -> int:
        return len(self.offsets)

    def __iter__(self):
        return iter(self.offsets)

    def __contains__(self, o) -> bool:
        return tuple(o) in self.offsets

    @property
    def radius(self) -> int:
        return max(sup_norm(o) for o in self.offsets)

    @property
    def diameter(self) -> int:
        """Largest sup-norm distance between two offsets."""
        return max(
            sup_norm(add(a, neg(b))) for a in self.offsets for b in self.offsets
        )


def enlarge(box: Box, delta: InteractionRange) -> Box:
    """Sites i whose window i + delta meets the box."""
    if box.d != delta.d:
        raise ValueError("box and interaction range dimensions differ")
    return Box(tuple({add(s, neg(o)) for s in box for o in delta}))


def neighbourhood(box: Box, delta: InteractionRange) -> Box:
    """Sites read by a drift evaluated at every site of the box: box + delta."""
    return Box(tuple({add(s, o) for s in box for o in delta}))


def shift_config(omega: Mapping[Site, object], i: Site) -> dict[Site, object]:
    """theta_i on a finite configuration: (theta_i omega)_j = omega_{i+j}."""
    i = tuple(i)
    return {add(s, neg(i)): v for s, v in omega.items()}


def gamma(i: Site, d: int | None = None) -> float:
    """Weight 1 / (1 + |i|)^(d+1) with |i| the sup-norm."""
    i = tuple(i)
    d = len(i) if d is None else d
    return 1.0 / (1 + sup_norm(i)) ** (d + 1)


def gamma_sum(box: Iterable[Site], d: int) -> float:
    return sum(gamma(s, d) for s in box)


def gamma_total(d: int, rmax: int = 100_000) -> float:
    """Full-lattice sum of gamma, truncated at shell rmax (tail < 2^d d / rmax)."""
    total = 1.0
    for r in range(1, rmax + 1):
        shell = (2 * r + 1) ** d - (2 * r - 1) ** d
        total += shell / (1 + r) ** (d + 1)
    return total


def weighted_sq_norm(x: Mapping[Site, float], d: int | None = None) -> float:
    """sum_i gamma_i x_i^2 over the supplied support."""
    total = 0.0
    for s, v in x.items():
        total += gamma(s, d) * float(v) ** 2
    return total


def gamma_vector(sites: Sequence[Site], d: int) -> np.ndarray:
    return np.array([gamma(s, d) for s in sites], dtype=float)
