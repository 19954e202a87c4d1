"""Path-dependent drift functionals b_t(omega) and randomized checks of their
structural conditions (locality, adaptedness, sublinear growth).

A drift is evaluated through a :class:`~pathgibbs.paths.Field`: the stacked
configuration seen from one or many centers at once. ``step(field, k)`` is the
drift at grid time t_k; ``path(field)`` returns all left-point values
k = 0..M-1 along already-known paths and must agree with ``step``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Sequence

import numpy as np

from .lattice import InteractionRange, Site, as_site, sup_norm
from .paths import Field, Layout, PathConfig, TimeGrid, running_max


class DriftError(ValueError):
    pass


StepFn = Callable[[Field, int], np.ndarray]
PathFn = Callable[[Field], np.ndarray]


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """An adapted, local, sublinear drift with declared range and constant C."""

    name: str
    range: InteractionRange
    growth_constant: float
    step: StepFn
    path_fn: PathFn | None = None
    params: Mapping = dc_field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.range.d

    def at(self, field: Field, k: int) -> np.ndarray:
        return np.asarray(self.step(field, k), dtype=float)

    def path(self, field: Field) -> np.ndarray:
        if self.path_fn is not None:
            return np.asarray(self.path_fn(field), dtype=float)
        return np.stack([self.at(field, k) for k in range(field.M)], axis=-1)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "range": [list(o) for o in self.range.offsets],
            "growth_constant": self.growth_constant,
            "params": dict(self.params),
        }


def evaluate(b: DriftSpec, omega: PathConfig, k: int) -> float:
    """Drift at the origin of ``omega`` at grid index k. The drift at site i
    is ``evaluate(b, omega.shifted(i), k)``."""
    if not 0 <= k <= omega.grid.M:
        raise IndexError(f"grid index {k} outside 0..{omega.grid.M}")
    try:
        v = b.at(Field.of_config(omega), k)
    except KeyError as exc:
        raise DriftError(str(exc)) from None
    v = float(np.asarray(v).reshape(-1)[0])
    if not np.isfinite(v):
        raise DriftError(f"drift {b.name} is not finite at k={k}")
    return v


@dataclass(frozen=True)
class Affine:
    """x -> const + time_coef * t + coef . x for x in R^Delta (Delta order).

    ``sq_bound`` is a constant C with f(t, x)^2 <= C (1 + |x|^2) for t in
    [0, 1] (Cauchy-Schwarz).
    """

    const: float = 0.0
    coef: tuple[float, ...] = ()
    time_coef: float = 0.0

    def __call__(self, x: np.ndarray, t=0.0) -> np.ndarray:
        out = self.const + self.time_coef * np.asarray(t, dtype=float)
        if self.coef:
            out = out + x @ np.asarray(self.coef, dtype=float)
        else:
            out = out + np.zeros(x.shape[:-1])
        return np.broadcast_to(out, x.shape[:-1]) if np.ndim(out) == 0 else out

    @property
    def sq_bound(self) -> float:
        return (abs(self.const) + abs(self.time_coef)) ** 2 + float(
            sum(c * c for c in self.coef)
        )

    def check_len(self, n: int) -> None:
        if self.coef and len(self.coef) != n:
            raise ValueError(f"affine map has {len(self.coef)} coefficients, range has {n}")


def _as_map(beta):
    return Affine(float(beta)) if isinstance(beta, (int, float)) else beta


def _origin(d: int) -> Site:
    return (0,) * d


def _shape_like(field: Field, k: int) -> tuple[int, ...]:
    return field.at(_origin(field.d), k).shape


def zero(d: int = 1) -> DriftSpec:
    def step(field, k):
        return np.zeros(_shape_like(field, k))

    def path(field):
        return np.zeros(_shape_like(field, 0) + (field.M,))

    return DriftSpec("zero", InteractionRange.origin(d), 0.0, step, path)


def constant(c: float, d: int = 1) -> DriftSpec:
    c = float(c)

    def step(field, k):
        return np.full(_shape_like(field, k), c)

    def path(field):
        return np.full(_shape_like(field, 0) + (field.M,), c)

    return DriftSpec("constant", InteractionRange.origin(d), c * c, step, path, {"c": c})


def ou(kappa: float, d: int = 1) -> DriftSpec:
    """b_t(omega) = -kappa omega_0(t)."""
    kappa = float(kappa)
    o = _origin(d)

    def step(field, k):
        return -kappa * field.at(o, k)

    def path(field):
        return -kappa * field.path(o)[..., :-1]

    return DriftSpec(
        "ou", InteractionRange.origin(d), kappa * kappa, step, path, {"kappa": kappa}
    )


def make_barycentre_delay(
    beta_plus: Callable[[np.ndarray], np.ndarray],
    beta_minus: Callable[[np.ndarray], np.ndarray],
    delta: InteractionRange,
    delay: float,
    growth_constant: float | None = None,
) -> DriftSpec:
    """beta_plus(x) if x_0 >= mean(x_Delta) else beta_minus(x), with x the
    configuration at time 0 v (t - delay).

    ``beta_plus``/``beta_minus`` map arrays of shape (..., |Delta|) (in the
    order of ``delta.offsets``) to (...). For :class:`Affine` maps the growth
    constant is derived; otherwise it must be supplied.
    """
    if not 0.0 < delay < 1.0:
        raise ValueError(f"delay must lie in (0, 1), got {delay}")
    if isinstance(delta, int):
        delta = InteractionRange.cube(delta, 1)
    beta_plus = _as_map(beta_plus)
    beta_minus = _as_map(beta_minus)
    offsets = delta.offsets
    i0 = offsets.index(_origin(delta.d))
    if growth_constant is None:
        try:
            growth_constant = max(beta_plus.sq_bound, beta_minus.sq_bound)
        except AttributeError:
            raise ValueError("growth_constant required for non-affine beta maps") from None
    for beta in (beta_plus, beta_minus):
        if isinstance(beta, Affine):
            beta.check_len(len(offsets))

    def branch(x):
        upper = x[..., i0] >= x.mean(axis=-1)
        return np.where(upper, beta_plus(x), beta_minus(x))

    def step(field, k):
        kd = field.grid.delay_index(k, delay)
        x = np.stack([field.at(o, kd) for o in offsets], axis=-1)
        return branch(x)

    def path(field):
        kd = np.array([field.grid.delay_index(k, delay) for k in range(field.M)])
        x = np.stack([field.path(o)[..., kd] for o in offsets], axis=-1)
        return branch(x)

    params = {"delay": float(delay)}
    for key, beta in (("beta_plus", beta_plus), ("beta_minus", beta_minus)):
        if isinstance(beta, Affine):
            params[key] = {"const": beta.const, "coef": list(beta.coef)}
    return DriftSpec(
        "barycentre_delay", delta, float(growth_constant), step, path, params
    )


def make_running_integral(
    alpha: Callable,
    delta: InteractionRange,
    growth_constant: float | None = None,
) -> DriftSpec:
    """b_{t_k} = h sum_{j<k} alpha(t_j, omega_Delta(t_j)); zero at k = 0.

    ``alpha`` is called as ``alpha(x, t)`` with x of shape (..., |Delta|).
    """
    alpha = _as_map(alpha)
    offsets = delta.offsets
    if growth_constant is None:
        try:
            growth_constant = alpha.sq_bound
        except AttributeError:
            raise ValueError("growth_constant required for non-affine alpha") from None
    if isinstance(alpha, Affine):
        alpha.check_len(len(offsets))

    def step(field, k):
        if k == 0:
            return np.zeros(_shape_like(field, 0))
        x = np.stack([field.upto(o, k - 1) for o in offsets], axis=-1)
        vals = alpha(x, field.grid.times[:k])
        # sequential sum, so that step and path agree bit for bit
        return field.grid.h * np.cumsum(vals, axis=-1)[..., -1]

    def path(field):
        M = field.M
        x = np.stack([field.path(o)[..., : M - 1] for o in offsets], axis=-1)
        vals = alpha(x, field.grid.times[: M - 1])
        csum = np.cumsum(vals, axis=-1)
        zero_col = np.zeros(csum.shape[:-1] + (1,))
        return field.grid.h * np.concatenate([zero_col, csum], axis=-1)

    params = {}
    if isinstance(alpha, Affine):
        params["alpha"] = {
            "const": alpha.const,
            "coef": list(alpha.coef),
            "time_coef": alpha.time_coef,
        }
    return DriftSpec(
        "running_integral", delta, float(growth_constant), step, path, params
    )


def offset(b: DriftSpec, c: float) -> DriftSpec:
    """b + c, with growth constant 2 (C + c^2)."""
    c = float(c)

    def step(field, k):
        return b.at(field, k) + c

    def path(field):
        return b.path(field) + c

    params = dict(b.params)
    params["offset"] = c
    return DriftSpec(
        f"{b.name}+{c:g}", b.range, 2.0 * (b.growth_constant + c * c), step, path, params
    )


# Negative controls: both are bounded (so sublinear), but one reads outside its
# declared range and the other reads the future.


def adversarial_nonlocal(d: int = 1, reach: int = 2) -> DriftSpec:
    target = (reach,) + (0,) * (d - 1)

    def step(field, k):
        return np.tanh(field.at(target, k))

    return DriftSpec("adversarial_nonlocal", InteractionRange.origin(d), 1.0, step)


def adversarial_nonadapted(d: int = 1) -> DriftSpec:
    o = _origin(d)

    def step(field, k):
        return np.tanh(field.at(o, field.M))

    return DriftSpec("adversarial_nonadapted", InteractionRange.origin(d), 1.0, step)


def _as_affine(spec, n: int) -> Affine:
    if isinstance(spec, Affine):
        return spec
    if isinstance(spec, (int, float)):
        return Affine(float(spec))
    spec = dict(spec)
    coef = tuple(float(c) for c in spec.get("coef", ()))
    a = Affine(float(spec.get("const", 0.0)), coef, float(spec.get("time_coef", 0.0)))
    a.check_len(n)
    return a


def _range_from(spec, d: int) -> InteractionRange:
    if spec is None:
        return InteractionRange.cube(1, d)
    if isinstance(spec, int):
        return InteractionRange.cube(spec, d)
    return InteractionRange.of(spec, d)


def build(name: str, params: Mapping | None = None, d: int = 1) -> DriftSpec:
    """Construct a built-in drift from its config name and parameter block."""
    p = dict(params or {})
    off = p.pop("offset", None)
    if name == "zero":
        b = zero(d)
    elif name == "constant":
        b = constant(p.pop("c"), d)
    elif name == "ou":
        b = ou(p.pop("kappa"), d)
    elif name == "barycentre_delay":
        delta = _range_from(p.pop("delta", None), d)
        n = len(delta)
        b = make_barycentre_delay(
            _as_affine(p.pop("beta_plus", 1.0), n),
            _as_affine(p.pop("beta_minus", -1.0), n),
            delta,
            float(p.pop("delay", 0.25)),
        )
    elif name == "running_integral":
        delta = _range_from(p.pop("delta", 0), d)
        b = make_running_integral(_as_affine(p.pop("alpha", 1.0), len(delta)), delta)
    else:
        raise ValueError(f"unknown drift {name!r}")
    if p:
        raise ValueError(f"unknown parameters for drift {name!r}: {sorted(p)}")
    if off is not None and float(off) != 0.0:
        b = offset(b, float(off))
    return b


def builtins(d: int = 1) -> list[DriftSpec]:
    """One instance of every built-in drift family."""
    delta = InteractionRange.cube(1, d)
    n = len(delta)
    return [
        zero(d),
        constant(0.5, d),
        ou(1.0, d),
        make_barycentre_delay(Affine(1.0), Affine(-1.0), delta, 0.25),
        make_barycentre_delay(
            Affine(0.5, tuple([-0.3] + [0.1] * (n - 1))),
            Affine(-0.5, tuple([0.2] * n)),
            delta,
            0.1,
        ),
        make_running_integral(Affine(0.3, (-1.0,), 0.5), InteractionRange.origin(d)),
    ]


# ---------------------------------------------------------------------------
# verifiers


@dataclass
class VerifyReport:
    drift: str
    check: str
    passed: bool
    trials: int
    counterexample: dict | None = None
    c_hat: float | None = None
    declared: float | None = None

    def as_dict(self) -> dict:
        out = {
            "drift": self.drift,
            "check": self.check,
            "pass": self.passed,
            "trials": self.trials,
            "counterexample": self.counterexample,
        }
        if self.check == "sublinear":
            out["c_hat"] = self.c_hat
            out["declared"] = self.declared
        return out


def _probe_layout(b: DriftSpec, margin: int) -> Layout:
    d = b.d
    support = InteractionRange.cube(b.range.radius + margin, d).offsets
    return Layout(support, [_origin(d)], outside="error")


def _random_paths(rng: np.random.Generator, shape: tuple[int, ...], M: int) -> np.ndarray:
    """Random-walk paths with random start and scale spread over ~6 decades."""
    scale = np.exp(rng.uniform(-3.0, 3.0, size=shape[:1] + (1,) * len(shape[1:]) + (1,)))
    start = rng.normal(size=shape + (1,)) * scale * rng.uniform(0, 3, size=shape[:1] + (1,) * len(shape))
    steps = rng.normal(size=shape + (M,)) * scale / np.sqrt(M)
    return np.concatenate([start, start + np.cumsum(steps, axis=-1)], axis=-1)


def _batches(trials: int, batch: int):
    done = 0
    while done < trials:
        size = min(batch, trials - done)
        yield done, size
        done += size


def _safe_at(b: DriftSpec, field: Field, k: int):
    try:
        return b.at(field, k), None
    except KeyError as exc:
        return None, str(exc)


def verify_local(
    b: DriftSpec,
    trials: int,
    rng: np.random.Generator,
    grid: TimeGrid = TimeGrid(32),
    margin: int = 5,
    batch: int = 100,
) -> VerifyReport:
    """Perturb every site outside the declared range; the value must not change."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    layout = _probe_layout(b, margin)
    outside_rows = np.array(
        [r for r, s in enumerate(layout.support) if s not in b.range], dtype=np.intp
    )
    for start, size in _batches(trials, batch):
        k = int(rng.integers(0, grid.M + 1))
        vals = _random_paths(rng, (size, layout.n_rows), grid.M)
        base, err = _safe_at(b, Field(vals, layout, grid), k)
        pert = vals.copy()
        pert[:, outside_rows, :] += rng.normal(size=(size, len(outside_rows), grid.M + 1)) * 10.0
        moved, err2 = _safe_at(b, Field(pert, layout, grid), k)
        if err or err2:
            return VerifyReport(b.name, "local", False, start + 1, {"trial": start, "k": k, "error": err or err2})
        diff = ~_bit_equal(base, moved)
        if diff.any():
            j = int(np.flatnonzero(diff.reshape(size, -1).any(axis=1))[0])
            return VerifyReport(
                b.name,
                "local",
                False,
                start + j + 1,
                {
                    "trial": start + j,
                    "k": k,
                    "value": float(base.reshape(size, -1)[j, 0]),
                    "perturbed_value": float(moved.reshape(size, -1)[j, 0]),
                    "perturbed_sites": "outside declared range",
                },
            )
    return VerifyReport(b.name, "local", True, trials)


def verify_adapted(
    b: DriftSpec,
    trials: int,
    rng: np.random.Generator,
    grid: TimeGrid = TimeGrid(32),
    margin: int = 2,
    batch: int = 100,
) -> VerifyReport:
    """Perturb path values strictly after t_k; the value at k must not change."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    layout = _probe_layout(b, margin)
    for start, size in _batches(trials, batch):
        k = int(rng.integers(0, grid.M))
        vals = _random_paths(rng, (size, layout.n_rows), grid.M)
        base, err = _safe_at(b, Field(vals, layout, grid), k)
        pert = vals.copy()
        pert[..., k + 1 :] += rng.normal(size=pert[..., k + 1 :].shape) * 10.0
        moved, err2 = _safe_at(b, Field(pert, layout, grid), k)
        if err or err2:
            return VerifyReport(b.name, "adapted", False, start + 1, {"trial": start, "k": k, "error": err or err2})
        diff = ~_bit_equal(base, moved)
        if diff.any():
            j = int(np.flatnonzero(diff.reshape(size, -1).any(axis=1))[0])
            return VerifyReport(
                b.name,
                "adapted",
                False,
                start + j + 1,
                {
                    "trial": start + j,
                    "k": k,
                    "value": float(base.reshape(size, -1)[j, 0]),
                    "perturbed_value": float(moved.reshape(size, -1)[j, 0]),
                    "perturbed_times": f"t > {k / grid.M:g}",
                },
            )
    return VerifyReport(b.name, "adapted", True, trials)


# relative slack for rounding in b^2 against C (1 + sum x*^2)
_SUBLINEAR_RTOL = 1e-9


def verify_sublinear(
    b: DriftSpec,
    trials: int,
    rng: np.random.Generator,
    grid: TimeGrid = TimeGrid(32),
    batch: int = 100,
) -> VerifyReport:
    """Empirical C_hat = max b^2 / (1 + sum_{j in Delta} omega_j*(t_k)^2)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    layout = _probe_layout(b, 2)
    c_hat = 0.0
    worst = None
    for start, size in _batches(trials, batch):
        k = int(rng.integers(0, grid.M + 1))
        vals = _random_paths(rng, (size, layout.n_rows), grid.M)
        field = Field(vals, layout, grid)
        v, err = _safe_at(b, field, k)
        if err:
            return VerifyReport(b.name, "sublinear", False, start + 1, {"trial": start, "error": err}, None, b.growth_constant)
        denom = 1.0 + sum(
            running_max(field.upto(o, k), k) ** 2 for o in b.range.offsets
        )
        ratio = (v**2 / denom).reshape(size)
        j = int(np.argmax(ratio))
        if ratio[j] > c_hat:
            c_hat = float(ratio[j])
            worst = {"trial": start + j, "k": k, "drift": float(v.reshape(size)[j]), "ratio": c_hat}
    passed = c_hat <= b.growth_constant * (1 + _SUBLINEAR_RTOL)
    return VerifyReport(
        b.name, "sublinear", passed, trials, None if passed else worst, c_hat, b.growth_constant
    )


def _bit_equal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (a.view(np.uint64) == b.view(np.uint64)) if a.shape == b.shape else np.zeros(a.shape, bool)


def verify_all(b: DriftSpec, trials: int, rng: np.random.Generator) -> list[VerifyReport]:
    return [
        verify_local(b, trials, rng),
        verify_adapted(b, trials, rng),
        verify_sublinear(b, trials, rng),
    ]
