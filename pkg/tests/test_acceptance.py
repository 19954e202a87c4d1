"""Acceptance suite. Each criterion runs at its stated scale and tolerance and
prints one PASS/FAIL line. Run directly with ``python tests/test_acceptance.py``
or through pytest (add ``-s`` to see the lines as they are produced)."""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent))

from oracles import OU_VARIANCE_LIMIT  # noqa: E402
from pathgibbs import drift as driftmod  # noqa: E402
from pathgibbs.cli import main as cli_main  # noqa: E402
from pathgibbs.drift import Affine, constant, make_barycentre_delay, offset, ou, zero  # noqa: E402
from pathgibbs.gibbs import (  # noqa: E402
    brownian_boundary,
    dlr_check,
    entropy_per_site,
    entropy_report,
    free_energy_definition,
    free_energy_mismatch,
    girsanov_normalization,
    kernel_support,
    moment_bound_report,
)
from pathgibbs.lattice import Box, InteractionRange  # noqa: E402
from pathgibbs.paths import TimeGrid, value_at  # noqa: E402
from pathgibbs.sim import REFERENCE, Dirac, GaussianProduct, sample_Pn  # noqa: E402
from pathgibbs.stats import Estimate, combined_z  # noqa: E402

D1 = InteractionRange.cube(1, 1)
M = 200
RESULTS: dict[int, tuple[bool, str]] = {}


def barycentre(delay=0.25):
    return make_barycentre_delay(Affine(1.0), Affine(-1.0), D1, delay)


def report(k: int, title: str, passed: bool, detail: str) -> bool:
    line = f"[criterion {k}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    RESULTS[k] = (passed, line)
    print(line, flush=True)
    return passed


# 1 -----------------------------------------------------------------------------


def criterion_1() -> bool:
    lam = Box.of([(-1,), (0,), (1,)])
    grid = TimeGrid(M)
    ok, parts = True, []
    for j, b in enumerate(driftmod.builtins(1)):
        t0 = time.perf_counter()
        xi = brownian_boundary(kernel_support(b, lam).sites, grid, 100 + j)
        est = girsanov_normalization(b, lam, xi, 100_000, 200 + j)
        dt = time.perf_counter() - t0
        good = abs(est.mean - 1.0) <= 3 * est.stderr + 1e-12 and dt <= 60
        ok &= good
        parts.append(f"{b.name}#{j} {est.mean:.4f}+-{est.stderr:.4f} ({dt:.1f}s)")
    return report(1, "Girsanov normalization, N=1e5, M=200", ok, "; ".join(parts))


# 2 -----------------------------------------------------------------------------


def criterion_2() -> bool:
    grid = TimeGrid(M)
    c = 0.7
    e = sample_Pn(constant(c), 1, REFERENCE, grid, 10_000, 21)
    a = entropy_per_site(constant(c), e)
    ok_a = abs(a.mean - 0.245) <= 3 * a.stderr
    e = sample_Pn(zero(1), 1, GaussianProduct(1.0, 1.0), grid, 10_000, 22)
    b = entropy_per_site(zero(1), e)
    ok_b = abs(b.mean - 0.5) <= 3 * b.stderr
    bary = barycentre()
    e = sample_Pn(bary, 3, REFERENCE, grid, 10_000, 23)
    rep = entropy_report(bary, e)
    ok = ok_a and ok_b and rep.agree
    detail = (f"c=0.7: {a.mean:.4f}+-{a.stderr:.4f} vs 0.245; theta=1: {b.mean:.4f}+-{b.stderr:.4f} "
              f"vs 0.5; barycentre n=3 direct {rep.direct.mean:.4f}+-{rep.direct.stderr:.4f} "
              f"formula {rep.formula.mean:.4f}+-{rep.formula.stderr:.4f} z={rep.z:.2f}")
    return report(2, "entropy closed forms and estimator agreement", ok, detail)


# 3 -----------------------------------------------------------------------------


def criterion_3() -> bool:
    t0 = time.perf_counter()
    e = sample_Pn(ou(1.0), 1, Dirac(0.0), TimeGrid(400), 100_000, 31)
    x = e.paths[:, e.box.index()[(0,)], -1]
    R = len(x)
    dev = (x - x.mean()) ** 2 * R / (R - 1)
    var = Estimate.from_samples(dev)
    dt = time.perf_counter() - t0
    tol = max(3 * var.stderr, 0.02 * OU_VARIANCE_LIMIT)
    ok = abs(var.mean - OU_VARIANCE_LIMIT) <= tol and dt <= 120
    detail = (f"Var X0(1) = {var.mean:.5f}+-{var.stderr:.5f}, oracle {OU_VARIANCE_LIMIT:.5f}, "
              f"tolerance {tol:.5f} ({dt:.1f}s)")
    return report(3, "OU variance, M=400, R=1e5", ok, detail)


# 4 -----------------------------------------------------------------------------


def criterion_4() -> bool:
    t0 = time.perf_counter()
    tests = [value_at((0,), 1.0, cap=5.0), value_at((0,), 0.5, "square"),
             value_at((0,), 1.0, "positive")]
    rep = dlr_check(barycentre(0.25), 4, Box.of([(0,)]), REFERENCE, tests, 5000, 200, 41,
                    TimeGrid(M))
    dt = time.perf_counter() - t0
    rate = rep.ess_stats["failure_rate"]
    ok = rep.passed and rate < 0.05 and dt <= 600
    zs = ", ".join(f"{e.name} z={e.z:.2f}" for e in rep.entries)
    detail = f"{zs}; ESS failure rate {rate:.4f}, median ESS {rep.ess_stats['median']:.1f} ({dt:.0f}s)"
    return report(4, "DLR consistency, n=4, outer 5000 x inner 200", ok, detail)


# 5 -----------------------------------------------------------------------------


def criterion_5() -> bool:
    t0 = time.perf_counter()
    grid = TimeGrid(M)
    b = barycentre()
    e = sample_Pn(b, 4, REFERENCE, grid, 10_000, 51)
    mis0 = free_energy_mismatch(b, b, e)
    def0 = free_energy_definition(b, e)
    ok0 = all(abs(x.mean) <= 3 * x.stderr + 1e-12 for x in (mis0, def0))
    beta = offset(b, 0.5)
    e = sample_Pn(beta, 4, REFERENCE, grid, 10_000, 52)
    mis = free_energy_mismatch(b, beta, e)
    dfn = free_energy_definition(b, e)
    ok1 = abs(mis.mean - 0.125) <= 3 * mis.stderr + 1e-12 and abs(combined_z(mis, dfn)) <= 3
    dt = time.perf_counter() - t0
    ok = ok0 and ok1 and dt <= 300
    detail = (f"beta=b: mismatch {mis0.mean:.4g}+-{mis0.stderr:.2g}, definition "
              f"{def0.mean:.4f}+-{def0.stderr:.4f}; beta=b+0.5: mismatch {mis.mean:.4f}+-"
              f"{mis.stderr:.2g}, definition {dfn.mean:.4f}+-{dfn.stderr:.4f} ({dt:.0f}s)")
    return report(5, "free-energy variational characterization", ok, detail)


# 6 -----------------------------------------------------------------------------


def criterion_6() -> bool:
    t0 = time.perf_counter()
    b = barycentre()
    grid = TimeGrid(M)
    sizes = [1, 2, 3, 4]
    mom = moment_bound_report(b, sizes, 0.0, Dirac(0.0), 10_000, 61, grid)
    ents = [entropy_report(b, sample_Pn(b, n, REFERENCE, grid, 10_000, 62 + n)) for n in sizes]
    bound = max(r.bound for r in ents)
    ent_ok = all(r.direct.mean - 3 * r.direct.stderr <= bound for r in ents)
    dt = time.perf_counter() - t0
    ok = mom.no_trend and ent_ok and dt <= 600
    ratios = ", ".join(f"n={r.n}: {r.ratio.mean:.3f}+-{r.ratio.stderr:.3f}" for r in mom.rows)
    ent = ", ".join(f"{r.direct.mean:.3f}" for r in ents)
    detail = (f"ratios {ratios}; slope {mom.slope:.3f}+-{mom.slope_stderr:.3f} "
              f"(z={mom.slope_z:.1f}); spread {mom.spread:.2f}; entropy per site [{ent}] "
              f"<= {bound:.3f}: {ent_ok} ({dt:.0f}s)")
    return report(6, "moment bound, no growth in n", ok, detail)


# 7 -----------------------------------------------------------------------------


def criterion_7() -> bool:
    t0 = time.perf_counter()
    ok, parts = True, []
    for j, b in enumerate(driftmod.builtins(1)):
        reps = driftmod.verify_all(b, 10_000, np.random.default_rng(70 + j))
        good = all(r.passed for r in reps)
        ok &= good
        parts.append(f"{b.name}#{j} {'ok' if good else 'FAILED'}")
    g = np.random.default_rng(79)
    nl = driftmod.verify_local(driftmod.adversarial_nonlocal(1), 10_000, g)
    na = driftmod.verify_adapted(driftmod.adversarial_nonadapted(1), 10_000, g)
    caught = (not nl.passed and nl.counterexample is not None
              and not na.passed and na.counterexample is not None)
    dt = time.perf_counter() - t0
    ok = ok and caught and dt <= 60
    parts.append(f"non-local control caught: {not nl.passed}; non-adapted control caught: {not na.passed}")
    return report(7, "drift verifiers, 1e4 trials", ok, "; ".join(parts) + f" ({dt:.1f}s)")


# 8 -----------------------------------------------------------------------------

CLI_CONFIG = {
    "seed": 8,
    "drift": {"name": "barycentre_delay", "params": {"delta": 1, "delay": 0.25}},
    "sim": {"n": 3, "M": 20, "R": 60},
    "dlr": {"outer": 40, "inner": 20},
    "entropy": {"sizes": [1, 2]},
    "free_energy": {"beta_offset": 0.5},
    "moments": {"sizes": [1, 2]},
    "verify": {"trials": 50},
    "refine": True,
}


def _tree(path: Path) -> dict:
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def criterion_8(tmp: Path) -> bool:
    cfg = tmp / "config.yaml"
    cfg.write_text(yaml.safe_dump(CLI_CONFIG))
    ok, parts = True, []
    for cmd in ("simulate", "entropy", "dlr", "free-energy", "moment-check", "verify-drift"):
        trees, codes = [], []
        for run, threads in enumerate((1, 4, 1)):
            out = tmp / f"{cmd}-{run}"
            codes.append(cli_main([cmd, "--config", str(cfg), "--out", str(out),
                                   "--threads", str(threads)]))
            trees.append(_tree(out))
        same = trees[0] == trees[1] == trees[2] and len(set(codes)) == 1 and bool(trees[0])
        ok &= same
        parts.append(f"{cmd} {'identical' if same else 'DIFFERS'} ({len(trees[0])} files)")
    return report(8, "byte-identical outputs across threads {1,4} and reruns", ok, "; ".join(parts))


# pytest entry points ------------------------------------------------------------


def test_criterion_1_girsanov_normalization():
    assert criterion_1(), RESULTS[1][1]


def test_criterion_2_entropy_closed_forms():
    assert criterion_2(), RESULTS[2][1]


def test_criterion_3_ou_variance():
    assert criterion_3(), RESULTS[3][1]


def test_criterion_4_dlr_consistency():
    assert criterion_4(), RESULTS[4][1]


def test_criterion_5_free_energy():
    assert criterion_5(), RESULTS[5][1]


def test_criterion_6_moment_bound():
    assert criterion_6(), RESULTS[6][1]


def test_criterion_7_drift_verifiers():
    assert criterion_7(), RESULTS[7][1]


def test_criterion_8_determinism(tmp_path):
    assert criterion_8(tmp_path), RESULTS[8][1]


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None or not RESULTS:
        return
    reporter.write_sep("=", "acceptance criteria")
    for k in sorted(RESULTS):
        reporter.write_line(RESULTS[k][1])


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        fns = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
               criterion_7, lambda: criterion_8(Path(d))]
        results = [fn() for fn in fns]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
