import math

import numpy as np
import pytest

from oracles import (
    brownian_running_max_sq,
    gaussian_kl,
    ou_second_moment_integral_euler,
    ou_variance_euler,
)
from pathgibbs.drift import (
    Affine,
    builtins,
    constant,
    evaluate,
    make_barycentre_delay,
    offset,
    ou,
    zero,
)
from pathgibbs.gibbs import (
    PreconditionError,
    boundary_sites,
    brownian_boundary,
    dlr_check,
    entropy_per_site,
    entropy_per_site_formula,
    entropy_report,
    free_energy_definition,
    free_energy_mismatch,
    girsanov_log_density,
    girsanov_normalization,
    hamiltonian,
    interior_sites,
    kernel_hplus,
    kernel_support,
    moment_bound_report,
    partition_mean,
    sample_frozen_constant,
    sample_kernel_h,
)
from pathgibbs.lattice import Box, InteractionRange, enlarge, gamma_sum
from pathgibbs.paths import PathConfig, TimeGrid, value_at
from pathgibbs.sim import REFERENCE, Dirac, GaussianProduct, sample_Pn
from pathgibbs.stats import Estimate, combined_z

D1 = InteractionRange.cube(1, 1)
BARY = make_barycentre_delay(Affine(1.0), Affine(-1.0), D1, 0.25)
LAM0 = Box.of([(0,)])


def brownian_cfg(grid, sites, seed):
    return brownian_boundary(sites, grid, seed)


def hamiltonian_loop(b, lam, omega):
    """-sum_i [sum_k b_k dX_i - h/2 sum_k b_k^2] with one evaluate call per
    site and step."""
    h = omega.grid.h
    total = 0.0
    for i in lam:
        shifted = omega.shifted(i)
        x = omega[i]
        for k in range(omega.grid.M):
            bk = evaluate(b, shifted, k)
            total += bk * (x[k + 1] - x[k]) - 0.5 * h * bk * bk
    return -total


# hamiltonian -----------------------------------------------------------------


def test_hamiltonian_zero_drift():
    grid = TimeGrid(10)
    w = brownian_cfg(grid, [(i,) for i in range(-2, 3)], 0)
    assert hamiltonian(zero(1), Box.of([(0,), (1,)]), w) == 0.0


def test_hamiltonian_constant_closed_form():
    grid = TimeGrid(10)
    w = PathConfig(grid, ((0,),), grid.times[None].copy())
    assert hamiltonian(constant(1.0), LAM0, w) == pytest.approx(-0.5)
    c = 0.3
    assert hamiltonian(constant(c), LAM0, w) == pytest.approx(-(c - c * c / 2))


@pytest.mark.parametrize("b", builtins(1), ids=lambda b: b.name)
def test_hamiltonian_matches_loop(b):
    grid = TimeGrid(12)
    w = brownian_cfg(grid, [(i,) for i in range(-3, 4)], 1)
    lam = Box.of([(-1,), (0,), (1,)])
    assert hamiltonian(b, lam, w) == pytest.approx(hamiltonian_loop(b, lam, w), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_hamiltonian_additivity(seed):
    grid = TimeGrid(16)
    w = brownian_cfg(grid, [(i,) for i in range(-4, 5)], seed)
    lam = Box.of([(0,), (1,)])
    lam_p = enlarge(lam, BARY.range)
    boundary = Box.of(boundary_sites(BARY, lam))
    diff = hamiltonian(BARY, lam_p, w) - hamiltonian(BARY, lam, w)
    assert diff == pytest.approx(hamiltonian_loop(BARY, boundary, w), rel=1e-12, abs=1e-12)


def test_hamiltonian_requires_cover():
    grid = TimeGrid(4)
    with pytest.raises(ValueError):
        hamiltonian(BARY, LAM0, brownian_cfg(grid, [(0,)], 0))


# log density and entropy -------------------------------------------------------


def test_log_density_zero_drift_reference_law():
    e = sample_Pn(zero(1), 1, REFERENCE, TimeGrid(10), 3, 0)
    for r in range(3):
        assert girsanov_log_density(zero(1), 1, e.replica(r), REFERENCE) == 0.0


def test_log_density_constant_closed_form():
    c = 0.4
    e = sample_Pn(constant(c), 1, REFERENCE, TimeGrid(10), 3, 1)
    for r in range(3):
        x = e.replica(r).values
        expect = float(np.sum(c * (x[:, -1] - x[:, 0]) - c * c / 2))
        assert girsanov_log_density(constant(c), 1, e.replica(r), REFERENCE) == pytest.approx(expect)


def test_log_density_needs_density():
    e = sample_Pn(zero(1), 1, Dirac(0.0), TimeGrid(10), 2, 1)
    with pytest.raises(ValueError):
        girsanov_log_density(zero(1), 1, e.replica(0), Dirac(0.0))


def test_log_density_mean_nonnegative():
    e = sample_Pn(BARY, 2, REFERENCE, TimeGrid(20), 1000, 2)
    est = entropy_per_site(BARY, e)
    assert est.mean >= -3 * est.stderr


def test_entropy_zero_reference():
    e = sample_Pn(zero(1), 1, REFERENCE, TimeGrid(10), 50, 0)
    assert entropy_per_site(zero(1), e).mean == 0.0
    assert entropy_per_site_formula(zero(1), e).mean == 0.0


def test_entropy_gaussian_shift():
    theta = 1.0
    e = sample_Pn(zero(1), 1, GaussianProduct(theta, 1.0), TimeGrid(10), 4000, 1)
    assert entropy_per_site(zero(1), e).within(theta**2 / 2, 3)
    assert entropy_per_site_formula(zero(1), e).mean == pytest.approx(gaussian_kl(theta, 1.0))


def test_entropy_constant_drift():
    c = 0.5
    e = sample_Pn(constant(c), 1, REFERENCE, TimeGrid(20), 4000, 2)
    assert entropy_per_site(constant(c), e).within(c * c / 2, 3)
    f = entropy_per_site_formula(constant(c), e)
    assert f.mean == pytest.approx(c * c / 2, abs=1e-12) and f.stderr < 1e-12


def test_entropy_estimators_agree_on_barycentre():
    e = sample_Pn(BARY, 2, REFERENCE, TimeGrid(20), 2000, 3)
    rep = entropy_report(BARY, e)
    assert rep.agree, rep.as_dict()
    assert rep.within_bound
    assert rep.bound == pytest.approx(0.5)


# kernels -----------------------------------------------------------------------


def test_kernel_zero_drift_unit_weights():
    grid = TimeGrid(20)
    xi = brownian_cfg(grid, [(i,) for i in range(-3, 4)], 0)
    we, z = kernel_hplus(zero(1), LAM0, xi, 50, 1)
    assert np.all(we.log_weights == 0.0)
    assert z.mean == 1.0 and z.stderr == 0.0
    assert we.ess == 50 and we.reliable


def test_kernel_no_interaction_constant_weights():
    grid = TimeGrid(20)
    xi = brownian_cfg(grid, [(i,) for i in range(-2, 3)], 0)
    we, _ = kernel_hplus(ou(1.0), LAM0, xi, 40, 1)
    assert np.ptp(we.log_weights) == 0.0


def test_kernel_frozen_outside_and_initial_values():
    grid = TimeGrid(20)
    xi = brownian_cfg(grid, kernel_support(BARY, LAM0).sites, 2)
    we, z = kernel_hplus(BARY, LAM0, xi, 30, 3)
    for j in range(we.N):
        rep = we.replica(j)
        assert rep[(0,)][0] == xi[(0,)][0]
        for s in xi.sites:
            if s != (0,):
                assert np.array_equal(rep[s], xi[s])
    assert np.isfinite(z.mean) and z.mean > 0
    assert np.isclose(we.weights.sum(), 1.0)


def test_kernel_requires_cover():
    grid = TimeGrid(10)
    xi = brownian_cfg(grid, [(-1,), (0,), (1,)], 0)
    with pytest.raises(ValueError):
        kernel_hplus(BARY, LAM0, xi, 10, 0)


def test_kernel_h_ou_matches_direct():
    M = 40
    grid = TimeGrid(M)
    xi = PathConfig.zeros(grid, [(0,)])
    g = np.random.default_rng(3)
    x = np.array([sample_kernel_h(ou(1.0), LAM0, xi, g)[(0,)][-1] for _ in range(4000)])
    assert Estimate.from_samples(x**2).within(ou_variance_euler(1.0, M), 4)


@pytest.mark.parametrize("b", builtins(1), ids=lambda b: b.name)
def test_girsanov_normalization_small(b):
    grid = TimeGrid(40)
    lam = Box.of([(-1,), (0,), (1,)])
    xi = brownian_cfg(grid, kernel_support(b, lam).sites, 4)
    est = girsanov_normalization(b, lam, xi, 4000, 5)
    assert abs(est.mean - 1.0) <= 3 * est.stderr + 1e-12


def test_partition_function_mean_one():
    est = partition_mean(BARY, LAM0, TimeGrid(40), 300, 50, 6)
    assert abs(est.mean - 1.0) <= 3 * est.stderr


# dlr ---------------------------------------------------------------------------


def test_dlr_zero_drift():
    tests = [value_at((0,), 1.0, cap=5.0), value_at((0,), 0.5, "square")]
    rep = dlr_check(zero(1), 2, LAM0, REFERENCE, tests, 300, 20, 0, TimeGrid(20))
    assert rep.passed and rep.ess_stats["failures"] == 0


def test_dlr_initial_value_functions_agree_exactly():
    tests = [value_at((0,), 0.0, "square")]
    rep = dlr_check(BARY, 3, LAM0, REFERENCE, tests, 100, 20, 1, TimeGrid(20))
    e = rep.entries[0]
    assert abs(e.diff.mean) < 1e-12 and e.passed


def test_dlr_barycentre_small():
    tests = [value_at((0,), 1.0, cap=5.0), value_at((0,), 1.0, "positive")]
    rep = dlr_check(BARY, 3, LAM0, REFERENCE, tests, 400, 50, 2, TimeGrid(40))
    assert rep.passed, rep.as_dict()
    assert rep.ess_stats["failure_rate"] < 0.05


def test_dlr_precondition():
    with pytest.raises(PreconditionError):
        dlr_check(BARY, 1, LAM0, REFERENCE, [value_at((0,), 1.0)], 10, 5, 0, TimeGrid(10))
    with pytest.raises(PreconditionError):
        dlr_check(BARY, 3, LAM0, REFERENCE, [value_at((5,), 1.0)], 10, 5, 0, TimeGrid(10))


# free energy ---------------------------------------------------------------------


def test_interior_sites():
    assert interior_sites(Box.cubic(4, 1), D1) == tuple((i,) for i in range(-2, 2))
    assert len(interior_sites(Box.cubic(1, 1), InteractionRange.origin(1))) == 2
    with pytest.raises(ValueError):
        interior_sites(Box.cubic(1, 1), D1)


def test_mismatch_identical_is_zero():
    e = sample_Pn(BARY, 3, REFERENCE, TimeGrid(20), 50, 0)
    est = free_energy_mismatch(BARY, BARY, e)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_mismatch_constant_shift():
    c = 0.3
    beta = constant(c + 0.5)
    e = sample_Pn(beta, 1, REFERENCE, TimeGrid(20), 50, 0)
    assert free_energy_mismatch(constant(c), beta, e).mean == pytest.approx(0.125, abs=1e-12)


def test_mismatch_ou_closed_form():
    M = 50
    beta = ou(1.2)
    e = sample_Pn(beta, 1, Dirac(0.0), TimeGrid(M), 8000, 1)
    est = free_energy_mismatch(ou(1.0), beta, e)
    expect = 0.5 * 0.2**2 * ou_second_moment_integral_euler(1.2, M)
    assert est.within(expect, 4)


def test_definition_zero_drift_exact():
    e = sample_Pn(zero(1), 1, REFERENCE, TimeGrid(10), 30, 0)
    est = free_energy_definition(zero(1), e)
    assert est.mean == 0.0


def test_definition_vanishes_on_solution():
    e = sample_Pn(BARY, 3, REFERENCE, TimeGrid(20), 2000, 2)
    est = free_energy_definition(BARY, e)
    assert abs(est.mean) <= 3 * est.stderr


def test_definition_agrees_with_mismatch():
    beta = offset(BARY, 0.5)
    e = sample_Pn(beta, 3, REFERENCE, TimeGrid(20), 2000, 3)
    a = free_energy_mismatch(BARY, beta, e)
    b = free_energy_definition(BARY, e)
    assert a.mean == pytest.approx(0.125)
    assert abs(combined_z(a, b)) <= 3
    assert b.mean >= -3 * b.stderr


def test_definition_needs_density():
    e = sample_Pn(zero(1), 1, Dirac(0.0), TimeGrid(10), 5, 0)
    with pytest.raises(ValueError):
        free_energy_definition(zero(1), e)


# moments -------------------------------------------------------------------------


def test_frozen_constant_reproduces_Pn():
    grid = TimeGrid(12)
    a = sample_frozen_constant(BARY, 2, 0.0, Dirac(0.0), grid, 20, 9)
    b = sample_Pn(BARY, 2, Dirac(0.0), grid, 20, 9)
    assert np.array_equal(a, b.paths)


def test_moment_zero_drift_oracle():
    M, R = 50, 6000
    rep = moment_bound_report(zero(1), [1, 2], 0.0, None, R, 1, TimeGrid(M))
    m2, se = brownian_running_max_sq(M, 200_000, 2)
    for row in rep.rows:
        sg = gamma_sum(Box.cubic(row.n, 1), 1)
        expect = m2 * sg
        z = (row.norm.mean - expect) / math.hypot(row.norm.stderr, se * sg)
        assert abs(z) <= 4, (row.n, row.norm, expect)
        assert row.bracket == 1.0


def test_moment_bracket_scales_with_xi():
    grid = TimeGrid(20)
    a = moment_bound_report(BARY, [1, 2], 1.0, None, 200, 0, grid)
    b = moment_bound_report(BARY, [1, 2], 2.0, None, 200, 0, grid)
    for ra, rb in zip(a.rows, b.rows):
        assert rb.bracket - 1 == pytest.approx(4 * (ra.bracket - 1))
        assert math.isfinite(rb.ratio.mean)
    assert b.bounded


def test_moment_report_fields():
    rep = moment_bound_report(zero(1), [1, 2, 3], 0.0, None, 300, 0, TimeGrid(10))
    d = rep.as_dict()
    assert len(d["rows"]) == 3 and {"slope", "slope_z", "spread", "pass"} <= set(d)
