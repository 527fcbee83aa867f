import math

import numpy as np
import pytest

from conftest import abs_sq
from hessian_lab import DefiningFunction, GridFunction, SolveConfig, dirichlet_solve, make_domain
from hessian_lab.capacity import (CapacityCache, CompactSet, bump, capacity_m, capacity_tau, check_extremal,
                                  hypothesis_constant, iteration_bound_check, le2_alpha,
                                  radial_capacity, radial_capacity_closed_form, radial_volume_capacity_check,
                                  relative_extremal, s_infinity, stability_ratio, sublevel_capacity_check,
                                  sup_capacity_constant, unit_ball_volume, volume_capacity_check)
from hessian_lab.errors import DomainError, HypothesisViolation
from hessian_lab.regularity import ExponentInputs
from hessian_lab.solver import density

RADII = [0.15, 0.2, 0.25, 0.3]


def radial_extremal_oracle(n, m, r, R=1.0):
    """The extremal function of the closed r-ball from the homogeneous radial profiles."""
    def v(X):
        t = np.maximum(abs_sq(X), 1e-300)
        if m == n:
            prof = -np.log(R * R / t) / math.log(R * R / (r * r))
        else:
            k = 1.0 - n / m
            prof = -(t ** k - R ** (2 * k)) / (r ** (2 * k) - R ** (2 * k))
        return np.maximum(-1.0, prof)
    return v


def max_error(u, exact):
    act = u.dom.active
    return float(np.max(np.abs(u.values[act] - exact(u.dom.points(act)))))


# --- compact sets and the extremal function ---------------------------------------------------------

def test_compact_set_validation(ball2):
    with pytest.raises(DomainError):
        CompactSet(ball2, np.zeros(3, dtype=bool))
    with pytest.raises(DomainError):
        CompactSet.ball(ball2, 0.9)
    outside = np.zeros(ball2.size, dtype=bool)
    outside[0] = True
    with pytest.raises(DomainError):
        CompactSet(ball2, outside)
    E = CompactSet.ball(ball2, 0.25)
    assert E.volume == pytest.approx(E.nodes.size * ball2.h ** 4)


def test_extremal_of_empty_set_vanishes(ball2):
    v = relative_extremal(ball2, CompactSet.empty_set(ball2), 2)
    np.testing.assert_array_equal(v.values[ball2.active], 0.0)
    assert capacity_m(ball2, CompactSet.empty_set(ball2), 2).value == 0.0


@pytest.fixture(scope="module")
def ball2_extremals(ball2):
    out = {}
    for m in (1, 2):
        for r in (0.3, 0.5):
            E = CompactSet.ball(ball2, r)
            out[m, r] = (E, capacity_m(ball2, E, m))
    return out


@pytest.mark.parametrize("m", [1, 2])
@pytest.mark.parametrize("r", [0.3, 0.5])
def test_extremal_matches_radial_oracle(ball2, ball2_extremals, m, r):
    E, est = ball2_extremals[m, r]
    assert check_extremal(est.extremal, E, m).passed
    assert max_error(est.extremal, radial_extremal_oracle(2, m, r)) <= 5 * ball2.h


@pytest.mark.parametrize("m", [1, 2])
def test_extremal_and_capacity_monotone_in_set(ball2_extremals, m):
    (_, small), (_, large) = ball2_extremals[m, 0.3], ball2_extremals[m, 0.5]
    dom = small.extremal.dom
    act = dom.active
    assert np.all(large.extremal.values[act] <= small.extremal.values[act] + 1e-12)
    assert small.value <= large.value * 1.05


@pytest.mark.parametrize("m", [1, 2])
def test_capacity_of_small_ball_is_positive(ball2, m):
    est = capacity_m(ball2, CompactSet.ball(ball2, 0.2), m)
    assert est.value > 1e-6
    assert est.consistent


def test_capacity_grows_when_the_domain_shrinks():
    h = 0.125
    big = make_domain(DefiningFunction.ball(1.0, 2), h)
    small = make_domain(DefiningFunction.ball(0.8, 2), h)
    caps = [capacity_m(dom, CompactSet.ball(dom, 0.3), 2).value for dom in (big, small)]
    assert caps[0] < caps[1]


@pytest.fixture(scope="module")
def ball3_capacity():
    dom = make_domain(DefiningFunction.ball(1.0, 3), 0.2)
    E = CompactSet.ball(dom, 0.25)
    return dom, E, capacity_m(dom, E, 2)


def test_three_dimensional_extremal_matches_radial_oracle(ball3_capacity):
    dom, E, est = ball3_capacity
    assert check_extremal(est.extremal, E, 2).passed
    assert max_error(est.extremal, radial_extremal_oracle(3, 2, 0.25)) <= 5 * dom.h


def test_three_dimensional_capacity_near_radial_value(ball3_capacity):
    _, _, est = ball3_capacity
    assert est.value == pytest.approx(radial_capacity(3, 2, 0.25), rel=0.25)


@pytest.mark.parametrize("n,m", [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
@pytest.mark.parametrize("r", [0.2, 0.5])
def test_radial_capacity_matches_closed_form(n, m, r):
    assert radial_capacity(n, m, r, knots=800) == pytest.approx(radial_capacity_closed_form(n, m, r), rel=1e-2)


def test_radial_capacity_of_pluriharmonic_case():
    # m = n = 1: the logarithmic capacity of the r-disc in the unit disc
    assert radial_capacity_closed_form(1, 1, 0.5) == pytest.approx(math.pi / math.log(4.0), rel=1e-14)
    with pytest.raises(DomainError):
        radial_capacity(2, 2, 1.5)


# --- volume against capacity --------------------------------------------------------------------------

def test_capacity_tau_within_admissible_range():
    # admissible exponents for n = 3, m = 2 lie in [0, 3)
    assert 0 <= capacity_tau(3, 2) < 3
    assert capacity_tau(3, 2) == pytest.approx(2.7)
    assert capacity_tau(2, 2) == pytest.approx(1.8)


def test_unit_ball_volume():
    assert unit_ball_volume(4) == pytest.approx(math.pi ** 2 / 2)
    assert unit_ball_volume(6) == pytest.approx(math.pi ** 3 / 6)


def test_single_radius_skips_the_fit():
    rep = radial_volume_capacity_check(2, 2, [0.25])
    assert rep.tau_fit is None
    assert rep.spread == 1.0
    assert len(rep.ratios) == 1


def test_volume_capacity_slope_radial_two_dimensional():
    rep = radial_volume_capacity_check(2, 2, RADII)
    assert rep.tau_fit >= 2.5
    assert rep.passed


@pytest.mark.xfail(strict=True, reason="the exact slope for n = 3, m = 2 is 3 (1 - r), below 2.5 once r > 1/6")
def test_volume_capacity_slope_radial_three_dimensional():
    assert radial_volume_capacity_check(3, 2, RADII).tau_fit >= 2.5


@pytest.mark.xfail(strict=True, reason="the h = 0.125 grid capacities give a slope just under 2.5")
def test_volume_capacity_slope_grid(ball2):
    assert volume_capacity_check(ball2, 2, RADII).tau_fit >= 2.5


def test_volume_capacity_csv(tmp_path):
    rep = radial_volume_capacity_check(3, 2, RADII)
    rep.write_csv(tmp_path / "cap.csv")
    lines = (tmp_path / "cap.csv").read_text().splitlines()
    assert lines[0] == "r,volume,capacity"
    assert len(lines) == len(RADII) + 1


# --- sublevel sets -------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def unit_density_solution(ball2):
    f = density(ball2, lambda X: np.ones(len(X)))
    return f, dirichlet_solve(ball2, f, lambda X: np.zeros(len(X)), SolveConfig(m=2))


def test_sublevel_trivial_cases(unit_density_solution):
    f, phi = unit_density_solution
    rep = sublevel_capacity_check(phi, phi, f, 2, 0.1, 0.1)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed
    lower = phi.with_values(phi.values - 0.1)
    with pytest.raises(DomainError):
        sublevel_capacity_check(phi, phi.with_values(phi.values + 0.1), f, 2, 0.1, 0.1)
    assert sublevel_capacity_check(phi, lower, f, 2, 0.05, 0.05).lhs == 0.0


def test_sublevel_inequality_for_scaled_solution(unit_density_solution):
    f, phi = unit_density_solution
    psi = phi.with_values(0.5 * phi.values)
    psi.info["phi_b"] = 0.5 * phi.info["phi_b"]
    with pytest.raises(DomainError):
        sublevel_capacity_check(phi, phi.with_values(psi.values), f, 2, 0.15, 0.15)
    cache = CapacityCache(phi.dom, 2)
    reports = [sublevel_capacity_check(phi, psi, f, 2, s, t, cache=cache)
               for s, t in ((0.15, 0.15), (0.2, 0.1), (0.25, 0.1))]
    assert all(r.lhs > 0 for r in reports)
    assert all(r.passed for r in reports)
    assert len(cache._store) == 2


# --- the iteration bound ------------------------------------------------------------------------------

@pytest.mark.parametrize("B,g0,alpha,expected", [(1, 1, 1, 4.0), (1, 1, 2, 8 / 3), (0, 5, 1, 0.0)])
def test_s_infinity_examples(B, g0, alpha, expected):
    assert s_infinity(B, g0, alpha) == pytest.approx(expected, abs=1e-15)


def test_s_infinity_validation():
    with pytest.raises(DomainError):
        s_infinity(1, 1, 0)
    with pytest.raises(DomainError):
        s_infinity(-1, 1, 1)


def test_iteration_bound_vacuous_for_zero():
    s = np.linspace(0, 5, 11)
    rep = iteration_bound_check(s, np.zeros_like(s), B=0.0, alpha=1.0)
    assert rep.passed and rep.s_inf == 0.0


def test_iteration_bound_for_linear_decay():
    s = np.linspace(0, 8, 81)
    g = np.maximum(0.0, 1 - s / 4)
    B = hypothesis_constant(s, g, 1.0)
    rep = iteration_bound_check(s, g, B, 1.0)
    assert 4.0 <= rep.s_inf
    assert rep.passed and rep.checked > 0
    with pytest.raises(HypothesisViolation):
        iteration_bound_check(s, g, 0.5 * B, 1.0)
    with pytest.raises(HypothesisViolation):
        iteration_bound_check(s, g[::-1], B, 1.0)
    with pytest.raises(DomainError):
        iteration_bound_check(s[::-1], g, B, 1.0)


# --- stability -------------------------------------------------------------------------------------------

def test_stability_ratio_of_equal_functions(unit_density_solution):
    f, phi = unit_density_solution
    rep = stability_ratio(phi, phi, f, ExponentInputs(2, 2, 3))
    assert rep.ratio == 0.0 and rep.sup_diff == 0.0
    with pytest.raises(DomainError):
        stability_ratio(phi, phi, f, ExponentInputs(2, 2, 3), safety=1.0)


def test_stability_ratio_of_bump(unit_density_solution):
    f, phi = unit_density_solution
    inputs = ExponentInputs(2, 2, 3)
    b = bump(phi.dom)
    rep = stability_ratio(phi, phi.with_values(phi.values + 0.1 * b.values), f, inputs)
    assert rep.sup_diff == pytest.approx(0.1)
    assert 0 < rep.ratio < math.inf
    assert rep.gamma == pytest.approx(0.9 / (1 + 2 * 1.5))


def test_bump_shape(ball2):
    b = bump(ball2)
    origin = np.ravel_multi_index(ball2.nearest_node(np.zeros(4)), ball2.dims)
    assert b.values[origin] == 1.0
    far = ball2.active[np.linalg.norm(ball2.points(ball2.active), axis=1) >= 0.6]
    np.testing.assert_array_equal(b.values[far], 0.0)


# --- composite estimates ------------------------------------------------------------------------------

def test_le2_alpha():
    assert le2_alpha(ExponentInputs(3, 2, 3)) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        le2_alpha(ExponentInputs(2, 2, 3))


def test_sup_capacity_constant():
    assert sup_capacity_constant([0.5, 0.3], [0.25, 0.04], eps=0.1, alpha=0.5) == pytest.approx(1.0)
    assert sup_capacity_constant([0.05], [0.0], eps=0.1, alpha=0.5) == 0.0
    assert sup_capacity_constant([0.5], [0.0], eps=0.1, alpha=0.5) == math.inf
