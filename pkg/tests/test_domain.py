import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import beta

from hessian_lab import DefiningFunction, GridFunction, make_domain
from hessian_lab.core import hermitian_eigenvalues, in_gamma_m
from hessian_lab.domain import (BOUNDARY, EXTERIOR, INTERIOR, boundary_points, certify_pseudoconvexity,
                                integrate, read_grid, rho_nu_gradient, rho_nu_hessian, rho_nu_value,
                                write_grid)
from hessian_lab.errors import CertificationError, DomainError, ResolutionError


def enumerate_interior(R, h, n):
    """Count lattice points with |z| < R whose full second-difference stencil stays in the closed ball."""
    d = 2 * n
    k = int(math.ceil(R / h)) + 1
    offsets = []
    for a in range(d):
        for s in (1, -1):
            e = [0] * d
            e[a] = s
            offsets.append(e)
    for a, b in itertools.combinations(range(d), 2):
        for sa, sb in itertools.product((1, -1), repeat=2):
            e = [0] * d
            e[a], e[b] = sa, sb
            offsets.append(e)
    count = 0
    for idx in itertools.product(range(-k, k + 1), repeat=d):
        if sum((i * h) ** 2 for i in idx) >= R * R:
            continue
        if all(sum(((i + o) * h) ** 2 for i, o in zip(idx, off)) <= R * R for off in offsets):
            count += 1
    return count


def test_interior_count_matches_enumeration(ball2_coarse):
    assert ball2_coarse.interior.size == enumerate_interior(1.0, 0.25, 2)


def test_origin_interior_and_far_node_exterior():
    dom = make_domain(DefiningFunction.ball(1.0, 2), 0.45)
    assert dom.node_class(dom.nearest_node(np.zeros(4))) == INTERIOR
    far = dom.nearest_node([0.9, 0.9, 0.0, 0.0])
    assert dom.node_class(far) == EXTERIOR


def test_interior_neighbours_are_active(ball2):
    for s in ball2.strides:
        for sign in (1, -1):
            assert np.all(ball2.cls[ball2.interior + sign * s] != EXTERIOR)


def test_boundary_fractions_locate_the_surface(ball2):
    Xb = ball2.points(ball2.boundary)
    h = ball2.h
    for a in range(4):
        for j, s in enumerate((1, -1)):
            th = ball2.theta[:, a, j]
            hit = ~np.isnan(th)
            assert np.all((th[hit] > 0) & (th[hit] <= 1))
            P = Xb[hit].copy()
            P[:, a] += s * th[hit] * h
            assert np.max(np.abs(ball2.spec.value(P))) <= 1e-8 * h


def test_boundary_points_on_surface(ball2):
    P = boundary_points(ball2)
    assert len(P) > 0
    assert np.max(np.abs(ball2.spec.value(P))) <= 1e-8


def test_classes_partition_the_lattice(ball2):
    assert set(np.unique(ball2.cls)) <= {EXTERIOR, BOUNDARY, INTERIOR}
    assert np.all(ball2.rho(ball2.active) <= 0)


def test_make_domain_errors():
    with pytest.raises(ResolutionError):
        make_domain(DefiningFunction.ball(1.0, 2), 0.6)
    with pytest.raises(DomainError):
        make_domain(DefiningFunction.ball(1.0, 2), 0.0)
    with pytest.raises(DomainError):
        make_domain(DefiningFunction.ellipsoid((-1.0, 1.0)), 0.1)
    with pytest.raises(DomainError):
        DefiningFunction.ball(-1.0, 2)


def test_mask_refinement_keeps_coarse_interior(ball2_coarse, ball2):
    X = ball2_coarse.points(ball2_coarse.interior)
    idx = np.rint((X - ball2.origin) / ball2.h).astype(np.int64)
    fine = np.ravel_multi_index(tuple(idx.T), ball2.dims)
    assert np.allclose(ball2.points(fine), X)
    assert np.all(ball2.cls[fine] != EXTERIOR)


# --- pseudoconvexity ----------------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3])
def test_ball_certificate_is_one(n):
    cert = certify_pseudoconvexity(DefiningFunction.ball(1.7, n), n)
    assert cert.sigma == pytest.approx(1.0, abs=1e-12)


def test_ellipsoid_certificate():
    cert = certify_pseudoconvexity(DefiningFunction.ellipsoid((1.0, 2.0, 3.0)), 2)
    assert cert.sigma == pytest.approx(2.0, abs=1e-12)
    assert cert.m == 2


def test_indefinite_ellipsoid_fails_certification():
    with pytest.raises(CertificationError) as exc:
        certify_pseudoconvexity(DefiningFunction.ellipsoid((-1.0, 5.0, 5.0)), 3)
    assert exc.value.value == pytest.approx(-25.0)
    assert exc.value.worst_node is not None


def test_certificate_rejects_bad_order():
    with pytest.raises(DomainError):
        certify_pseudoconvexity(DefiningFunction.ball(1.0, 2), 3)


# --- rho_nu ----------------------------------------------------------------------------------------------

def test_rho_nu_zero_is_rho(ball2):
    X = ball2.points(ball2.active)
    np.testing.assert_array_equal(rho_nu_value(ball2.spec, 0.0, X), ball2.spec.value(X))


def test_rho_nu_at_origin():
    assert rho_nu_value(DefiningFunction.ball(1.0, 2), 0.25, np.zeros(4)) == -1.0


def test_rho_nu_boundary_behaviour():
    spec = DefiningFunction.ball(1.0, 2)
    xi = np.array([1.0, 0.0, 0.0, 0.0])
    assert rho_nu_value(spec, 0.25, xi) == 0.0
    with pytest.raises(DomainError):
        rho_nu_hessian(spec, 0.25, xi)


@pytest.mark.parametrize("nu", [-0.1, 0.5, 0.7])
def test_rho_nu_rejects_bad_exponent(nu):
    with pytest.raises(DomainError):
        rho_nu_value(DefiningFunction.ball(1.0, 2), nu, np.zeros(4))


def test_rho_nu_hessian_matches_symbolic():
    nu = 0.3
    x1, y1, x2, y2 = sp.symbols("x1 y1 x2 y2", real=True)
    xs, ys = (x1, x2), (y1, y2)
    u = -(1 - (x1 ** 2 + y1 ** 2 + 2 * x2 ** 2 + 2 * y2 ** 2)) ** (1 - sp.Rational(3, 10))
    point = (0.2, -0.3, 0.1, 0.25)
    subs = dict(zip((x1, y1, x2, y2), point))
    H = np.zeros((2, 2), dtype=complex)
    for j in range(2):
        for k in range(2):
            dz = (sp.diff(u, xs[j]) - sp.I * sp.diff(u, ys[j])) / 2
            H[j, k] = complex(sp.N(((sp.diff(dz, xs[k]) + sp.I * sp.diff(dz, ys[k])) / 2).subs(subs)))
    spec = DefiningFunction.ellipsoid((1.0, 2.0))
    np.testing.assert_allclose(rho_nu_hessian(spec, nu, np.array(point)), H, atol=1e-12)


def test_rho_nu_gradient_matches_differences():
    spec = DefiningFunction.ball(1.0, 2)
    X = np.array([0.3, -0.1, 0.2, 0.4])
    eps = 1e-6
    fd = [(rho_nu_value(spec, 0.4, X + eps * e) - rho_nu_value(spec, 0.4, X - eps * e)) / (2 * eps)
          for e in np.eye(4)]
    np.testing.assert_allclose(rho_nu_gradient(spec, 0.4, X), fd, rtol=1e-7)


@settings(max_examples=60)
@given(st.floats(0.0, 0.49), st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
def test_rho_nu_hessian_in_closed_cone(nu, point):
    spec = DefiningFunction.ball(1.0, 2)
    lam = hermitian_eigenvalues(rho_nu_hessian(spec, nu, np.array(point)))
    assert in_gamma_m(lam, 2, closed=True)


def test_rho_nu_in_cone_at_all_interior_nodes(ball2):
    X = ball2.points(ball2.interior)
    lam = hermitian_eigenvalues(rho_nu_hessian(ball2.spec, 0.4, X))
    assert np.all(in_gamma_m(lam, 2, closed=True))


# --- gradient energy of rho_nu ------------------------------------------------------------------------------

def rho_nu_energy(h, nu=0.4):
    dom = make_domain(DefiningFunction.ball(1.0, 2), h)
    G = rho_nu_gradient(dom.spec, nu, dom.points(dom.interior))
    return integrate(dom, np.sum(G * G, axis=1))


def exact_rho_nu_energy(nu=0.4):
    """(1-nu)^2 int 4 r^2 (1-r^2)^(-2 nu) over the unit ball of R^4 (area 2 pi^2 of the unit sphere)."""
    return (1 - nu) ** 2 * 4 * 2 * math.pi ** 2 * 0.5 * beta(3, 1 - 2 * nu)


@pytest.fixture(scope="module")
def rho_nu_energies():
    return [rho_nu_energy(h) for h in (0.25, 0.125, 0.0625)]


def test_rho_nu_energy_increases_to_finite_limit(rho_nu_energies):
    exact = exact_rho_nu_energy()
    assert all(a < b for a, b in zip(rho_nu_energies, rho_nu_energies[1:]))
    assert rho_nu_energies[-1] < exact


@pytest.mark.xfail(strict=True, reason="the integrand grows like |rho|^-0.8 at the boundary, so the "
                                       "interior-node quadrature converges like h^0.2 and successive "
                                       "levels still differ by a factor above 2 at h = 0.0625")
def test_rho_nu_energy_levels_agree(rho_nu_energies):
    a, b = rho_nu_energies[-2:]
    assert abs(b - a) / b < 0.1


# --- grid file format -----------------------------------------------------------------------------------------

def test_grid_file_roundtrip(tmp_path, ball2_coarse):
    u = GridFunction.from_function(ball2_coarse, lambda X: X[:, 0] + 0.1 * X[:, 3] ** 2, "sample")
    path = tmp_path / "u.grid"
    write_grid(path, u)
    header_line = path.read_text().splitlines()[0]
    assert header_line.startswith("n=2 h=0.25 origin=")
    assert "field=sample" in header_line
    v = read_grid(path, ball2_coarse)
    act = ball2_coarse.active
    np.testing.assert_array_equal(v.values[act], u.values[act])
    assert np.all(np.isnan(v.values[ball2_coarse.cls == EXTERIOR]))
    header, vals = read_grid(path)
    assert header["dims"] == ball2_coarse.dims
    assert vals.size == ball2_coarse.size


def test_grid_file_rejects_other_lattice(tmp_path, ball2_coarse, ball2):
    u = GridFunction.zeros(ball2_coarse)
    path = tmp_path / "u.grid"
    write_grid(path, u)
    with pytest.raises(DomainError):
        read_grid(path, ball2)
