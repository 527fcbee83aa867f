import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import abs_sq
from hessian_lab import (DefiningFunction, GridFunction, elementary_symmetric, hermitian_eigenvalues,
                         hessian_operator_value, in_gamma_m, make_domain, mixed_hessian_value,
                         normalization, wirtinger_hessian)
from hessian_lab.core import (HessianNormalization, cone_margin, mixed_sigma, operator_values)
from hessian_lab.errors import DomainError, StencilError
from hessian_lab.solver import radial_sigma_m

reals = st.floats(-5, 5, allow_nan=False, allow_subnormal=False)


def brute_sigma(lam, k):
    return sum(math.prod(c) for c in itertools.combinations(lam, k))


# --- elementary symmetric functions ---------------------------------------------------------

@pytest.mark.parametrize("lam,k,expected", [((1, 1, 1), 2, 3.0), ((2, -1, 3), 2, 1.0), ((5, 7), 0, 1.0)])
def test_elementary_symmetric_examples(lam, k, expected):
    assert elementary_symmetric(lam, k) == expected


@pytest.mark.parametrize("k", [-1, 4])
def test_elementary_symmetric_rejects_bad_order(k):
    with pytest.raises(DomainError):
        elementary_symmetric((1.0, 2.0, 3.0), k)


@given(st.lists(reals, min_size=1, max_size=5), st.data())
def test_elementary_symmetric_matches_brute_force_and_permutations(lam, data):
    k = data.draw(st.integers(0, len(lam)))
    perm = data.draw(st.permutations(lam))
    expected = brute_sigma(lam, k)
    tol = 1e-9 * (1 + max(abs(x) for x in lam)) ** k
    assert abs(elementary_symmetric(lam, k) - expected) <= tol
    assert abs(elementary_symmetric(perm, k) - elementary_symmetric(lam, k)) <= tol


def test_normalization_inverts_binomial():
    for n in range(1, 6):
        for m in range(1, n + 1):
            assert normalization(n, m) * math.comb(n, m) == pytest.approx(1.0, abs=1e-15)
            assert HessianNormalization(n, m).c_nm == normalization(n, m)
    with pytest.raises(DomainError):
        HessianNormalization(2, 3)


# --- the cone -------------------------------------------------------------------------------

@pytest.mark.parametrize("lam,m,expected", [((1, 1, 1), 3, True), ((3, 3, -1), 2, True),
                                            ((-1, -1, -1), 1, False)])
def test_in_gamma_m_examples(lam, m, expected):
    assert in_gamma_m(lam, m) is expected


def test_in_gamma_m_rejects_bad_order():
    with pytest.raises(DomainError):
        in_gamma_m((1.0, 1.0), 3)
    with pytest.raises(DomainError):
        in_gamma_m((1.0, 1.0), 0)


def test_closed_cone_accepts_boundary_and_tolerance():
    assert not in_gamma_m((0.0, 1.0), 2)
    assert in_gamma_m((0.0, 1.0), 2, closed=True)
    assert in_gamma_m((-1e-12, 1.0), 2, closed=True)
    assert not in_gamma_m((-1e-3, 1.0), 2, closed=True)


@given(st.lists(reals, min_size=1, max_size=4), st.data())
def test_cone_nesting(lam, data):
    m = data.draw(st.integers(1, len(lam)))
    if in_gamma_m(lam, m):
        for j in range(1, m + 1):
            assert in_gamma_m(lam, j)


def test_cone_margin_is_min_sigma():
    lam = (3.0, 3.0, -1.0)
    assert cone_margin(lam, 2) == pytest.approx(min(5.0, 3.0))


# --- eigenvalues ------------------------------------------------------------------------------

@pytest.mark.parametrize("H,expected", [
    (np.eye(3), (1, 1, 1)),
    (np.array([[1, 1], [1, 1]]), (0, 2)),
    (np.array([[2, 1j], [-1j, 2]]), (1, 3)),
])
def test_hermitian_eigenvalue_examples(H, expected):
    np.testing.assert_allclose(hermitian_eigenvalues(H), expected, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_hermitian_eigenvalues_backward_error(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = A + A.conj().T
    lam = hermitian_eigenvalues(H)
    assert np.all(np.diff(lam) >= 0)
    w, V = np.linalg.eigh(H)
    np.testing.assert_allclose(lam, w, atol=1e-12 * np.linalg.norm(H))
    recon = V @ np.diag(lam) @ V.conj().T
    assert np.linalg.norm(recon - H) <= 1e-10 * np.linalg.norm(H)


# --- discrete Wirtinger Hessian ---------------------------------------------------------------

def symbolic_complex_hessian(expr_of_xy, n, point):
    """d^2 u / dz_j dzbar_k from sympy, evaluated at a real point (x1, y1, ...)."""
    xs = sp.symbols(f"x1:{n + 1}", real=True)
    ys = sp.symbols(f"y1:{n + 1}", real=True)
    u = expr_of_xy(xs, ys)
    H = np.zeros((n, n), dtype=complex)
    subs = {s: v for s, v in zip([c for pair in zip(xs, ys) for c in pair], point)}
    for j in range(n):
        for k in range(n):
            dz = lambda e, i: (sp.diff(e, xs[i]) - sp.I * sp.diff(e, ys[i])) / 2  # noqa: E731
            dzb = lambda e, i: (sp.diff(e, xs[i]) + sp.I * sp.diff(e, ys[i])) / 2  # noqa: E731
            H[j, k] = complex(sp.N(dzb(dz(u, j), k).subs(subs)))
    return H


def test_wirtinger_identity_for_abs_sq(ball2_coarse):
    u = GridFunction.from_function(ball2_coarse, abs_sq)
    for flat in ball2_coarse.interior:
        H = wirtinger_hessian(u, ball2_coarse.multi_index(flat))
        np.testing.assert_allclose(H, np.eye(2), atol=1e-12)


def test_wirtinger_zero_for_pluriharmonic(ball2_coarse):
    u = GridFunction.from_function(ball2_coarse, lambda X: X[:, 0] ** 2 - X[:, 1] ** 2)
    for flat in ball2_coarse.interior:
        H = wirtinger_hessian(u, ball2_coarse.multi_index(flat))
        np.testing.assert_allclose(H, 0.0, atol=1e-12)


def _product_quartic(X):
    return (X[:, 0] ** 2 + X[:, 1] ** 2) * (X[:, 2] ** 2 + X[:, 3] ** 2)


@pytest.mark.parametrize("point", [(1.0, 0.0, 1.0, 0.0), (0.5, 0.25, -0.25, 0.5)])
def test_wirtinger_matches_symbolic_oracle(point):
    dom = make_domain(DefiningFunction.ball(2.0, 2), 0.25)
    u = GridFunction.from_function(dom, _product_quartic)
    H = wirtinger_hessian(u, dom.nearest_node(point))
    oracle = symbolic_complex_hessian(lambda x, y: (x[0] ** 2 + y[0] ** 2) * (x[1] ** 2 + y[1] ** 2),
                                      2, point)
    np.testing.assert_allclose(H, oracle, atol=1e-12)
    if point == (1.0, 0.0, 1.0, 0.0):
        np.testing.assert_allclose(H, [[1, 1], [1, 1]], atol=1e-12)


def test_wirtinger_conjugate_symmetric(ball2_coarse):
    rng = np.random.default_rng(0)
    u = GridFunction(ball2_coarse, rng.normal(size=ball2_coarse.size))
    for flat in ball2_coarse.interior[:20]:
        H = wirtinger_hessian(u, ball2_coarse.multi_index(flat))
        assert np.array_equal(H, H.conj().T)


def test_wirtinger_stencil_error_names_node(ball2_coarse):
    u = GridFunction.from_function(ball2_coarse, abs_sq)
    node = tuple(ball2_coarse.multi_index(ball2_coarse.boundary[0]))
    with pytest.raises(StencilError) as exc:
        wirtinger_hessian(u, node)
    assert str(node) in str(exc.value)


# --- operator density -----------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_normalization_anchor_all_orders(n, ball2_coarse, ball3):
    dom = ball2_coarse if n == 2 else ball3
    u = GridFunction.from_function(dom, abs_sq)
    for m in range(1, n + 1):
        assert np.max(np.abs(operator_values(u, m) - 1.0)) <= 1e-10
        node = dom.multi_index(dom.interior[0])
        assert abs(hessian_operator_value(u, node, m) - 1.0) <= 1e-10


def test_operator_value_rejects_bad_order(ball2_coarse):
    u = GridFunction.from_function(ball2_coarse, abs_sq)
    with pytest.raises(DomainError):
        hessian_operator_value(u, ball2_coarse.multi_index(ball2_coarse.interior[0]), 3)


def test_quartic_radial_density_symbolic():
    """|z|^4 in C^3 has eigenvalues (2t, 2t, 4t) and density (20/3) t^2 for m = 2."""
    point = (0.3, -0.2, 0.1, 0.4, -0.5, 0.2)
    t = sum(x * x for x in point)
    H = symbolic_complex_hessian(lambda x, y: sum(a * a + b * b for a, b in zip(x, y)) ** 2, 3, point)
    lam = hermitian_eigenvalues(H)
    np.testing.assert_allclose(lam, [2 * t, 2 * t, 4 * t], rtol=1e-12)
    assert normalization(3, 2) * elementary_symmetric(lam, 2) == pytest.approx(20 / 3 * t * t, rel=1e-12)
    assert radial_sigma_m(2 * t, 2.0, t, 3, 2) == pytest.approx(20 / 3 * t * t, rel=1e-12)


def test_quartic_grid_density_second_order():
    """At a fixed point the discrete density error of |z|^4 (n=3, m=2) drops by about 4 when h halves."""
    X0 = np.array([0.25, 0.0, 0.0, 0.0, 0.0, 0.0])
    t = float(X0 @ X0)
    errs = []
    for R, h in ((1.0, 0.25), (0.5, 0.125)):
        dom = make_domain(DefiningFunction.ball(R, 3), h)
        u = GridFunction.from_function(dom, lambda X: abs_sq(X) ** 2)
        errs.append(abs(hessian_operator_value(u, dom.nearest_node(X0), 2) - 20 / 3 * t * t))
    assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_homogeneous_solution_symbolic():
    """-|z|^-1 in C^3 has vanishing 2-Hessian density away from the origin."""
    point = (0.3, -0.2, 0.1, 0.4, -0.5, 0.2)
    H = symbolic_complex_hessian(
        lambda x, y: -1 / sp.sqrt(sum(a * a + b * b for a, b in zip(x, y))), 3, point)
    lam = hermitian_eigenvalues(H)
    assert abs(normalization(3, 2) * elementary_symmetric(lam, 2)) <= 1e-10
    assert in_gamma_m(lam, 2, closed=True)


# --- mixed values ------------------------------------------------------------------------------------

def test_mixed_sigma_polarization_example():
    A = np.diag([2.0, 2.0, 4.0])
    assert normalization(3, 2) * mixed_sigma([A, np.eye(3)]) == pytest.approx(8 / 3, abs=1e-12)


def hermitian_form(A):
    """u(z) = z^* conj(A) z, whose complex Hessian is A."""
    Ab = np.conj(A)

    def u(X):
        Z = X[:, 0::2] + 1j * X[:, 1::2]
        return np.einsum("ni,ij,nj->n", np.conj(Z), Ab, Z).real

    return u


def random_hermitian(rng, n, lam=None):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    lam = rng.normal(size=n) if lam is None else np.asarray(lam)
    return Q @ np.diag(lam) @ Q.conj().T


def random_cone_eigenvalues(rng, n, m):
    """Eigenvalues in the open cone: random vector shifted right until every sigma_k > 0."""
    lam = rng.normal(size=n)
    while not in_gamma_m(lam, m):
        lam = lam + 0.25
    return lam


@pytest.fixture(scope="module")
def centre3(ball3):
    return ball3.nearest_node(np.zeros(6))


def test_hermitian_form_has_prescribed_hessian(ball3, centre3):
    rng = np.random.default_rng(1)
    A = random_hermitian(rng, 3)
    u = GridFunction.from_function(ball3, hermitian_form(A))
    np.testing.assert_allclose(wirtinger_hessian(u, centre3), A, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_mixed_value_symmetric_multilinear_and_diagonal(ball3, centre3, seed, m):
    rng = np.random.default_rng(seed)
    us = [GridFunction.from_function(ball3, hermitian_form(random_hermitian(rng, 3))) for _ in range(m)]
    val = mixed_hessian_value(us, centre3)
    scale = 1 + abs(val)
    for perm in itertools.permutations(range(m)):
        assert mixed_hessian_value([us[i] for i in perm], centre3) == pytest.approx(val, abs=1e-9 * scale)
    extra = GridFunction.from_function(ball3, hermitian_form(random_hermitian(rng, 3)))
    summed = us[0].with_values(us[0].values + extra.values)
    lhs = mixed_hessian_value([summed] + us[1:], centre3)
    rhs = val + mixed_hessian_value([extra] + us[1:], centre3)
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs) + abs(rhs)))
    assert mixed_hessian_value([us[0]] * m, centre3) == pytest.approx(
        hessian_operator_value(us[0], centre3, m), abs=1e-9 * scale)


def test_mixed_value_degenerate_factor(ball3, centre3):
    rng = np.random.default_rng(2)
    affine = GridFunction.from_function(ball3, lambda X: 1.0 + X @ rng.normal(size=6))
    other = GridFunction.from_function(ball3, hermitian_form(random_hermitian(rng, 3)))
    assert abs(mixed_hessian_value([affine, other], centre3)) <= 1e-12


def test_mixed_value_quartic_grid_at_unit_radius():
    """|z|^4 and |z|^2 at a point with |z|^2 = 1 in C^3: mixed density 8/3 up to the stencil error."""
    dom = make_domain(DefiningFunction.ball(2.0, 3), 0.5)
    X0 = np.array([1.0, 0, 0, 0, 0, 0])
    node = dom.nearest_node(X0)
    u4 = GridFunction.from_function(dom, lambda X: abs_sq(X) ** 2)
    u2 = GridFunction.from_function(dom, abs_sq)
    # second differences of |z|^4 carry an O(h^2) offset in the diagonal entries
    assert mixed_hessian_value([u4, u2], node) == pytest.approx(8 / 3, abs=dom.h ** 2 * 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_mixed_value_nonnegative_in_cone(ball3, centre3, seed, m):
    rng = np.random.default_rng(seed)
    us = []
    for _ in range(m):
        A = random_hermitian(rng, 3, random_cone_eigenvalues(rng, 3, m))
        us.append(GridFunction.from_function(ball3, hermitian_form(A)))
    for u in us:
        assert in_gamma_m(hermitian_eigenvalues(wirtinger_hessian(u, centre3)), m)
    assert mixed_hessian_value(us, centre3) >= -1e-9
