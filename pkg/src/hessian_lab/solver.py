"""Dirichlet solver for the discrete m-Hessian equation and its companions.

The grid solver is a nonlinear Gauss-Seidel iteration.  Changing the value at
a node by ``dc`` shifts the discrete complex Hessian there by ``-dc/h^2`` times
the identity (mixed differences do not see the center), so each local update
is a scalar problem on the eigenvalue shift ``s``:

    c_nm * sigma_m(lam + s) = f,   lam + s in Gamma_m,

whose admissible solution is the largest real root of a degree-m polynomial
(closed form for m <= 2, monotone Newton from the right for m = 3).  Nodes are visited by parity class: two nodes with the
same parity vector never lie in each other's stencil, so each class is updated
in one vectorized step and the visiting order is fixed.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .core import (elementary_symmetric_all, hermitian_eigenvalues, hessian_stack,
                   in_gamma_m, normalization, operator_values)
from .domain import (EXTERIOR, GridFunction, LatticeDomain, certify_pseudoconvexity,
                     gradient_field, integrate, laplacian_field, rho_nu_value)
from .errors import ConvergenceError, DomainError, SolverError

log = logging.getLogger(__name__)

SINGULAR_CLAMP = 1e6


@dataclass
class SolveConfig:
    m: int
    tol: float = 1e-8
    max_sweeps: int = 20000
    damping: float = 1.0
    bisection_tol: float = 1e-15  # relative stop of the scalar root iteration (m = 3)
    admissibility: str = "project"

    def __post_init__(self):
        if self.tol <= 0 or self.max_sweeps < 1:
            raise DomainError("need tol > 0 and max_sweeps >= 1")
        if not 0 < self.damping <= 1:
            raise DomainError("damping must lie in (0, 1]")
        if self.admissibility not in ("project", "reject"):
            raise DomainError(f"unknown admissibility mode {self.admissibility!r}")


# --- densities -------------------------------------------------------------------

def density(dom: LatticeDomain, func, clamp: float = SINGULAR_CLAMP, name: str = "f") -> GridFunction:
    """Sample a density at active nodes, clamping values above ``clamp``.

    The number of clamped nodes is stored in ``info['clamped']``.
    """
    vals = np.full(dom.size, np.nan)
    act = dom.active
    with np.errstate(divide="ignore"):
        raw = np.asarray(func(dom.points(act)), dtype=float) * np.ones(act.size)
    over = ~(raw <= clamp)
    raw[over] = clamp
    vals[act] = raw
    f = GridFunction(dom, vals, name)
    f.info["clamped"] = int(over.sum())
    return f


def boundary_singular_density(dom: LatticeDomain, nu: float, m: int, scale: float = 1.0,
                              clamp: float = SINGULAR_CLAMP) -> GridFunction:
    """scale * |rho|^(-m nu), the model density blowing up at the boundary."""
    spec = dom.spec
    return density(dom, lambda X: scale * np.abs(spec.value(X)) ** (-m * nu), clamp)


# --- the local update ------------------------------------------------------------

def matrix_sigmas(H: np.ndarray, m: int) -> np.ndarray:
    """sigma_0..sigma_m of the eigenvalues of Hermitian H, from matrix invariants.

    Uses traces and the determinant for n <= 3 and falls back to eigenvalues otherwise.
    """
    n = H.shape[-1]
    if n > 3:
        return elementary_symmetric_all(hermitian_eigenvalues(H), m)
    out = np.zeros(H.shape[:-2] + (m + 1,))
    out[..., 0] = 1.0
    tr = np.einsum("...ii->...", H).real
    out[..., 1] = tr
    if m >= 2:
        tr2 = np.einsum("...ij,...ji->...", H, H).real
        out[..., 2] = 0.5 * (tr * tr - tr2)
    if m >= 3:
        out[..., 3] = np.linalg.det(H).real
    return out


def _shift_polynomial(sig: np.ndarray, n: int, m: int) -> np.ndarray:
    """Coefficients (highest first) of s -> sigma_m(lam + s) given sigma_k(lam)."""
    return np.stack([math.comb(n - k, m - k) * sig[:, k] for k in range(m + 1)], axis=1)


def solve_shift(sig: np.ndarray, f: np.ndarray, n: int, m: int, max_iter: int = 200,
                rtol: float = 1e-15) -> np.ndarray:
    """Admissible shift s with c_nm sigma_m(lam + s) = f, lam + s in closed Gamma_m.

    ``sig`` holds sigma_0..sigma_m of lam per row.  The polynomial
    p(s) = sigma_m(lam + s) is hyperbolic with all roots real, increasing and
    convex to the right of its largest root, and lam + s lies in the cone
    exactly there; the admissible solution is therefore the largest real root of
    p(s) = f / c_nm (for f = 0 the shift that puts lam on the cone boundary).
    """
    c = normalization(n, m)
    coef = _shift_polynomial(sig, n, m)
    target = np.maximum(f, 0.0) / c
    if m == 1:
        return (target - coef[:, 1]) / coef[:, 0]
    if m == 2:
        a, b, c0 = coef[:, 0], coef[:, 1], coef[:, 2] - target
        disc = np.sqrt(np.maximum(b * b - 4 * a * c0, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(b >= 0, -2 * c0 / (b + disc), (-b + disc) / (2 * a))
        return np.where(np.isfinite(s), s, 0.0)
    # Newton from the right converges monotonically on the convex branch
    lam_bound = np.abs(sig[:, 1]) + np.sqrt(np.abs(sig[:, 2])) + np.abs(sig[:, 3]) ** (1.0 / 3)
    s = lam_bound + target ** (1.0 / m) + 1.0
    dcoef = coef[:, :-1] * np.arange(m, 0, -1)
    for _ in range(max_iter):
        p = np.zeros_like(s)
        dp = np.zeros_like(s)
        for k in range(m + 1):
            p = p * s + coef[:, k]
        for k in range(m):
            dp = dp * s + dcoef[:, k]
        p -= target
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp > 0, p / dp, 0.0)
        s = s - step
        if np.all(np.abs(step) <= rtol * (1 + np.abs(s))):
            break
    return s


def _parity_classes(dom: LatticeDomain):
    mi = dom.multi_index(dom.interior)
    key = np.zeros(dom.interior.size, dtype=np.int64)
    for a in range(mi.shape[1]):
        key |= (mi[:, a] & 1).astype(np.int64) << a
    return [dom.interior[key == k] for k in range(1 << mi.shape[1]) if np.any(key == k)]


def _update_boundary(dom: LatticeDomain, vals, phi_b, passes=3):
    th = dom.bnd_theta
    inward = dom.bnd_inward
    has = inward >= 0
    for _ in range(passes):
        nxt = phi_b.copy()
        nxt[has] = (phi_b[has] + th[has] * vals[inward[has]]) / (1.0 + th[has])
        vals[dom.boundary] = nxt


def cone_violation(u: GridFunction, m: int, nodes=None) -> np.ndarray:
    """Per-node amount by which the discrete Hessian leaves the closed cone (0 inside)."""
    dom = u.dom
    if nodes is None:
        nodes = dom.interior
    lam = hermitian_eigenvalues(hessian_stack(u.values, dom.strides, dom.h, nodes, dom.n))
    e = elementary_symmetric_all(lam, m)[:, 1:]
    tol = 1e-9 * (1 + np.abs(lam).max(axis=1))
    return np.maximum(0.0, -(e.min(axis=1) + tol[:]))


# --- linear (m = 1) solves ---------------------------------------------------------

def _linear_system(dom: LatticeDomain, f_int, phi_b):
    act = dom.active
    loc = np.full(dom.size, -1, dtype=np.int64)
    loc[act] = np.arange(act.size)
    rows, cols, data = [], [], []
    rhs = np.zeros(act.size)
    n = dom.n
    coef = 1.0 / (4.0 * n * dom.h ** 2)
    I = loc[dom.interior]
    rows.append(I)
    cols.append(I)
    data.append(np.full(I.size, -2.0 * 2 * n * coef))
    for a in range(2 * n):
        for s in (1, -1):
            J = loc[dom.interior + s * dom.strides[a]]
            rows.append(I)
            cols.append(J)
            data.append(np.full(I.size, coef))
    rhs[I] = f_int
    B = loc[dom.boundary]
    rows.append(B)
    cols.append(B)
    data.append(np.ones(B.size))
    has = dom.bnd_inward >= 0
    th = dom.bnd_theta
    rows.append(B[has])
    cols.append(loc[dom.bnd_inward[has]])
    data.append(-th[has] / (1.0 + th[has]))
    rhs[B] = np.where(has, phi_b / (1.0 + th), phi_b)
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(act.size, act.size))
    return A, rhs


def sparse_solve(A, rhs, rtol: float = 1e-13) -> np.ndarray:
    """AMG-preconditioned BiCGStab, then GMRES, falling back to a direct LU solve."""
    bound = 1e-10 * (1.0 + np.abs(rhs).max())
    try:
        # pyamg draws spectral-radius start vectors from the global numpy RNG
        state = np.random.get_state()
        np.random.seed(0)
        try:
            ml = pyamg.smoothed_aggregation_solver(A.tocsr())
        finally:
            np.random.set_state(state)
        M = ml.aspreconditioner()
        x, info = spla.bicgstab(A, rhs, M=M, rtol=rtol, atol=0.0, maxiter=500)
        if info == 0 and np.all(np.isfinite(x)) and np.abs(A @ x - rhs).max() <= bound:
            return x
        # BiCGStab breaks down on right-hand sides at rounding level
        x, info = spla.gmres(A, rhs, M=M, rtol=rtol, atol=0.0, restart=50, maxiter=50)
        if info == 0 and np.all(np.isfinite(x)) and np.abs(A @ x - rhs).max() <= bound:
            return x
    except (ValueError, RuntimeError, np.linalg.LinAlgError):
        pass
    return spla.spsolve(A.tocsc(), rhs, permc_spec="MMD_AT_PLUS_A")


def linear_solve(dom: LatticeDomain, f: GridFunction | None, phi) -> GridFunction:
    """Direct solve of the m = 1 equation (a scaled Poisson problem)."""
    phi_b = np.asarray(phi(dom.bnd_point), dtype=float)
    f_int = np.zeros(dom.interior.size) if f is None else f.values[dom.interior]
    A, rhs = _linear_system(dom, f_int, phi_b)
    x = sparse_solve(A, rhs)
    vals = np.full(dom.size, np.nan)
    vals[dom.active] = x
    return GridFunction(dom, vals, "u")


def harmonic_extension(dom: LatticeDomain, phi) -> GridFunction:
    u = linear_solve(dom, None, phi)
    u.name = "h1"
    return u


# --- the nonlinear solve -----------------------------------------------------------

def residual(u: GridFunction, f, m: int) -> float:
    """max over interior nodes of |density(u) - f|; ``f`` is a GridFunction or a scalar."""
    dom = u.dom
    if isinstance(f, GridFunction):
        if f.dom is not dom:
            raise DomainError("u and f live on different lattices")
        target = f.values[dom.interior]
    else:
        target = float(f)
    return float(np.max(np.abs(operator_values(u, m) - target)))


def c2_norm(u: GridFunction) -> float:
    """sup |u| + sup |grad u| + sup |Hessian u| at interior nodes."""
    dom = u.dom
    G = gradient_field(u, dom.interior)
    H = hessian_stack(u.values, dom.strides, dom.h, dom.interior, dom.n)
    return float(np.nanmax(np.abs(u.values[dom.active])) + np.max(np.linalg.norm(G, axis=1))
                 + np.max(np.linalg.norm(H, ord=2, axis=(1, 2))))


def initial_constant(f_max: float, sigma: float, m: int, phihat_c2: float) -> float:
    return (f_max / sigma) ** (1.0 / m) * (1.0 + phihat_c2)


def dirichlet_solve(dom: LatticeDomain, f: GridFunction, phi, cfg: SolveConfig,
                    init: GridFunction | None = None, history_path=None) -> GridFunction:
    """Solve c_nm sigma_m(Hess u) = f inside, u = phi on the boundary.

    ``phi`` maps an array of real points (N, 2n) to values.  The residual history
    ``(sweep, residual, max_cone_violation)`` is kept in ``u.info['history']``.
    """
    m = cfg.m
    n = dom.n
    if not 1 <= m <= n:
        raise DomainError(f"m={m} outside 1..{n}")
    if f.dom is not dom:
        raise DomainError("f lives on another lattice")
    f_int = f.values[dom.interior]
    if np.any(f_int < 0) or not np.all(np.isfinite(f_int)):
        raise DomainError("density must be finite and nonnegative")
    cert = certify_pseudoconvexity(dom.spec, m)
    phi_b = np.asarray(phi(dom.bnd_point), dtype=float)

    if m == 1:
        u = linear_solve(dom, f, phi)
        res = residual(u, f, 1)
        u.info.update(history=[(0, res, 0.0)], sweeps=0, A=0.0, phi_b=phi_b)
        if res > cfg.tol:
            raise ConvergenceError(f"linear solve residual {res:.3e} above tol", u.info["history"])
        return u

    if init is None:
        phihat = harmonic_extension(dom, phi)
        A = initial_constant(float(f_int.max(initial=0.0)), cert.sigma, m, c2_norm(phihat))
        vals = phihat.values.copy()
        act = dom.active
        vals[act] += A * dom.rho(act)
    else:
        A = float("nan")
        vals = init.values.copy()
    _update_boundary(dom, vals, phi_b)

    classes = _parity_classes(dom)
    f_full = f.values
    h2 = dom.h ** 2
    c = normalization(n, m)
    history = []
    res = np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        for nodes in classes:
            sig = matrix_sigmas(hessian_stack(vals, dom.strides, dom.h, nodes, n), m)
            s = solve_shift(sig, f_full[nodes], n, m, rtol=cfg.bisection_tol)
            vals[nodes] -= cfg.damping * s * h2
        _update_boundary(dom, vals, phi_b)

        H = hessian_stack(vals, dom.strides, dom.h, dom.interior, n)
        sig = matrix_sigmas(H, m)
        slack = 1e-9 * (1 + np.abs(sig[:, 1]))
        viol = np.maximum(0.0, -(sig[:, 1:].min(axis=1) + slack))
        if np.any(viol > 0):
            if cfg.admissibility == "reject":
                worst = int(np.argmax(viol))
                raise SolverError(f"cone exit at sweep {sweep}", worst=dom.interior[worst])
            bad = viol > 0
            s = solve_shift(sig[bad], np.zeros(bad.sum()), n, m)
            vals[dom.interior[bad]] -= s * h2
            _update_boundary(dom, vals, phi_b)
            sig = matrix_sigmas(hessian_stack(vals, dom.strides, dom.h, dom.interior, n), m)
        res = float(np.max(np.abs(c * sig[:, m] - f_int)))
        history.append((sweep, res, float(viol.max(initial=0.0))))
        if res <= cfg.tol:
            break
    u = GridFunction(dom, vals, "u")
    u.info.update(history=history, sweeps=len(history), A=A, clamped=f.info.get("clamped", 0),
                  phi_b=phi_b)
    if history_path is not None:
        write_history(history_path, history)
    if res > cfg.tol:
        raise ConvergenceError(f"residual {res:.3e} above tol after {cfg.max_sweeps} sweeps", history)
    log.debug("solve converged in %d sweeps, residual %.3e", len(history), res)
    return u


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "residual", "max_cone_violation"])
        for row in history:
            w.writerow([row[0], repr(row[1]), repr(row[2])])


def perron_envelope(dom: LatticeDomain, phi, m: int, cfg: SolveConfig | None = None) -> GridFunction:
    """Largest discrete m-sh function below phi on the boundary: the f = 0 solve."""
    cfg = cfg or SolveConfig(m=m)
    if cfg.m != m:
        cfg = SolveConfig(m=m, tol=cfg.tol, max_sweeps=cfg.max_sweeps, damping=cfg.damping,
                          bisection_tol=cfg.bisection_tol, admissibility=cfg.admissibility)
    u = dirichlet_solve(dom, GridFunction.zeros(dom, "f"), phi, cfg)
    u.name = f"h{m}"
    return u


# --- comparison and energy -----------------------------------------------------------

@dataclass
class ComparisonReport:
    ordered: bool
    max_violation: float
    precondition_ok: bool
    tol: float
    message: str = ""


def comparison_check(u: GridFunction, v: GridFunction, m: int, boundary_tol: float = 1e-9,
                     fu=None, fv=None) -> ComparisonReport:
    """Check v <= u + 10 h^2 for solutions with density(u) <= density(v).

    The boundary precondition (equal boundary values or u >= v there) is checked
    on boundary-adjacent nodes.  When densities are not supplied they are
    recomputed from the grid functions.
    """
    if u.dom is not v.dom:
        raise DomainError("u and v live on different lattices")
    dom = u.dom
    tol = 10 * dom.h ** 2
    b = dom.boundary
    bdiff = v.values[b] - u.values[b]
    pre = bool(np.all(bdiff <= boundary_tol))
    du = operator_values(u, m) if fu is None else fu.values[dom.interior]
    dv = operator_values(v, m) if fv is None else fv.values[dom.interior]
    dens_ok = bool(np.all(du <= dv + 1e-6 * (1 + np.abs(dv))))
    act = dom.active
    diff = v.values[act] - u.values[act]
    viol = float(max(diff.max(), 0.0))
    msg = ""
    if not pre:
        msg = f"boundary precondition violated by {bdiff.max():.3e}"
    elif not dens_ok:
        msg = "density ordering precondition violated"
    return ComparisonReport(ordered=bool(viol <= tol), max_violation=viol,
                            precondition_ok=pre and dens_ok, tol=tol, message=msg)


@dataclass
class EnergyReport:
    mass_u: float
    mass_v: float
    grad_u: float
    grad_v: float


def energy_comparison(u: GridFunction, v: GridFunction, boundary_tol: float = 1e-8,
                      order_tol: float | None = None) -> EnergyReport:
    """Laplacian mass and gradient energy of an ordered pair u <= v."""
    if u.dom is not v.dom:
        raise DomainError("u and v live on different lattices")
    dom = u.dom
    if order_tol is None:
        order_tol = 10 * dom.h ** 2
    act = dom.active
    if np.any(u.values[act] > v.values[act] + order_tol):
        raise DomainError("energy comparison needs u <= v")
    # compare the boundary data when the solver recorded it; boundary-adjacent
    # values also depend on the neighbouring interior values
    bu = u.info.get("phi_b", u.values[dom.boundary])
    bv = v.info.get("phi_b", v.values[dom.boundary])
    if np.any(np.abs(bu - bv) > boundary_tol):
        raise DomainError("energy comparison needs equal boundary values")

    def mass(w):
        return integrate(dom, laplacian_field(w))

    def grad(w):
        G = gradient_field(w)
        return integrate(dom, np.sum(G * G, axis=1))

    return EnergyReport(mass(u), mass(v), grad(u), grad(v))


# --- gluing -------------------------------------------------------------------------

def omega_delta_nodes(dom: LatticeDomain, delta: float) -> np.ndarray:
    """Active nodes whose conservative boundary distance exceeds delta."""
    act = dom.active
    dist = dom.spec.distance_lower_bound(dom.points(act))
    return act[dist > delta]


def glue_extension(u: GridFunction, u_shift: GridFunction, c0: float, nu: float,
                   delta: float) -> GridFunction:
    """max(u_shift, u + c0 delta^nu) on Omega_delta, u + c0 delta^nu elsewhere."""
    if c0 <= 0 or delta <= 0 or not 0 < nu < 1:
        raise DomainError("need c0 > 0, delta > 0 and 0 < nu < 1")
    dom = u.dom
    inner = omega_delta_nodes(dom, delta)
    if np.any(~np.isfinite(u_shift.values[inner])):
        raise DomainError("u_shift is missing nodes of Omega_delta")
    lift = c0 * delta ** nu
    vals = np.full(dom.size, np.nan)
    act = dom.active
    vals[act] = u.values[act] + lift
    vals[inner] = np.maximum(u_shift.values[inner], u.values[inner] + lift)
    out = GridFunction(dom, vals, "glued")
    out.info["omega_delta"] = inner
    return out


# --- radial reduction -------------------------------------------------------------------

def radial_sigma_m(gp, gpp, t, n: int, m: int):
    """Density of u = g(|z|^2) from g', g'' at t = |z|^2.

    The complex Hessian of g(|z|^2) has eigenvalue g' with multiplicity n - 1 and
    g' + t g'' once.
    """
    gp = np.asarray(gp, dtype=float)
    c = normalization(n, m)
    return c * (math.comb(n - 1, m) * gp ** m
                + math.comb(n - 1, m - 1) * gp ** (m - 1) * (gp + t * gpp))


def radial_eigenvalues(gp, gpp, t, n: int):
    gp = np.atleast_1d(np.asarray(gp, dtype=float))
    lam = np.repeat(gp[:, None], n, axis=1)
    lam[:, -1] = gp + np.asarray(t) * np.asarray(gpp)
    return np.sort(lam, axis=1)


@dataclass
class RadialProfile:
    n: int
    m: int
    R: float
    t: np.ndarray
    g: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def gp(self) -> np.ndarray:
        return np.gradient(self.g, self.dt, edge_order=2)

    @property
    def gpp(self) -> np.ndarray:
        d = np.empty_like(self.g)
        dt = self.dt
        d[1:-1] = (self.g[2:] - 2 * self.g[1:-1] + self.g[:-2]) / dt ** 2
        d[0], d[-1] = d[1], d[-2]
        return d

    def __call__(self, t):
        return np.interp(t, self.t, self.g)

    def of_radius(self, r):
        return np.interp(np.asarray(r) ** 2, self.t, self.g)

    def density(self) -> np.ndarray:
        return radial_sigma_m(self.gp, self.gpp, self.t, self.n, self.m)

    def admissible(self) -> np.ndarray:
        gp = self.gp[1:-1]
        lam = radial_eigenvalues(gp, self.gpp[1:-1], self.t[1:-1], self.n)
        scale = 1.0 + np.abs(lam).max(axis=1)
        return (gp >= -1e-9 * scale) & in_gamma_m(lam, self.m, closed=True)


def _radial_residual(g, t, dt, f, n, m, left):
    gp = (g[2:] - g[:-2]) / (2 * dt)
    gpp = (g[2:] - 2 * g[1:-1] + g[:-2]) / dt ** 2
    F = np.empty(g.size - 1)
    F[1:] = radial_sigma_m(gp, gpp, t[1:-1], n, m) - f[1:-1]
    if left is None:
        F[0] = (-3 * g[0] + 4 * g[1] - g[2]) / (2 * dt) - max(f[0], 0.0) ** (1.0 / m)
    else:
        F[0] = g[0] - left
    return F, gp, gpp


def radial_solve(n: int, m: int, R: float, f_radial, phi_R: float, knots: int = 200,
                 tol: float = 1e-10, max_iter: int = 200, t_min: float = 0.0,
                 g_min: float | None = None, clamp: float = SINGULAR_CLAMP) -> RadialProfile:
    """Solve the radial equation for g(t), t = |z|^2 in [t_min, R^2].

    Centered differences at interior knots; at t = 0 the regularity condition
    g'(0) = f(0)^(1/m); with ``t_min > 0`` the Dirichlet value ``g_min`` is imposed
    there instead.  Damped Newton on the (banded) system.
    """
    if not 1 <= m <= n:
        raise DomainError(f"m={m} outside 1..{n}")
    if knots < 5:
        raise DomainError("need at least 5 knots")
    t = np.linspace(t_min, R * R, knots)
    dt = t[1] - t[0]
    with np.errstate(divide="ignore"):
        f = np.asarray(f_radial(t), dtype=float) * np.ones(knots)
    f = np.minimum(np.where(np.isfinite(f), f, clamp), clamp)
    if np.any(f[:-1] < 0):
        raise DomainError("radial density must be nonnegative")
    if t_min > 0 and g_min is None:
        raise DomainError("t_min > 0 needs a Dirichlet value g_min")
    if t_min == 0 and m == n and f[0] > clamp:
        raise DomainError("m = n needs a bounded density at the origin")
    left = None if t_min == 0 else float(g_min)

    slope = max(float(f.max()), 1.0) ** (1.0 / m)
    if left is None:
        g = phi_R + slope * (t - R * R)
    else:
        g = left + (phi_R - left) * (t - t_min) / (R * R - t_min)
    g[-1] = phi_R
    c = normalization(n, m)
    C1 = math.comb(n - 1, m)
    C2 = math.comb(n - 1, m - 1)
    N = knots - 1  # unknowns g[0..N-1]

    def norm(F):
        return float(np.max(np.abs(F)))

    F, gp, gpp = _radial_residual(g, t, dt, f, n, m, left)
    history = [norm(F)]
    last_step = np.inf
    for it in range(max_iter):
        if history[-1] <= tol and last_step <= 1e-12 * (1 + np.abs(g).max()):
            break
        tt = t[1:-1]
        dgp = c * (m * (C1 + C2) * gp ** (m - 1)
                   + (C2 * tt * (m - 1) * gp ** (m - 2) * gpp if m >= 2 else 0.0))
        dgpp = c * C2 * tt * gp ** (m - 1)
        # row i (knot i, i = 1..N-1) couples g[i-1], g[i], g[i+1]
        lower = -dgp / (2 * dt) + dgpp / dt ** 2
        diag = -2 * dgpp / dt ** 2
        upper = dgp / (2 * dt) + dgpp / dt ** 2
        ab = np.zeros((5, N))  # bandwidth (2, 2) for the one-sided first row
        for i in range(1, N):
            row = i
            ab[2 + row - (i - 1), i - 1] = lower[i - 1]
            ab[2, i] = diag[i - 1]
            if i + 1 < N:
                ab[2 + row - (i + 1), i + 1] = upper[i - 1]
        if left is None:
            ab[2, 0] = -3 / (2 * dt)
            ab[1, 1] = 4 / (2 * dt)
            ab[0, 2] = -1 / (2 * dt)
        else:
            ab[2, 0] = 1.0
        try:
            step = solve_banded((2, 2), ab, -F)
        except (np.linalg.LinAlgError, ValueError):
            step = None
        if step is None or not np.all(np.isfinite(step)):
            raise SolverError("singular radial Jacobian", worst=int(np.argmax(np.abs(F))))
        lam = 1.0
        while lam > 1e-6:
            trial = g.copy()
            trial[:-1] += lam * step
            Ft, gpt, gppt = _radial_residual(trial, t, dt, f, n, m, left)
            ok = np.all(gpt >= 0) or m == 1
            if ok and (norm(Ft) < (1 - 1e-4 * lam) * history[-1] or norm(Ft) == 0.0):
                break
            lam *= 0.5
        else:
            break
        g, F, gp, gpp = trial, Ft, gpt, gppt
        last_step = float(np.max(np.abs(lam * step)))
        history.append(norm(F))
    # second differences lose about eps |g| / dt^2 to rounding, which bounds the reachable residual
    floor = 8 * np.finfo(float).eps * (1 + np.abs(g).max()) * R * R \
        * max(1.0, float(np.abs(gp).max())) ** (m - 1) / dt ** 2
    tol_eff = max(tol, floor)
    prof = RadialProfile(n=n, m=m, R=R, t=t, g=g, info={"history": history, "f": f, "tol": tol_eff})
    if history[-1] > tol_eff:
        raise ConvergenceError(f"radial residual {history[-1]:.3e} above tol", history)
    adm = prof.admissible()
    if not np.all(adm):
        bad = int(np.flatnonzero(~adm)[0]) + 1
        raise SolverError(f"radial profile leaves the cone at knot {bad}", worst=bad)
    return prof


def radial_grid_function(dom: LatticeDomain, prof: RadialProfile, name="u_radial") -> GridFunction:
    return GridFunction.from_function(dom, lambda X: prof(np.sum(X * X, axis=1)), name)


def rho_nu_grid(dom: LatticeDomain, nu: float) -> GridFunction:
    return GridFunction.from_function(dom, lambda X: rho_nu_value(dom.spec, nu, X), f"rho_{nu}")
