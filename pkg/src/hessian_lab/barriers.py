"""Boundary barriers, their envelopes and the composite minorants.

Two barrier families pinned at a boundary point xi:

* superharmonic  a_xi(z) = K|rho(z)|^tau + M|z - xi|^(2 alpha) + phi(xi)
* m-subharmonic  b_xi(z) = -M (|z - xi|^2 - K rho(z))^alpha + phi(xi)

with M the Lip_{2 alpha} norm of phi.  Stiffness constants K are found by a
doubling search and logged.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .core import in_gamma_m, hermitian_eigenvalues
from .domain import (DefiningFunction, GridFunction, LatticeDomain, boundary_points,
                     to_complex, rho_nu_value)
from .errors import CertificationError, DomainError

log = logging.getLogger(__name__)

MAX_DOUBLINGS = 20


@dataclass
class BarrierParams:
    M: float
    K: float
    alpha: float
    tau: float = 0.5
    kind: str = "msh_b"

    def __post_init__(self):
        if self.kind not in ("superharmonic_a", "msh_b"):
            raise DomainError(f"unknown barrier kind {self.kind!r}")
        if not 0 < self.alpha <= 0.5:
            raise DomainError("alpha must lie in (0, 1/2]")
        if self.M < 0 or self.K < 0:
            raise DomainError("M and K must be nonnegative")
        if self.kind == "superharmonic_a":
            if not 0 < self.tau < 1:
                raise DomainError("tau must lie in (0, 1)")
            if self.tau > 2 * self.alpha:
                raise DomainError("superharmonic barrier needs tau <= 2 alpha")


@dataclass
class BoundarySample:
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        if len(self.points) == 0:
            raise DomainError("boundary sample is empty")

    def check(self, spec: DefiningFunction, tol: float = 1e-8) -> None:
        if np.any(np.abs(spec.value(self.points)) > tol):
            raise DomainError("boundary sample points are off the boundary")

    def write_csv(self, path) -> None:
        d = self.points.shape[1]
        names = [f"{c}{j + 1}" for j in range(d // 2) for c in ("x", "y")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["phi"])
            for p, v in zip(self.points, self.values):
                w.writerow([repr(float(x)) for x in p] + [repr(float(v))])

    @classmethod
    def read_csv(cls, path) -> "BoundarySample":
        with open(path) as fh:
            rows = list(csv.reader(fh))[1:]
        arr = np.array([[float(x) for x in r] for r in rows])
        return cls(arr[:, :-1], arr[:, -1])


def boundary_sample(dom: LatticeDomain, phi, spacing: float | None = None) -> BoundarySample:
    """Lattice-ray intersections with the boundary, thinned to one per cell of ``spacing``."""
    P = boundary_points(dom)
    spacing = dom.h if spacing is None else spacing
    keys = np.floor(P / spacing).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    P = P[np.sort(first)]
    sample = BoundarySample(P, phi(P))
    sample.check(dom.spec)
    return sample


# --- the superharmonic barrier ----------------------------------------------------------

def _as_point(xi, spec):
    xi = np.asarray(xi, dtype=float)
    if abs(float(spec.value(xi))) > 1e-8:
        raise DomainError("xi must lie on the boundary")
    return xi


def superharmonic_barrier(spec: DefiningFunction, phi, xi, params: BarrierParams):
    if params.kind != "superharmonic_a":
        raise DomainError("params are not for the superharmonic barrier")
    xi = _as_point(xi, spec)
    phi_xi = float(phi(xi[None])[0])
    rho_xi = float(spec.value(xi))  # zero up to root-finding error; subtracting it pins a_xi(xi)
    K, M, tau, a2 = params.K, params.M, params.tau, 2 * params.alpha

    def a_xi(X):
        X = np.asarray(X, dtype=float)
        d = np.linalg.norm(X - xi, axis=-1)
        return K * np.abs(spec.value(X) - rho_xi) ** tau + M * d ** a2 + phi_xi

    return a_xi


def discrete_laplacian(func, X, h):
    """Axis second differences of a callable at points X, summed."""
    X = np.asarray(X, dtype=float)
    c = func(X)
    L = np.zeros(len(X))
    for a in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[a] = h
        L += (func(X + e) - 2 * c + func(X - e)) / h ** 2
    return L


def collar_nodes(dom: LatticeDomain, width: float = 0.2, grad_eps: float = 1e-3):
    """Interior nodes within ``width`` of the boundary (conservative distance) with |grad rho| > eps."""
    X = dom.points(dom.interior)
    dist = dom.spec.distance_lower_bound(X)
    g = np.linalg.norm(dom.spec.gradient(X), axis=1)
    keep = (dist <= width) & (g > grad_eps)
    return dom.interior[keep]


def collar_laplacian_max(dom: LatticeDomain, barrier, nodes=None) -> float:
    nodes = collar_nodes(dom) if nodes is None else nodes
    if nodes.size == 0:
        return -np.inf
    return float(discrete_laplacian(barrier, dom.points(nodes), dom.h).max())


# --- the m-subharmonic barrier ------------------------------------------------------------

def msh_barrier(spec: DefiningFunction, phi, xi, params: BarrierParams):
    if params.kind != "msh_b":
        raise DomainError("params are not for the m-subharmonic barrier")
    xi = _as_point(xi, spec)
    phi_xi = float(phi(xi[None])[0])
    rho_xi = float(spec.value(xi))
    K, M, al = params.K, params.M, params.alpha

    def b_xi(X):
        X = np.asarray(X, dtype=float)
        psi = np.sum((X - xi) ** 2, axis=-1) - K * (spec.value(X) - rho_xi)
        return -M * np.maximum(psi, 0.0) ** al + phi_xi

    return b_xi


def msh_barrier_hessian(spec: DefiningFunction, xi, params: BarrierParams, X):
    """Analytic complex Hessian of b_xi at interior points X, shape (N, n, n).

    With Psi = |z - xi|^2 - K rho:  -M alpha Psi^(alpha-1) (I - K Hess rho)
    + M alpha (1 - alpha) Psi^(alpha-2) dPsi (dPsi)^*.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    xi = np.asarray(xi, dtype=float)
    K, M, al = params.K, params.M, params.alpha
    n = spec.n
    psi = np.sum((X - xi) ** 2, axis=-1) - K * spec.value(X)
    dpsi = np.conj(to_complex(X) - to_complex(xi)) - K * spec.complex_gradient(X)
    hpsi = np.eye(n) - K * spec.complex_hessian(X)
    psi = psi[:, None, None]
    outer = dpsi[:, :, None] * np.conj(dpsi[:, None, :])
    return -M * al * psi ** (al - 1) * hpsi + M * al * (1 - al) * psi ** (al - 2) * outer


@dataclass
class ConeReport:
    passed: bool
    fraction: float
    worst_node: int | None
    worst_margin: float


def msh_barrier_cone_check(dom: LatticeDomain, xi, params: BarrierParams, m: int,
                           raise_on_fail: bool = True) -> ConeReport:
    """Closed-cone test of the analytic Hessian of b_xi at every interior node."""
    X = dom.points(dom.interior)
    H = msh_barrier_hessian(dom.spec, xi, params, X)
    lam = hermitian_eigenvalues(H)
    ok = in_gamma_m(lam, m, closed=True)
    ok = np.atleast_1d(ok)
    from .core import cone_margin
    margin = cone_margin(lam, m)
    worst = int(np.argmin(margin))
    rep = ConeReport(bool(ok.all()), float(ok.mean()), int(dom.interior[worst]), float(margin[worst]))
    if raise_on_fail and not rep.passed:
        raise CertificationError("barrier leaves the closed cone", worst_node=dom.interior[worst],
                                 value=rep.worst_margin)
    return rep


# --- stiffness search ------------------------------------------------------------------------

def choose_K(spec: DefiningFunction, phi, params: BarrierParams, dom: LatticeDomain | None = None,
             eps: float = 1.0, xi_samples=None) -> float:
    """Smallest K in {1, 2, 4, ...} making the barrier work.

    msh_b: every eigenvalue of K Hess(rho) - I is at least ``eps`` on the closed
    domain.  superharmonic_a: the collar Laplacian test passes at every sampled
    xi (needs ``dom``).
    """
    if params.kind == "msh_b":
        from .domain import _sample_points
        X = _sample_points(spec, 500)
        Hr = spec.complex_hessian(X)
        for k in range(MAX_DOUBLINGS + 1):
            K = float(2 ** k)
            lam = hermitian_eigenvalues(K * Hr - np.eye(spec.n))
            if lam.min() >= eps:
                log.info("choose_K(msh_b) = %g", K)
                return K
        raise CertificationError("stiffness search exceeded 2^20")
    if dom is None:
        raise DomainError("superharmonic stiffness search needs a lattice")
    if xi_samples is None:
        xi_samples = boundary_sample(dom, phi, spacing=4 * dom.h).points
    nodes = collar_nodes(dom)
    for k in range(MAX_DOUBLINGS + 1):
        K = float(2 ** k)
        trial = BarrierParams(M=params.M, K=K, alpha=params.alpha, tau=params.tau, kind=params.kind)
        worst = max(collar_laplacian_max(dom, superharmonic_barrier(spec, phi, xi, trial), nodes)
                    for xi in xi_samples)
        if worst <= 1e-6:
            log.info("choose_K(superharmonic_a) = %g", K)
            return K
    raise CertificationError("stiffness search exceeded 2^20")


# --- envelopes ----------------------------------------------------------------------------------

def _chunks(total, size):
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))


def _chunk_size(nodes: int) -> int:
    return max(1, min(512, 20_000_000 // max(nodes, 1)))


def _sq_dist(A, B):
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def barrier_envelope(dom: LatticeDomain, phi, samples: BoundarySample, params: BarrierParams,
                     K_ext: float | None = None, chunk: int | None = None) -> GridFunction:
    """max_xi b_xi (msh_b) or min_xi (a_xi - K' rho) (superharmonic_a) at active nodes."""
    spec = dom.spec
    act = dom.active
    X = dom.points(act)
    rho = spec.value(X)
    XI = samples.points
    PV = samples.values
    if params.kind == "msh_b":
        out = np.full(act.size, -np.inf)
        for sl in _chunks(len(XI), chunk or _chunk_size(act.size)):
            d2 = _sq_dist(XI[sl], X)
            rho_xi = spec.value(XI[sl])[:, None]
            psi = np.maximum(d2 - params.K * (rho[None, :] - rho_xi), 0.0)
            vals = -params.M * psi ** params.alpha + PV[sl, None]
            out = np.maximum(out, vals.max(axis=0))
        name = "b_env"
    else:
        if K_ext is None:
            K_ext = extension_constant(dom, phi, samples, params)
        out = np.full(act.size, np.inf)
        for sl in _chunks(len(XI), chunk or _chunk_size(act.size)):
            d = np.sqrt(_sq_dist(XI[sl], X))
            vals = (params.K * np.abs(rho[None, :]) ** params.tau + params.M * d ** (2 * params.alpha)
                    + PV[sl, None] - K_ext * rho[None, :])
            out = np.minimum(out, vals.min(axis=0))
        name = "a_env"
    vals = np.full(dom.size, np.nan)
    vals[act] = out
    g = GridFunction(dom, vals, name)
    g.info["K_ext"] = K_ext
    return g


def extension_constant(dom: LatticeDomain, phi, samples: BoundarySample, params: BarrierParams) -> float:
    """Smallest doubling K' with a_xi - K' rho discretely superharmonic on all interior nodes."""
    X = dom.points(dom.interior)
    lap_rho = discrete_laplacian(dom.spec.value, X[:1], dom.h)[0]
    need = 0.0
    for xi in samples.points:
        a = superharmonic_barrier(dom.spec, phi, xi, params)
        need = max(need, float(discrete_laplacian(a, X, dom.h).max()) / lap_rho)
    if need <= 0:
        return 0.0
    for k in range(MAX_DOUBLINGS + 1):
        if 2.0 ** k >= need:
            return float(2 ** k)
    raise CertificationError("extension search exceeded 2^20")


def lipschitz_envelope_bounds(dom: LatticeDomain, phihat: GridFunction, A: float):
    """(A rho + phihat, phihat - A rho) on active nodes."""
    act = dom.active
    rho = dom.rho(act)
    lo = np.full(dom.size, np.nan)
    hi = np.full(dom.size, np.nan)
    lo[act] = A * rho + phihat.values[act]
    hi[act] = phihat.values[act] - A * rho
    return GridFunction(dom, lo, "lower"), GridFunction(dom, hi, "upper")


def sandwich_constant(dom: LatticeDomain, phihat: GridFunction, m: int) -> float:
    """Smallest A in {0, 1, 2, 4, ...} with A rho + phihat and A rho - phihat discretely m-sh."""
    from .solver import cone_violation
    for A in [0.0] + [float(2 ** k) for k in range(MAX_DOUBLINGS + 1)]:
        lo, hi = lipschitz_envelope_bounds(dom, phihat, A)
        minus = GridFunction(dom, -hi.values, "a_rho_minus_phihat")
        if not np.any(cone_violation(lo, m) > 0) and not np.any(cone_violation(minus, m) > 0):
            return A
    raise CertificationError("sandwich constant search exceeded 2^20")


def composite_barrier(dom: LatticeDomain, h_env: GridFunction, A: float, nu: float) -> GridFunction:
    """A rho_nu + h_env sampled on the lattice (rho_0 = rho)."""
    act = dom.active
    vals = np.full(dom.size, np.nan)
    vals[act] = A * rho_nu_value(dom.spec, nu, dom.points(act)) + h_env.values[act]
    return GridFunction(dom, vals, f"b_{nu}")
