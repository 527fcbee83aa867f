"""Defining functions, lattices over the closed domain, and grid functions."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import elementary_symmetric_all, hermitian_eigenvalues, normalization
from .errors import CertificationError, DomainError, ResolutionError

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2


def to_complex(X):
    """(…, 2n) real points -> (…, n) complex points."""
    X = np.asarray(X, dtype=float)
    return X[..., 0::2] + 1j * X[..., 1::2]


def to_real(Z):
    Z = np.asarray(Z, dtype=complex)
    out = np.empty(Z.shape[:-1] + (2 * Z.shape[-1],))
    out[..., 0::2] = Z.real
    out[..., 1::2] = Z.imag
    return out


@dataclass(frozen=True)
class DefiningFunction:
    """rho(z) = sum_j a_j |z_j|^2 - c for a ball or an ellipsoid.

    A ball of radius R has ``a = (1, ..., 1)`` and ``c = R^2``; an ellipsoid has
    ``c = 1``.
    """

    kind: str
    a: tuple
    c: float = 1.0

    @classmethod
    def ball(cls, R: float = 1.0, n: int = 2) -> "DefiningFunction":
        if R <= 0:
            raise DomainError("ball radius must be positive")
        return cls("ball", (1.0,) * n, float(R) ** 2)

    @classmethod
    def ellipsoid(cls, a) -> "DefiningFunction":
        a = tuple(float(x) for x in a)
        if any(x == 0 for x in a):
            raise DomainError("ellipsoid coefficients must be nonzero")
        return cls("ellipsoid", a, 1.0)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def R(self) -> float:
        return math.sqrt(self.c)

    @property
    def bounded(self) -> bool:
        return all(x > 0 for x in self.a)

    def _weights(self):
        return np.repeat(np.asarray(self.a), 2)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return np.sum(self._weights() * X * X, axis=-1) - self.c

    def gradient(self, X):
        """Real gradient in R^{2n}."""
        X = np.asarray(X, dtype=float)
        return 2.0 * self._weights() * X

    def complex_gradient(self, X):
        """d rho / d z_j = a_j conj(z_j)."""
        return np.asarray(self.a) * np.conj(to_complex(X))

    def complex_hessian(self, X=None):
        H = np.diag(np.asarray(self.a, dtype=complex))
        if X is None:
            return H
        shape = np.asarray(X).shape[:-1]
        return np.broadcast_to(H, shape + H.shape).copy()

    def half_widths(self):
        return np.repeat(1.0 / np.sqrt(np.abs(self.a)) * math.sqrt(self.c), 2)

    def inradius(self) -> float:
        return float(self.half_widths().min())

    def max_gradient(self) -> float:
        """max |grad rho| over the closed domain (attained on the boundary)."""
        return 2.0 * math.sqrt(self.c) * math.sqrt(max(abs(x) for x in self.a))

    def distance_lower_bound(self, X):
        """|rho| / max|grad rho|, a lower bound for dist(z, boundary) on a convex domain."""
        return np.abs(self.value(X)) / self.max_gradient()

    def volume(self) -> float:
        if not self.bounded:
            raise DomainError("unbounded domain has no volume")
        n = self.n
        return math.pi ** n * self.c ** n / (math.factorial(n) * float(np.prod(self.a)))

    def ray_boundary_point(self, X0, direction):
        """Solve rho(X0 + s d) = 0 for s > 0; X0 inside."""
        X0 = np.asarray(X0, dtype=float)
        d = np.asarray(direction, dtype=float)
        w = self._weights()
        A = np.sum(w * d * d, axis=-1)
        B = 2.0 * np.sum(w * X0 * d, axis=-1)
        C = self.value(X0)
        s = (-B + np.sqrt(B * B - 4 * A * C)) / (2 * A)
        return X0 + s[..., None] * d if np.ndim(s) else X0 + s * d


def bracket_root(rho, X0, step, frac_hi=None, iters=60):
    """Fractions s in (0, 1] with rho(X0 + s*step) = 0, by bisection.

    Requires rho(X0) <= 0 < rho(X0 + step) row by row.
    """
    X0 = np.asarray(X0, dtype=float)
    step = np.asarray(step, dtype=float)
    lo = np.zeros(X0.shape[0])
    hi = np.ones(X0.shape[0]) if frac_hi is None else np.asarray(frac_hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = rho(X0 + mid[:, None] * step) <= 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return hi


def stencil_offsets(d: int):
    """Multi-index offsets of the second-difference stencil in R^d."""
    offs = []
    for a in range(d):
        for s in (1, -1):
            e = np.zeros(d, dtype=int)
            e[a] = s
            offs.append(e)
    for a, b in itertools.combinations(range(d), 2):
        for sa, sb in itertools.product((1, -1), repeat=2):
            e = np.zeros(d, dtype=int)
            e[a], e[b] = sa, sb
            offs.append(e)
    return np.array(offs)


@dataclass(eq=False)
class LatticeDomain:
    spec: DefiningFunction
    h: float
    origin: np.ndarray
    dims: tuple
    cls: np.ndarray  # flat node classes
    theta: np.ndarray  # (n_boundary, 2n, 2) axis fractions, nan where no crossing
    bnd_point: np.ndarray  # (n_boundary, 2n) chosen boundary point per boundary node
    bnd_theta: np.ndarray  # (n_boundary,) fraction along the chosen direction
    bnd_inward: np.ndarray  # (n_boundary,) flat index of the inward neighbor or -1
    strides: tuple = field(init=False)
    interior: np.ndarray = field(init=False)
    boundary: np.ndarray = field(init=False)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.dims = tuple(int(x) for x in self.dims)
        st = np.cumprod((1,) + self.dims[::-1])[:-1][::-1]
        self.strides = tuple(int(x) for x in st)
        self.interior = np.flatnonzero(self.cls == INTERIOR)
        self.boundary = np.flatnonzero(self.cls == BOUNDARY)
        self.cls.setflags(write=False)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def active(self) -> np.ndarray:
        """Interior and boundary-adjacent nodes, sorted."""
        return np.flatnonzero(self.cls != EXTERIOR)

    @property
    def cell_volume(self) -> float:
        return self.h ** (2 * self.n)

    def flat_index(self, node) -> int:
        node = tuple(int(i) for i in node)
        if len(node) != 2 * self.n or any(not 0 <= i < d for i, d in zip(node, self.dims)):
            raise DomainError(f"node {node} outside the lattice")
        return int(np.ravel_multi_index(node, self.dims))

    def multi_index(self, flat):
        return np.stack(np.unravel_index(np.asarray(flat), self.dims), axis=-1)

    def node_class(self, node) -> int:
        return int(self.cls[self.flat_index(node)])

    def is_interior_flat(self, flat) -> bool:
        return bool(self.cls[flat] == INTERIOR)

    def points(self, flat=None):
        """Real coordinates of nodes (all lattice nodes when ``flat`` is None)."""
        if flat is None:
            flat = np.arange(self.size)
        return self.origin + self.h * self.multi_index(flat)

    def nearest_node(self, X):
        idx = np.rint((np.asarray(X, dtype=float) - self.origin) / self.h).astype(int)
        return tuple(int(i) for i in idx)

    def rho(self, flat=None):
        return self.spec.value(self.points(flat))


def make_domain(spec: DefiningFunction, h: float) -> LatticeDomain:
    """Lattice over a bounding box of the domain with a one-cell margin."""
    if h <= 0:
        raise DomainError("spacing must be positive")
    if not spec.bounded:
        raise DomainError("only bounded domains can be discretized")
    widths = spec.half_widths()
    if h >= 0.25 * 2 * widths.min():
        raise ResolutionError(f"h={h} is not below a quarter of the narrowest width")
    K = np.ceil(widths / h).astype(int) + 1
    dims = tuple(2 * K + 1)
    origin = -K * h
    d = 2 * spec.n

    grids = np.meshgrid(*[origin[a] + h * np.arange(dims[a]) for a in range(d)], indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=-1)
    rho = spec.value(X)
    del grids, X

    closed = rho <= 0
    cand = np.flatnonzero(rho < 0)
    if cand.size == 0:
        raise ResolutionError("no lattice node lies inside the domain")
    st = np.cumprod((1,) + dims[::-1])[:-1][::-1]
    offsets = stencil_offsets(d)
    flat_offsets = offsets @ st
    ok = np.ones(cand.size, dtype=bool)
    for off in flat_offsets:
        ok &= closed[cand + off]
    cls = np.zeros(rho.size, dtype=np.int8)
    cls[closed] = BOUNDARY
    cls[cand[ok]] = INTERIOR
    if not ok.any():
        raise ResolutionError("no interior node at this resolution")

    bnd = np.flatnonzero(cls == BOUNDARY)
    mi = np.stack(np.unravel_index(bnd, dims), axis=-1)
    Xb = origin + h * mi
    nb = bnd.size

    # axis crossings
    theta = np.full((nb, d, 2), np.nan)
    for a in range(d):
        for j, s in enumerate((1, -1)):
            nbr = bnd + s * st[a]
            hit = (rho[nbr] > 0) & (rho[bnd] < 0)
            if hit.any():
                step = np.zeros((hit.sum(), d))
                step[:, a] = s * h
                theta[hit, a, j] = bracket_root(spec.value, Xb[hit], step)

    # nearest crossing over the full stencil, used for boundary interpolation
    best = np.full(nb, np.inf)
    bnd_theta = np.zeros(nb)
    bnd_point = Xb.copy()
    bnd_inward = np.full(nb, -1, dtype=np.int64)
    on_surface = rho[bnd] == 0
    best[on_surface] = 0.0
    for off, foff in zip(offsets, flat_offsets):
        nbr = bnd + foff
        hit = (rho[nbr] > 0) & ~on_surface
        if not hit.any():
            continue
        step = np.broadcast_to(h * off.astype(float), (hit.sum(), d))
        frac = bracket_root(spec.value, Xb[hit], step)
        dist = frac * h * np.linalg.norm(off)
        rows = np.flatnonzero(hit)
        better = dist < best[rows]
        rows = rows[better]
        best[rows] = dist[better]
        bnd_theta[rows] = frac[better]
        bnd_point[rows] = Xb[rows] + frac[better, None] * h * off
        inward = bnd[rows] - foff
        inward_ok = closed[inward]
        bnd_inward[rows] = np.where(inward_ok, inward, -1)

    return LatticeDomain(spec=spec, h=float(h), origin=origin, dims=dims, cls=cls,
                         theta=theta, bnd_point=bnd_point, bnd_theta=bnd_theta,
                         bnd_inward=bnd_inward)


def boundary_points(dom: LatticeDomain) -> np.ndarray:
    """Lattice-ray intersections with the boundary (axis crossings of boundary nodes)."""
    pts = []
    Xb = dom.points(dom.boundary)
    d = 2 * dom.n
    for a in range(d):
        for j, s in enumerate((1, -1)):
            th = dom.theta[:, a, j]
            hit = ~np.isnan(th)
            P = Xb[hit].copy()
            P[:, a] += s * th[hit] * dom.h
            pts.append(P)
    on = dom.spec.value(Xb) == 0
    pts.append(Xb[on])
    return np.concatenate(pts, axis=0)


# --- grid functions -----------------------------------------------------------

@dataclass(eq=False)
class GridFunction:
    """Real values on the lattice; exterior nodes hold nan."""

    dom: LatticeDomain
    values: np.ndarray
    name: str = "u"
    info: dict = field(default_factory=dict)

    @classmethod
    def from_function(cls, dom: LatticeDomain, func, name: str = "u") -> "GridFunction":
        vals = np.full(dom.size, np.nan)
        act = dom.active
        vals[act] = func(dom.points(act))
        return cls(dom, vals, name)

    @classmethod
    def zeros(cls, dom: LatticeDomain, name: str = "u") -> "GridFunction":
        return cls.from_function(dom, lambda X: np.zeros(X.shape[0]), name)

    def copy(self, name=None) -> "GridFunction":
        return GridFunction(self.dom, self.values.copy(), name or self.name)

    def at(self, node) -> float:
        return float(self.values[self.dom.flat_index(node)])

    def interior_values(self):
        return self.values[self.dom.interior]

    def active_values(self):
        return self.values[self.dom.active]

    def with_values(self, values, name=None) -> "GridFunction":
        return GridFunction(self.dom, np.asarray(values, dtype=float), name or self.name)


# --- pseudoconvexity and rho_nu ------------------------------------------------

@dataclass
class PseudoconvexityCertificate:
    m: int
    sigma: float
    worst_node: np.ndarray


def _sample_points(spec: DefiningFunction, samples: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    d = 2 * spec.n
    w = spec.half_widths()
    X = rng.uniform(-w, w, size=(max(samples, 1), d))
    X = X[spec.value(X) <= 0]
    dirs = rng.normal(size=(max(samples // 4, 1), d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    B = spec.ray_boundary_point(np.zeros((dirs.shape[0], d)), dirs) if spec.bounded else np.empty((0, d))
    return np.concatenate([np.zeros((1, d)), X, B], axis=0)


def certify_pseudoconvexity(spec: DefiningFunction, m: int, samples: int = 2000) -> PseudoconvexityCertificate:
    """Smallest k-Hessian density c_nk sigma_k of rho over samples of the closed domain, k <= m."""
    n = spec.n
    if not 1 <= m <= n:
        raise DomainError(f"m={m} outside 1..{n}")
    X = _sample_points(spec, samples)
    lam = hermitian_eigenvalues(spec.complex_hessian(X))
    e = elementary_symmetric_all(lam, m)[:, 1:]
    dens = e * np.array([normalization(n, k) for k in range(1, m + 1)])
    per_point = dens.min(axis=1)
    worst = int(np.argmin(per_point))
    sigma = float(per_point[worst])
    if sigma <= 0:
        raise CertificationError(f"rho is not strongly {m}-pseudoconvex (sigma={sigma:g})",
                                 worst_node=X[worst], value=sigma)
    return PseudoconvexityCertificate(m=m, sigma=sigma, worst_node=X[worst])


def _check_nu(nu):
    if not 0 <= nu < 0.5:
        raise DomainError(f"nu={nu} outside [0, 1/2)")


def rho_nu_value(spec: DefiningFunction, nu: float, z):
    """-|rho(z)|^(1 - nu)."""
    _check_nu(nu)
    r = spec.value(z)
    return -np.abs(r) ** (1.0 - nu)


def rho_nu_hessian(spec: DefiningFunction, nu: float, z):
    """Complex Hessian of -|rho|^(1-nu) at interior points.

    (1-nu)|rho|^-nu Hess(rho) + nu(1-nu)|rho|^(-1-nu) (d rho)(d rho)^*.
    """
    _check_nu(nu)
    z = np.asarray(z, dtype=float)
    r = np.abs(spec.value(z))
    if np.any(r == 0):
        raise DomainError("rho_nu Hessian is singular on the boundary")
    g = spec.complex_gradient(z)
    outer = g[..., :, None] * np.conj(g[..., None, :])
    H = spec.complex_hessian(z)
    r = np.asarray(r)[..., None, None]
    return (1 - nu) * r ** (-nu) * H + nu * (1 - nu) * r ** (-1 - nu) * outer


def rho_nu_gradient(spec: DefiningFunction, nu: float, z):
    """Real gradient of rho_nu: (1-nu)|rho|^-nu grad rho."""
    _check_nu(nu)
    r = np.abs(spec.value(z))
    return (1 - nu) * (r ** (-nu))[..., None] * spec.gradient(z)


# --- grid file format ----------------------------------------------------------

def write_grid(path, u: GridFunction, field_name: str | None = None) -> None:
    dom = u.dom
    header = "n={} h={!r} origin={} dims={} field={}".format(
        dom.n, dom.h, ",".join(repr(float(x)) for x in dom.origin),
        ",".join(str(x) for x in dom.dims), field_name or u.name)
    vals = np.where(dom.cls == EXTERIOR, np.nan, u.values)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for v in vals:
            fh.write("nan\n" if np.isnan(v) else repr(float(v)) + "\n")


def read_grid(path, dom: LatticeDomain | None = None):
    """Read a grid file; returns (header, values) or a GridFunction when ``dom`` is given."""
    with open(path) as fh:
        header_line = fh.readline().strip()
        vals = np.array([float(line) for line in fh if line.strip()])
    header = {}
    for tok in header_line.split():
        key, _, val = tok.partition("=")
        header[key] = val
    header["n"] = int(header["n"])
    header["h"] = float(header["h"])
    header["origin"] = np.array([float(x) for x in header["origin"].split(",")])
    header["dims"] = tuple(int(x) for x in header["dims"].split(","))
    if vals.size != int(np.prod(header["dims"])):
        raise DomainError("value count does not match dims")
    if dom is None:
        return header, vals
    if (header["n"] != dom.n or header["dims"] != dom.dims or abs(header["h"] - dom.h) > 1e-15
            or not np.allclose(header["origin"], dom.origin, rtol=0, atol=1e-12)):
        raise DomainError("grid file does not match the lattice")
    return GridFunction(dom, vals, header.get("field", "u"))


# --- lattice calculus used by the quadratures ------------------------------------

def _axis_stencils(u: GridFunction, nodes, a):
    dom = u.dom
    s = dom.strides[a]
    active = dom.cls != EXTERIOR
    fwd = nodes + s
    bwd = nodes - s
    fwd2 = nodes + 2 * s
    bwd2 = nodes - 2 * s
    size = dom.size

    def ok(idx):
        good = (idx >= 0) & (idx < size)
        out = np.zeros(idx.shape, dtype=bool)
        out[good] = active[idx[good]]
        return out

    return fwd, bwd, fwd2, bwd2, ok(fwd), ok(bwd), ok(fwd2), ok(bwd2)


def gradient_field(u: GridFunction, nodes=None):
    """Real gradient at active nodes; centered where possible, else second-order one-sided."""
    dom = u.dom
    if nodes is None:
        nodes = dom.active
    v = u.values
    h = dom.h
    G = np.zeros((nodes.size, 2 * dom.n))
    for a in range(2 * dom.n):
        fwd, bwd, fwd2, bwd2, of, ob, of2, ob2 = _axis_stencils(u, nodes, a)
        c = of & ob
        G[c, a] = (v[fwd[c]] - v[bwd[c]]) / (2 * h)
        f = ~c & of & of2
        G[f, a] = (-3 * v[nodes[f]] + 4 * v[fwd[f]] - v[fwd2[f]]) / (2 * h)
        b = ~c & ~f & ob & ob2
        G[b, a] = (3 * v[nodes[b]] - 4 * v[bwd[b]] + v[bwd2[b]]) / (2 * h)
    return G


def laplacian_field(u: GridFunction, nodes=None):
    """Real Laplacian at active nodes; one-sided second differences next to the boundary."""
    dom = u.dom
    if nodes is None:
        nodes = dom.active
    v = u.values
    h2 = dom.h ** 2
    L = np.zeros(nodes.size)
    for a in range(2 * dom.n):
        fwd, bwd, fwd2, bwd2, of, ob, of2, ob2 = _axis_stencils(u, nodes, a)
        c = of & ob
        L[c] += (v[fwd[c]] - 2 * v[nodes[c]] + v[bwd[c]]) / h2
        f = ~c & of & of2
        L[f] += (v[nodes[f]] - 2 * v[fwd[f]] + v[fwd2[f]]) / h2
        b = ~c & ~f & ob & ob2
        L[b] += (v[nodes[b]] - 2 * v[bwd[b]] + v[bwd2[b]]) / h2
    return L


def integrate(dom: LatticeDomain, values) -> float:
    """Node quadrature: sum of values times the cell volume h^(2n)."""
    return float(np.sum(values) * dom.cell_volume)
