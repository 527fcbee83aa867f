"""Sup-convolutions, ball averages, Holder fits and the predicted exponents.

Every regularization comes in two flavours: on a lattice (``GridFunction``)
and along the radius for rotation-invariant profiles (``RadialProfile``).
Distances to the boundary are the conservative |rho| / max|grad rho|.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .data import sampled_holder_norm
from .domain import GridFunction, LatticeDomain, gradient_field, integrate, laplacian_field
from .errors import DomainError, HypothesisViolation
from .solver import RadialProfile

DEFAULT_LADDER = (4, 6, 9, 13, 20)
FLOOR = 1e-12


# --- exponents ------------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentInputs:
    n: int
    m: int
    p: float
    r: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise DomainError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")
        if not self.p > self.n / self.m:
            raise DomainError(f"p={self.p} must exceed n/m={self.n / self.m}")
        if self.r < 1:
            raise DomainError("r must be at least 1")
        if not 0 <= self.nu < 0.5:
            raise DomainError("nu must lie in [0, 1/2)")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def with_r(self, r: float) -> "ExponentInputs":
        return ExponentInputs(self.n, self.m, self.p, r, self.nu)


def gamma_r(inputs: ExponentInputs) -> float:
    """r / (r + m q + p q (n - m) / (p - n/m))."""
    n, m, p, q, r = inputs.n, inputs.m, inputs.p, inputs.q, inputs.r
    return r / (r + m * q + p * q * (n - m) / (p - n / m))


def predicted_exponent(inputs: ExponentInputs, case: str, nu: float | None = None) -> float:
    """Supremal Holder exponent for the cases mcor_a, mcor_b, main_a, main_b."""
    g1 = gamma_r(inputs.with_r(1.0))
    g2 = gamma_r(inputs.with_r(2.0))
    nu = inputs.nu if nu is None else nu
    table = {"mcor_a": 2 * g1, "mcor_b": g2, "main_a": min(nu, g2), "main_b": min(nu, 2 * g1)}
    if case not in table:
        raise DomainError(f"unknown case {case!r}")
    return table[case]


def predicted_table(inputs: ExponentInputs) -> dict:
    return {"case_a": predicted_exponent(inputs, "mcor_a"),
            "case_b": predicted_exponent(inputs, "mcor_b"),
            "main_a": predicted_exponent(inputs, "main_a"),
            "main_b": predicted_exponent(inputs, "main_b")}


# --- lattice regularizations -------------------------------------------------------------------

def omega_delta(dom: LatticeDomain, delta: float) -> np.ndarray:
    """Active nodes whose conservative boundary distance exceeds delta."""
    act = dom.active
    dist = dom.spec.distance_lower_bound(dom.points(act))
    nodes = act[dist > delta]
    if nodes.size == 0:
        raise DomainError(f"Omega_delta is empty for delta={delta}")
    return nodes


def _check_delta(dom, delta):
    if delta < 2 * dom.h - 1e-12:
        raise DomainError(f"delta={delta} below 2h={2 * dom.h}")


def _ball_offsets(d: int, radius: float):
    """Integer offsets with |o| <= radius, plus the sphere crossings of every lattice line."""
    k = int(math.floor(radius + 1e-12))
    grid = np.array(list(product(range(-k, k + 1), repeat=d)), dtype=np.int64)
    r2 = np.sum(grid * grid, axis=1)
    inside = grid[r2 <= radius * radius + 1e-9]
    inside_set = {tuple(o) for o in inside}
    crossings = []  # (offset, axis, sign, fraction)
    for o in inside:
        for a in range(d):
            for s in (1, -1):
                nxt = o.copy()
                nxt[a] += s
                if tuple(nxt) in inside_set:
                    continue
                t = _crossing_fraction(o, a, s, radius)
                if t > 1e-12:
                    crossings.append((o, a, s, t))
    return inside, crossings


def _crossing_fraction(o, a, s, radius):
    """Largest t in [0, 1) with |o + t s e_a| <= radius."""
    rest = float(np.sum(o * o) - o[a] * o[a])
    reach = math.sqrt(max(radius * radius - rest, 0.0))
    t = reach - s * o[a]
    return min(max(t, 0.0), 1.0)


def _flat_offsets(dom, offsets):
    return offsets @ np.asarray(dom.strides, dtype=np.int64)


def sup_convolution(u: GridFunction, delta: float) -> GridFunction:
    """u_delta(z) = max of u over the closed delta-ball, on Omega_delta (nan elsewhere)."""
    dom = u.dom
    _check_delta(dom, delta)
    nodes = omega_delta(dom, delta)
    inside, crossings = _ball_offsets(2 * dom.n, delta / dom.h)
    v = u.values
    best = np.full(nodes.size, -np.inf)
    for off in _flat_offsets(dom, inside):
        best = np.fmax(best, v[nodes + off])
    strides = dom.strides
    for o, a, s, t in crossings:
        base = nodes + int(o @ strides)
        nxt = base + s * strides[a]
        best = np.fmax(best, (1 - t) * v[base] + t * v[nxt])
    out = np.full(dom.size, np.nan)
    out[nodes] = best
    g = GridFunction(dom, out, f"{u.name}_sup")
    g.info["nodes"] = nodes
    g.info["delta"] = delta
    return g


def ball_average(u: GridFunction, delta: float) -> GridFunction:
    """Midpoint-rule mean of u over lattice cells centred in the delta-ball, on Omega_delta."""
    dom = u.dom
    _check_delta(dom, delta)
    nodes = omega_delta(dom, delta)
    inside, _ = _ball_offsets(2 * dom.n, delta / dom.h)
    v = u.values
    acc = np.zeros(nodes.size)
    for off in _flat_offsets(dom, inside):
        acc += v[nodes + off]
    out = np.full(dom.size, np.nan)
    out[nodes] = acc / len(inside)
    g = GridFunction(dom, out, f"{u.name}_avg")
    g.info["nodes"] = nodes
    g.info["delta"] = delta
    return g


# --- radial regularizations ---------------------------------------------------------------------

def _radial_distance(prof: RadialProfile, r):
    return (prof.R ** 2 - np.asarray(r) ** 2) / (2 * prof.R)


def radial_nodes(prof: RadialProfile, delta: float) -> np.ndarray:
    """Knot radii inside the radial Omega_delta."""
    r = np.sqrt(prof.t)
    keep = _radial_distance(prof, r) > delta
    if not np.any(keep):
        raise DomainError(f"Omega_delta is empty for delta={delta}")
    return r[keep]


def radial_sup_convolution(prof: RadialProfile, delta: float, radii=None):
    """(radii, u_delta) for a radial profile: max of g over radii in [r - delta, r + delta]."""
    radii = radial_nodes(prof, delta) if radii is None else np.asarray(radii, dtype=float)
    knots_r = np.sqrt(prof.t)
    lo = np.maximum(radii - delta, 0.0)
    hi = np.minimum(radii + delta, prof.R)
    start = np.searchsorted(knots_r, lo, side="left")
    stop = np.searchsorted(knots_r, hi, side="right")
    padded = np.append(prof.g, -np.inf)
    bounds = np.stack([start, stop], axis=1).ravel()
    inner = np.maximum.reduceat(padded, bounds)[::2]
    inner = np.where(stop > start, inner, -np.inf)
    ends = np.maximum(prof.of_radius(lo), prof.of_radius(hi))
    return radii, np.maximum(inner, ends)


def radial_ball_average(prof: RadialProfile, delta: float, radii=None, order: int = 48):
    """(radii, mean of g over the delta-ball) by Gauss quadrature in (|zeta|, cos angle)."""
    radii = radial_nodes(prof, delta) if radii is None else np.asarray(radii, dtype=float)
    d = 2 * prof.n
    x, wx = roots_legendre(order)
    s = 0.5 * delta * (x + 1)  # |zeta| in [0, delta]
    ws = 0.5 * delta * wx * s ** (d - 1)
    a = (d - 3) / 2.0
    c, wc = roots_jacobi(order, a, a)
    wc = wc / wc.sum()
    ws = ws / ws.sum()
    r = radii[:, None, None]
    t = r ** 2 + s[None, :, None] ** 2 + 2 * r * s[None, :, None] * c[None, None, :]
    vals = prof(np.maximum(t, 0.0))
    return radii, np.einsum("ijk,j,k->i", vals, ws, wc)


def radial_integrate(prof: RadialProfile, radii, values) -> float:
    """Integral over the 2n-ball of a radial quantity sampled on increasing radii (trapezoid in r)."""
    d = 2 * prof.n
    area = 2 * math.pi ** prof.n / math.gamma(prof.n)  # surface of the unit sphere in R^d
    return float(area * np.trapezoid(np.asarray(values) * np.asarray(radii) ** (d - 1), radii))


# --- Holder fit ---------------------------------------------------------------------------------

@dataclass
class HolderReport:
    deltas: list
    sup_diff_maxu: list
    sup_diff_avg: list
    fitted_alpha: float
    r2: float
    alpha_avg: float
    A1: float
    A2: float
    grad_energy: float
    laplacian_mass: float
    predicted: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)
    monotone: bool = True

    def summary(self) -> dict:
        return {"fitted_alpha": self.fitted_alpha, "r2": self.r2, "grad_energy": self.grad_energy,
                "laplacian_mass": self.laplacian_mass, "predicted": dict(self.predicted)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta", "sup_maxdiff", "sup_avgdiff"])
            for row in zip(self.deltas, self.sup_diff_maxu, self.sup_diff_avg):
                w.writerow([repr(float(x)) for x in row])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_dict(self) -> dict:
        return asdict(self)


def default_deltas(h: float, inradius: float) -> list:
    """Geometric ladder {4h, 6h, 9h, 13h, 20h} clipped to a quarter of the inradius."""
    return [k * h for k in DEFAULT_LADDER if k * h <= inradius / 4 + 1e-12]


def loglog_fit(deltas, values):
    """(slope, intercept, r2) of log values against log deltas."""
    x = np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _differences(u, delta):
    """(sup of u_delta - u, sup of avg - u, u_delta - u samples, avg - u samples, weights)."""
    if isinstance(u, RadialProfile):
        radii, up = radial_sup_convolution(u, delta)
        _, ua = radial_ball_average(u, delta, radii)
        base = u.of_radius(radii)
        return up - base, ua - base, radii
    up = sup_convolution(u, delta)
    ua = ball_average(u, delta)
    nodes = up.info["nodes"]
    return up.values[nodes] - u.values[nodes], ua.values[nodes] - u.values[nodes], nodes


def holder_fit(u, deltas=None, inputs: ExponentInputs | None = None) -> HolderReport:
    """Fit sup(u_delta - u) ~ A1 delta^alpha (and the ball-average analogue) over a ladder.

    ``u`` is a GridFunction or a RadialProfile.  alpha is capped at 1.
    """
    if deltas is None:
        if isinstance(u, RadialProfile):
            h = u.R / (len(u.t) - 1)
            deltas = default_deltas(h, u.R)
        else:
            deltas = default_deltas(u.dom.h, u.dom.spec.inradius())
    deltas = sorted(float(d) for d in deltas)
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("deltas must be strictly increasing")
    sup_max, sup_avg, kept, dropped = [], [], [], []
    for d in deltas:
        dmax, davg, _ = _differences(u, d)
        smax = float(np.max(dmax))
        if smax < FLOOR:
            dropped.append(d)
            continue
        kept.append(d)
        sup_max.append(smax)
        sup_avg.append(float(max(np.max(davg), 0.0)))
    if len(kept) < 3:
        raise HypothesisViolation(f"only {len(kept)} usable deltas for the Holder fit")
    slope, _, r2 = loglog_fit(kept, sup_max)
    alpha = min(slope, 1.0)
    pos = [i for i, s in enumerate(sup_avg) if s >= FLOOR]
    if len(pos) >= 3:
        slope_avg, _, _ = loglog_fit([kept[i] for i in pos], [sup_avg[i] for i in pos])
        alpha_avg = min(slope_avg, 1.0)
    else:
        alpha_avg = float("nan")
    A1 = max(s / d ** alpha for s, d in zip(sup_max, kept))
    A2 = max(s / d ** alpha for s, d in zip(sup_avg, kept))
    grad_energy, lap_mass = sobolev_diagnostics(u)
    monotone = all(b >= a - 1e-12 for a, b in zip(sup_max, sup_max[1:]))
    return HolderReport(deltas=kept, sup_diff_maxu=sup_max, sup_diff_avg=sup_avg,
                        fitted_alpha=float(alpha), r2=float(r2), alpha_avg=float(alpha_avg),
                        A1=float(A1), A2=float(A2), grad_energy=grad_energy,
                        laplacian_mass=lap_mass,
                        predicted=predicted_table(inputs) if inputs is not None else {},
                        dropped=dropped, monotone=monotone)


# --- Sobolev diagnostics -----------------------------------------------------------------------

def sobolev_diagnostics(u):
    """(integral of |grad u|^2, integral of the Laplacian of u) by node quadrature."""
    if isinstance(u, RadialProfile):
        return radial_sobolev(u)
    dom = u.dom
    G = gradient_field(u)
    L = laplacian_field(u)
    return integrate(dom, np.sum(G * G, axis=1)), integrate(dom, L)


def radial_sobolev(prof: RadialProfile):
    """Same quantities for g(|z|^2): |grad u|^2 = 4 t g'^2 and Laplacian 4 (n g' + t g'')."""
    t = prof.t
    r = np.sqrt(t)
    gp, gpp = prof.gp, prof.gpp
    return (radial_integrate(prof, r, 4 * t * gp ** 2),
            radial_integrate(prof, r, 4 * (prof.n * gp + t * gpp)))


# --- integral estimates -----------------------------------------------------------------------

@dataclass
class IntegralReport:
    deltas: list
    l2_integrals: list
    l1_integrals: list
    slope_L2: float
    slope_L1: float
    l1_skipped: bool
    c_n_L2: float
    c_n_L1: float


def lemma_hele2_check(u, deltas) -> IntegralReport:
    """Slopes of the integrals of (u_delta - u)^2 and of (avg_delta - u) over Omega_delta."""
    deltas = sorted(float(d) for d in deltas)
    l2, l1 = [], []
    for d in deltas:
        dmax, davg, where = _differences(u, d)
        if isinstance(u, RadialProfile):
            l2.append(radial_integrate(u, where, dmax ** 2))
            l1.append(radial_integrate(u, where, davg))
        else:
            l2.append(integrate(u.dom, dmax ** 2))
            l1.append(integrate(u.dom, davg))
    grad_energy, _ = sobolev_diagnostics(u)
    usable2 = [(d, v) for d, v in zip(deltas, l2) if v > FLOOR]
    if len(usable2) < 2:
        raise HypothesisViolation("too few nonzero integrals for the L2 slope")
    slope2 = loglog_fit(*zip(*usable2))[0] if len(usable2) > 2 else \
        math.log(usable2[1][1] / usable2[0][1]) / math.log(usable2[1][0] / usable2[0][0])
    usable1 = [(d, v) for d, v in zip(deltas, l1) if v > FLOOR]
    skipped = len(usable1) < 2
    if skipped:
        slope1 = float("nan")
    elif len(usable1) > 2:
        slope1 = loglog_fit(*zip(*usable1))[0]
    else:
        slope1 = math.log(usable1[1][1] / usable1[0][1]) / math.log(usable1[1][0] / usable1[0][0])
    denom = max(grad_energy, FLOOR)
    cn2 = max(v / (denom * d ** 2) for d, v in zip(deltas, l2))
    cn1 = max(v / (denom * d ** 2) for d, v in zip(deltas, l1))
    return IntegralReport(deltas, l2, l1, float(slope2), float(slope1), skipped, float(cn2), float(cn1))


# --- boundary collar -------------------------------------------------------------------------

@dataclass
class CollarReport:
    deltas: list
    ratios: list
    c0: float
    passed: bool


def _rim_nodes(dom: LatticeDomain, nodes):
    """Nodes of Omega_delta with an axis neighbour outside it."""
    mask = np.zeros(dom.size, dtype=bool)
    mask[nodes] = True
    rim = np.zeros(nodes.size, dtype=bool)
    for s in dom.strides:
        for sign in (1, -1):
            nb = nodes + sign * s
            rim |= ~mask[nb]
    return nodes[rim]


def boundary_collar_check(u: GridFunction, h_env: GridFunction, b_composite: GridFunction,
                          deltas, nu: float, order_tol: float | None = None) -> CollarReport:
    """max over the rim of Omega_delta of (u_delta - u) / delta^nu against c0 = 2|h|_nu + |b|_nu."""
    dom = u.dom
    if not 0 < nu <= 1:
        raise DomainError("nu must lie in (0, 1]")
    tol = 10 * dom.h ** 2 if order_tol is None else order_tol
    act = dom.active
    if np.any(b_composite.values[act] > u.values[act] + tol):
        raise DomainError("composite barrier does not minorize u")
    X = dom.points(act)
    c0 = (2 * sampled_holder_norm(None, X, nu, values=h_env.values[act])
          + sampled_holder_norm(None, X, nu, values=b_composite.values[act]))
    ratios = []
    for d in sorted(deltas):
        up = sup_convolution(u, d)
        rim = _rim_nodes(dom, up.info["nodes"])
        ratios.append(float(np.max(up.values[rim] - u.values[rim])) / d ** nu)
    return CollarReport(list(sorted(deltas)), ratios, float(c0), bool(max(ratios) <= 2 * c0))
