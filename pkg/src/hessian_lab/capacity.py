"""m-capacity through relative extremal functions, and the inequalities built on it.

The relative extremal function of E is the largest discrete m-sh v with
v <= 0 and v <= -1 on E; it is computed by the same parity-class sweeps as the
Dirichlet solver with the obstacle applied after every local update.  The
capacity is the Hessian mass of 1 + v on E and a one-cell collar around it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .core import hessian_stack, normalization, operator_values
from .domain import GridFunction, LatticeDomain, integrate
from .errors import ConvergenceError, DomainError, HypothesisViolation
from .regularity import ExponentInputs, gamma_r, loglog_fit
from .solver import (SolveConfig, _parity_classes, cone_violation, matrix_sigmas, radial_solve,
                     solve_shift)


# --- compact sets ------------------------------------------------------------------------------

@dataclass
class CompactSet:
    """Indicator of lattice nodes; nonempty sets must sit at distance > 2h from the boundary."""

    dom: LatticeDomain
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.dom.size,):
            raise DomainError("mask does not match the lattice")
        if np.any(self.mask & (self.dom.cls == 0)):
            raise DomainError("compact set leaves the domain")
        nodes = self.nodes
        if nodes.size:
            dist = self.dom.spec.distance_lower_bound(self.dom.points(nodes))
            if np.any(dist <= 2 * self.dom.h):
                raise DomainError("compact set is not strictly interior (needs dist > 2h)")

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    @property
    def volume(self) -> float:
        return float(self.mask.sum() * self.dom.cell_volume)

    @classmethod
    def empty_set(cls, dom: LatticeDomain) -> "CompactSet":
        return cls(dom, np.zeros(dom.size, dtype=bool))

    @classmethod
    def ball(cls, dom: LatticeDomain, r: float, center=None) -> "CompactSet":
        center = np.zeros(2 * dom.n) if center is None else np.asarray(center, dtype=float)
        act = dom.active
        d = np.linalg.norm(dom.points(act) - center, axis=1)
        mask = np.zeros(dom.size, dtype=bool)
        mask[act[d <= r + 1e-12]] = True
        return cls(dom, mask)

    @classmethod
    def from_values(cls, u: GridFunction, level: float) -> "CompactSet":
        """Nodes where u < level."""
        dom = u.dom
        mask = np.zeros(dom.size, dtype=bool)
        act = dom.active
        mask[act] = u.values[act] < level
        return cls(dom, mask)


def _neighbourhood(dom: LatticeDomain, nodes) -> np.ndarray:
    """nodes together with every node one lattice step away (diagonals included)."""
    d = 2 * dom.n
    offs = np.array([o for o in product((-1, 0, 1), repeat=d)], dtype=np.int64)
    flat = offs @ np.asarray(dom.strides, dtype=np.int64)
    out = np.unique((nodes[:, None] + flat[None, :]).ravel())
    return out[dom.cls[out] != 0]


# --- the relative extremal function --------------------------------------------------------------

def relative_extremal(dom: LatticeDomain, E: CompactSet, m: int, cfg: SolveConfig | None = None) -> GridFunction:
    """Largest discrete m-sh v with v <= 0 on the domain, v <= -1 on E, v = 0 next to the boundary.

    The sweeps decrease monotonically from the obstacle; they stop when the
    largest update is below ``cfg.tol`` (default 1e-12, tight enough for the
    closed-cone test at free nodes).
    """
    cfg = cfg or SolveConfig(m=m, tol=1e-12)
    n = dom.n
    if not 1 <= m <= n:
        raise DomainError(f"m={m} outside 1..{n}")
    if E.dom is not dom:
        raise DomainError("compact set lives on another lattice")
    vals = np.full(dom.size, np.nan)
    vals[dom.active] = 0.0
    obstacle = np.zeros(dom.size)
    obstacle[E.mask] = -1.0
    vals[E.mask] = -1.0
    history = []
    if E.empty:
        v = GridFunction(dom, vals, "extremal")
        v.info.update(history=history, sweeps=0)
        return v
    classes = _parity_classes(dom)
    h2 = dom.h ** 2
    change = np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        change = 0.0
        for nodes in classes:
            sig = matrix_sigmas(hessian_stack(vals, dom.strides, dom.h, nodes, n), m)
            s = solve_shift(sig, np.zeros(nodes.size), n, m, rtol=cfg.bisection_tol)
            new = np.minimum(vals[nodes] - s * h2, obstacle[nodes])
            new = np.maximum(new, -1.0)
            change = max(change, float(np.max(np.abs(new - vals[nodes]), initial=0.0)))
            vals[nodes] = new
        history.append((sweep, change))
        if change <= cfg.tol:
            break
    v = GridFunction(dom, vals, "extremal")
    v.info.update(history=history, sweeps=len(history))
    if change > cfg.tol:
        raise ConvergenceError(f"extremal sweeps stalled at change {change:.3e}", history)
    return v


@dataclass
class ExtremalCheck:
    bounds_ok: bool
    on_set_ok: bool
    boundary_ok: bool
    cone_ok: bool

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.on_set_ok and self.boundary_ok and self.cone_ok


def check_extremal(v: GridFunction, E: CompactSet, m: int) -> ExtremalCheck:
    dom = v.dom
    act = dom.active
    vals = v.values
    bounds = bool(np.all((vals[act] >= -1 - 1e-12) & (vals[act] <= 1e-12)))
    on_set = bool(np.all(np.abs(vals[E.mask] + 1) <= 1e-8))
    boundary = bool(np.all(vals[dom.boundary] == 0.0))
    obstacle = np.where(E.mask, -1.0, 0.0)
    free = dom.interior[np.abs(vals[dom.interior] - obstacle[dom.interior]) > 1e-10]
    cone = bool(free.size == 0 or not np.any(cone_violation(v, m, free) > 0))
    return ExtremalCheck(bounds, on_set, boundary, cone)


# --- capacity --------------------------------------------------------------------------------------

@dataclass
class CapacityEstimate:
    value: float
    extremal: GridFunction
    lower_bound: float
    competitors: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return self.lower_bound <= self.value * 1.1 + 1e-15


def hessian_mass(u: GridFunction, m: int, nodes) -> float:
    """Sum of the discrete m-Hessian density over the interior nodes among ``nodes``, times h^(2n)."""
    dom = u.dom
    nodes = np.asarray(nodes)
    nodes = nodes[dom.cls[nodes] == 2]
    if nodes.size == 0:
        return 0.0
    return integrate(dom, operator_values(u, m, nodes))


def _competitors(dom: LatticeDomain, E: CompactSet):
    """Admissible functions with 0 <= w <= 1: a rescaled defining function and a centred quadratic."""
    act = dom.active
    X = dom.points(act)
    rho = dom.spec.value(X)
    out = {}
    vals = np.full(dom.size, np.nan)
    vals[act] = 1.0 + rho / np.abs(rho).max()
    out["scaled_defining"] = GridFunction(dom, vals, "w_rho")
    center = dom.points(E.nodes).mean(axis=0)
    d2 = np.sum((X - center) ** 2, axis=1)
    vals = np.full(dom.size, np.nan)
    vals[act] = d2 / d2.max()
    out["quadratic"] = GridFunction(dom, vals, "w_quad")
    return out


def capacity_m(dom: LatticeDomain, E: CompactSet, m: int, cfg: SolveConfig | None = None) -> CapacityEstimate:
    v = relative_extremal(dom, E, m, cfg)
    if E.empty:
        return CapacityEstimate(0.0, v, 0.0)
    region = _neighbourhood(dom, E.nodes)
    shifted = v.with_values(v.values + 1.0, "one_plus_extremal")
    value = hessian_mass(shifted, m, region)
    comps = {}
    for name, w in _competitors(dom, E).items():
        if np.any(cone_violation(w, m) > 0):
            continue
        comps[name] = hessian_mass(w, m, E.nodes)
    lower = max(comps.values(), default=0.0)
    return CapacityEstimate(float(value), v, float(lower), comps)


# --- radial capacity oracle ------------------------------------------------------------------------

def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def radial_capacity(n: int, m: int, r: float, R: float = 1.0, knots: int = 400) -> float:
    """cap_m of the closed r-ball in the R-ball from the radial extremal profile.

    The Hessian mass of g(|z|^2) on a ball of squared radius t is
    V_2n(1) t^n g'(t)^m, so the capacity is that quantity just outside r^2.
    """
    if not 0 < r < R:
        raise DomainError("need 0 < r < R")
    prof = radial_solve(n, m, R, lambda t: np.zeros_like(t), 0.0, knots=knots,
                        t_min=r * r, g_min=-1.0)
    g, dt = prof.g, prof.dt
    slope = (-3 * g[0] + 4 * g[1] - g[2]) / (2 * dt)
    return unit_ball_volume(2 * n) * prof.t[0] ** n * slope ** m


def radial_capacity_closed_form(n: int, m: int, r: float, R: float = 1.0) -> float:
    """Same capacity from the homogeneous profile: -t^(1-n/m) for m < n, log t for m = n."""
    V = unit_ball_volume(2 * n)
    if m == n:
        # v = -log(R^2/t)/log(R^2/r^2); t g' = 1/log(R^2/r^2)
        return V / math.log(R * R / (r * r)) ** m
    k = 1.0 - n / m
    # v = (t^k - R^2k)/(R^2k - r^2k) shape: g' = k t^(k-1)/(R^2k - r^2k)
    scale = k / (R ** (2 * k) - r ** (2 * k))
    return V * (r * r) ** n * (scale * (r * r) ** (k - 1)) ** m


# --- volume against capacity ---------------------------------------------------------------------

def capacity_tau(n: int, m: int) -> float:
    """0.9 n/(n - m); for m = n, where every finite exponent is admissible, 0.9 n."""
    return 0.9 * n / (n - m) if m < n else 0.9 * n


@dataclass
class VolumeCapacityReport:
    radii: list
    volumes: list
    capacities: list
    tau: float
    ratios: list
    tau_fit: float | None
    spread: float

    @property
    def passed(self) -> bool:
        return self.spread <= 10.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "volume", "capacity"])
            for row in zip(self.radii, self.volumes, self.capacities):
                w.writerow([repr(float(x)) for x in row])


def _volume_capacity_report(radii, vols, caps, tau):
    if any(c <= 0 for c in caps):
        raise HypothesisViolation("capacity of a nonempty set vanished")
    ratios = [v / c ** tau for v, c in zip(vols, caps)]
    fit = loglog_fit(caps, vols)[0] if len(radii) > 1 else None
    spread = max(ratios) / min(ratios)
    return VolumeCapacityReport(list(radii), list(vols), list(caps), tau, ratios, fit, spread)


def volume_capacity_check(dom: LatticeDomain, m: int, radii, cfg: SolveConfig | None = None):
    vols, caps = [], []
    for r in radii:
        E = CompactSet.ball(dom, r)
        vols.append(E.volume)
        caps.append(capacity_m(dom, E, m, cfg).value)
    return _volume_capacity_report(radii, vols, caps, capacity_tau(dom.n, m))


def radial_volume_capacity_check(n: int, m: int, radii, R: float = 1.0, knots: int = 400):
    vols = [unit_ball_volume(2 * n) * r ** (2 * n) for r in radii]
    caps = [radial_capacity(n, m, r, R, knots) for r in radii]
    return _volume_capacity_report(radii, vols, caps, capacity_tau(n, m))


# --- sublevel sets ---------------------------------------------------------------------------------

@dataclass
class SublevelReport:
    s: float
    t: float
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= 1.1 * self.rhs + 1e-15


class CapacityCache:
    """Capacities keyed by the node set, so equal sublevel sets are solved once."""

    def __init__(self, dom: LatticeDomain, m: int, cfg: SolveConfig | None = None):
        self.dom, self.m, self.cfg = dom, m, cfg
        self._store = {}

    def __call__(self, E: CompactSet) -> float:
        key = E.nodes.tobytes()
        if key not in self._store:
            self._store[key] = capacity_m(self.dom, E, self.m, self.cfg).value
        return self._store[key]


def sublevel_capacity_check(phi: GridFunction, psi: GridFunction, f: GridFunction, m: int,
                            s: float, t: float, boundary_tol: float = 1e-9,
                            cache: CapacityCache | None = None) -> SublevelReport:
    """lhs = t^m cap({phi - psi < -s - t}), rhs = integral of f over {phi - psi < -s}."""
    dom = phi.dom
    if psi.dom is not dom or f.dom is not dom:
        raise DomainError("phi, psi and f must share a lattice")
    diff = phi.with_values(phi.values - psi.values, "phi_minus_psi")
    # prefer the recorded boundary data; boundary-adjacent values also carry interior information
    if "phi_b" in phi.info and "phi_b" in psi.info:
        bdiff = np.asarray(phi.info["phi_b"]) - np.asarray(psi.info["phi_b"])
    else:
        bdiff = diff.values[dom.boundary]
    if np.any(bdiff < -boundary_tol):
        raise DomainError("boundary precondition phi >= psi fails")
    cache = cache or CapacityCache(dom, m)
    E = CompactSet.from_values(diff, -s - t)
    lhs = t ** m * (0.0 if E.empty else cache(E))
    act = dom.active
    inner = act[diff.values[act] < -s]
    rhs = integrate(dom, f.values[inner])
    return SublevelReport(float(s), float(t), float(lhs), float(rhs))


# --- the iteration bound ----------------------------------------------------------------------------

def s_infinity(B: float, g0: float, alpha: float) -> float:
    """2 B g0^alpha / (1 - 2^-alpha)."""
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    if B < 0 or g0 < 0:
        raise DomainError("B and g0 must be nonnegative")
    return 2.0 * B * g0 ** alpha / (1.0 - 2.0 ** (-alpha))


def hypothesis_constant(s_grid, g, alpha: float) -> float:
    """Smallest B with t g(s + t) <= B g(s)^(1 + alpha) over all sample pairs."""
    s_grid = np.asarray(s_grid, dtype=float)
    g = np.asarray(g, dtype=float)
    best = 0.0
    for i in range(len(s_grid)):
        for j in range(i + 1, len(s_grid)):
            lhs = (s_grid[j] - s_grid[i]) * g[j]
            if lhs <= 0:
                continue
            if g[i] <= 0:
                return math.inf
            best = max(best, lhs / g[i] ** (1 + alpha))
    return best


@dataclass
class IterationReport:
    s_inf: float
    checked: int
    max_tail: float

    @property
    def passed(self) -> bool:
        return self.max_tail <= 1e-9


def iteration_bound_check(s_grid, g, B: float, alpha: float, slack: float = 1e-12) -> IterationReport:
    s_grid = np.asarray(s_grid, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(np.diff(s_grid) <= 0):
        raise DomainError("sample points must increase")
    if np.any(np.diff(g) > slack):
        raise HypothesisViolation("g is not decreasing on the samples")
    for i in range(len(s_grid)):
        for j in range(i + 1, len(s_grid)):
            lhs = (s_grid[j] - s_grid[i]) * g[j]
            if lhs > B * g[i] ** (1 + alpha) + slack:
                raise HypothesisViolation(f"t g(s+t) <= B g(s)^(1+alpha) fails at s={s_grid[i]}, "
                                          f"t={s_grid[j] - s_grid[i]}")
    s_inf = s_infinity(B, float(g[0]), alpha)
    tail = g[s_grid >= s_inf]
    return IterationReport(float(s_inf), int(tail.size), float(np.max(tail, initial=0.0)))


# --- stability ------------------------------------------------------------------------------------------

@dataclass
class StabilityReport:
    sup_diff: float
    norm_r: float
    ratio: float
    gamma: float


def stability_ratio(phi: GridFunction, psi: GridFunction, f: GridFunction, inputs: ExponentInputs,
                    safety: float = 0.9) -> StabilityReport:
    """sup(psi - phi) / ||(psi - phi)_+||_r^gamma with gamma = safety * gamma_r."""
    if not 0 < safety < 1:
        raise DomainError("safety must lie in (0, 1)")
    dom = phi.dom
    act = dom.active
    d = psi.values[act] - phi.values[act]
    sup = float(max(d.max(), 0.0))
    norm = integrate(dom, np.maximum(d, 0.0) ** inputs.r) ** (1.0 / inputs.r)
    gamma = safety * gamma_r(inputs)
    if norm == 0.0:
        if sup > 0:
            raise HypothesisViolation("positive sup difference with vanishing L^r norm")
        return StabilityReport(0.0, 0.0, 0.0, gamma)
    return StabilityReport(sup, float(norm), sup / norm ** gamma, gamma)


def write_stability_csv(path, epsilons, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "sup_diff", "norm_r", "ratio"])
        for e, r in zip(epsilons, reports):
            w.writerow([repr(float(e)), repr(r.sup_diff), repr(r.norm_r), repr(r.ratio)])


def bump(dom: LatticeDomain, width: float = 0.6, center=None) -> GridFunction:
    """(1 - |z - c|^2 / width^2)_+^2, a C^1 bump whose Hessian is at least -2/width^2."""
    center = np.zeros(2 * dom.n) if center is None else np.asarray(center, dtype=float)
    return GridFunction.from_function(
        dom, lambda X: np.maximum(0.0, 1.0 - np.sum((X - center) ** 2, axis=1) / width ** 2) ** 2,
        "bump")


# --- composite estimates -------------------------------------------------------------------------

def integral_capacity_ratios(dom: LatticeDomain, f: GridFunction, m: int, radii, alpha: float,
                             cfg: SolveConfig | None = None) -> list:
    """integral_E f / cap(E)^(1 + alpha m) over the ball family E_r."""
    out = []
    for r in radii:
        E = CompactSet.ball(dom, r)
        cap = capacity_m(dom, E, m, cfg).value
        out.append(integrate(dom, f.values[E.nodes]) / cap ** (1 + alpha * m))
    return out


def le2_alpha(inputs: ExponentInputs) -> float:
    """0.5 (p - n/m) / (p (n - m)), the exponent used for the integral bound (m < n)."""
    if inputs.m == inputs.n:
        raise DomainError("the exponent is unbounded for m = n")
    return 0.5 * (inputs.p - inputs.n / inputs.m) / (inputs.p * (inputs.n - inputs.m))


def sup_capacity_constant(sup_diffs, caps, eps: float, alpha: float) -> float:
    """Smallest A with sup(psi - phi) <= eps + A cap^alpha over the family."""
    A = 0.0
    for s, c in zip(sup_diffs, caps):
        if s > eps:
            if c <= 0:
                return math.inf
            A = max(A, (s - eps) / c ** alpha)
    return A
