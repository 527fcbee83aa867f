"""Named boundary data and densities used by the experiments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DefiningFunction
from .errors import DomainError


@dataclass(frozen=True)
class BoundaryData:
    """phi on C^n given by a kind and one parameter.

    kinds: ``constant`` (value), ``re_z1``, ``abs_z1_sq``, ``holder_kink``
    (|Re z1|^beta with beta = param), ``abs_z_4`` (|z|^4).
    """

    kind: str
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "re_z1", "abs_z1_sq", "holder_kink", "abs_z_4"):
            raise DomainError(f"unknown boundary data {self.kind!r}")
        if self.kind == "holder_kink" and not 0 < self.param <= 1:
            raise DomainError("holder_kink exponent must lie in (0, 1]")

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if self.kind == "constant":
            return np.full(X.shape[:-1], float(self.param))
        if self.kind == "re_z1":
            return X[..., 0].copy()
        if self.kind == "abs_z1_sq":
            return X[..., 0] ** 2 + X[..., 1] ** 2
        if self.kind == "abs_z_4":
            return np.sum(X * X, axis=-1) ** 2
        return np.abs(X[..., 0]) ** self.param

    @property
    def holder_exponent(self) -> float:
        """The exponent 2*alpha for which phi is in Lip_{2 alpha}."""
        return self.param if self.kind == "holder_kink" else 1.0

    def holder_norm(self, spec: DefiningFunction) -> float:
        """sup |phi| + Holder seminorm on the closed domain, from closed forms."""
        R = float(spec.half_widths().max())
        if self.kind == "constant":
            return abs(self.param)
        if self.kind == "re_z1":
            return R + 1.0
        if self.kind == "abs_z1_sq":
            return R * R + 2.0 * R
        if self.kind == "abs_z_4":
            return R ** 4 + 4.0 * R ** 3
        return R ** self.param + 1.0

    def to_dict(self):
        return {"kind": self.kind, "param": self.param}


def sampled_holder_norm(phi, points, exponent: float, max_pairs: int = 200_000, seed: int = 0,
                        values=None) -> float:
    """sup|phi| + max |phi(z)-phi(w)|/|z-w|^exponent over sampled pairs (a lower estimate).

    Pass ``values`` instead of ``phi`` when the samples are already evaluated.
    """
    points = np.asarray(points, dtype=float)
    vals = phi(points) if values is None else np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), size=max_pairs)
    j = rng.integers(0, len(points), size=max_pairs)
    d = np.linalg.norm(points[i] - points[j], axis=1)
    keep = d > 0
    semi = np.max(np.abs(vals[i] - vals[j])[keep] / d[keep] ** exponent, initial=0.0)
    return float(np.max(np.abs(vals)) + semi)


@dataclass(frozen=True)
class DensitySpec:
    """f given by kind: ``constant`` (c), ``radial_poly`` (coefficients in t = |z|^2),
    ``boundary_singular`` (|rho|^(-m nu), clamped)."""

    kind: str
    c: float = 1.0
    coeffs: tuple = ()
    nu: float = 0.0
    clamp: float = 1e6

    def __post_init__(self):
        if self.kind not in ("constant", "radial_poly", "boundary_singular"):
            raise DomainError(f"unknown density {self.kind!r}")
        if self.kind == "constant" and self.c < 0:
            raise DomainError("density must be nonnegative")

    def radial(self, spec: DefiningFunction, m: int):
        """f as a function of t = |z|^2 (balls only for the singular kind)."""
        if self.kind == "constant":
            return lambda t: np.full(np.shape(t), float(self.c))
        if self.kind == "radial_poly":
            co = np.asarray(self.coeffs, dtype=float)
            return lambda t: np.polynomial.polynomial.polyval(t, co)
        R2 = spec.c
        nu, clamp = self.nu, self.clamp
        return lambda t: np.minimum(np.abs(np.asarray(t) - R2) ** (-m * nu), clamp)

    def on_points(self, spec: DefiningFunction, m: int):
        if self.kind == "boundary_singular":
            nu = self.nu
            return lambda X: np.abs(spec.value(X)) ** (-m * nu)
        g = self.radial(spec, m)
        return lambda X: g(np.sum(np.asarray(X) ** 2, axis=-1))

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "coeffs": list(self.coeffs), "nu": self.nu,
                "clamp": self.clamp}
