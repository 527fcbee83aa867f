"""Elementary symmetric functions, the Garding cones and discrete complex Hessians.

Conventions
-----------
Points of C^n are stored as real vectors ``(x1, y1, ..., xn, yn)``.  The complex
Hessian of ``u`` is the Hermitian matrix ``d^2 u / dz_j dzbar_k``, so ``|z|^2``
has the identity as Hessian.  The m-Hessian density of ``u`` is
``c_nm * sigma_m(lambda)`` with ``c_nm = m!(n-m)!/n!``; the constant is fixed by
requiring the density of ``|z|^2`` to be 1 for every ``m``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StencilError


@dataclass(frozen=True)
class HessianNormalization:
    n: int
    m: int

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise DomainError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")

    @property
    def c_nm(self) -> float:
        return normalization(self.n, self.m)


def normalization(n: int, m: int) -> float:
    """Wedge constant c_nm = m!(n-m)!/n! = 1/C(n, m)."""
    if not 0 <= m <= n:
        raise DomainError(f"need 0 <= m <= n, got n={n}, m={m}")
    return 1.0 / math.comb(n, m)


def elementary_symmetric_all(lam, kmax: int | None = None) -> np.ndarray:
    """All elementary symmetric polynomials ``sigma_0 .. sigma_kmax`` of ``lam``.

    ``lam`` may be a stack of vectors; the last axis holds the variables.  The
    result has shape ``lam.shape[:-1] + (kmax + 1,)``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if kmax is None:
        kmax = n
    e = np.zeros(lam.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i, None]
        top = min(i + 1, kmax)
        # right-hand side is built from the previous variable's coefficients
        e[..., 1:top + 1] = e[..., 1:top + 1] + li * e[..., 0:top]
    return e


def elementary_symmetric(lam, k: int):
    """sigma_k(lam); works on a single vector or a stack of vectors."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}")
    out = elementary_symmetric_all(lam, k)[..., k]
    return float(out) if out.ndim == 0 else out


def default_cone_eps(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return 1e-9 * (1.0 + np.max(np.abs(lam), axis=-1))


def in_gamma_m(lam, m: int, closed: bool = False, eps=None):
    """Membership of ``lam`` in the cone Gamma_m.

    The open cone requires sigma_1, ..., sigma_m > 0.  With ``closed=True`` each
    sigma_k only has to exceed ``-eps`` (default ``1e-9 * (1 + |lam|_inf)``).
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= m <= n:
        raise DomainError(f"m={m} outside 1..{n}")
    e = elementary_symmetric_all(lam, m)[..., 1:]
    if closed:
        if eps is None:
            eps = default_cone_eps(lam)
        ok = np.all(e >= -np.asarray(eps)[..., None], axis=-1)
    else:
        ok = np.all(e > 0, axis=-1)
    return bool(ok) if np.ndim(ok) == 0 else ok


def cone_margin(lam, m: int) -> np.ndarray:
    """min over k = 1..m of sigma_k(lam); negative outside the closed cone."""
    lam = np.asarray(lam, dtype=float)
    e = elementary_symmetric_all(lam, m)[..., 1:]
    return e.min(axis=-1)


# --- discrete complex Hessians -------------------------------------------------

def _real_hessians(values, strides, h, nodes, n):
    """Centered second differences D_ab at ``nodes``; shape (N, 2n, 2n)."""
    d = 2 * n
    nodes = np.asarray(nodes)
    v0 = values[nodes]
    out = np.empty((nodes.size, d, d))
    h2 = h * h
    for a in range(d):
        sa = strides[a]
        out[:, a, a] = (values[nodes + sa] - 2.0 * v0 + values[nodes - sa]) / h2
        for b in range(a + 1, d):
            sb = strides[b]
            mixed = (values[nodes + sa + sb] - values[nodes + sa - sb]
                     - values[nodes - sa + sb] + values[nodes - sa - sb]) / (4.0 * h2)
            out[:, a, b] = mixed
            out[:, b, a] = mixed
    return out


def complex_from_real_hessian(D: np.ndarray) -> np.ndarray:
    """Map a real Hessian in (x1, y1, ...) order to the complex Hessian.

    ``H_jk = (D_{xj xk} + D_{yj yk} + i (D_{xj yk} - D_{yj xk})) / 4``,
    symmetrized so that conjugate symmetry holds bit for bit.
    """
    D = np.asarray(D, dtype=float)
    xx = D[..., 0::2, 0::2]
    yy = D[..., 1::2, 1::2]
    xy = D[..., 0::2, 1::2]
    yx = D[..., 1::2, 0::2]
    H = 0.25 * ((xx + yy) + 1j * (xy - yx))
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def hessian_stack(values, strides, h, nodes, n) -> np.ndarray:
    """Complex Hessians at many nodes at once, shape (N, n, n)."""
    return complex_from_real_hessian(_real_hessians(values, strides, h, nodes, n))


def hermitian_eigenvalues(H) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix (or a stack of them)."""
    H = np.asarray(H, dtype=complex)
    return np.linalg.eigvalsh(H)


def sigma_m_of_matrix(H, m: int):
    return elementary_symmetric_all(hermitian_eigenvalues(H), m)[..., m]


def _check_stencil(u, node):
    dom = u.dom
    flat = dom.flat_index(node)
    if not dom.is_interior_flat(flat):
        raise StencilError(node)
    return flat


def wirtinger_hessian(u, node) -> np.ndarray:
    """Discrete complex Hessian of the grid function ``u`` at ``node``.

    ``node`` is a multi-index into the lattice.  Raises ``StencilError`` when
    the second-difference stencil leaves the closed domain.
    """
    flat = _check_stencil(u, node)
    dom = u.dom
    return hessian_stack(u.values, dom.strides, dom.h, np.array([flat]), dom.n)[0]


def hessian_operator_value(u, node, m: int) -> float:
    n = u.dom.n
    if not 1 <= m <= n:
        raise DomainError(f"m={m} outside 1..{n}")
    lam = hermitian_eigenvalues(wirtinger_hessian(u, node))
    return normalization(n, m) * elementary_symmetric(lam, m)


def operator_values(u, m: int, nodes=None) -> np.ndarray:
    """Vectorized m-Hessian density over interior nodes (or ``nodes``)."""
    dom = u.dom
    if nodes is None:
        nodes = dom.interior
    H = hessian_stack(u.values, dom.strides, dom.h, nodes, dom.n)
    return normalization(dom.n, m) * sigma_m_of_matrix(H, m)


def mixed_sigma(matrices, m: int | None = None):
    """Mixed sigma_m of m Hermitian matrices via polarization.

    D(A_1..A_m) = 1/m! * sum over subsets S of (-1)^(m-|S|) sigma_m(sum_{i in S} A_i).
    Each ``A_i`` may be a stack, in which case the result is a stack as well.
    """
    mats = [np.asarray(A, dtype=complex) for A in matrices]
    if m is None:
        m = len(mats)
    if len(mats) != m:
        raise DomainError("need exactly m matrices")
    total = 0.0
    for size in range(1, m + 1):
        sign = (-1) ** (m - size)
        for subset in itertools.combinations(range(m), size):
            S = sum(mats[i] for i in subset)
            total = total + sign * sigma_m_of_matrix(S, m)
    return total / math.factorial(m)


def mixed_hessian_value(us, node) -> float:
    m = len(us)
    n = us[0].dom.n
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n, got m={m}")
    mats = [wirtinger_hessian(u, node) for u in us]
    return normalization(n, m) * float(mixed_sigma(mats, m))
