"""Matrix Lie-algebra core: epsilon inner products, Cartan splittings and brackets.

Vectors live in R^{n+1} with coordinates indexed 0..n.  The quadratic form
(x, y)_eps = x0*y0 + eps*(x1*y1 + ... + xn*yn) is represented by the signature
matrix J = diag(1, eps, ..., eps), so that the eps-adjoint of a matrix M is
J M^T J.

Two Cartan splittings g = p + k are supported:

* ``SYMMETRIC``: g = gl(n+1), p = eps-symmetric matrices, k = eps-antisymmetric
  matrices (the rank-one orbit / Neumann setting).
* ``SPACE_FORM``: g = so_eps(n+1), p = the first row/column block, k = the
  lower-right so(n) block (the space-form / elastica setting).  Here both parts
  are eps-antisymmetric matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "EpsForm",
    "CartanSplit",
    "CartanElement",
    "eps_inner",
    "decompose",
    "bracket",
    "deformed_bracket",
    "trace_form",
    "wedge_eps",
    "tensor_eps",
    "is_eps_symmetric",
    "is_eps_antisymmetric",
    "in_p",
    "in_k",
    "k_basis",
]

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class EpsForm:
    """The form (x, y)_eps on R^{n+1}."""

    n: int
    eps: int = 1

    def __post_init__(self) -> None:
        if self.eps not in (1, -1):
            raise ValueError(f"eps must be +1 or -1, got {self.eps!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def signature(self) -> np.ndarray:
        """Diagonal of J as a vector."""
        sig = np.full(self.dim, float(self.eps))
        sig[0] = 1.0
        return sig

    @property
    def J(self) -> np.ndarray:
        return np.diag(self.signature)

    def inner(self, x, y) -> float:
        return eps_inner(x, y, self)

    def norm_sq(self, x) -> float:
        return eps_inner(x, x, self)

    def adjoint(self, M: np.ndarray) -> np.ndarray:
        """The eps-adjoint J M^T J."""
        M = _square(M, self)
        sig = self.signature
        return sig[:, None] * M.T * sig[None, :]


class CartanSplit(Enum):
    SYMMETRIC = "eps-symmetric"
    SPACE_FORM = "space-form"


@dataclass(frozen=True)
class CartanElement:
    """A pair (Lp, Lk) standing for Lp + Lk, with Lp in p and Lk in k."""

    Lp: np.ndarray
    Lk: np.ndarray

    def __post_init__(self) -> None:
        Lp = np.asarray(self.Lp, dtype=float)
        Lk = np.asarray(self.Lk, dtype=float)
        if Lp.ndim != 2 or Lp.shape[0] != Lp.shape[1] or Lp.shape != Lk.shape:
            raise ValueError(f"parts must be equal square matrices, got {Lp.shape} and {Lk.shape}")
        object.__setattr__(self, "Lp", Lp)
        object.__setattr__(self, "Lk", Lk)

    @property
    def dim(self) -> int:
        return self.Lp.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.Lp + self.Lk

    def __add__(self, other: CartanElement) -> CartanElement:
        return CartanElement(self.Lp + other.Lp, self.Lk + other.Lk)

    def __sub__(self, other: CartanElement) -> CartanElement:
        return CartanElement(self.Lp - other.Lp, self.Lk - other.Lk)

    def scaled(self, c: float) -> CartanElement:
        return CartanElement(c * self.Lp, c * self.Lk)

    def to_vector(self) -> np.ndarray:
        """Flatten as [Lp.ravel(), Lk.ravel()] for the integrator."""
        return np.concatenate([self.Lp.ravel(), self.Lk.ravel()])

    @classmethod
    def from_vector(cls, v: np.ndarray, dim: int) -> CartanElement:
        v = np.asarray(v, dtype=float)
        m = dim * dim
        if v.shape != (2 * m,):
            raise ValueError(f"expected a vector of length {2 * m}, got {v.shape}")
        return cls(v[:m].reshape(dim, dim), v[m:].reshape(dim, dim))

    @classmethod
    def zeros(cls, dim: int) -> CartanElement:
        return cls(np.zeros((dim, dim)), np.zeros((dim, dim)))


def _vector(x, form: EpsForm) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (form.dim,):
        raise ValueError(f"expected a vector of length {form.dim}, got shape {x.shape}")
    return x


def _square(M, form: EpsForm | None = None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if form is not None and M.shape[0] != form.dim:
        raise ValueError(f"expected a {form.dim}x{form.dim} matrix, got {M.shape}")
    return M


def _same_shape(A, B) -> tuple[np.ndarray, np.ndarray]:
    A = _square(A)
    B = _square(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A, B


def eps_inner(x, y, form: EpsForm) -> float:
    """Return x0*y0 + eps * sum_i x_i*y_i."""
    x = _vector(x, form)
    y = _vector(y, form)
    return float(x[0] * y[0] + form.eps * np.dot(x[1:], y[1:]))


def _scaled_tol(M: np.ndarray, tol: float) -> float:
    return tol * max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)


def is_eps_symmetric(M, form: EpsForm, tol: float = SYMMETRY_TOL) -> bool:
    M = _square(M, form)
    return bool(np.max(np.abs(form.adjoint(M) - M)) <= _scaled_tol(M, tol))


def is_eps_antisymmetric(M, form: EpsForm, tol: float = SYMMETRY_TOL) -> bool:
    M = _square(M, form)
    return bool(np.max(np.abs(form.adjoint(M) + M)) <= _scaled_tol(M, tol))


def _space_form_reflect(M: np.ndarray) -> np.ndarray:
    # conjugation by diag(-1, 1, ..., 1): flips the sign of row 0 and column 0
    out = M.copy()
    out[0, 1:] *= -1.0
    out[1:, 0] *= -1.0
    return out


def decompose(M, form: EpsForm, split: CartanSplit = CartanSplit.SYMMETRIC) -> CartanElement:
    """Split M into its p and k parts.

    For the symmetric split this is M = (M + M*)/2 + (M - M*)/2 with M* the
    eps-adjoint.  For the space-form split M must lie in so_eps(n+1); the p-part
    is the first row/column block and the k-part the lower-right block.
    """
    M = _square(M, form)
    if split is CartanSplit.SYMMETRIC:
        Mstar = form.adjoint(M)
        return CartanElement(0.5 * (M + Mstar), 0.5 * (M - Mstar))
    if not is_eps_antisymmetric(M, form):
        raise ValueError("space-form split needs an element of so_eps(n+1)")
    R = _space_form_reflect(M)
    return CartanElement(0.5 * (M - R), 0.5 * (M + R))


def in_p(M, form: EpsForm, split: CartanSplit = CartanSplit.SYMMETRIC, tol: float = SYMMETRY_TOL) -> bool:
    M = _square(M, form)
    if split is CartanSplit.SYMMETRIC:
        return is_eps_symmetric(M, form, tol)
    return is_eps_antisymmetric(M, form, tol) and bool(
        np.max(np.abs(M + _space_form_reflect(M))) <= _scaled_tol(M, tol)
    )


def in_k(M, form: EpsForm, split: CartanSplit = CartanSplit.SYMMETRIC, tol: float = SYMMETRY_TOL) -> bool:
    M = _square(M, form)
    if split is CartanSplit.SYMMETRIC:
        return is_eps_antisymmetric(M, form, tol)
    return is_eps_antisymmetric(M, form, tol) and bool(
        np.max(np.abs(M - _space_form_reflect(M))) <= _scaled_tol(M, tol)
    )


def k_basis(form: EpsForm, split: CartanSplit = CartanSplit.SYMMETRIC) -> list[np.ndarray]:
    """A linear basis of k.

    Symmetric split: J*(E_ij - E_ji) for i < j.  Space-form split: E_ij - E_ji
    for 1 <= i < j.
    """
    d = form.dim
    start = 0 if split is CartanSplit.SYMMETRIC else 1
    basis = []
    for i in range(start, d):
        for j in range(i + 1, d):
            W = np.zeros((d, d))
            W[i, j] = 1.0
            W[j, i] = -1.0
            if split is CartanSplit.SYMMETRIC:
                W = form.signature[:, None] * W
            basis.append(W)
    return basis


def bracket(M1, M2) -> np.ndarray:
    """The commutator M1 M2 - M2 M1."""
    M1, M2 = _same_shape(M1, M2)
    return M1 @ M2 - M2 @ M1


def deformed_bracket(L1: CartanElement, L2: CartanElement, s: float) -> CartanElement:
    """[A1 + B1, A2 + B2]_s = [B1, A2] - [B2, A1] + [B1, B2] + s [A1, A2].

    A denotes p-parts and B k-parts.  The p-part of the result is
    [B1, A2] - [B2, A1] and the k-part is [B1, B2] + s [A1, A2].
    """
    if L1.dim != L2.dim:
        raise ValueError(f"dimension mismatch: {L1.dim} vs {L2.dim}")
    A1, B1, A2, B2 = L1.Lp, L1.Lk, L2.Lp, L2.Lk
    return CartanElement(
        bracket(B1, A2) - bracket(B2, A1),
        bracket(B1, B2) + s * bracket(A1, A2),
    )


def trace_form(A, B) -> float:
    """<A, B> = -1/2 tr(AB)."""
    A, B = _same_shape(A, B)
    return float(-0.5 * np.einsum("ij,ji->", A, B))


def wedge_eps(a, b, form: EpsForm) -> np.ndarray:
    """(a ^ b)_eps = a (Jb)^T - b (Ja)^T, so (a ^ b)_eps x = (b,x)_eps a - (a,x)_eps b."""
    a = _vector(a, form)
    b = _vector(b, form)
    sig = form.signature
    return np.outer(a, sig * b) - np.outer(b, sig * a)


def tensor_eps(x, form: EpsForm) -> np.ndarray:
    """(x (x) x)_eps = x (Jx)^T, acting as u -> (x,u)_eps x."""
    x = _vector(x, form)
    return np.outer(x, form.signature * x)
