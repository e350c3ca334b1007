"""The affine Hamiltonian H = 1/2 <Lk, Lk> + <A, Lp> and its extremal equations.

The deformation parameter s selects the semisimple algebra (s = 1) or the
semidirect product (s = 0).  All right-hand sides act on ``CartanElement``
values; ``extremal_field`` wraps them as flat-vector fields for the integrator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from .cartan import (
    CartanElement,
    CartanSplit,
    EpsForm,
    bracket,
    in_p,
    k_basis,
    trace_form,
)

__all__ = [
    "AffineSystem",
    "affine_hamiltonian",
    "casimir",
    "general_rhs",
    "extremal_rhs",
    "extremal_field",
    "space_form_generator",
    "k_A_basis",
    "k_A_projection",
]


@dataclass(frozen=True)
class AffineSystem:
    """Drift matrix A in p, deformation s in {0, 1}, and the ambient form."""

    A: np.ndarray
    s: float
    form: EpsForm
    split: CartanSplit = field(default=CartanSplit.SYMMETRIC)

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=float)
        if A.shape != (self.form.dim, self.form.dim):
            raise ValueError(f"A must be {self.form.dim}x{self.form.dim}, got {A.shape}")
        if not in_p(A, self.form, self.split):
            raise ValueError(f"A does not lie in p for the {self.split.value} splitting")
        if self.s not in (0, 1):
            raise ValueError(f"s must be 0 or 1, got {self.s!r}")
        object.__setattr__(self, "A", A)


def _check(L: CartanElement, sys: AffineSystem) -> None:
    if L.dim != sys.form.dim:
        raise ValueError(f"element has dimension {L.dim}, system has {sys.form.dim}")


def affine_hamiltonian(L: CartanElement, sys: AffineSystem) -> float:
    _check(L, sys)
    return 0.5 * trace_form(L.Lk, L.Lk) + trace_form(sys.A, L.Lp)


def casimir(L: CartanElement, sys: AffineSystem) -> float:
    """<Lp, Lp> + s <Lk, Lk>, a Casimir of the deformed bracket."""
    _check(L, sys)
    return trace_form(L.Lp, L.Lp) + sys.s * trace_form(L.Lk, L.Lk)


def general_rhs(L: CartanElement, dh: CartanElement, s: float) -> CartanElement:
    """Hamiltonian equations for a function h with differential dh.

    dLk/dt = [dh_k, Lk] + [dh_p, Lp] and dLp/dt = [dh_k, Lp] + s [dh_p, Lk].
    """
    if L.dim != dh.dim:
        raise ValueError(f"dimension mismatch: {L.dim} vs {dh.dim}")
    dLk = bracket(dh.Lk, L.Lk) + bracket(dh.Lp, L.Lp)
    dLp = bracket(dh.Lk, L.Lp) + s * bracket(dh.Lp, L.Lk)
    return CartanElement(dLp, dLk)


def extremal_rhs(L: CartanElement, sys: AffineSystem) -> CartanElement:
    """dLp/dt = [sA - Lp, Lk], dLk/dt = [A, Lp]."""
    _check(L, sys)
    dLp = bracket(sys.s * sys.A - L.Lp, L.Lk)
    dLk = bracket(sys.A, L.Lp)
    return CartanElement(dLp, dLk)


def extremal_field(sys: AffineSystem) -> Callable[[np.ndarray], np.ndarray]:
    """Flat-vector version of ``extremal_rhs`` for the integrator."""
    d = sys.form.dim
    m = d * d
    A, s = sys.A, sys.s

    def f(v: np.ndarray) -> np.ndarray:
        Lp = v[:m].reshape(d, d)
        Lk = v[m:].reshape(d, d)
        P = s * A - Lp
        dLp = P @ Lk - Lk @ P
        dLk = A @ Lp - Lp @ A
        return np.concatenate([dLp.ravel(), dLk.ravel()])

    return f


def space_form_generator(form: EpsForm) -> np.ndarray:
    """E1: the matrix with e1 in column 0 and -eps*e1^T in row 0."""
    E1 = np.zeros((form.dim, form.dim))
    E1[1, 0] = 1.0
    E1[0, 1] = -float(form.eps)
    return E1


def k_A_basis(sys: AffineSystem) -> list[np.ndarray]:
    """A basis of k_A = {M in k : [M, A] = 0}."""
    basis = k_basis(sys.form, sys.split)
    if not basis:
        return []
    cols = np.stack([bracket(B, sys.A).ravel() for B in basis], axis=1)
    coeffs = null_space(cols, rcond=1e-10)
    return [sum(c * B for c, B in zip(col, basis)) for col in coeffs.T]


def k_A_projection(Lk: np.ndarray, sys: AffineSystem) -> np.ndarray:
    """Trace-form orthogonal projection of Lk onto k_A.

    Returns the zero matrix when k_A is trivial.
    """
    basis = k_A_basis(sys)
    if not basis:
        return np.zeros_like(np.asarray(Lk, dtype=float))
    G = np.array([[trace_form(Bi, Bj) for Bj in basis] for Bi in basis])
    rhs = np.array([trace_form(Bi, Lk) for Bi in basis])
    coef = np.linalg.lstsq(G, rhs, rcond=None)[0]
    return sum(c * B for c, B in zip(coef, basis))
