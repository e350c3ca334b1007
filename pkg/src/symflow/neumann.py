"""Rank-one orbits, the Neumann flow and its rational invariant F(z).

A state is a pair (x, y) in R^{n+1} x R^{n+1} with ||x||_eps^2 = r^2 and
(x, y)_eps = 0, i.e. a point of the cotangent bundle of the sphere (eps = +1)
or of the hyperboloid sheet x0 > 0 (eps = -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .affine_flow import general_rhs
from .cartan import CartanElement, EpsForm, is_eps_symmetric, tensor_eps, wedge_eps

__all__ = [
    "RankOneState",
    "ResidueSet",
    "random_state",
    "orbit_embed",
    "orbit_rhs",
    "neumann_rhs",
    "neumann_field",
    "constrained_hamiltonian",
    "constrained_field",
    "F_of_z",
    "F_xy",
    "residues_euclidean",
    "residues_euclidean_xy",
    "hyperbolic_coords",
    "residues_hyperbolic",
    "block_canonical_matrix",
]

CONSTRAINT_TOL = 1e-10
SPECTRUM_GUARD = 1e-8


@dataclass(frozen=True)
class RankOneState:
    x: np.ndarray
    y: np.ndarray
    form: EpsForm
    radius: float = 1.0

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != (self.form.dim,) or y.shape != (self.form.dim,):
            raise ValueError(f"x and y must have length {self.form.dim}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def constraint_residuals(self) -> tuple[float, float]:
        """(||x||_eps^2 - r^2, (x, y)_eps)."""
        f = self.form
        return f.norm_sq(self.x) - self.radius**2, f.inner(self.x, self.y)

    def validate(self, tol: float = CONSTRAINT_TOL) -> None:
        r1, r2 = self.constraint_residuals()
        if abs(r1) > tol or abs(r2) > tol:
            raise ValueError(f"constraint violation: ||x||^2 - r^2 = {r1:.3g}, (x,y) = {r2:.3g}")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @classmethod
    def from_vector(cls, v: np.ndarray, form: EpsForm, radius: float = 1.0) -> RankOneState:
        d = form.dim
        return cls(v[:d], v[d:], form, radius)


@dataclass(frozen=True)
class ResidueSet:
    alphas: np.ndarray
    values: np.ndarray

    def real_invariants(self) -> np.ndarray:
        """Real first integrals: the values themselves, or Re F0, Im F0, F_2.. when complex."""
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            return np.concatenate([[v[0].real, v[0].imag], v[2:].real])
        return v.astype(float)


def random_state(form: EpsForm, rng: np.random.Generator, radius: float = 1.0, scale: float = 1.0) -> RankOneState:
    """A random point of the constraint set (sheet x0 > 0 when eps = -1)."""
    d = form.dim
    if form.eps == 1:
        x = rng.normal(size=d)
        x *= radius / np.linalg.norm(x)
    else:
        xbar = scale * rng.normal(size=d - 1)
        x = np.concatenate([[math.sqrt(radius**2 + xbar @ xbar)], xbar])
    y = scale * rng.normal(size=d)
    y -= (form.inner(x, y) / form.norm_sq(x)) * x
    return RankOneState(x, y, form, radius)


def orbit_embed(state: RankOneState) -> CartanElement:
    """Lp = (x (x) x)_eps - (||x||_eps^2/(n+1)) I and Lk = (x ^ y)_eps."""
    state.validate()
    f = state.form
    Lp = tensor_eps(state.x, f) - (f.norm_sq(state.x) / f.dim) * np.eye(f.dim)
    return CartanElement(Lp, wedge_eps(state.x, state.y, f))


def orbit_rhs(L: CartanElement, A: np.ndarray) -> CartanElement:
    """The Neumann flow seen on the orbit through ``orbit_embed``.

    It is the Hamiltonian field of 1/2 <Lk, Lk> + <-A, Lp> in the orientation of
    the canonical form (dx ^ dy)_eps, which is the negative of ``general_rhs``
    with dh = Lk - A and s = 0.  Explicitly dLk/dt = [A, Lp] and
    dLp/dt = -[Lk, Lp].
    """
    A = np.asarray(A, dtype=float)
    dh = CartanElement(-A, L.Lk)
    return general_rhs(L, dh, 0).scaled(-1.0)


def _check_A(A, form: EpsForm) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (form.dim, form.dim):
        raise ValueError(f"A must be {form.dim}x{form.dim}, got {A.shape}")
    if not is_eps_symmetric(A, form):
        raise ValueError("A must be eps-symmetric")
    return A


def _neumann_xy(x, y, A, sig) -> tuple[np.ndarray, np.ndarray]:
    nx2 = float(np.dot(sig * x, x))
    if nx2 == 0.0:
        raise ValueError("||x||_eps^2 = 0 (null sheet)")
    Ax = A @ x
    ny2 = float(np.dot(sig * y, y))
    Axx = float(np.dot(sig * Ax, x))
    return nx2 * y, -Ax + (Axx / nx2 - ny2) * x


def neumann_rhs(state: RankOneState, A) -> tuple[np.ndarray, np.ndarray]:
    """dx = ||x||^2 y, dy = -Ax + ((Ax,x)/||x||^2 - ||y||^2) x, all in the eps-form."""
    A = _check_A(A, state.form)
    return _neumann_xy(state.x, state.y, A, state.form.signature)


def neumann_field(A, form: EpsForm) -> Callable[[np.ndarray], np.ndarray]:
    """Flat-vector Neumann field on [x, y]."""
    A = _check_A(A, form)
    d = form.dim
    sig = form.signature

    def f(v: np.ndarray) -> np.ndarray:
        dx, dy = _neumann_xy(v[:d], v[d:], A, sig)
        return np.concatenate([dx, dy])

    return f


def constrained_hamiltonian(state: RankOneState, A) -> float:
    """H0 = 1/2 (||y||_eps^2 + (Ax, x)_eps)."""
    f = state.form
    A = np.asarray(A, dtype=float)
    return 0.5 * (f.norm_sq(state.y) + f.inner(A @ state.x, state.x))


def constrained_field(state: RankOneState, A, h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Canonical field of H0 - l1*G1 - l2*G2 with frozen multipliers.

    G1 = ||x||_eps - r, G2 = (x, y)_eps, l1 = (Ax, x)_eps - (y, y)_eps and
    l2 = (y, x)_eps.  Gradients are central differences; the canonical
    equations are dx/dt = J grad_y, dy/dt = -J grad_x.
    """
    f = state.form
    A = np.asarray(A, dtype=float)
    sig = f.signature
    r = state.radius
    l1 = f.inner(A @ state.x, state.x) - f.norm_sq(state.y)
    l2 = f.inner(state.y, state.x)

    def ham(x, y):
        H0 = 0.5 * (np.dot(sig * y, y) + np.dot(sig * (A @ x), x))
        G1 = math.sqrt(np.dot(sig * x, x)) - r
        G2 = np.dot(sig * x, y)
        return H0 - l1 * G1 - l2 * G2

    gx = np.empty(f.dim)
    gy = np.empty(f.dim)
    for i in range(f.dim):
        e = np.zeros(f.dim)
        e[i] = h
        gx[i] = (ham(state.x + e, state.y) - ham(state.x - e, state.y)) / (2 * h)
        gy[i] = (ham(state.x, state.y + e) - ham(state.x, state.y - e)) / (2 * h)
    return sig * gy, -sig * gx


def _resolve(A: np.ndarray, z, v: np.ndarray) -> np.ndarray:
    # (zI - A) u = v by Gaussian elimination with partial pivoting (LAPACK gesv)
    M = z * np.eye(A.shape[0]) - A
    return np.linalg.solve(M, v)


def _guard_spectrum(A: np.ndarray, z) -> None:
    if np.min(np.abs(np.linalg.eigvals(A) - z)) < SPECTRUM_GUARD:
        raise ValueError(f"z = {z} is within {SPECTRUM_GUARD} of the spectrum of A")


def F_xy(x, y, A, z, form: EpsForm, guard: bool = True) -> float:
    """F(z) = (Rx,x) + (Rx,x)(Ry,y) - (Rx,y)^2 with R = (zI - A)^-1, eps-form pairings."""
    A = np.asarray(A, dtype=float)
    if guard:
        _guard_spectrum(A, z)
    sig = form.signature
    Rx = _resolve(A, z, np.asarray(x, dtype=float))
    Ry = _resolve(A, z, np.asarray(y, dtype=float))
    rxx = np.dot(sig * Rx, x)
    ryy = np.dot(sig * Ry, y)
    rxy = np.dot(sig * Rx, y)
    return rxx + rxx * ryy - rxy * rxy


def F_of_z(state: RankOneState, A, z) -> float:
    return F_xy(state.x, state.y, A, z, state.form)


def _check_distinct(alphas) -> np.ndarray:
    a = np.asarray(alphas)
    diffs = np.abs(a[:, None] - a[None, :]) + np.eye(a.size)
    if np.min(diffs) < 1e-10:
        raise ValueError("eigenvalues must be distinct")
    return a


def _residues(v: np.ndarray, w: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    # F_k = v_k^2 + sum_{j != k} (v_j w_k - v_k w_j)^2 / (alpha_k - alpha_j)
    out = np.empty(alphas.size, dtype=np.result_type(v, w, alphas))
    for k in range(alphas.size):
        j = np.arange(alphas.size) != k
        out[k] = v[k] ** 2 + np.sum((v[j] * w[k] - v[k] * w[j]) ** 2 / (alphas[k] - alphas[j]))
    return out


def residues_euclidean_xy(x, y, alphas) -> np.ndarray:
    a = _check_distinct(np.asarray(alphas, dtype=float))
    return _residues(np.asarray(x, dtype=float), np.asarray(y, dtype=float), a)


def residues_euclidean(state: RankOneState, alphas) -> ResidueSet:
    """Residues of F at the eigenvalues of A = diag(alphas), eps = +1."""
    if state.form.eps != 1:
        raise ValueError("residues_euclidean needs eps = +1")
    a = _check_distinct(np.asarray(alphas, dtype=float))
    return ResidueSet(a, _residues(state.x, state.y, a))


def hyperbolic_coords(state: RankOneState) -> tuple[np.ndarray, np.ndarray]:
    """Complex coordinates diagonalizing a block-canonical A for eps = -1."""
    if state.form.eps != -1:
        raise ValueError("hyperbolic_coords needs eps = -1")

    def conv(x: np.ndarray) -> np.ndarray:
        v = np.empty(x.size, dtype=complex)
        v[0] = (x[0] + 1j * x[1]) / math.sqrt(2.0)
        v[1] = (x[0] - 1j * x[1]) / math.sqrt(2.0)
        v[2:] = 1j * x[2:]
        return v

    return conv(state.x), conv(state.y)


def block_canonical_matrix(alpha: float, d) -> np.ndarray:
    """[[0, -alpha], [alpha, 0]] (+) diag(d), an eps-symmetric matrix for eps = -1."""
    d = np.asarray(d, dtype=float)
    A = np.zeros((2 + d.size, 2 + d.size))
    A[0, 1] = -alpha
    A[1, 0] = alpha
    A[2:, 2:] = np.diag(d)
    return A


def residues_hyperbolic(state: RankOneState, alpha: float, d) -> ResidueSet:
    """Residues for eps = -1 and A in block-canonical form.

    The eigenvalues are i*alpha, -i*alpha, d_2, ..., d_n; F_1 must equal
    conj(F_0).
    """
    d = np.asarray(d, dtype=float)
    if d.size != state.form.dim - 2:
        raise ValueError(f"expected {state.form.dim - 2} diagonal entries, got {d.size}")
    if alpha == 0 or np.any(d == 0):
        raise ValueError("degenerate spectrum: alpha and d must be nonzero")
    alphas = _check_distinct(np.concatenate([[1j * alpha, -1j * alpha], d.astype(complex)]))
    v, w = hyperbolic_coords(state)
    F = _residues(v, w, alphas)
    if abs(F[1] - np.conj(F[0])) > 1e-12 * max(1.0, abs(F[0])):
        raise ArithmeticError("F_1 differs from conj(F_0)")
    return ResidueSet(alphas, F)
