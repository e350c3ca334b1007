"""Spectral matrix L_lambda, characteristic-polynomial invariants and Poisson checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .affine_flow import AffineSystem, affine_hamiltonian, k_A_projection
from .cartan import CartanElement, CartanSplit, EpsForm, bracket, trace_form

__all__ = [
    "DEFAULT_LAMBDAS",
    "SpectralSample",
    "spectral_matrix",
    "lax_partner",
    "char_coeffs",
    "spectral_sample",
    "space_form_quartic",
    "poisson_bracket_canonical",
]

# avoids 0 and +-1, where terms of L_lambda degenerate
DEFAULT_LAMBDAS: tuple[float, ...] = (0.3, 0.7, 1.3, 2.1)


@dataclass(frozen=True)
class SpectralSample:
    lambdas: tuple[float, ...]
    coeffs: tuple[np.ndarray, ...]

    def named(self) -> dict[str, float]:
        """Flat mapping ``cp[lam]_c[i]`` -> coefficient of z^(N-i), for i >= 1."""
        out = {}
        for lam, c in zip(self.lambdas, self.coeffs):
            for i in range(1, c.size):
                out[f"cp[{lam:g}]_c{i}"] = float(c[i])
        return out


def spectral_matrix(L: CartanElement, sys: AffineSystem, lam: float) -> np.ndarray:
    """L_lambda = Lp - lambda Lk + (lambda^2 - s) A."""
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    if L.dim != sys.form.dim:
        raise ValueError(f"element has dimension {L.dim}, system has {sys.form.dim}")
    return L.Lp - lam * L.Lk + (lam * lam - sys.s) * sys.A


def lax_partner(L: CartanElement, sys: AffineSystem, lam: float) -> np.ndarray:
    """M_lambda = (Lp - sA) / lambda, so that dL_lambda/dt = [M_lambda, L_lambda]."""
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    return (L.Lp - sys.s * sys.A) / lam


def char_coeffs(M) -> np.ndarray:
    """Coefficients of det(zI - M), highest degree first, by Faddeev-LeVerrier."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got {M.shape}")
    N = M.shape[0]
    c = np.zeros(N + 1)
    c[0] = 1.0
    Mk = np.zeros_like(M)
    eye = np.eye(N)
    for k in range(1, N + 1):
        Mk = M @ Mk + c[k - 1] * eye
        c[k] = -np.trace(M @ Mk) / k
    return c


def spectral_sample(
    L: CartanElement, sys: AffineSystem, lambdas: Sequence[float] = DEFAULT_LAMBDAS
) -> SpectralSample:
    lambdas = tuple(float(x) for x in lambdas)
    if any(x == 0 for x in lambdas):
        raise ValueError("lambda samples must be nonzero")
    return SpectralSample(lambdas, tuple(char_coeffs(spectral_matrix(L, sys, lam)) for lam in lambdas))


def space_form_quartic(
    L: CartanElement, sys: AffineSystem, lam: float, printed: bool = False
) -> tuple[float, float]:
    """Coefficients (c1, c2) of xi^4 + c1 xi^2 + c2 for the space-form spectral matrix.

    With mu = lambda^2 - s, the eigenvalue cross-check gives
    c1 = eps*mu^2 + 2*mu*H + s*||L_perp||^2 + ||Lp||^2 and
    c2 = lambda^2 (||L_perp||^2 ||Lp||^2 - ||[L_perp, Lp]||^2), all norms in the
    trace form.  ``printed=True`` returns the variant
    c1 = eps*mu + mu*H + s*||L_perp||^2 + ||Lp||^2 for comparison.
    """
    if sys.split is not CartanSplit.SPACE_FORM:
        raise ValueError("space_form_quartic needs the space-form splitting")
    proj = k_A_projection(L.Lk, sys)
    if np.max(np.abs(proj)) > 1e-10:
        raise ValueError("Lk has a nonzero k_A component")
    eps, s = sys.form.eps, sys.s
    mu = lam * lam - s
    H = affine_hamiltonian(L, sys)
    nperp = trace_form(L.Lk, L.Lk)
    np_ = trace_form(L.Lp, L.Lp)
    C = bracket(L.Lk, L.Lp)
    if printed:
        c1 = eps * mu + mu * H + s * nperp + np_
    else:
        c1 = eps * mu * mu + 2.0 * mu * H + s * nperp + np_
    c2 = lam * lam * (nperp * np_ - trace_form(C, C))
    return float(c1), float(c2)


def _gradient(f: Callable[[np.ndarray, np.ndarray], float], x, y, which: int, h: float) -> np.ndarray:
    base = [np.array(x, dtype=float), np.array(y, dtype=float)]
    g = np.empty(base[which].size)
    for i in range(g.size):
        plus = [b.copy() for b in base]
        minus = [b.copy() for b in base]
        plus[which][i] += h
        minus[which][i] -= h
        g[i] = (f(*plus) - f(*minus)) / (2.0 * h)
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite partial derivative")
    return g


def poisson_bracket_canonical(
    f: Callable[[np.ndarray, np.ndarray], float],
    g: Callable[[np.ndarray, np.ndarray], float],
    state,
    form: EpsForm,
    h: float = 1e-5,
) -> float:
    """{f, g} = (df/dx, dg/dy)_eps - (dg/dx, df/dy)_eps by central differences.

    ``state`` is any object with ``x`` and ``y`` vector attributes; f and g take
    (x, y) arrays.
    """
    x, y = state.x, state.y
    fx = _gradient(f, x, y, 0, h)
    fy = _gradient(f, x, y, 1, h)
    gx = _gradient(g, x, y, 0, h)
    gy = _gradient(g, x, y, 1, h)
    sig = form.signature
    return float(np.dot(fx, sig * gy) - np.dot(gx, sig * fy))
