"""Elliptic coordinates, separated equations, the Knorrer map and quadric geodesics.

Elliptic coordinates are implemented for the Euclidean sphere only.  The
Knorrer map, the geodesic flow on the quadric (x, A^-1 x)_eps = 1 and its
invariants work for both signs of eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .cartan import EpsForm, is_eps_symmetric
from .integrator import IntegrationError, Trajectory, sphere_projection
from .neumann import _neumann_xy

__all__ = [
    "EllipticChart",
    "QuadricState",
    "poly_a",
    "poly_m",
    "elliptic_coords",
    "x_from_elliptic",
    "branch_from_state",
    "separated_radicals",
    "separated_rhs",
    "coordinate_velocity",
    "abel_sums",
    "integrate_separated",
    "frame_vectors",
    "frame_norms",
    "random_quadric_state",
    "knorrer_F0",
    "knorrer_forward",
    "knorrer_inverse",
    "knorrer_field",
    "knorrer_projection",
    "geodesic_rhs",
    "geodesic_field",
    "G_of_z",
    "residues_geodesic",
    "joachimsthal",
]

ROOT_XTOL = 1e-15
DEGENERATE_WEIGHT = 1e-28


@dataclass(frozen=True)
class EllipticChart:
    """Elliptic coordinates u of a point x on the unit sphere, A = diag(alphas)."""

    alphas: np.ndarray
    u: np.ndarray
    signs: np.ndarray
    degenerate: np.ndarray | None = None

    def __post_init__(self) -> None:
        a = np.asarray(self.alphas, dtype=float)
        u = np.asarray(self.u, dtype=float)
        signs = np.asarray(self.signs, dtype=float)
        if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
            raise ValueError("alphas must be strictly increasing with at least two entries")
        if u.shape != (a.size - 1,) or signs.shape != a.shape:
            raise ValueError("need n = len(alphas) - 1 coordinates and len(alphas) signs")
        deg = np.zeros(u.size, dtype=bool) if self.degenerate is None else np.asarray(self.degenerate, dtype=bool)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "signs", np.where(signs < 0, -1.0, 1.0))
        object.__setattr__(self, "degenerate", deg)

    @property
    def n(self) -> int:
        return self.u.size

    def interlaced(self) -> bool:
        a, u = self.alphas, self.u
        return bool(np.all(a[:-1] < u) and np.all(u < a[1:]))

    def with_u(self, u) -> EllipticChart:
        return EllipticChart(self.alphas, u, self.signs)


@dataclass(frozen=True)
class QuadricState:
    """A point x of the quadric (x, A^-1 x)_eps = 1 with tangent covector p."""

    x: np.ndarray
    p: np.ndarray
    form: EpsForm

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.shape != (self.form.dim,) or p.shape != (self.form.dim,):
            raise ValueError(f"x and p must have length {self.form.dim}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def constraint_residuals(self, A) -> tuple[float, float]:
        Ainv_x = np.linalg.solve(np.asarray(A, dtype=float), self.x)
        f = self.form
        return f.inner(self.x, Ainv_x) - 1.0, f.inner(self.p, Ainv_x)

    def validate(self, A, tol: float = 1e-10) -> None:
        r1, r2 = self.constraint_residuals(A)
        if abs(r1) > tol or abs(r2) > tol:
            raise ValueError(f"quadric constraint violation: {r1:.3g}, {r2:.3g}")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.p])

    @classmethod
    def from_vector(cls, v, form: EpsForm) -> QuadricState:
        d = form.dim
        return cls(v[:d], v[d:], form)


def poly_a(alphas, z) -> float:
    """a(z) = prod (z - alpha_k)."""
    return float(np.prod(z - np.asarray(alphas, dtype=float)))


def poly_m(u, z) -> float:
    """m(z) = prod (z - u_k)."""
    return float(np.prod(z - np.asarray(u, dtype=float)))


def _dprod(roots: np.ndarray, k: int) -> float:
    # derivative of prod (z - roots) at the simple root roots[k]
    others = np.delete(roots, k)
    return float(np.prod(roots[k] - others))


def elliptic_coords(x, alphas) -> EllipticChart:
    """The n zeros u_k of sum x_k^2 / (z - alpha_k), one per interval.

    Poles with vanishing weight are removed; their alpha becomes a root and is
    marked in ``chart.degenerate``.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(alphas, dtype=float)
    if x.shape != a.shape:
        raise ValueError("x and alphas must have the same length")
    if np.any(np.diff(a) <= 0):
        raise ValueError("alphas must be distinct and sorted")
    if abs(float(x @ x) - 1.0) > 1e-10:
        raise ValueError("x must be a unit vector")
    w = x * x
    live = w > DEGENERATE_WEIGHT
    al, wl = a[live], w[live]

    def g(z: float, k: int) -> float:
        # sum w_j/(z - a_j) times (z - a_k)(z - a_{k+1}); continuous on the closed interval
        lo, hi = al[k], al[k + 1]
        rest = np.ones(al.size, dtype=bool)
        rest[[k, k + 1]] = False
        val = wl[k] * (z - hi) + wl[k + 1] * (z - lo)
        if rest.any():
            val += (z - lo) * (z - hi) * float(np.sum(wl[rest] / (z - al[rest])))
        return val

    roots = [bisect(g, al[k], al[k + 1], args=(k,), xtol=ROOT_XTOL, maxiter=400) for k in range(al.size - 1)]
    flags = [False] * len(roots) + [True] * int((~live).sum())
    roots = roots + list(a[~live])
    order = np.argsort(roots, kind="stable")
    u = np.asarray(roots)[order]
    return EllipticChart(a, u, np.sign(x) + (x == 0), np.asarray(flags)[order])


def x_from_elliptic(chart: EllipticChart) -> np.ndarray:
    """x_k = sign_k sqrt(m(alpha_k) / a'(alpha_k))."""
    a = chart.alphas
    sq = np.array([poly_m(chart.u, a[k]) / _dprod(a, k) for k in range(a.size)])
    if np.any(sq < -1e-12):
        raise ValueError("negative radicand: the coordinates are not interlaced")
    return chart.signs * np.sqrt(np.clip(sq, 0.0, None))


def _b_values(alphas: np.ndarray, c: np.ndarray, z: np.ndarray) -> np.ndarray:
    # b(z) = a(z) * sum c_k/(z - alpha_k) = sum_k c_k prod_{j != k} (z - alpha_j)
    out = np.zeros(z.size)
    for k in range(alphas.size):
        out += c[k] * np.prod(z[:, None] - np.delete(alphas, k)[None, :], axis=1)
    return out


def branch_from_state(chart: EllipticChart, x, y) -> np.ndarray:
    """Signs s_k of (R_{u_k} x, y) with R_u = (uI - A)^-1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = np.array([np.sum(x * y / (uk - chart.alphas)) for uk in chart.u])
    return np.where(vals < 0, -1.0, 1.0)


def separated_radicals(chart: EllipticChart, c, branch=None) -> np.ndarray:
    """Signed roots r_k = 1/2 m'(u_k) du_k/dt.

    r_k = -a(u_k) (R_{u_k} x, y) with (R_{u_k} x, y) = branch_k sqrt(-b(u_k)/a(u_k));
    the default branch is -1.  In absolute value r_k = sqrt(-a(u_k) b(u_k)).
    """
    c = np.asarray(c, dtype=float)
    if c.shape != chart.alphas.shape:
        raise ValueError("need one constant per alpha")
    branch = -np.ones(chart.n) if branch is None else np.asarray(branch, dtype=float)
    au = np.array([poly_a(chart.alphas, uk) for uk in chart.u])
    bu = _b_values(chart.alphas, c, chart.u)
    rad = -bu / au
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.any(rad < -1e-12 * scale):
        raise ValueError("negative radicand -b(u_k)/a(u_k)")
    return -branch * au * np.sqrt(np.clip(rad, 0.0, None))


def _mprime(u: np.ndarray) -> np.ndarray:
    mp = np.array([_dprod(u, k) for k in range(u.size)])
    if np.any(np.abs(mp) < 1e-14):
        raise ValueError("coordinate collision: m has a repeated root")
    return mp


def separated_rhs(chart: EllipticChart, c, branch=None) -> np.ndarray:
    """du_k/dt = 2 r_k / m'(u_k) (see ``separated_radicals`` for r_k)."""
    return 2.0 * separated_radicals(chart, c, branch) / _mprime(chart.u)


def coordinate_velocity(chart: EllipticChart, x, y) -> np.ndarray:
    """du_k/dt = -2 a(u_k) (R_{u_k} x, y) / m'(u_k), read off the state (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    au = np.array([poly_a(chart.alphas, uk) for uk in chart.u])
    rxy = np.array([np.sum(x * y / (uk - chart.alphas)) for uk in chart.u])
    return -2.0 * au * rxy / _mprime(chart.u)


def abel_sums(chart: EllipticChart, du_dt, radicals) -> np.ndarray:
    """S_j = sum_k u_k^(n-j) du_k/dt / (2 r_k) for j = 1..n; equals delta_{1j}."""
    u = chart.u
    n = u.size
    ratio = np.asarray(du_dt, dtype=float) / (2.0 * np.asarray(radicals, dtype=float))
    return np.array([np.sum(u ** (n - j) * ratio) for j in range(1, n + 1)])


def integrate_separated(chart: EllipticChart, c, branch, t_end: float, dt: float) -> Trajectory:
    """RK4 on the separated equations with turning-point branch tracking.

    When a stage would hit a negative radicand -b(u_k)/a(u_k), the branch of
    that coordinate is flipped and the step is retried from the last accepted
    point.  Each turning point therefore costs O(dt) accuracy in that
    coordinate.
    """
    c = np.asarray(c, dtype=float)
    branch = np.asarray(branch, dtype=float).copy()
    nsteps = int(math.ceil(t_end / dt - 1e-12))
    times = np.linspace(0.0, t_end, nsteps + 1)
    us = np.empty((nsteps + 1, chart.n))
    us[0] = chart.u
    u = chart.u.copy()

    def rhs(v: np.ndarray, br: np.ndarray) -> np.ndarray:
        return separated_rhs(chart.with_u(v), c, br)

    for i in range(1, nsteps + 1):
        h = times[i] - times[i - 1]
        for _ in range(chart.n + 1):
            try:
                k1 = rhs(u, branch)
                k2 = rhs(u + 0.5 * h * k1, branch)
                k3 = rhs(u + 0.5 * h * k2, branch)
                k4 = rhs(u + h * k3, branch)
                unew = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                rhs(unew, branch)
                break
            except ValueError:
                # flip the coordinates whose radicand is closest to zero
                ch = chart.with_u(u)
                au = np.array([poly_a(ch.alphas, uk) for uk in u])
                rad = -_b_values(ch.alphas, c, u) / au
                branch[np.argmin(np.abs(rad))] *= -1.0
        else:
            raise IntegrationError("branch tracking failed", float(times[i - 1]))
        u = unew
        us[i] = u
    return Trajectory(times, us)


def frame_vectors(chart: EllipticChart) -> np.ndarray:
    """Rows dx/du_j = 1/2 (u_j I - A)^-1 x."""
    x = x_from_elliptic(chart)
    return np.array([0.5 * x / (uj - chart.alphas) for uj in chart.u])


def frame_norms(chart: EllipticChart) -> np.ndarray:
    """||dx/du_k||^2 = -1/4 m'(u_k) / a(u_k)."""
    mp = _mprime(chart.u)
    au = np.array([poly_a(chart.alphas, uk) for uk in chart.u])
    return -0.25 * mp / au


def _check_A(A, form: EpsForm) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (form.dim, form.dim):
        raise ValueError(f"A must be {form.dim}x{form.dim}")
    if not is_eps_symmetric(A, form):
        raise ValueError("A must be eps-symmetric")
    return A


def random_quadric_state(A, form: EpsForm, rng: np.random.Generator, scale: float = 1.0) -> QuadricState:
    """Random x with (x, A^-1 x)_eps = 1 and tangent p, i.e. (p, A^-1 x)_eps = 0."""
    A = _check_A(A, form)
    Ainv = np.linalg.inv(A)
    for _ in range(1000):
        x = rng.normal(size=form.dim)
        val = form.inner(x, Ainv @ x)
        if val > 1e-3:
            break
    else:
        raise ValueError("could not sample a point with (x, A^-1 x)_eps > 0")
    x /= math.sqrt(val)
    n = Ainv @ x
    p = scale * rng.normal(size=form.dim)
    p -= (form.inner(p, n) / form.inner(n, n)) * n
    return QuadricState(x, p, form)


def knorrer_F0(u, v, A, form: EpsForm) -> float:
    """F0 = ((v,Av) - 1)(u,Au) - (u,Av)^2, which must vanish on the domain."""
    A = np.asarray(A, dtype=float)
    Au, Av = A @ u, A @ v
    return (form.inner(v, Av) - 1.0) * form.inner(u, Au) - form.inner(u, Av) ** 2


def knorrer_forward(lam: float, u, v, A, form: EpsForm) -> QuadricState:
    """x = Au / sqrt(Au,u), p = lam/sqrt(Au,u) (Av - ((Au,v)/(Au,u)) Au)."""
    A = _check_A(A, form)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(form.norm_sq(u) - 1.0) > 1e-10 or abs(form.inner(u, v)) > 1e-10:
        raise ValueError("need ||u||_eps = 1 and (u, v)_eps = 0")
    Au, Av = A @ u, A @ v
    auu = form.inner(Au, u)
    if not auu > 0:
        raise ValueError("(Au, u)_eps must be positive")
    if abs(knorrer_F0(u, v, A, form)) > 1e-8:
        raise ValueError("F0 constraint violated")
    root = math.sqrt(auu)
    x = Au / root
    p = (lam / root) * (Av - (form.inner(Au, v) / auu) * Au)
    return QuadricState(x, p, form)


def knorrer_inverse(state: QuadricState, A) -> tuple[float, np.ndarray, np.ndarray]:
    """lam = sqrt(A^-1 p, p)/||A^-1 x||, u = A^-1 x/||A^-1 x||, v = (A^-1p - (u,A^-1p) u)/sqrt(A^-1p, p)."""
    form = state.form
    A = _check_A(A, form)
    Aix = np.linalg.solve(A, state.x)
    Aip = np.linalg.solve(A, state.p)
    nx2 = form.norm_sq(Aix)
    pp = form.inner(Aip, state.p)
    if not nx2 > 0 or not pp > 0:
        raise ValueError("nonpositive radicand in the inverse Knorrer map")
    lam = math.sqrt(pp) / math.sqrt(nx2)
    u = Aix / math.sqrt(nx2)
    v = (Aip - form.inner(u, Aip) * u) / math.sqrt(pp)
    return lam, u, v


def knorrer_field(A, form: EpsForm) -> Callable[[np.ndarray], np.ndarray]:
    """Neumann flow with potential matrix A^-1 plus the lambda equation, in geodesic time.

    State [u, v, lam].  In the Neumann time s the equations are the Neumann
    field of A^-1 and dlam/ds = 2 ((Au,v)/(Au,u)) lam; the geodesic time obeys
    dt/ds = 1/lam, so every component is multiplied by lam.
    """
    A = _check_A(A, form)
    Ainv = np.linalg.inv(A)
    d = form.dim
    sig = form.signature

    def f(w: np.ndarray) -> np.ndarray:
        u, v, lam = w[:d], w[d : 2 * d], w[2 * d]
        du, dv = _neumann_xy(u, v, Ainv, sig)
        Au = A @ u
        dlam = 2.0 * (np.dot(sig * Au, v) / np.dot(sig * Au, u)) * lam
        return lam * np.concatenate([du, dv, [dlam]])

    return f


def knorrer_projection(form: EpsForm) -> Callable[[np.ndarray], np.ndarray]:
    """Restore ||u||_eps = 1 and (u, v)_eps = 0 on [u, v, lam]; lam is left as is."""
    d = form.dim
    base = sphere_projection(form, 1.0)

    def project(w: np.ndarray) -> np.ndarray:
        return np.concatenate([base(w[: 2 * d]), w[2 * d :]])

    return project


def _geodesic_xp(x, p, A, sig):
    Aix = np.linalg.solve(A, x)
    nx2 = float(np.dot(sig * Aix, Aix))
    if nx2 == 0.0:
        raise ValueError("||A^-1 x||_eps = 0")
    Aip = np.linalg.solve(A, p)
    return p, -(float(np.dot(sig * p, Aip)) / nx2) * Aix


def geodesic_rhs(state: QuadricState, A) -> tuple[np.ndarray, np.ndarray]:
    """dx = p, dp = -((p, A^-1 p)/||A^-1 x||^2) A^-1 x."""
    A = _check_A(A, state.form)
    return _geodesic_xp(state.x, state.p, A, state.form.signature)


def geodesic_field(A, form: EpsForm) -> Callable[[np.ndarray], np.ndarray]:
    A = _check_A(A, form)
    d = form.dim
    sig = form.signature

    def f(w: np.ndarray) -> np.ndarray:
        dx, dp = _geodesic_xp(w[:d], w[d:], A, sig)
        return np.concatenate([dx, dp])

    return f


def G_of_z(state: QuadricState, A, z) -> float:
    """G(z) = (1 + (S x, x))(S p, p) - (S x, p)^2 with S = (zI - A)^-1."""
    A = np.asarray(A, dtype=float)
    if np.min(np.abs(np.linalg.eigvals(A) - z)) < 1e-8:
        raise ValueError(f"z = {z} is too close to the spectrum of A")
    form = state.form
    M = z * np.eye(form.dim) - A
    Sx = np.linalg.solve(M, state.x)
    Sp = np.linalg.solve(M, state.p)
    sxp = form.inner(Sx, state.p)
    return (1.0 + form.inner(Sx, state.x)) * form.inner(Sp, state.p) - sxp * sxp


def residues_geodesic(state: QuadricState, alphas) -> np.ndarray:
    """G_k = p_k^2 + sum_{j != k} (x_j p_k - x_k p_j)^2/(alpha_k - alpha_j), eps = +1."""
    if state.form.eps != 1:
        raise ValueError("residues_geodesic needs eps = +1")
    a = np.asarray(alphas, dtype=float)
    diffs = np.abs(a[:, None] - a[None, :]) + np.eye(a.size)
    if np.min(diffs) < 1e-10:
        raise ValueError("eigenvalues must be distinct")
    x, p = state.x, state.p
    out = np.empty(a.size)
    for k in range(a.size):
        j = np.arange(a.size) != k
        out[k] = p[k] ** 2 + np.sum((x[j] * p[k] - x[k] * p[j]) ** 2 / (a[k] - a[j]))
    return out


def joachimsthal(state: QuadricState, A) -> float:
    """||A^-1 x||_eps^2 (A^-1 p, p)_eps."""
    form = state.form
    A = np.asarray(A, dtype=float)
    Aix = np.linalg.solve(A, state.x)
    Aip = np.linalg.solve(A, state.p)
    return form.norm_sq(Aix) * form.inner(Aip, state.p)
