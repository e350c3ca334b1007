"""Free geodesic flow on space forms and its stereographic transport to Kepler's problem.

The sphere (eps = +1) or hyperboloid (eps = -1) of radius h is projected from
the pole h*e0 onto R^n.  The cotangent lift carries the geodesic flow on the
level H = eps/(2h^2) to Kepler's problem on the energy level E = -eps*h^2/2,
after the time change dt/ds = -eps*||q||/h^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from .cartan import EpsForm, wedge_eps
from .integrator import Trajectory
from .neumann import RankOneState

__all__ = [
    "KeplerState",
    "StereoParams",
    "ConicRecord",
    "EuclideanLimitReport",
    "free_rhs",
    "free_field",
    "free_state",
    "great_circle",
    "stereo_project",
    "stereo_point",
    "stereo_lift",
    "stereo_covector",
    "kepler_rhs",
    "kepler_field",
    "kepler_energy",
    "angular_momentum",
    "runge_lenz",
    "eccentricity_residual",
    "transport_to_kepler",
    "kepler_ode_residual",
    "momentum_and_lenz",
    "conic_classify",
    "euclidean_free_field",
    "euclidean_limit_check",
]

COLLISION_TOL = 1e-12
PARABOLA_TOL = 1e-8


@dataclass(frozen=True)
class KeplerState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be vectors of equal length")
        if not np.linalg.norm(q) > 0:
            raise ValueError("q must be nonzero")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, v) -> KeplerState:
        v = np.asarray(v, dtype=float)
        n = v.size // 2
        return cls(v[:n], v[n:])


@dataclass(frozen=True)
class StereoParams:
    h: float
    eps: int
    n: int

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.eps not in (1, -1):
            raise ValueError("eps must be +1 or -1")

    @property
    def form(self) -> EpsForm:
        return EpsForm(self.n, self.eps)


@dataclass(frozen=True)
class ConicRecord:
    kind: str  # "ellipse", "parabola", "hyperbola" or "line"
    eccentricity: float
    L_norm: float
    energy: float
    max_residual: float

    @property
    def degenerate(self) -> bool:
        return self.kind == "line"


@dataclass(frozen=True)
class EuclideanLimitReport:
    line_residual: float
    parabola_residual: float
    energy_residual: float


def free_rhs(state: RankOneState) -> tuple[np.ndarray, np.ndarray]:
    """dx = ||x||^2 y, dy = -||y||^2 x."""
    f = state.form
    return f.norm_sq(state.x) * state.y, -f.norm_sq(state.y) * state.x


def free_field(form: EpsForm):
    d = form.dim
    sig = form.signature

    def f(v: np.ndarray) -> np.ndarray:
        x, y = v[:d], v[d:]
        return np.concatenate([np.dot(sig * x, x) * y, -np.dot(sig * y, y) * x])

    return f


def free_state(x, y, params: StereoParams) -> RankOneState:
    """Rescale (x, y) onto ||x||_eps = h, (x, y)_eps = 0, ||y||_eps^2 = eps/h^4.

    This is the free-flow level H = eps/(2h^2) that transports to E = -eps h^2/2.
    For eps = -1, x must be timelike with x0 > 0.
    """
    form = params.form
    h = params.h
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = form.norm_sq(x)
    if not nx > 0 or (params.eps == -1 and x[0] <= 0):
        raise ValueError("x must satisfy ||x||_eps^2 > 0 (and x0 > 0 when eps = -1)")
    x = x * (h / math.sqrt(nx))
    y = y - (form.inner(x, y) / (h * h)) * x
    ny = form.norm_sq(y)
    if not params.eps * ny > 0:
        raise ValueError("y has no admissible tangent component")
    y = y / (h * h * math.sqrt(abs(ny)))
    return RankOneState(x, y, form, h)


def great_circle(alpha: float, params: StereoParams, t) -> tuple[np.ndarray, np.ndarray]:
    """Great circle at angle alpha to the plane x0 = 0, with y = dx/dt / h^2.

    x = h (sin a sin ht, cos ht, -cos a sin ht, 0, ...).  For h = 1 its
    stereographic image traces (q1 - sin a)^2 + q2^2/cos^2 a = 1.
    """
    if params.eps != 1 or params.n < 2:
        raise ValueError("great_circle needs eps = +1 and n >= 2")
    h = params.h
    t = np.asarray(t, dtype=float)
    sa, ca = math.sin(alpha), math.cos(alpha)
    X = np.zeros(t.shape + (params.n + 1,))
    Y = np.zeros_like(X)
    X[..., 0] = h * sa * np.sin(h * t)
    X[..., 1] = h * np.cos(h * t)
    X[..., 2] = -h * ca * np.sin(h * t)
    Y[..., 0] = sa * np.cos(h * t) / h
    Y[..., 1] = -np.sin(h * t) / h
    Y[..., 2] = -ca * np.cos(h * t) / h
    return X, Y


def stereo_project(x, params: StereoParams) -> np.ndarray:
    """p = h/(h - x0) * (x1..xn)."""
    x = np.asarray(x, dtype=float)
    h = params.h
    if abs(h - x[0]) < 1e-14 * h:
        raise ValueError("x is the projection pole h*e0")
    return (h / (h - x[0])) * x[1:]


def stereo_point(p, params: StereoParams) -> np.ndarray:
    """Inverse projection: x0 = h(|p|^2 - eps h^2)/D, xbar = 2 eps h^2 p / D, D = |p|^2 + eps h^2."""
    p = np.asarray(p, dtype=float)
    h, eps = params.h, params.eps
    D = p @ p + eps * h * h
    if D == 0:
        raise ValueError("p lies on the image of the points at infinity")
    return np.concatenate([[h * (p @ p - eps * h * h) / D], (2 * eps * h * h / D) * p])


def stereo_lift(q, p, params: StereoParams) -> tuple[np.ndarray, np.ndarray]:
    """Cotangent lift: x = stereo_point(p), y = ((q.p)/h, (D/(2h^2)) q - ((q.p)/h^2) p)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    h, eps = params.h, params.eps
    D = p @ p + eps * h * h
    qp = q @ p
    y = np.concatenate([[qp / h], (D / (2 * h * h)) * q - (qp / (h * h)) * p])
    return stereo_point(p, params), y


def stereo_covector(x, y, params: StereoParams) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of ``stereo_lift``: returns (q, p)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h, eps = params.h, params.eps
    p = stereo_project(x, params)
    D = p @ p + eps * h * h
    q = (2 * h * h / D) * (y[1:] + (y[0] / h) * p)
    return q, p


def kepler_rhs(state: KeplerState) -> tuple[np.ndarray, np.ndarray]:
    """dq = p, dp = -q/|q|^3."""
    r = float(np.linalg.norm(state.q))
    if r < COLLISION_TOL:
        raise ValueError("collision: |q| below 1e-12")
    return state.p.copy(), -state.q / r**3


def kepler_field(n: int):
    def f(v: np.ndarray) -> np.ndarray:
        q, p = v[:n], v[n:]
        r = math.sqrt(q @ q)
        if r < COLLISION_TOL:
            return np.full(2 * n, np.nan)
        return np.concatenate([p, -q / r**3])

    return f


def kepler_energy(q, p) -> float:
    """E = 1/2 |p|^2 - 1/|q|."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return 0.5 * float(p @ p) - 1.0 / float(np.linalg.norm(q))


def angular_momentum(q, p) -> np.ndarray:
    """L = q ^ p = q p^T - p q^T."""
    return np.outer(q, p) - np.outer(p, q)


def _L_norm_sq(q, p) -> float:
    # 1/2 sum of squared wedge entries; equals |q|^2|p|^2 - (q.p)^2 without the cancellation
    L = angular_momentum(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    return 0.5 * float(np.sum(L * L))


def runge_lenz(q, p) -> np.ndarray:
    """F = Lp - q/|q| = |p|^2 q - (q.p) p - q/|q|."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return angular_momentum(q, p) @ p - q / np.linalg.norm(q)


def eccentricity_residual(q, p) -> float:
    """||F||^2 - (2 ||L||^2 E + 1), with ||L||^2 = 1/2 sum_ij L_ij^2 = |q|^2|p|^2 - (q.p)^2."""
    F = runge_lenz(q, p)
    return float(F @ F) - (2.0 * _L_norm_sq(q, p) * kepler_energy(q, p) + 1.0)


def _kepler_invariants(n: int) -> dict:
    def E(v):
        return kepler_energy(v[:n], v[n:])

    def Lnorm(v):
        return math.sqrt(max(_L_norm_sq(v[:n], v[n:]), 0.0))

    def Fnorm(v):
        return float(np.linalg.norm(runge_lenz(v[:n], v[n:])))

    def ecc(v):
        return eccentricity_residual(v[:n], v[n:])

    return {"E": E, "L_norm": Lnorm, "F_norm": Fnorm, "eccentricity_identity": ecc}


def transport_to_kepler(
    traj: Trajectory, params: StereoParams, pole_tol: float = 1e-6, quadrature: str = "simpson"
) -> list[Trajectory]:
    """Map a free-flow trajectory on H = eps/(2h^2) to Kepler trajectories.

    Each sample (x, y) becomes (q, p) through ``stereo_covector``; the Kepler
    time t = -(eps/h^2) * integral |q| ds is accumulated by cumulative
    Simpson quadrature (``quadrature="trapezoid"`` selects the second-order
    rule, which is too coarse near perihelion of eccentric orbits).  Samples with h - x0 < pole_tol are dropped and the trajectory is
    split there.  Each returned arc has increasing times, with t = 0 at the arc's
    first free-flow sample.
    """
    h, eps = params.h, params.eps
    d = params.n + 1
    X = traj.states[:, :d]
    near_pole = np.abs(h - X[:, 0]) < pole_tol
    arcs = []
    start = None
    for i in range(len(traj) + 1):
        ok = i < len(traj) and not near_pole[i]
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start >= 2:
                arcs.append((start, i))
            start = None

    n = params.n
    inv = _kepler_invariants(n)
    out = []
    for a, b in arcs:
        qs, ps = [], []
        for row in traj.states[a:b]:
            q, p = stereo_covector(row[:d], row[d:], params)
            qs.append(q)
            ps.append(p)
        qs, ps = np.array(qs), np.array(ps)
        r = np.linalg.norm(qs, axis=1)
        if quadrature == "simpson" and b - a >= 3:
            acc = cumulative_simpson(r, x=traj.times[a:b], initial=0.0)
        elif quadrature in ("simpson", "trapezoid"):
            acc = cumulative_trapezoid(r, traj.times[a:b], initial=0.0)
        else:
            raise ValueError(f"unknown quadrature {quadrature!r}")
        t = -(eps / (h * h)) * acc
        states = np.hstack([qs, ps])
        if t[-1] < t[0]:
            t, states = t[::-1].copy(), states[::-1].copy()
        series = {name: np.array([g(v) for v in states]) for name, g in inv.items()}
        out.append(Trajectory(t, states, series))
    return out


def _lagrange_derivative(t: np.ndarray, Y: np.ndarray, points: int = 5) -> np.ndarray:
    # derivative at t[i] of the interpolant through the `points` nearest samples (interior points only)
    half = points // 2
    m = t.size
    idx = np.arange(half, m - half)
    nodes = np.stack([t[idx + k] for k in range(-half, half + 1)], axis=1)
    x = nodes[:, half]
    w = np.zeros_like(nodes)
    for j in range(points):
        if j == half:
            continue
        # l_j'(x_c) = 1/(x_j - x_c) * prod_{l != j, c} (x_c - x_l)/(x_j - x_l)
        term = 1.0 / (nodes[:, j] - x)
        for l in range(points):
            if l not in (j, half):
                term = term * (x - nodes[:, l]) / (nodes[:, j] - nodes[:, l])
        w[:, j] = term
    w[:, half] = -w.sum(axis=1)
    return sum(w[:, [k]] * Y[idx + k - half] for k in range(points))


def kepler_ode_residual(traj: Trajectory, points: int = 7) -> tuple[float, float]:
    """Max residuals of dq/dt - p and dp/dt + q/|q|^3 on interior samples.

    Derivatives come from Lagrange interpolation through ``points`` (odd)
    consecutive samples of the non-uniform time grid.
    """
    if points < 3 or points % 2 == 0:
        raise ValueError("points must be odd and at least 3")
    n = traj.states.shape[1] // 2
    if len(traj) < points:
        raise ValueError(f"need at least {points} samples")
    half = points // 2
    Q, P = traj.states[:, :n], traj.states[:, n:]
    dQ = _lagrange_derivative(traj.times, Q, points)
    dP = _lagrange_derivative(traj.times, P, points)
    Qi, Pi = Q[half:-half], P[half:-half]
    r = np.linalg.norm(Qi, axis=1)[:, None]
    return float(np.max(np.abs(dQ - Pi))), float(np.max(np.abs(dP + Qi / r**3)))


def momentum_and_lenz(x, y, params: StereoParams) -> tuple[np.ndarray, np.ndarray]:
    """Blocks of the constant matrix (x ^ y)_eps seen in R^{n+1}.

    L = (ybar ^ xbar)_eps restricted to the last n coordinates and
    F = h (y0 (e0 ^ xbar)_eps - x0 (e0 ^ ybar)_eps) e0 = h (x0 ybar - y0 xbar).
    After transport these equal q ^ p and Lp - q/|q|.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    form = params.form
    e0 = np.zeros(form.dim)
    e0[0] = 1.0
    xbar = np.concatenate([[0.0], x[1:]])
    ybar = np.concatenate([[0.0], y[1:]])
    L = wedge_eps(ybar, xbar, form)[1:, 1:]
    F = params.h * (y[0] * wedge_eps(e0, xbar, form) - x[0] * wedge_eps(e0, ybar, form)) @ e0
    return L, F[1:]


def conic_classify(traj: Trajectory, line_tol: float = 1e-9) -> ConicRecord:
    """Classify a Kepler trajectory and fit |q| = ||L||^2 / (1 + ||F|| cos phi).

    phi is the angle between q and F, so the fit residual measures how well the
    samples sit on the focal conic.  A vanishing angular momentum gives kind
    "line".
    """
    n = traj.states.shape[1] // 2
    q0, p0 = traj.states[0, :n], traj.states[0, n:]
    E = kepler_energy(q0, p0)
    L2 = _L_norm_sq(q0, p0)
    F = runge_lenz(q0, p0)
    e = float(np.linalg.norm(F))
    if math.sqrt(max(L2, 0.0)) < line_tol:
        return ConicRecord("line", e, 0.0, E, float("nan"))
    if abs(e - 1.0) < PARABOLA_TOL:
        kind = "parabola"
    else:
        kind = "ellipse" if e < 1.0 else "hyperbola"
    qs = traj.states[:, :n]
    r = np.linalg.norm(qs, axis=1)
    # e |q| cos(phi) = F . q
    resid = r * (1.0 + (qs @ F) / r) - L2
    return ConicRecord(kind, e, math.sqrt(L2), E, float(np.max(np.abs(resid))))


def euclidean_free_field(n: int):
    """Flow of H0 = 1/2 (|p|^4/4) |q|^2 with p as position: dp = dH0/dq, dq = -dH0/dp."""

    def f(v: np.ndarray) -> np.ndarray:
        p, q = v[:n], v[n:]
        pp, qq = p @ p, q @ q
        return np.concatenate([(pp * pp / 4.0) * q, -(pp * qq / 2.0) * p])

    return f


def euclidean_limit_check(traj: Trajectory) -> EuclideanLimitReport:
    """Check the Euclidean limit on a trajectory of ``euclidean_free_field``.

    States are [p, q].  w = 2p/|p|^2 must move on a straight line a + b s
    (second differences vanish) and q must follow
    q(s) = 1/2 (b(|a|^2 - |b|^2 s^2) - 2a((a,b) + |b|^2 s)), while
    E = 1/2|p|^2 - 1/|q| vanishes on the level H0 = 1/2.
    """
    n = traj.states.shape[1] // 2
    P, Q = traj.states[:, :n], traj.states[:, n:]
    pp = np.sum(P * P, axis=1)
    if np.any(pp < 1e-12):
        raise ValueError("|p| too close to zero")
    W = 2.0 * P / pp[:, None]
    s = traj.times - traj.times[0]
    ds = np.diff(s)
    slopes = np.diff(W, axis=0) / ds[:, None]
    line_res = float(np.max(np.abs(np.diff(slopes, axis=0)))) if len(s) > 2 else 0.0
    a = W[0]
    p0, q0 = P[0], Q[0]
    dp0 = (pp[0] ** 2 / 4.0) * q0
    b = 2.0 * dp0 / pp[0] - 4.0 * (p0 @ dp0) * p0 / pp[0] ** 2
    ab, bb, aa = a @ b, b @ b, a @ a
    Qf = 0.5 * (np.outer(aa - bb * s**2, b) - 2.0 * np.outer(ab + bb * s, a))
    par_res = float(np.max(np.abs(Qf - Q)))
    E = 0.5 * pp - 1.0 / np.linalg.norm(Q, axis=1)
    return EuclideanLimitReport(line_res, par_res, float(np.max(np.abs(E))))
