"""Elastic curves on space forms, Serret-Frenet frames and the n-dimensional pendulum.

The Lie algebra is so_eps(n+1) with the space-form splitting: p holds the
first row/column block and k the lower-right so(n) block.  The drift is the
generator E1, and the k-part of an elastic extremal lies in the complement of
k_A = {U in k : [U, E1] = 0}, i.e. Lperp = (l ^ e1) on span(e1, ..., en) with
l orthogonal to e1.

Trace-form conventions follow ``cartan.trace_form``.  The curvature uses the
positive metric on p (eps times the trace form), in which ||E1|| = 1 for both
signs of eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine_flow import AffineSystem, extremal_field, space_form_generator
from .cartan import CartanElement, CartanSplit, EpsForm, bracket, trace_form
from .integrator import Trajectory, integrate

__all__ = [
    "ElasticState",
    "FrenetFrame",
    "p_norm_sq",
    "curvature_sq",
    "elastic_system",
    "elastic_rhs",
    "elastic_field",
    "elastic_invariants",
    "kappa_sq_rate",
    "kappa_cubic_residual",
    "elastic_energy",
    "integrate_with_frame",
    "sphere_curve_frenet",
    "frenet_rhs",
    "frenet_field",
    "orthonormalize",
    "pendulum_rhs",
    "pendulum_field",
    "pendulum_energy",
    "pendulum_k0",
    "embed_pendulum",
    "pendulum_embedding",
    "elastic_from_pendulum",
]


def _p_matrix(p: np.ndarray, eps: int) -> np.ndarray:
    N = p.size + 1
    M = np.zeros((N, N))
    M[1:, 0] = p
    M[0, 1:] = -eps * p
    return M


@dataclass(frozen=True)
class ElasticState:
    """(Lp, Lperp) with Lp in p and Lperp in the complement of k_A in k."""

    Lp: np.ndarray
    Lperp: np.ndarray
    form: EpsForm

    def __post_init__(self) -> None:
        d = self.form.dim
        Lp = np.asarray(self.Lp, dtype=float)
        Lperp = np.asarray(self.Lperp, dtype=float)
        if Lp.shape != (d, d) or Lperp.shape != (d, d):
            raise ValueError(f"parts must be {d}x{d}")
        object.__setattr__(self, "Lp", Lp)
        object.__setattr__(self, "Lperp", Lperp)

    @property
    def A(self) -> np.ndarray:
        return space_form_generator(self.form)

    @classmethod
    def from_vectors(cls, p, l, form: EpsForm) -> ElasticState:
        """Lp from p in R^n, Lperp = (l ^ e1) with l in span(e2, ..., en) given by n-1 entries."""
        p = np.asarray(p, dtype=float)
        l = np.asarray(l, dtype=float)
        if p.shape != (form.n,) or l.shape != (form.n - 1,):
            raise ValueError(f"need p of length {form.n} and l of length {form.n - 1}")
        Lperp = np.zeros((form.dim, form.dim))
        Lperp[2:, 1] = l
        Lperp[1, 2:] = -l
        return cls(_p_matrix(p, form.eps), Lperp, form)

    def residual(self) -> float:
        """Largest entry violating the shape constraints (0 for a valid state)."""
        d = self.form.dim
        bad = [self.Lp[1:, 1:], self.Lp[0, 0:1], self.Lp[0, 1:] + self.form.eps * self.Lp[1:, 0]]
        bad += [self.Lperp[0, :], self.Lperp[:, 0], self.Lperp + self.Lperp.T]
        if d > 3:
            bad.append(self.Lperp[2:, 2:])  # the k_A block
        bad.append(np.diag(self.Lperp))
        return float(max(np.max(np.abs(b)) for b in bad))

    def validate(self, tol: float = 1e-12) -> None:
        if self.residual() > tol * max(1.0, float(np.max(np.abs(self.Lp))), float(np.max(np.abs(self.Lperp)))):
            raise ValueError("not a space-form elastic state (Lperp has a k_A component or wrong blocks)")

    def cartan(self) -> CartanElement:
        return CartanElement(self.Lp, self.Lperp)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.Lp.ravel(), self.Lperp.ravel()])

    @classmethod
    def from_vector(cls, v, form: EpsForm) -> ElasticState:
        d = form.dim
        m = d * d
        v = np.asarray(v, dtype=float)
        return cls(v[:m].reshape(d, d), v[m : 2 * m].reshape(d, d), form)


@dataclass(frozen=True)
class FrenetFrame:
    T: np.ndarray
    N: np.ndarray
    B: np.ndarray
    kappa: float
    tau: float

    def matrix(self) -> np.ndarray:
        return np.stack([self.T, self.N, self.B])

    def orthonormality_error(self) -> float:
        F = self.matrix()
        return float(np.max(np.abs(F @ F.T - np.eye(3))))


def p_norm_sq(M, form: EpsForm) -> float:
    """Positive metric on p: eps * <M, M>, equal to |m|^2 for M = P(m)."""
    return form.eps * trace_form(M, M)


def curvature_sq(U, A, form: EpsForm) -> float:
    """kappa^2 = ||[U, A]||^2 in the positive metric on p; needs ||A|| = 1.

    For U = (l ^ e1) this equals <U, U> = |l|^2.
    """
    if abs(p_norm_sq(A, form) - 1.0) > 1e-12:
        raise ValueError("A must have unit norm")
    return p_norm_sq(bracket(U, A), form)


def elastic_system(form: EpsForm, s: float) -> AffineSystem:
    return AffineSystem(space_form_generator(form), s, form, CartanSplit.SPACE_FORM)


def elastic_rhs(state: ElasticState, s: float) -> CartanElement:
    """dLp/dt = [Lperp, Lp] + s [A, Lperp], dLperp/dt = [A, Lp].

    Returned as a CartanElement (Lp slot = dLp/dt, Lk slot = dLperp/dt).
    """
    A = state.A
    dLp = bracket(state.Lperp, state.Lp) + s * bracket(A, state.Lperp)
    return CartanElement(dLp, bracket(A, state.Lp))


def elastic_field(form: EpsForm, s: float):
    """Flat field on [Lp, Lperp]; identical to the extremal field with drift E1."""
    return extremal_field(elastic_system(form, s))


def elastic_invariants(state: ElasticState, s: float) -> dict[str, float]:
    """H = 1/2 <Lperp, Lperp> + <A, Lp>, I1 = s <Lperp, Lperp> + <Lp, Lp>,
    I2 = <Lperp, Lperp><Lp, Lp> - <C, C> with C = [Lperp, Lp]."""
    Lp, Lq = state.Lp, state.Lperp
    nq = trace_form(Lq, Lq)
    np_ = trace_form(Lp, Lp)
    C = bracket(Lq, Lp)
    return {
        "H": 0.5 * nq + trace_form(state.A, Lp),
        "I1": s * nq + np_,
        "I2": nq * np_ - trace_form(C, C),
    }


def kappa_sq_rate(state: ElasticState) -> float:
    """d(kappa^2)/dt = 2 <Lperp, [A, Lp]> along the elastic flow."""
    return 2.0 * trace_form(state.Lperp, bracket(state.A, state.Lp))


def kappa_cubic_residual(
    xi: float,
    dxi_dt: float,
    H: float,
    curv: float,
    I1: float,
    I2: float,
    eps: int = 1,
    printed: bool = False,
) -> float:
    """(dxi/dt)^2 minus the cubic in xi = kappa^2.

    ``curv`` is the sectional curvature eps*s of the space form.  The cubic is
    -xi^3 + 4(H - curv) xi^2 + 4(eps*I1 - H^2) xi - 4*eps*I2 with H, I1, I2 from
    ``elastic_invariants``.  ``printed=True`` uses the variant
    -xi^3 + 4(H - curv) xi^2 + 4(I1 - H^2) xi + 4*I2 for comparison.
    """
    if printed:
        cubic = -(xi**3) + 4 * (H - curv) * xi**2 + 4 * (I1 - H * H) * xi + 4 * I2
    else:
        cubic = -(xi**3) + 4 * (H - curv) * xi**2 + 4 * (eps * I1 - H * H) * xi - 4 * eps * I2
    return dxi_dt * dxi_dt - cubic


def elastic_energy(traj: Trajectory, form: EpsForm) -> tuple[float, float]:
    """(1/2 int kappa^2 dt, 1/2 int <Lperp, Lperp> dt) by the trapezoidal rule."""
    A = space_form_generator(form)
    d = form.dim
    m = d * d
    k2 = np.array([curvature_sq(v[m : 2 * m].reshape(d, d), A, form) for v in traj.states])
    nq = np.array([trace_form(v[m : 2 * m].reshape(d, d), v[m : 2 * m].reshape(d, d)) for v in traj.states])
    return 0.5 * float(np.trapezoid(k2, traj.times)), 0.5 * float(np.trapezoid(nq, traj.times))


def integrate_with_frame(state: ElasticState, s: float, t_end: float, dt: float, g0=None) -> Trajectory:
    """Integrate the elastic flow together with dg/dt = g (A + Lperp).

    States are [Lp, Lperp, g] flattened.  The projected curve is x(t) = g(t) e0
    with unit tangent g(t) e1.
    """
    form = state.form
    d = form.dim
    m = d * d
    A = state.A
    base = elastic_field(form, s)
    g0 = np.eye(d) if g0 is None else np.asarray(g0, dtype=float)

    def f(v: np.ndarray) -> np.ndarray:
        g = v[2 * m :].reshape(d, d)
        Lq = v[m : 2 * m].reshape(d, d)
        return np.concatenate([base(v[: 2 * m]), (g @ (A + Lq)).ravel()])

    return integrate(f, np.concatenate([state.to_vector(), g0.ravel()]), t_end, dt)


def sphere_curve_frenet(times: np.ndarray, gs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Geodesic curvature and torsion of x = g e0 on the unit sphere.

    With T = g e1, the covariant derivatives on S^n are DT/dt = dT/dt + x and
    DN/dt = dN/dt, so kappa = |dT/dt + x| and tau = |dN/dt + kappa T|.
    Derivatives are second-order central differences in time (torsion is
    reported as a nonnegative number).
    """
    x = gs[:, :, 0]
    T = gs[:, :, 1]
    dT = np.gradient(T, times, axis=0, edge_order=2)
    kN = dT + x
    kappa = np.linalg.norm(kN, axis=1)
    N = kN / kappa[:, None]
    dN = np.gradient(N, times, axis=0, edge_order=2)
    tau = np.linalg.norm(dN + kappa[:, None] * T, axis=1)
    return kappa, tau


def frenet_rhs(frame: FrenetFrame, printed: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """dT = kappa N, dN = -kappa T + tau B, dB = -tau N.

    ``printed=True`` uses dB = -kappa N instead.
    """
    k, t = frame.kappa, frame.tau
    dB = -(k if printed else t) * frame.N
    return k * frame.N, -k * frame.T + t * frame.B, dB


def frenet_field(kappa: float, tau: float, printed: bool = False):
    """Flat field on [T, N, B] for constant curvature and torsion."""

    def f(v: np.ndarray) -> np.ndarray:
        fr = FrenetFrame(v[0:3], v[3:6], v[6:9], kappa, tau)
        return np.concatenate(frenet_rhs(fr, printed))

    return f


def orthonormalize(v: np.ndarray) -> np.ndarray:
    """Nearest orthonormal triple (polar factor) for flat [T, N, B]."""
    F = v.reshape(3, 3)
    U, _, Vt = np.linalg.svd(F)
    return (U @ Vt).ravel()


def _k1_part(Q: np.ndarray) -> np.ndarray:
    Q1 = np.zeros_like(Q)
    Q1[0, :] = Q[0, :]
    Q1[:, 0] = Q[:, 0]
    return Q1


def pendulum_k0(Q) -> np.ndarray:
    """The so(n-1) block of Q (the part commuting with e1 directions)."""
    Q = np.asarray(Q, dtype=float)
    return Q - _k1_part(Q)


def pendulum_rhs(R, Q) -> tuple[np.ndarray, np.ndarray]:
    """dR = R Q1, dQ = [Q1, Q] - (R^T e1) ^ e1, Q1 the k1-part of Q."""
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = R.shape[0]
    if np.max(np.abs(R.T @ R - np.eye(n))) > 1e-8:
        raise ValueError("R is not orthogonal")
    Q1 = _k1_part(Q)
    a = R[0, :].copy()
    e1 = np.zeros(n)
    e1[0] = 1.0
    return R @ Q1, bracket(Q1, Q) - (np.outer(a, e1) - np.outer(e1, a))


def pendulum_field(n: int):
    m = n * n

    def f(v: np.ndarray) -> np.ndarray:
        R = v[:m].reshape(n, n)
        Q = v[m:].reshape(n, n)
        Q1 = _k1_part(Q)
        a = R[0, :]
        W = np.zeros((n, n))
        W[:, 0] += a
        W[0, :] -= a
        return np.concatenate([(R @ Q1).ravel(), (Q1 @ Q - Q @ Q1 - W).ravel()])

    return f


def pendulum_energy(R, Q) -> float:
    """1/2 <Q1, Q1> + (e1 . R e1 + 1)."""
    Q1 = _k1_part(np.asarray(Q, dtype=float))
    return 0.5 * trace_form(Q1, Q1) + float(np.asarray(R)[0, 0]) + 1.0


def embed_pendulum(R, Q) -> tuple[np.ndarray, np.ndarray]:
    """(P, Q1~) in so(n+1): P has column p = -R^T e1, Q1~ = diag(0, Q1).

    The correspondence with the elastic flow needs the k0 block of Q to vanish
    (the analogue of Lperp having no k_A component); other Q are rejected.
    """
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = R.shape[0]
    if np.max(np.abs(pendulum_k0(Q)), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(Q)))):
        raise ValueError("Q has a nonzero so(n-1) block; the embedding needs Q0 = 0")
    P = _p_matrix(-R[0, :], 1)
    Qt = np.zeros((n + 1, n + 1))
    Qt[1:, 1:] = _k1_part(Q)
    return P, Qt


def pendulum_embedding(P, Q1t) -> tuple[np.ndarray, np.ndarray]:
    """dP = [P, Q1~], dQ1~ = [E1, P] with eps = +1."""
    P = np.asarray(P, dtype=float)
    E1 = space_form_generator(EpsForm(P.shape[0] - 1, 1))
    return bracket(P, Q1t), bracket(E1, P)


def elastic_from_pendulum(P, Q1t) -> ElasticState:
    """The elastic state matching (P, Q1~): Lp = -P, Lperp = -Q1~.

    Under this identification ``elastic_rhs`` at s = 0 is the negative of
    ``pendulum_embedding``, i.e. both describe the same curve in (P, Q1~).
    """
    P = np.asarray(P, dtype=float)
    return ElasticState(-P, -np.asarray(Q1t, dtype=float), EpsForm(P.shape[0] - 1, 1))
