from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from symflow import elastica as el
from symflow.affine_flow import extremal_rhs, k_A_basis
from symflow.cartan import CartanElement, EpsForm, bracket, in_k, trace_form
from symflow.integrator import integrate

seeds = st.integers(0, 100_000)
signs = st.sampled_from([1, -1])


def _state(eps, seed, n=3, scale=0.7):
    rng = np.random.default_rng(seed)
    return el.ElasticState.from_vectors(scale * rng.normal(size=n), scale * rng.normal(size=n - 1), EpsForm(n, eps))


def _rotation(seed, n=3):
    K = np.random.default_rng(seed).normal(size=(n, n))
    return expm(0.5 * (K - K.T))


# ---------------------------------------------------------------- states and curvature


def test_state_shapes_and_validation():
    form = EpsForm(3, -1)
    s = el.ElasticState.from_vectors([1.0, 2.0, 3.0], [0.5, -0.5], form)
    assert s.residual() == 0.0
    s.validate()
    assert s.Lp[1, 0] == 1.0 and s.Lp[0, 1] == 1.0
    assert s.Lperp[2, 1] == 0.5 and s.Lperp[1, 2] == -0.5
    back = el.ElasticState.from_vector(s.to_vector(), form)
    assert np.array_equal(back.Lp, s.Lp) and np.array_equal(back.Lperp, s.Lperp)
    bad = s.Lperp.copy()
    bad[2, 3], bad[3, 2] = 0.1, -0.1
    with pytest.raises(ValueError):
        el.ElasticState(s.Lp, bad, form).validate()
    with pytest.raises(ValueError):
        el.ElasticState.from_vectors([1.0, 2.0], [0.5, -0.5], form)


@pytest.mark.parametrize("eps", [1, -1])
def test_curvature_of_k_A_vanishes(eps):
    form = EpsForm(3, eps)
    sys = el.elastic_system(form, 1)
    A = sys.A
    for U in k_A_basis(sys):
        assert abs(el.curvature_sq(U, A, form)) < 1e-14


@given(seeds, signs)
def test_curvature_equals_trace_form(seed, eps):
    s = _state(eps, seed)
    assert el.curvature_sq(s.Lperp, s.A, s.form) == pytest.approx(trace_form(s.Lperp, s.Lperp), abs=1e-12)
    assert el.p_norm_sq(s.A, s.form) == pytest.approx(1.0)


def test_curvature_requires_unit_drift():
    form = EpsForm(3)
    s = _state(1, 0)
    with pytest.raises(ValueError):
        el.curvature_sq(s.Lperp, 2 * s.A, form)


# ---------------------------------------------------------------- elastic flow


@given(seeds, signs, st.sampled_from([0, 1]))
def test_elastic_rhs_is_extremal_specialization(seed, eps, s):
    state = _state(eps, seed)
    sys = el.elastic_system(state.form, s)
    a = el.elastic_rhs(state, s)
    b = extremal_rhs(state.cartan(), sys)
    assert np.allclose(a.Lp, b.Lp, atol=1e-15) and np.allclose(a.Lk, b.Lk, atol=1e-15)
    flat = el.elastic_field(state.form, s)(state.to_vector())
    assert np.allclose(flat, a.to_vector(), atol=1e-15)
    # the flow stays off k_A
    assert in_k(a.Lk, state.form, sys.split)
    assert np.max(np.abs(a.Lk[2:, 2:])) == 0.0


@pytest.mark.parametrize("s", [0, 1])
@pytest.mark.parametrize("eps", [1, -1])
def test_invariants_conserved(eps, s):
    state = _state(eps, 21)
    inv = {k: (lambda v, k=k: el.elastic_invariants(el.ElasticState.from_vector(v, state.form), s)[k]) for k in ("H", "I1", "I2")}
    traj = integrate(el.elastic_field(state.form, s), state.to_vector(), 5.0, 1e-3, invariants=inv)
    for series in traj.invariants.values():
        assert np.max(np.abs(series - series[0])) / max(1.0, abs(series[0])) < 1e-9


def test_elastic_energy_agrees():
    state = _state(1, 5)
    traj = integrate(el.elastic_field(state.form, 1), state.to_vector(), 4.0, 1e-3)
    e_kappa, e_perp = el.elastic_energy(traj, state.form)
    assert e_kappa > 0
    assert e_kappa == pytest.approx(e_perp, rel=1e-12)


def test_kappa_rate_matches_finite_difference():
    state = _state(-1, 9)
    f = el.elastic_field(state.form, 1)
    h = 1e-4
    traj = integrate(f, state.to_vector(), 2 * h, h)
    xi = [el.curvature_sq(el.ElasticState.from_vector(v, state.form).Lperp, state.A, state.form) for v in traj.states]
    mid = el.ElasticState.from_vector(traj.states[1], state.form)
    assert (xi[2] - xi[0]) / (2 * h) == pytest.approx(el.kappa_sq_rate(mid), abs=1e-7)


# ---------------------------------------------------------------- kappa^2 cubic


def test_cubic_equilibrium():
    # Lp = 0, s = 0 is a fixed point with constant curvature |l|^2
    form = EpsForm(3, 1)
    state = el.ElasticState.from_vectors(np.zeros(3), [0.6, 0.8], form)
    d = el.elastic_rhs(state, 0)
    assert np.all(d.Lp == 0) and np.all(d.Lk == 0)
    inv = el.elastic_invariants(state, 0)
    xi = el.curvature_sq(state.Lperp, state.A, form)
    assert xi == pytest.approx(1.0)
    assert el.kappa_cubic_residual(xi, 0.0, inv["H"], 0.0, inv["I1"], inv["I2"]) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("s", [0, 1])
@pytest.mark.parametrize("eps", [1, -1])
def test_cubic_along_trajectory(eps, s):
    state = _state(eps, 31)
    form = state.form
    inv0 = el.elastic_invariants(state, s)
    traj = integrate(el.elastic_field(form, s), state.to_vector(), 5.0, 1e-3)
    worst = printed = 0.0
    for v in traj.states[::25]:
        e = el.ElasticState.from_vector(v, form)
        xi = el.curvature_sq(e.Lperp, e.A, form)
        rate = el.kappa_sq_rate(e)
        args = (xi, rate, inv0["H"], eps * s, inv0["I1"], inv0["I2"], eps)
        worst = max(worst, abs(el.kappa_cubic_residual(*args)))
        printed = max(printed, abs(el.kappa_cubic_residual(*args, printed=True)))
    assert worst < 1e-6
    # the printed cubic differs in the I2 term (and in I1 for eps = -1)
    assert printed > 1e-2


def test_torsion_identity():
    # on S^3: I2 = kappa^4 tau^2, while the printed kappa^2 tau is off by O(1)
    form = EpsForm(3, 1)
    state = el.ElasticState.from_vectors([0.3, 0.5, -0.2], [0.8, 0.4], form)
    traj = el.integrate_with_frame(state, 1, 5.0, 1e-3)
    gs = traj.states[:, 32:].reshape(-1, 4, 4)
    kappa, tau = el.sphere_curve_frenet(traj.times, gs)
    I2 = el.elastic_invariants(state, 1)["I2"]
    inner = slice(5, -5)
    assert np.max(np.abs(kappa[inner] ** 4 * tau[inner] ** 2 / I2 - 1)) < 1e-5
    assert np.max(np.abs(kappa[inner] ** 2 * tau[inner] / I2 - 1)) > 0.1
    # the frame curvature agrees with kappa^2 = ||Lperp||^2
    xi = np.array([el.curvature_sq(v[16:32].reshape(4, 4), state.A, form) for v in traj.states])
    assert np.max(np.abs(np.sqrt(xi[inner]) - kappa[inner])) < 1e-5
    # g stays orthogonal
    g = gs[-1]
    assert np.max(np.abs(g.T @ g - np.eye(4))) < 1e-9


# ---------------------------------------------------------------- Frenet frames


def test_frenet_flat_frame_constant():
    v0 = np.eye(3).ravel()
    traj = integrate(el.frenet_field(0.0, 0.0), v0, 1.0, 0.1)
    assert np.all(traj.states == v0)


def test_frenet_circle():
    kappa = 1.7
    traj = integrate(el.frenet_field(kappa, 0.0), np.eye(3).ravel(), 3.0, 1e-3)
    e = np.eye(3)
    for t, v in zip(traj.times[::300], traj.states[::300]):
        T = np.cos(kappa * t) * e[0] + np.sin(kappa * t) * e[1]
        assert np.max(np.abs(v[:3] - T)) < 1e-9


@given(st.floats(0.1, 3.0), st.floats(-2.0, 2.0))
def test_frenet_rhs_skew(kappa, tau):
    fr = el.FrenetFrame(*np.eye(3), kappa, tau)
    D = np.stack(el.frenet_rhs(fr))
    # derivative of an orthonormal frame is skew in the frame basis
    assert np.allclose(D @ fr.matrix().T + fr.matrix() @ D.T, 0.0, atol=1e-14)


def test_frenet_orthonormality():
    kappa, tau = 1.3, 0.8
    R = _rotation(4)
    traj = integrate(el.frenet_field(kappa, tau), R.ravel(), 10.0, 1e-2, project=el.orthonormalize)
    fr = el.FrenetFrame(*traj.states[-1].reshape(3, 3), kappa, tau)
    assert fr.orthonormality_error() < 1e-9
    # the printed dB = -kappa N breaks orthonormality within the same run
    bad = integrate(el.frenet_field(kappa, tau, printed=True), R.ravel(), 10.0, 1e-2)
    assert el.FrenetFrame(*bad.states[-1].reshape(3, 3), kappa, tau).orthonormality_error() > 1e-2


# ---------------------------------------------------------------- pendulum


def _pendulum_run(Q, T=5.0, seed=2):
    R = _rotation(seed)
    return integrate(el.pendulum_field(3), np.concatenate([R.ravel(), Q.ravel()]), T, 1e-3)


def test_pendulum_energy_and_k0():
    Q = np.array([[0, 0.4, -0.1], [-0.4, 0, 0.7], [0.1, -0.7, 0]])
    traj = _pendulum_run(Q)
    E = [el.pendulum_energy(v[:9].reshape(3, 3), v[9:].reshape(3, 3)) for v in traj.states]
    Q0 = np.array([el.pendulum_k0(v[9:].reshape(3, 3)) for v in traj.states])
    assert np.ptp(E) < 1e-9
    assert np.max(np.abs(Q0 - Q0[0])) < 1e-12
    assert Q0[0][1, 2] == 0.7


def test_pendulum_field_matches_rhs():
    R = _rotation(3)
    Q = np.array([[0, 0.3, 0.2], [-0.3, 0, 0.5], [-0.2, -0.5, 0]])
    dR, dQ = el.pendulum_rhs(R, Q)
    flat = el.pendulum_field(3)(np.concatenate([R.ravel(), Q.ravel()]))
    assert np.allclose(flat, np.concatenate([dR.ravel(), dQ.ravel()]), atol=1e-15)
    with pytest.raises(ValueError):
        el.pendulum_rhs(2 * R, Q)


def test_hanging_equilibrium():
    R = np.diag([-1.0, -1.0, 1.0])
    dR, dQ = el.pendulum_rhs(R, np.zeros((3, 3)))
    assert np.all(dR == 0) and np.all(dQ == 0)
    assert el.pendulum_energy(R, np.zeros((3, 3))) == 0.0


def test_embedding_coincides_with_elastic_flow():
    Q = np.array([[0, 0.4, -0.1], [-0.4, 0, 0.0], [0.1, 0.0, 0]])
    traj = _pendulum_run(Q, T=3.0)
    for v in traj.states[::100]:
        P, Qt = el.embed_pendulum(v[:9].reshape(3, 3), v[9:].reshape(3, 3))
        dP, dQt = el.pendulum_embedding(P, Qt)
        d = el.elastic_rhs(el.elastic_from_pendulum(P, Qt), 0)
        assert np.max(np.abs(d.Lp + dP)) < 1e-14 and np.max(np.abs(d.Lk + dQt)) < 1e-14
        # [E1, P] lies in the k-block: zero first row and column
        assert np.all(dQt[0] == 0) and np.all(dQt[:, 0] == 0)
        assert np.allclose(dQt, -dQt.T)


def test_embedding_tracks_pendulum_evolution():
    # P(t) built from p = -R(t)^T e1 follows dP = [P, Q1~]
    Q = np.array([[0, 0.4, -0.1], [-0.4, 0, 0.0], [0.1, 0.0, 0]])
    dt = 1e-3
    traj = _pendulum_run(Q, T=1.0)
    emb = [el.embed_pendulum(v[:9].reshape(3, 3), v[9:].reshape(3, 3)) for v in traj.states]
    Ps = np.array([e[0] for e in emb])
    Qs = np.array([e[1] for e in emb])
    for k in range(2, len(Ps) - 2, 100):
        fdP = (Ps[k - 2] - 8 * Ps[k - 1] + 8 * Ps[k + 1] - Ps[k + 2]) / (12 * dt)
        fdQ = (Qs[k - 2] - 8 * Qs[k - 1] + 8 * Qs[k + 1] - Qs[k + 2]) / (12 * dt)
        dP, dQt = el.pendulum_embedding(Ps[k], Qs[k])
        assert np.max(np.abs(fdP - dP)) < 1e-8 and np.max(np.abs(fdQ - dQt)) < 1e-8


def test_embedding_rejects_k0_block():
    Q = np.array([[0, 0.4, -0.1], [-0.4, 0, 0.7], [0.1, -0.7, 0]])
    with pytest.raises(ValueError, match="Q0"):
        el.embed_pendulum(np.eye(3), Q)


def test_embedding_bracket_block():
    # [E1, P] = p ^ e1 on the lower so(n) block, written as a matrix on span(e1, ..., en)
    p = np.array([0.3, -0.5, 0.8])
    P, Qt = el.embed_pendulum(np.eye(3), np.zeros((3, 3)))
    P = el._p_matrix(p, 1)
    _, dQt = el.pendulum_embedding(P, Qt)
    W = np.outer(p, np.eye(3)[0]) - np.outer(np.eye(3)[0], p)
    assert np.all(dQt[0] == 0) and np.all(dQt[:, 0] == 0)
    assert np.allclose(dQt[1:, 1:], W, atol=1e-15)
