import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seabalance import kernels
from seabalance.model import single_body
from seabalance.multibody import (SimState, SingularConstraintError, compute_dynamics,
                                  constrained_forward_dynamics, contact_pose_error,
                                  gravity_torques, integrate_quat, kkt_residual, quat_derivative)
from seabalance.randmodel import random_model

import oracles
from conftest import random_state


def test_free_body_at_rest():
    m = single_body(2.0, (0.1, 0.2, 0.3, 0.0, 0.0, 0.0))
    st_ = SimState.rest(m)
    dyn = compute_dynamics(m, st_)
    M = np.zeros((6, 6))
    M[:3, :3] = 2.0 * np.eye(3)
    M[3:, 3:] = np.diag([0.1, 0.2, 0.3])
    np.testing.assert_allclose(dyn.M, M, atol=1e-14)
    np.testing.assert_allclose(dyn.h, [0, 0, 2.0 * 9.81, 0, 0, 0], atol=1e-14)


def test_free_fall():
    m = single_body()
    nud, f = constrained_forward_dynamics(m, SimState.rest(m), np.zeros(0))
    np.testing.assert_allclose(nud, [0, 0, -9.81, 0, 0, 0], atol=1e-14)
    assert f.shape == (0,)


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_backends_agree(biped14, rng, backend):
    st_ = random_state(biped14, rng)
    a = kernels.dynamics(biped14.kernel, st_.p, st_.quat, st_.s, st_.nu, backend)
    b = kernels.dynamics(biped14.kernel, st_.p, st_.quat, st_.s, st_.nu, "python")
    for k in vars(a):
        np.testing.assert_allclose(getattr(a, k), getattr(b, k), atol=1e-12, err_msg=k)


def test_mass_matrix_energy_hessian(biped5, rng):
    for _ in range(5):
        st_ = random_state(biped5, rng)
        M = compute_dynamics(biped5, st_).M
        Mo = oracles.energy_hessian(biped5, st_.p, st_.quat, st_.s)
        assert np.linalg.norm(M - Mo) <= 1e-8 * np.linalg.norm(Mo)


def test_mass_matrix_with_armature(biped5, rng):
    m = biped5.with_armature(0.1)
    st_ = random_state(m, rng)
    M = compute_dynamics(m, st_).M
    np.testing.assert_allclose(M - compute_dynamics(biped5, st_).M, np.diag([0] * 6 + [0.1] * 5), atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mass_matrix_random_models(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    st_ = random_state(m, rng)
    M = compute_dynamics(m, st_).M
    np.testing.assert_allclose(M, M.T, atol=1e-12)
    np.linalg.cholesky(M)
    Mo = oracles.energy_hessian(m, st_.p, st_.quat, st_.s)
    assert np.linalg.norm(M - Mo) <= 1e-8 * np.linalg.norm(Mo)


def test_gravity_is_potential_gradient(biped14, rng):
    st_ = random_state(biped14, rng)
    dyn = compute_dynamics(biped14, st_.copy(nu=np.zeros(biped14.n + 6)))
    np.testing.assert_allclose(dyn.h, dyn.grav, atol=1e-14)
    N = biped14.n + 6
    G = np.zeros(N)
    eps = 1e-6
    for i in range(N):
        e = np.eye(N)[i]
        Vp = oracles.potential(biped14, *oracles.displace(st_.p, st_.quat, st_.s, e, eps))
        Vm = oracles.potential(biped14, *oracles.displace(st_.p, st_.quat, st_.s, e, -eps))
        G[i] = (Vp - Vm) / (2 * eps)
    np.testing.assert_allclose(dyn.grav, G, rtol=1e-6, atol=1e-6 * np.abs(G).max())


def _jac_fd(model, st_, c, dq, eps=1e-6):
    pp, Rp = oracles.contact_pose(model, *oracles.displace(st_.p, st_.quat, st_.s, dq, eps), c)
    pm, Rm = oracles.contact_pose(model, *oracles.displace(st_.p, st_.quat, st_.s, dq, -eps), c)
    E = Rp @ Rm.T
    w = 0.5 * np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])
    return np.concatenate([(pp - pm) / (2 * eps), w / (2 * eps)])


def test_contact_jacobian_fd(biped14, rng):
    st_ = random_state(biped14, rng)
    dyn = compute_dynamics(biped14, st_)
    N = biped14.n + 6
    for c in range(biped14.nc):
        for i in range(N):
            col = _jac_fd(biped14, st_, c, np.eye(N)[i])
            Jc = dyn.J[6 * c:6 * c + 6, i]
            assert np.linalg.norm(col - Jc) <= 1e-6 * max(1.0, np.linalg.norm(Jc))


def test_contact_frames_match_oracle(biped14, rng):
    st_ = random_state(biped14, rng)
    dyn = compute_dynamics(biped14, st_)
    for c in range(biped14.nc):
        pos, R = oracles.contact_pose(biped14, st_.p, st_.quat, st_.s, c)
        np.testing.assert_allclose(dyn.kin.cpos[c], pos, atol=1e-12)
        np.testing.assert_allclose(dyn.kin.crot[c], R, atol=1e-12)


def test_jdot_nu_fd(biped14, rng):
    st_ = random_state(biped14, rng)
    dyn = compute_dynamics(biped14, st_)
    eps = 1e-6
    Js = []
    for sgn in (1, -1):
        p, q, s = oracles.displace(st_.p, st_.quat, st_.s, st_.nu, sgn * eps)
        Js.append(compute_dynamics(biped14, SimState(p, q, s, st_.nu)).J @ st_.nu)
    fd = (Js[0] - Js[1]) / (2 * eps)
    np.testing.assert_allclose(dyn.Jdv, fd, atol=1e-6 * max(1.0, np.abs(fd).max()))


def test_kkt_residual(biped5, rng):
    for _ in range(10):
        st_ = random_state(biped5, rng)
        tau = rng.normal(size=5) * 10
        dyn = compute_dynamics(biped5, st_)
        nud, f = constrained_forward_dynamics(biped5, st_, tau, gains=(0.0, 0.0), dyn=dyn)
        r1, r2 = kkt_residual(dyn, nud, f, tau, -dyn.Jdv)
        assert np.abs(r1).max() < 1e-9 and np.abs(r2).max() < 1e-9


def test_static_equilibrium(biped5):
    st_ = SimState.rest(biped5)
    tau, f0 = gravity_torques(biped5, st_)
    nud, f = constrained_forward_dynamics(biped5, st_, tau)
    assert np.abs(nud).max() < 1e-9
    assert f[2] == pytest.approx(biped5.total_mass * 9.81)


def test_baumgarte_pulls_back(biped5):
    st_ = SimState.rest(biped5)
    dyn = compute_dynamics(biped5, st_)
    anchors = [(dyn.kin.cpos[0] + [0, 0, 0.01], dyn.kin.crot[0])]
    e = contact_pose_error(dyn, anchors)
    assert e[2] == pytest.approx(-0.01)
    tau, _ = gravity_torques(biped5, st_)
    nud, _ = constrained_forward_dynamics(biped5, st_, tau, dyn=dyn, anchors=anchors)
    assert (dyn.J @ nud + dyn.Jdv)[2] == pytest.approx(100 * 0.01)


def test_planar_double_support_is_singular(biped5):
    both = biped5.__class__(links=biped5.links, joints=biped5.joints,
                            contacts=biped5.contacts + (biped5.contacts[0].__class__(
                                "l_sole", "l_foot", (0.0, 0.0, -0.05), (0.0, 0.0, 0.0), (0.08, 0.04)),))
    with pytest.raises(SingularConstraintError) as exc:
        constrained_forward_dynamics(both, SimState.rest(both), np.zeros(5))
    assert exc.value.contact == "l_sole"


def test_quaternion_rates():
    q = np.array([1.0, 0, 0, 0])
    np.testing.assert_allclose(quat_derivative(q, np.zeros(3)), 0)
    qd = quat_derivative(1.01 * q, np.zeros(3), lam=10.0)
    assert qd @ q < 0 and np.linalg.norm(np.cross(qd[1:], q[1:])) == 0


def test_quaternion_rate_matches_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w = rng.normal(size=3)
    eps = 1e-6
    qp = oracles.displace(np.zeros(3), q, np.zeros(0), np.concatenate([np.zeros(3), w]), eps)[1]
    qm = oracles.displace(np.zeros(3), q, np.zeros(0), np.concatenate([np.zeros(3), w]), -eps)[1]
    np.testing.assert_allclose(quat_derivative(q, w, lam=0.0), (qp - qm) / (2 * eps), atol=1e-8)


def test_integrate_quat_is_reversible(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w = rng.normal(size=3)
    back = integrate_quat(integrate_quat(q, w, 0.3), w, -0.3)
    np.testing.assert_allclose(back, q, atol=1e-14)
    assert not np.allclose(integrate_quat(q, w, -0.3), q)
