import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seabalance.centroidal import centroidal_transform, gravity_wrench, jg_bar, momentum_rate_from_forces
from seabalance.control.policies import contact_constraints
from seabalance.control.rigid import (ControllerState, RigidGains, distribute_forces, integral_rate,
                                      joint_torques, momentum_reference, postural_term, postural_torque,
                                      torque_map, update_integral)
from seabalance.multibody import compute_dynamics, constrained_forward_dynamics, contact_anchors
from seabalance.randmodel import random_model
from seabalance.scenarios import build, load_config
from seabalance.sim import IntegratorConfig, Plant, run

from conftest import random_state


@pytest.fixture(scope="module")
def single():
    return build(load_config("balance_rigid"))


@pytest.fixture(scope="module")
def double():
    return build(load_config("double_support"))


def _setup_state(setup, state=None):
    st_ = setup.state0 if state is None else state
    ctl = setup.policy.controller
    ctl.reset(setup.state0, setup.anchors)
    dyn = compute_dynamics(setup.model, st_)
    cq = centroidal_transform(setup.model, st_, dyn)
    C, b = contact_constraints(ctl.specs, dyn)
    return ctl, st_, dyn, cq, C, b


def _perturbed(setup, rng, scale=0.02, rate=0.05):
    """Contact-consistent state near the initial posture with random joint velocities."""
    from seabalance.control.rigid import posed_state
    s = setup.s0 + rng.normal(size=setup.model.n) * scale
    st_ = posed_state(setup.model, s, setup.anchors)
    dyn = compute_dynamics(setup.model, st_)
    # base velocity chosen so the contact velocity vanishes
    J = dyn.J
    sd = rng.normal(size=setup.model.n) * rate
    vb = -np.linalg.lstsq(J[:, :6], J[:, 6:] @ sd, rcond=None)[0]
    return st_.copy(nu=np.concatenate([vb, sd]))


def test_momentum_reference_trivial():
    g = RigidGains.diagonal(3, kp=2.0, ki=0.0)
    H = np.arange(6.0)
    assert np.all(momentum_reference(H, H, np.zeros(6), np.zeros(6), g) == 0)
    Hd = np.array([1.0, -1, 2, 0, 0, 3])
    e1 = np.eye(6)[0]
    np.testing.assert_allclose(momentum_reference(e1, np.zeros(6), Hd, np.zeros(6), g), Hd - 2 * e1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_momentum_reference_formula(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 6))
    B = rng.normal(size=(6, 6))
    g = RigidGains(A @ A.T + np.eye(6), B @ B.T, np.ones(2), np.ones(2))
    H, Hd, Hdd, I = rng.normal(size=(4, 6))
    expect = [Hdd[i] - sum(g.K_p[i, j] * (H[j] - Hd[j]) + g.K_i[i, j] * I[j] for j in range(6))
              for i in range(6)]
    np.testing.assert_allclose(momentum_reference(H, Hd, Hdd, I, g), expect, atol=1e-10)


def test_gain_validation():
    with pytest.raises(ValueError):
        RigidGains(-np.ones(6), np.ones(6), np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        RigidGains(np.ones(6), -np.ones(6), np.ones(2), np.ones(2))


def test_integral_euler_accumulation(rng):
    JG = rng.normal(size=(6, 4))
    cs = ControllerState()
    update_integral(cs, JG, JG, True, np.zeros(4), 1e-3)
    assert np.all(cs.I == 0)
    sd = rng.normal(size=4)
    for _ in range(7):
        update_integral(cs, JG, JG, True, sd, 1e-3)
    np.testing.assert_allclose(cs.I, 7e-3 * JG @ sd, rtol=1e-12)
    before = cs.I.copy()
    update_integral(cs, JG, JG, False, sd, 1e-3)
    assert np.all(cs.I == before) and cs.frozen_steps == 1


def test_integral_rate_mixes_postures(rng):
    A, B = rng.normal(size=(2, 6, 3))
    sd = rng.normal(size=3)
    r = integral_rate(A, B, sd)
    np.testing.assert_allclose(r[:3], A[:3] @ sd)
    np.testing.assert_allclose(r[3:], B[3:] @ sd)


def test_integral_matches_fine_quadrature(single):
    """Euler accumulation along a smooth joint path converges at first order."""
    from seabalance.control.rigid import posed_state
    model, anchors, s0 = single.model, single.anchors, single.s0
    a = np.linspace(0.05, 0.1, model.n)
    s_d = s0 + 0.01

    def integrand(t):
        s, sd = s0 + a * np.sin(3 * t), 3 * a * np.cos(3 * t)
        st_ = posed_state(model, s, anchors)
        cq = centroidal_transform(model, st_, compute_dynamics(model, st_))
        return integral_rate(jg_bar(cq)[0], JG_sd, sd)

    st_d = posed_state(model, s_d, anchors)
    JG_sd = jg_bar(centroidal_transform(model, st_d, compute_dynamics(model, st_d)))[0]
    T = 0.5
    fine = np.linspace(0, T, 2001)
    vals = np.array([integrand(t) for t in fine])
    ref = (0.5 * (vals[1:] + vals[:-1]) * np.diff(fine)[:, None]).sum(axis=0)
    errs = []
    for k in (25, 50):
        cs = ControllerState()
        dt = T / k
        for i in range(k):
            t = i * dt
            s, sd = s0 + a * np.sin(3 * t), 3 * a * np.cos(3 * t)
            st_ = posed_state(model, s, anchors)
            cq = centroidal_transform(model, st_, compute_dynamics(model, st_))
            update_integral(cs, jg_bar(cq)[0], JG_sd, True, sd, dt)
        errs.append(np.abs(cs.I - ref).max())
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 0.05 * np.abs(ref).max()


def test_single_contact_force_is_unique(single):
    ctl, st_, dyn, cq, C, b = _setup_state(single)
    Hs = np.array([1.0, -2.0, 3.0, 0.1, -0.2, 0.05])
    tm = torque_map(cq)
    A, a = np.zeros((cq.n, 6)), np.zeros(cq.n)
    f, f1, N_b, Z, status = distribute_forces(Hs, cq, C, b, A, a)
    np.testing.assert_allclose(f, np.linalg.solve(cq.J_b.T, Hs + gravity_wrench(cq)), rtol=1e-10)
    assert Z.shape[1] == 0 and status == "solved"
    np.testing.assert_allclose(momentum_rate_from_forces(f, cq), Hs, atol=1e-8)
    assert tm.N_Lam.shape == (cq.n, cq.n)


def test_double_support_projectors(double, rng):
    st_ = _perturbed(double, rng)
    ctl, st_, dyn, cq, C, b = _setup_state(double, st_)
    sol = ctl.compute(0.0, st_, dyn, cq, C, b)
    assert np.abs(sol.Lam @ sol.N_Lam).max() < 1e-9
    assert np.abs(cq.J_b.T @ sol.N_b).max() < 1e-9
    np.testing.assert_allclose(momentum_rate_from_forces(sol.f, cq), sol.Hdot_star, atol=1e-8)
    assert np.all(C @ sol.f <= b + 1e-9)
    tau0 = rng.normal(size=cq.n)
    assert np.abs(sol.Lam @ (sol.N_Lam @ tau0)).max() < 1e-9


def test_symmetric_double_support_split(double):
    ctl, st_, dyn, cq, C, b = _setup_state(double)
    tm = torque_map(cq)
    u0 = np.zeros(cq.n)
    from seabalance.control.rigid import affine_torque
    A, a = affine_torque(cq, tm, u0, cq.h_j)
    f, *_ = distribute_forces(np.zeros(6), cq, C, b, A, a)
    fz = f[2], f[8]
    assert fz[0] == pytest.approx(fz[1], rel=1e-6)
    assert sum(fz) == pytest.approx(cq.m * cq.g, rel=1e-8)
    # brute-force check: no feasible f in the null space direction lowers the cost
    Z = distribute_forces(np.zeros(6), cq, C, b, A, a)[3]
    cost = np.sum((A @ f + a) ** 2)
    for z in np.random.default_rng(0).normal(size=(200, Z.shape[1])) * 0.5:
        g_ = f + Z @ z
        if np.all(C @ g_ <= b):
            assert np.sum((A @ g_ + a) ** 2) >= cost - 1e-9


def test_cost_scaling_invariance(double, rng):
    st_ = _perturbed(double, rng)
    ctl, st_, dyn, cq, C, b = _setup_state(double, st_)
    from seabalance.control.rigid import affine_torque
    tm = torque_map(cq)
    A, a = affine_torque(cq, tm, rng.normal(size=cq.n), cq.h_j)
    Hs = rng.normal(size=6)
    f1 = distribute_forces(Hs, cq, C, b, A, a)[0]
    f2 = distribute_forces(Hs, cq, C, b, 7.3 * A, 7.3 * a)[0]
    np.testing.assert_allclose(f1, f2, atol=1e-8)


@pytest.mark.parametrize("which", ["single", "double"])
def test_torques_realise_contact_force(which, request, rng):
    """Applying tau to the constrained dynamics reproduces f and keeps the contacts."""
    setup = request.getfixturevalue(which)
    st_ = _perturbed(setup, rng)
    ctl, st_, dyn, cq, C, b = _setup_state(setup, st_)
    sol = ctl.compute(0.0, st_, dyn, cq, C, b)
    nud, f = constrained_forward_dynamics(setup.model, st_, sol.tau, (0.0, 0.0), dyn=dyn)
    np.testing.assert_allclose(f, sol.f, atol=1e-7 * max(1.0, np.abs(f).max()))
    assert np.abs(dyn.J @ nud + dyn.Jdv).max() < 1e-7


def test_postural_torque_cases(single, rng):
    ctl, st_, dyn, cq, C, b = _setup_state(single)
    g = ctl.gains
    tm = torque_map(cq)
    f = rng.normal(size=6)
    s = st_.s
    np.testing.assert_allclose(postural_torque(f, cq, s, np.zeros(cq.n), s, g, tm.N_Lam),
                               cq.h_j - cq.J_j.T @ f, atol=1e-12)
    sd, s_d = rng.normal(size=(2, cq.n))
    u0 = postural_term(cq, tm.N_Lam, s, sd, s_d, g)
    np.testing.assert_allclose(postural_torque(np.zeros(6), cq, s, sd, s_d, g, tm.N_Lam, np.zeros(cq.n)), u0)
    NM = tm.N_Lam @ cq.M_j
    np.testing.assert_allclose(u0, -g.K_pj @ NM @ (s - s_d) - g.K_dj @ NM @ sd, atol=1e-10)


def test_square_lambda_has_no_null_space(rng):
    # six joints, one contact: Lambda is 6x6 and generically invertible
    m = random_model(rng, n=6, nc=1)
    st_ = random_state(m, rng)
    dyn = compute_dynamics(m, st_)
    cq = centroidal_transform(m, st_, dyn)
    tm = torque_map(cq)
    assert np.abs(tm.N_Lam).max() < 1e-8
    f = rng.normal(size=6)
    t1 = joint_torques(f, cq, rng.normal(size=6), tm)
    t2 = joint_torques(f, cq, rng.normal(size=6), tm)
    np.testing.assert_allclose(t1, t2, atol=1e-8)


def test_static_equilibrium_holds():
    setup = build(load_config("balance_rigid").with_overrides({"references.step_rad": 0.0}))
    ctl, st_, dyn, cq, C, b = _setup_state(setup)
    sol = ctl.compute(0.0, st_, dyn, cq, C, b)
    nud, _ = constrained_forward_dynamics(setup.model, st_, sol.tau, dyn=dyn, anchors=setup.anchors)
    assert np.abs(nud).max() < 1e-8


def test_momentum_error_decays_at_kp(single, rng):
    """With K_i = 0 the closed loop gives d/dt (H - H_d) = -K_p (H - H_d)."""
    from seabalance.sim import state_derivative
    setup = build(load_config("balance_rigid").with_overrides({"controller.K_i": 0.0,
                                                                "controller.K_p": [3.0, 5, 7, 11, 13, 17]}))
    st_ = _perturbed(setup, rng, scale=0.0)
    ctl, st_, dyn, cq, C, b = _setup_state(setup, st_)
    sol = ctl.compute(0.0, st_, dyn, cq, C, b)
    from seabalance.control.elastic import ControlCommand
    cmd = ControlCommand(tau=sol.tau)
    cfg = IntegratorConfig(baumgarte=(0.0, 0.0))
    plant = setup.plant

    def H_at(x):
        s2 = plant.unpack(x)
        return centroidal_transform(setup.model, s2, compute_dynamics(setup.model, s2)).H

    x = plant.pack(st_)
    h = 1e-5
    xdot = state_derivative(plant, st_, cmd, cfg).xdot
    # directional derivative of H along the flow, command frozen
    Hdot = (H_at(x + h * xdot) - H_at(x - h * xdot)) / (2 * h)
    H_d = setup.refs.momentum(0.0, cq.m)[0]
    expect = -ctl.gains.K_p @ (cq.H - H_d)
    assert np.abs(Hdot - expect).max() < 1e-4 * max(1.0, np.abs(expect).max())


def test_closed_loop_linearization_is_stable(single):
    """Eigenvalues of the linearized closed loop (plant plus momentum integral).

    The integral carries six conserved combinations (it integrates a total
    derivative), which show up as zero eigenvalues; all others must be
    strictly in the left half-plane.
    """
    from seabalance.sim import state_derivative
    setup = single
    cfg = IntegratorConfig(horizon=2.0, output_rate=10.0)
    tr = run(setup.plant, setup.policy, setup.state0, cfg, refs=setup.refs, anchors=setup.anchors)
    assert tr.status == "ok"
    plant = setup.plant
    ctl = setup.policy.controller
    x_eq = plant.pack(plant.unpack(np.concatenate([tr["p"][-1], tr["quat"][-1], tr["s"][-1], tr["nu"][-1]])))
    I_eq = ctl.cs.I.copy()
    t = 2.0

    def F(z):
        x, I = z[:plant.size], z[plant.size:]
        s2 = plant.unpack(x)
        dyn = compute_dynamics(setup.model, s2)
        cq = centroidal_transform(setup.model, s2, dyn)
        ctl.cs.I = I
        C, b = contact_constraints(ctl.specs, dyn)
        sol = ctl.compute(t, s2, dyn, cq, C, b)
        from seabalance.control.elastic import ControlCommand
        xd = state_derivative(plant, s2, ControlCommand(tau=sol.tau), IntegratorConfig(), setup.anchors, dyn).xdot
        s_d = np.asarray(setup.refs.posture(t), float)
        Id = integral_rate(jg_bar(cq)[0], ctl.jg_at_posture(s_d), s2.sdot)
        return np.concatenate([xd, Id])

    z0 = np.concatenate([x_eq, I_eq])
    assert np.abs(F(z0)).max() < 1e-5
    eps = 1e-6
    Jac = np.column_stack([(F(z0 + eps * e) - F(z0 - eps * e)) / (2 * eps) for e in np.eye(z0.size)])
    lam = np.linalg.eigvals(Jac)
    small = np.abs(lam) < 1e-3
    assert small.sum() <= 6
    assert np.all(lam[~small].real < -1e-3), np.sort(lam.real)[-8:]
    ctl.cs.I = I_eq


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_null_space_wrench_invariance_random_models(seed):
    """Joint accelerations do not depend on the null-space wrench f0."""
    from seabalance.control.rigid import RigidController, References
    from seabalance.qp import ContactConstraintSpec
    rng = np.random.default_rng(seed)
    m = random_model(rng, n=int(rng.integers(13, 16)), nc=2)
    st_ = random_state(m, rng, scale=0.5)
    dyn = compute_dynamics(m, st_)
    if np.linalg.svd(dyn.J, compute_uv=False).min() < 1e-3:
        return
    cq = centroidal_transform(m, st_, dyn)
    tm = torque_map(cq)
    if np.linalg.svd(tm.Lam, compute_uv=False).min() < 1e-6:
        return
    specs = [ContactConstraintSpec.from_half_extents(c.half_extents, 0.5, 4, 1.0) for c in m.contacts]
    refs = References.constant(cq.p_c, st_.s)
    anchors = contact_anchors(dyn)
    sdd = []
    for f0 in (np.zeros(12), rng.normal(size=12) * 20):
        ctl = RigidController(m, RigidGains.diagonal(m.n), refs, specs, f0=f0)
        ctl.reset(st_, anchors)
        C, b = contact_constraints(specs, dyn)
        sol = ctl.compute(0.0, st_, dyn, cq, C, b)
        nud, _ = constrained_forward_dynamics(m, st_, sol.tau, dyn=dyn, anchors=anchors)
        sdd.append(nud[6:])
    assert np.abs(sdd[0] - sdd[1]).max() < 1e-8 * max(1.0, np.abs(sdd[0]).max())
