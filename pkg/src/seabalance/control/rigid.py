"""Momentum-based balancing with rigid joint torques.

One control step:

1. momentum reference ``Hdot* = Hdot_d - K_p (H - H_d) - K_i I``
2. contact wrenches ``f = f1 + Z z`` with ``J_b^T f = Hdot* + m g e3``; the
   null-space coordinates ``z`` minimise the squared joint torque subject to
   the contact constraints (one QP)
3. joint torques realising ``f`` and the constraint, plus a postural term in
   the null space of ``Lambda = J_j M_j^-1``

All quantities are in the block-diagonal (centroidal) coordinates.
"""

from dataclasses import dataclass, field

import numpy as np

from ..centroidal import centroidal_transform, gravity_wrench, jg_bar, pinv
from ..multibody import SimState, compute_dynamics, quat_from_rot
from ..qp import ActiveSetSolver, QpInfeasible, QpProblem, constraint_names


def _spd(name, A, size):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1 or A.ndim == 0:
        A = np.diag(np.broadcast_to(A, (size,)))
    if A.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}")
    if np.abs(A - A.T).max() > 1e-12:
        raise ValueError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None
    return A


@dataclass
class RigidGains:
    K_p: np.ndarray
    K_i: np.ndarray
    K_pj: np.ndarray
    K_dj: np.ndarray

    def __post_init__(self):
        n = np.shape(self.K_pj)[0] if np.ndim(self.K_pj) else None
        self.K_p = _spd("K_p", self.K_p, 6)
        # a zero integral gain is allowed (pure proportional momentum control)
        K_i = np.asarray(self.K_i, dtype=float)
        self.K_i = np.diag(np.broadcast_to(K_i, (6,))) if K_i.ndim < 2 else K_i
        if np.abs(self.K_i - self.K_i.T).max() > 1e-12 or np.linalg.eigvalsh(self.K_i).min() < 0:
            raise ValueError("K_i must be symmetric positive semidefinite")
        self.K_pj = _spd("K_pj", self.K_pj, n)
        self.K_dj = _spd("K_dj", self.K_dj, n)

    @classmethod
    def diagonal(cls, n, kp=20.0, ki=100.0, kpj=100.0, kdj=20.0):
        return cls(np.full(6, kp), np.full(6, ki), np.full(n, kpj), np.full(n, kdj))


class References:
    """CoM trajectory, postural reference and angular momentum reference.

    ``com`` maps t to (position, velocity, acceleration); ``posture`` maps t
    to s_d. ``H_w`` is the desired centroidal angular momentum (zero by
    default).
    """

    def __init__(self, com, posture, H_w=None):
        self.com = com
        self.posture = posture
        self.H_w = np.zeros(3) if H_w is None else np.asarray(H_w, float)

    @classmethod
    def constant(cls, p_c, s_d):
        p_c, s_d = np.array(p_c, float), np.array(s_d, float)
        z = np.zeros(3)
        return cls(lambda t: (p_c, z, z), lambda t: s_d)

    def momentum(self, t, m):
        p, v, a = self.com(t)
        H = np.concatenate([m * v, self.H_w])
        Hd = np.concatenate([m * a, np.zeros(3)])
        return H, Hd


@dataclass
class ControllerState:
    I: np.ndarray = field(default_factory=lambda: np.zeros(6))
    frozen_steps: int = 0

    def reset(self):
        self.I = np.zeros(6)
        self.frozen_steps = 0


@dataclass
class ForceTorqueSolution:
    f: np.ndarray
    f1: np.ndarray
    N_b: np.ndarray
    Z: np.ndarray
    tau: np.ndarray
    tau0: np.ndarray
    Lam: np.ndarray
    N_Lam: np.ndarray
    Hdot_star: np.ndarray
    A_tau: np.ndarray = None   # tau(f) = A_tau f + a_tau
    a_tau: np.ndarray = None
    qp_status: str = "solved"

    def torque_for(self, f):
        return self.A_tau @ f + self.a_tau


def momentum_reference(H, H_d, Hdot_d, I, gains):
    return Hdot_d - gains.K_p @ (H - H_d) - gains.K_i @ I


def integral_rate(JG_s, JG_sd, sdot):
    """Integrand [J_G^L(s); J_G^w(s_d)] sdot."""
    return np.concatenate([JG_s[:3] @ sdot, JG_sd[3:] @ sdot])


def update_integral(cs, JG_s, JG_sd, ok, sdot, dt):
    """Explicit Euler step of the momentum integral; frozen when J_b is singular."""
    if not ok:
        cs.frozen_steps += 1
        return cs
    cs.I = cs.I + dt * integral_rate(JG_s, JG_sd, sdot)
    return cs


@dataclass
class TorqueMap:
    Lam: np.ndarray
    Lam_pinv: np.ndarray
    N_Lam: np.ndarray


def torque_map(cq):
    Mj_inv = np.linalg.inv(cq.M_j)
    Lam = cq.J_j @ Mj_inv
    Lp, _ = pinv(Lam)
    N = np.eye(cq.n) - Lp @ Lam
    return TorqueMap(Lam, Lp, N)


def postural_term(cq, N_Lam, s, sdot, s_d, gains):
    """u0 = -K_pj N M_j (s - s_d) - K_dj N M_j sdot."""
    NM = N_Lam @ cq.M_j
    return -gains.K_pj @ NM @ (s - s_d) - gains.K_dj @ NM @ sdot


def postural_torque(f, cq, s, sdot, s_d, gains, N_Lam, h_j=None):
    h_j = cq.h_j if h_j is None else h_j
    return h_j - cq.J_j.T @ f + postural_term(cq, N_Lam, s, sdot, s_d, gains)


def joint_torques(f, cq, tau0, tm=None, h_j=None, check=True, tol=1e-7):
    """Torques producing contact wrench f while keeping the contacts fixed.

    Raises LinAlgError when the required constraint acceleration is not
    realisable by joint torques (Lambda lacks rank in a needed direction).
    """
    tm = tm or torque_map(cq)
    h_j = cq.h_j if h_j is None else h_j
    rhs = cq.J_b @ np.linalg.solve(cq.M_b, cq.h_b - cq.J_b.T @ f) \
        + tm.Lam @ (h_j - cq.J_j.T @ f) - cq.Jdv_bar
    tau = tm.Lam_pinv @ rhs + tm.N_Lam @ tau0
    if check:
        res = tm.Lam @ tau - rhs
        if np.abs(res).max() > tol * max(1.0, np.abs(rhs).max()):
            raise np.linalg.LinAlgError("Lambda is rank deficient: constraint cannot be met by joint torques")
    return tau


def affine_torque(cq, tm, u0, h_j):
    """tau(f) = A f + a for the combined torque and postural law."""
    Mb_inv = np.linalg.inv(cq.M_b)
    A = -cq.J_j.T - tm.Lam_pinv @ cq.J_b @ Mb_inv @ cq.J_b.T
    a = h_j + tm.Lam_pinv @ (cq.J_b @ Mb_inv @ cq.h_b - cq.Jdv_bar) + tm.N_Lam @ u0
    return A, a


def null_basis(J_bT):
    U, sv, Vt = np.linalg.svd(J_bT)
    r = int(np.sum(sv > 1e-8 * sv[0]))
    Z = Vt[r:].T
    return Z, r


def distribute_forces(Hdot_star, cq, C, b, A_tau, a_tau, solver=None, f0=None, tol=1e-9):
    """Contact wrenches meeting the momentum rate, minimising |tau(f)|^2.

    Returns (f, f1, N_b, Z, status). With ``f0`` given, the QP is skipped and
    ``f = f1 + N_b f0`` (used to probe the wrench redundancy).
    """
    JbT = cq.J_b.T
    JbT_pinv, _ = pinv(JbT)
    f1 = JbT_pinv @ (Hdot_star + gravity_wrench(cq))
    N_b = np.eye(JbT.shape[1]) - JbT_pinv @ JbT
    Z, _ = null_basis(JbT)
    if f0 is not None:
        return f1 + N_b @ f0, f1, N_b, Z, "injected"
    if Z.shape[1] == 0:
        viol = np.flatnonzero(C @ f1 - b > tol * max(1.0, np.abs(b).max()))
        if viol.size:
            raise QpInfeasible("contact wrench violates its constraints", viol.tolist())
        return f1, f1, N_b, Z, "solved"
    solver = solver or ActiveSetSolver()
    W = A_tau @ Z
    w = -(A_tau @ f1 + a_tau)
    res = solver.solve(QpProblem(W, w, C=C @ Z, b=b - C @ f1))
    if res.status == "infeasible":
        raise QpInfeasible("no contact wrench satisfies the constraints", res.info.get("violated", ()))
    return f1 + Z @ res.x, f1, N_b, Z, res.status


class RigidController:
    """Stateful rigid-actuation balancing controller (owns the integral and QP warm start)."""

    def __init__(self, model, gains, refs, constraint_specs, anchors=None, f0=None):
        self.model = model
        self.gains = gains
        self.refs = refs
        self.specs = list(constraint_specs)
        self.solver = ActiveSetSolver()
        self.cs = ControllerState()
        self.f0 = None if f0 is None else np.asarray(f0, float)
        self.anchors = anchors
        self._jg_cache = {}
        self._I_ref0 = None
        self.last = None

    def reset(self, state, anchors):
        self.cs.reset()
        self.solver.reset()
        self.anchors = anchors
        self._jg_cache.clear()
        dyn = compute_dynamics(self.model, state)
        cq = centroidal_transform(self.model, state, dyn)
        self._p_c0 = cq.p_c.copy()
        self._s0 = state.s.copy()
        self.last = None

    # posture-side momentum Jacobian, evaluated with the contact at its anchor
    def jg_at_posture(self, s_d):
        key = s_d.tobytes()
        if key not in self._jg_cache:
            st = posed_state(self.model, s_d, self.anchors)
            dyn = compute_dynamics(self.model, st)
            cq = centroidal_transform(self.model, st, dyn)
            if len(self._jg_cache) > 64:
                self._jg_cache.clear()
            self._jg_cache[key] = jg_bar(cq)[0]
        return self._jg_cache[key]

    def integral_error(self, t, cq, s_d):
        """Momentum integral minus the integral the reference itself accumulates."""
        p_d = self.refs.com(t)[0]
        JG_sd = self.jg_at_posture(s_d)
        ref = np.concatenate([cq.m * (p_d - self._p_c0), JG_sd[3:] @ (s_d - self._s0)])
        return self.cs.I - ref

    def joint_bias(self, state, cq):
        return cq.h_j

    def compute(self, t, state, dyn, cq, C, b):
        g = self.gains
        s_d = np.asarray(self.refs.posture(t), float)
        H_d, Hd_d = self.refs.momentum(t, cq.m)
        I_eff = self.integral_error(t, cq, s_d)
        Hdot_star = momentum_reference(cq.H, H_d, Hd_d, I_eff, g)
        h_j = self.joint_bias(state, cq)
        tm = torque_map(cq)
        u0 = postural_term(cq, tm.N_Lam, state.s, state.sdot, s_d, g)
        A, a = affine_torque(cq, tm, u0, h_j)
        f, f1, N_b, Z, status = distribute_forces(Hdot_star, cq, C, b, A, a, self.solver, self.f0)
        tau0 = postural_torque(f, cq, state.s, state.sdot, s_d, g, tm.N_Lam, h_j)
        tau = A @ f + a
        sol = ForceTorqueSolution(f=f, f1=f1, N_b=N_b, Z=Z, tau=tau, tau0=tau0, Lam=tm.Lam,
                                  N_Lam=tm.N_Lam, Hdot_star=Hdot_star, A_tau=A, a_tau=a, qp_status=status)
        self.last = sol
        return sol

    def advance_integral(self, state, cq, dt, t):
        s_d = np.asarray(self.refs.posture(t), float)
        JG_s, ok = jg_bar(cq)
        update_integral(self.cs, JG_s, self.jg_at_posture(s_d), ok, state.sdot, dt)


def posed_state(model, s, anchors):
    """Zero-velocity state at joint angles s with the first contact frame on its anchor."""
    st = SimState(np.zeros(3), np.array([1.0, 0, 0, 0]), np.asarray(s, float), np.zeros(model.n + 6))
    if not anchors or model.nc == 0:
        return st
    dyn = compute_dynamics(model, st)
    pos, R = anchors[0]
    R_B = R @ dyn.kin.crot[0].T
    p_B = pos - R_B @ dyn.kin.cpos[0]
    return SimState(p_B, quat_from_rot(R_B), st.s, st.nu)


__all__ = ["RigidGains", "References", "ControllerState", "ForceTorqueSolution",
           "momentum_reference", "update_integral", "integral_rate", "distribute_forces",
           "joint_torques", "postural_torque", "RigidController", "constraint_names", "posed_state"]
