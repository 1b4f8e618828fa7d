"""Floating-base rigid-body dynamics: state, mass matrix, bias, contact Jacobians.

Generalized velocity ``nu = (pdot_B, omega_B, sdot)`` with the base angular
velocity in world coordinates. Contact Jacobian rows per contact are the
world-frame linear velocity of the contact point followed by its angular
velocity, and contact wrenches ``f`` use the same (force, moment about the
contact point) layout.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels.pycore import quat_to_rot, skew


class SingularConstraintError(np.linalg.LinAlgError):
    """Contact Jacobian lost row rank."""

    def __init__(self, message, contact=None):
        super().__init__(message)
        self.contact = contact


@dataclass
class BasePose:
    p: np.ndarray
    quat: np.ndarray  # (w, x, y, z)

    @property
    def rot(self):
        return quat_to_rot(self.quat)


@dataclass
class SimState:
    """Configuration and velocity of the coupled robot + motor system."""

    p: np.ndarray
    quat: np.ndarray
    s: np.ndarray
    nu: np.ndarray  # (pdot_B, omega_B, sdot)
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dtheta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.quat = np.asarray(self.quat, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.dtheta = np.asarray(self.dtheta, dtype=float)
        n = self.s.shape[0]
        if self.p.shape != (3,) or self.quat.shape != (4,) or self.nu.shape != (n + 6,):
            raise ValueError("inconsistent state dimensions")
        if self.theta.shape != self.dtheta.shape:
            raise ValueError("theta and dtheta differ in length")

    @property
    def base(self):
        return BasePose(self.p, self.quat)

    @property
    def sdot(self):
        return self.nu[6:]

    def copy(self, **changes):
        st = replace(self, **changes)
        for k in ("p", "quat", "s", "nu", "theta", "dtheta"):
            if k not in changes:
                setattr(st, k, getattr(st, k).copy())
        return st

    @classmethod
    def rest(cls, model, s=None, m2=0):
        n = model.n
        return cls(p=np.zeros(3), quat=np.array([1.0, 0, 0, 0]),
                   s=np.zeros(n) if s is None else s, nu=np.zeros(n + 6),
                   theta=np.zeros(m2), dtheta=np.zeros(m2))


@dataclass
class DynamicsQuantities:
    M: np.ndarray
    h: np.ndarray      # C nu + G
    grav: np.ndarray   # G
    J: np.ndarray      # (6 nc, n + 6)
    Jdv: np.ndarray    # Jdot nu
    kin: object        # link frames, CoMs, spatial velocities, contact poses

    @property
    def contact_pos(self):
        return self.kin.cpos

    @property
    def contact_rot(self):
        return self.kin.crot


def compute_dynamics(model, state, backend=None):
    if state.s.shape[0] != model.n:
        raise ValueError(f"state has {state.s.shape[0]} joints, model has {model.n}")
    out = kernels.dynamics(model.kernel, state.p, state.quat, state.s, state.nu, backend)
    return DynamicsQuantities(M=out.M, h=out.h, grav=out.grav, J=out.J, Jdv=out.Jdv, kin=out)


def rot_error(R, Rd):
    """World-frame rotation vector of R relative to Rd (small-angle log map)."""
    E = R @ Rd.T
    return 0.5 * np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])


def contact_pose_error(dyn, anchors):
    """Stacked (position, orientation) error of each contact frame to its anchor."""
    nc = dyn.kin.cpos.shape[0]
    e = np.zeros(6 * nc)
    if anchors is None:
        return e
    for c, (pos, R) in enumerate(anchors):
        e[6 * c:6 * c + 3] = dyn.kin.cpos[c] - pos
        e[6 * c + 3:6 * c + 6] = rot_error(dyn.kin.crot[c], R)
    return e


def contact_anchors(dyn):
    return [(dyn.kin.cpos[c].copy(), dyn.kin.crot[c].copy()) for c in range(dyn.kin.cpos.shape[0])]


def check_constraint_rank(model, J, tol=1e-9):
    """Raise SingularConstraintError naming the first contact that adds no new rank."""
    if J.shape[0] == 0:
        return
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] > tol * sv[0] and J.shape[0] <= J.shape[1]:
        return
    cutoff = tol * sv[0]
    rank = 0
    for c in range(J.shape[0] // 6):
        r = np.linalg.matrix_rank(J[:6 * (c + 1)], tol=cutoff)
        if r < rank + 6:
            name = model.contacts[c].name
            raise SingularConstraintError(f"contact Jacobian is rank deficient at contact {name!r}", name)
        rank = r


def constrained_forward_dynamics(model, state, tau, gains=(100.0, 20.0), dyn=None,
                                 anchors=None, check_rank=True):
    """Accelerations and contact wrenches of the contact-constrained system.

    Solves ``M nudot - J^T f = B tau - h`` together with the stabilised
    constraint ``J nudot = -Jdot nu - kd J nu - kp e_c``. ``tau`` is the joint
    torque vector (or a full generalized force of length n + 6).
    """
    if dyn is None:
        dyn = compute_dynamics(model, state)
    n = model.n
    tau = np.asarray(tau, dtype=float)
    Q = -dyn.h.copy()
    if tau.shape[0] == n + 6:
        Q += tau
    else:
        Q[6:] += tau
    if dyn.J.shape[0] == 0:
        status, nud, f = kernels.kkt_solve(dyn.M, Q, dyn.J, np.zeros(0))
    else:
        kp, kd = gains
        rhs = -dyn.Jdv - kd * (dyn.J @ state.nu) - kp * contact_pose_error(dyn, anchors)
        status, nud, f = kernels.kkt_solve(dyn.M, Q, dyn.J, rhs)
    if status == 1:
        raise np.linalg.LinAlgError("mass matrix is not positive definite")
    if status == 2:
        if check_rank:
            check_constraint_rank(model, dyn.J)
        raise SingularConstraintError("contact constraint matrix is singular", None)
    return nud, f


def kkt_residual(dyn, nudot, f, tau, rhs):
    """Residuals of both KKT block equations (used by tests and monitors)."""
    Q = -dyn.h.copy()
    Q[6:] += tau
    r1 = dyn.M @ nudot - dyn.J.T @ f - Q
    r2 = dyn.J @ nudot - rhs
    return r1, r2


def kinetic_energy(dyn, nu):
    return 0.5 * nu @ dyn.M @ nu


def potential_energy(model, dyn):
    return model.gravity * float(np.dot(model.kernel.mass, dyn.kin.com[:, 2]))


def quat_derivative(quat, omega, lam=10.0):
    """Quaternion rate for world-frame angular velocity with norm correction."""
    w, x, y, z = quat
    ox, oy, oz = omega
    qd = 0.5 * np.array([
        -ox * x - oy * y - oz * z,
        ox * w + oy * z - oz * y,
        oy * w + oz * x - ox * z,
        oz * w + ox * y - oy * x,
    ])
    return qd + lam * (1.0 - quat @ quat) * quat


def quat_from_rot(R):
    tr = np.trace(R)
    if tr > 0:
        S = np.sqrt(tr + 1.0) * 2
        q = [0.25 * S, (R[2, 1] - R[1, 2]) / S, (R[0, 2] - R[2, 0]) / S, (R[1, 0] - R[0, 1]) / S]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        S = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / S, 0.25 * S, (R[0, 1] + R[1, 0]) / S, (R[0, 2] + R[2, 0]) / S]
    elif R[1, 1] > R[2, 2]:
        S = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / S, (R[0, 1] + R[1, 0]) / S, 0.25 * S, (R[1, 2] + R[2, 1]) / S]
    else:
        S = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / S, (R[0, 2] + R[2, 0]) / S, (R[1, 2] + R[2, 1]) / S, 0.25 * S]
    q = np.array(q)
    return q if q[0] >= 0 else -q


def integrate_quat(quat, omega, dt):
    """Exact rotation update for constant world angular velocity."""
    wn = np.linalg.norm(omega)
    if wn < 1e-300:
        return quat.copy()
    ang = wn * dt
    axis = omega / wn
    dq = np.concatenate([[np.cos(ang / 2)], np.sin(ang / 2) * axis])
    w1, x1, y1, z1 = dq
    w2, x2, y2, z2 = quat
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def gravity_torques(model, state, dyn=None):
    """Static contact-consistent torques holding ``state`` (nu = 0).

    Least-squares split of the gravity load between joints and contacts:
    solve ``G = B tau + J^T f`` with tau free on joint rows.
    """
    if dyn is None:
        dyn = compute_dynamics(model, state.copy(nu=np.zeros(model.n + 6)))
    J = dyn.J
    # base rows fix f (J_b^T f = G_b); joint rows then give tau
    f = np.linalg.lstsq(J[:, :6].T, dyn.grav[:6], rcond=None)[0]
    tau = dyn.grav[6:] - J[:, 6:].T @ f
    return tau, f


__all__ = [
    "BasePose", "SimState", "DynamicsQuantities", "SingularConstraintError",
    "compute_dynamics", "constrained_forward_dynamics", "contact_pose_error",
    "contact_anchors", "quat_derivative", "quat_from_rot", "integrate_quat",
    "gravity_torques", "kinetic_energy", "potential_energy", "skew",
]
