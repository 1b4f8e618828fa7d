"""Adapters turning controllers into zero-order-held actuator commands.

A policy is called once per control period by the simulator:
``reset(state, anchors)``, then ``update(t, state, dyn, cq)`` returning a
``ControlCommand`` and ``after(t, state, cq, dt)`` for integrator-style
controller state. QP infeasibility holds the previous command and counts a
flag instead of aborting the run.
"""

import numpy as np

from ..multibody import gravity_torques
from ..qp import QpInfeasible, stack_contact_constraints
from .elastic import ControlCommand
from .rigid import posed_state


def contact_constraints(specs, dyn):
    return stack_contact_constraints(specs, list(dyn.kin.crot))


class Policy:
    injection = None

    def __init__(self):
        self.flags = 0
        self.last_cmd = None
        self.info = {}

    def reset(self, state, anchors):
        self.flags = 0
        self.last_cmd = None
        self.info = {}

    def after(self, t, state, cq, dt):
        pass

    def _hold(self, n, m2):
        self.flags += 1
        if self.last_cmd is None:
            return ControlCommand(tau=np.zeros(n), tau_m=np.zeros(m2))
        return self.last_cmd


class RigidPolicy(Policy):
    """Rigid cascade. On an elastic plant the torques are sent either to the
    motors as ``tau_m = gamma tau`` (``injection='motor'``) or straight to the
    links with passive motors (``injection='joint'``)."""

    def __init__(self, controller, actuation=None, gamma=None, injection="motor"):
        super().__init__()
        if injection not in ("motor", "joint"):
            raise ValueError("injection must be 'motor' or 'joint'")
        self.controller = controller
        self.actuation = actuation
        self.gamma = gamma
        self.injection = injection

    def reset(self, state, anchors):
        super().reset(state, anchors)
        self.controller.reset(state, anchors)

    def update(self, t, state, dyn, cq):
        n = self.controller.model.n
        e = self.actuation.elastic if self.actuation is not None else np.zeros(0, int)
        C, b = contact_constraints(self.controller.specs, dyn)
        try:
            sol = self.controller.compute(t, state, dyn, cq, C, b)
        except QpInfeasible:
            return self._hold(n, e.size)
        tau = sol.tau.copy()
        tau_m = np.zeros(e.size)
        if e.size and self.injection == "motor":
            tau_m = self.gamma * tau[e]
            tau[e] = 0.0
        cmd = ControlCommand(tau=tau, tau_m=tau_m)
        self.info = {"f": sol.f, "tau_star": sol.tau}
        self.last_cmd = cmd
        return cmd

    def after(self, t, state, cq, dt):
        self.controller.advance_integral(state, cq, dt, t)


class ElasticPolicy(Policy):
    def __init__(self, controller):
        super().__init__()
        self.controller = controller

    def reset(self, state, anchors):
        super().reset(state, anchors)
        self.controller.reset(state, anchors)

    def update(self, t, state, dyn, cq):
        c = self.controller
        C, b = contact_constraints(c.specs, dyn)
        try:
            sol = c.compute_beta(t, state, dyn, cq, C, b)
        except QpInfeasible:
            return self._hold(c.model.n, c.actuation.m2)
        cmd = c.command(sol)
        self.info = {"f": sol.f, "beta": sol.beta, "dtheta_d": sol.dtheta_d}
        self.last_cmd = cmd
        return cmd

    def after(self, t, state, cq, dt):
        self.controller.advance_integral(state, cq, dt, t)


class MotorPDPolicy(Policy):
    """Motor-side PD around a posture with static gravity compensation.

    ``tau_m = gamma (tau_g - K_p (gamma theta - s_d) - K_d gamma dtheta)``
    using only motor measurements. Applied to the rigid-limit model (where
    ``theta = s / gamma``) it is the same feedback law.
    """

    def __init__(self, model, s_d, gamma, kp, kd, rigid_limit=False):
        super().__init__()
        self.model = model
        self.s_d = np.asarray(s_d, float)
        self.gamma = np.broadcast_to(np.asarray(gamma, float), (model.n,))
        self.kp, self.kd = kp, kd
        self.rigid_limit = rigid_limit
        self.tau_g = None

    def reset(self, state, anchors):
        super().reset(state, anchors)
        self.tau_g = gravity_torques(self.model, posed_state(self.model, self.s_d, anchors))[0]

    def motor_torque(self, q_link, v_link):
        return self.gamma * (self.tau_g - self.kp * (q_link - self.s_d) - self.kd * v_link)

    def update(self, t, state, dyn, cq):
        if self.rigid_limit:
            tau_m = self.motor_torque(state.s, state.sdot)
            return ControlCommand(tau=tau_m / self.gamma)
        tau_m = self.motor_torque(self.gamma * state.theta, self.gamma * state.dtheta)
        return ControlCommand(tau=np.zeros(self.model.n), tau_m=tau_m)


class ZeroPolicy(Policy):
    """No actuation at all (passive joints, passive motors)."""

    def __init__(self, n, m2=0):
        super().__init__()
        self.n, self.m2 = n, m2

    def update(self, t, state, dyn, cq):
        return ControlCommand(tau=np.zeros(self.n), tau_m=np.zeros(self.m2))
