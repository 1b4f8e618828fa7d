"""Balancing with series elastic actuators.

The spring-damper torque is split as ``tau = p + beta`` with
``p = K_S (gamma theta - s) - K_D sdot`` and ``beta = K_D gamma dtheta``.
Treating ``beta`` as the input, the rigid cascade is reused with ``h_j``
replaced by ``h_j - p``. The optimal ``beta*`` becomes a desired motor
velocity, tracked by a high-gain motor torque law.
"""

from dataclasses import dataclass

import numpy as np

from ..sea import coupling_torque
from .rigid import RigidController


@dataclass
class ElasticGains:
    rigid: object          # RigidGains
    K_m: np.ndarray        # motor velocity gain per elastic joint (1/s)
    est: object            # SeaParams the controller believes in (K_S, K_D estimates)

    def __post_init__(self):
        self.K_m = np.asarray(self.K_m, dtype=float)
        if self.K_m.ndim == 2:
            if np.abs(self.K_m - np.diag(np.diag(self.K_m))).max() > 0:
                raise ValueError("K_m must be diagonal")
            self.K_m = np.diag(self.K_m).copy()
        self.K_m = np.broadcast_to(self.K_m, (self.est.m,)).copy()
        if not np.all(self.K_m > 0):
            raise ValueError("K_m must be positive")

    # rigid gains are reachable directly so the cascade code is shared
    def __getattr__(self, name):
        if name in ("K_p", "K_i", "K_pj", "K_dj"):
            return getattr(self.rigid, name)
        raise AttributeError(name)


@dataclass
class ElasticSolution:
    beta: np.ndarray
    f: np.ndarray
    dtheta_d: np.ndarray
    tau_m: np.ndarray
    p: np.ndarray
    h_j_bar: np.ndarray
    ft: object = None      # underlying ForceTorqueSolution


@dataclass
class ControlCommand:
    """Zero-order-held actuator command.

    ``tau`` acts directly on the joints (rigid rows, or every row for link-side
    injection). Elastic motors get either a fixed torque ``tau_m`` or the
    velocity-tracking law (``dtheta_d`` with gains ``K_m``), evaluated on the
    instantaneous motor state with the controller's coupling-torque estimate.
    """

    tau: np.ndarray
    tau_m: np.ndarray = None
    dtheta_d: np.ndarray = None
    K_m: np.ndarray = None
    est: object = None
    ideal_velocity: bool = False

    def motor_torque(self, dtheta, theta, s_el, sd_el):
        if self.dtheta_d is None:
            return self.tau_m
        tau_hat = coupling_torque(theta, dtheta, s_el, sd_el, self.est)
        return motor_torque_command(dtheta, self.dtheta_d, tau_hat, self.est, self.K_m)


def elastic_bias(h_j, s, sdot, theta, params, actuation):
    """(p, h_j - p) with p zero on rigidly actuated rows."""
    p = np.zeros_like(h_j)
    e = actuation.elastic
    p[e] = params.K_S * (params.gamma * theta - s[e]) - params.K_D * sdot[e]
    return p, h_j - p


def desired_motor_velocity(beta, params, actuation):
    """Elastic rows: gamma^-1 K_D^-1 beta. Rigid rows pass through as torques."""
    return beta[actuation.elastic] / (params.gamma * params.K_D), beta[actuation.rigid]


def motor_torque_command(dtheta, dtheta_d, tau_hat, params, K_m):
    """-I_m K_m (dtheta - dtheta_d) + gamma tau_hat, clamped to the motor limits."""
    tau_m = -params.I_m * K_m * (dtheta - dtheta_d) + params.gamma * tau_hat
    return np.clip(tau_m, -params.tau_m_max, params.tau_m_max)


class ElasticController(RigidController):
    """Momentum cascade with beta as input; emits motor velocity commands."""

    def __init__(self, model, gains, refs, constraint_specs, actuation, anchors=None, f0=None,
                 ideal_velocity=False):
        super().__init__(model, gains, refs, constraint_specs, anchors=anchors, f0=f0)
        self.actuation = actuation
        self.ideal_velocity = ideal_velocity
        self._bias = None

    def joint_bias(self, state, cq):
        p, hjb = elastic_bias(cq.h_j, state.s, state.sdot, state.theta, self.gains.est, self.actuation)
        self._bias = (p, hjb)
        return hjb

    def compute_beta(self, t, state, dyn, cq, C, b):
        ft = self.compute(t, state, dyn, cq, C, b)
        p, hjb = self._bias
        est = self.gains.est
        dtheta_d, tau_rigid = desired_motor_velocity(ft.tau, est, self.actuation)
        e = self.actuation.elastic
        tau_hat = coupling_torque(state.theta, state.dtheta, state.s[e], state.sdot[e], est)
        tau_m = motor_torque_command(state.dtheta, dtheta_d, tau_hat, est, self.gains.K_m)
        return ElasticSolution(beta=ft.tau, f=ft.f, dtheta_d=dtheta_d, tau_m=tau_m, p=p,
                               h_j_bar=hjb, ft=ft)

    def command(self, sol):
        tau = np.zeros(self.model.n)
        tau[self.actuation.rigid] = sol.beta[self.actuation.rigid]
        return ControlCommand(tau=tau, dtheta_d=sol.dtheta_d, K_m=self.gains.K_m, est=self.gains.est,
                              ideal_velocity=self.ideal_velocity)
