"""Series elastic actuation: parameters, coupling torque, motor dynamics.

All vectors here live on the elastic partition (length m2). Transmission
ratios ``gamma`` map motor angles to link angles (``s = gamma * theta`` at
zero deflection), so a 100:1 gearbox has ``gamma = 0.01``.
"""

from dataclasses import dataclass

import numpy as np

RIGID, ELASTIC = "rigid", "elastic"


def _diag_vec(x, m):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = np.diag(x)
    return np.broadcast_to(x, (m,)).copy()


@dataclass(frozen=True, eq=False)
class SeaParams:
    K_S: np.ndarray
    K_D: np.ndarray
    gamma: np.ndarray
    I_m: np.ndarray
    tau_m_max: np.ndarray

    def __post_init__(self):
        m = max(np.size(np.diag(x)) if np.ndim(x) == 2 else np.size(x)
                for x in (self.K_S, self.K_D, self.gamma, self.I_m, self.tau_m_max))
        for k in ("K_S", "K_D", "gamma", "I_m", "tau_m_max"):
            object.__setattr__(self, k, _diag_vec(getattr(self, k), m))
        for k in ("K_S", "K_D", "gamma", "I_m", "tau_m_max"):
            if not np.all(getattr(self, k) > 0):
                raise ValueError(f"{k} must be strictly positive")

    @property
    def m(self):
        return self.K_S.shape[0]

    @classmethod
    def uniform(cls, m, K_S=350.0, K_D=0.25, gamma=0.01, I_m=1e-5, tau_m_max=np.inf):
        return cls(*(np.full(m, float(v)) for v in (K_S, K_D, gamma, I_m, tau_m_max)))

    def scaled(self, K_S=1.0, K_D=1.0):
        """Copy with stiffness and damping multiplied (controller-side estimates)."""
        return SeaParams(self.K_S * K_S, self.K_D * K_D, self.gamma, self.I_m, self.tau_m_max)

    def with_limit(self, tau_m_max):
        return SeaParams(self.K_S, self.K_D, self.gamma, self.I_m,
                         np.broadcast_to(np.asarray(tau_m_max, float), (self.m,)).copy())

    @property
    def reflected_inertia(self):
        return self.I_m / self.gamma ** 2


@dataclass(frozen=True, eq=False)
class ActuationSpec:
    """Per-joint actuation tags; fixes the (rigid, elastic) partition of s."""

    tags: tuple

    def __post_init__(self):
        tags = tuple(str(t).lower() for t in self.tags)
        bad = set(tags) - {RIGID, ELASTIC}
        if bad:
            raise ValueError(f"unknown actuation tags {sorted(bad)}")
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "rigid", np.array([i for i, t in enumerate(tags) if t == RIGID], dtype=int))
        object.__setattr__(self, "elastic", np.array([i for i, t in enumerate(tags) if t == ELASTIC], dtype=int))

    @property
    def n(self):
        return len(self.tags)

    @property
    def m1(self):
        return self.rigid.shape[0]

    @property
    def m2(self):
        return self.elastic.shape[0]

    @classmethod
    def all_rigid(cls, n):
        return cls((RIGID,) * n)

    @classmethod
    def all_elastic(cls, n):
        return cls((ELASTIC,) * n)


def coupling_torque(theta, dtheta, s, sdot, params):
    """Link-side torque transmitted by the spring-damper."""
    return params.K_S * (params.gamma * theta - s) + params.K_D * (params.gamma * dtheta - sdot)


def motor_acceleration(tau_m, tau, params):
    return (tau_m - params.gamma * tau) / params.I_m


def spring_energy(theta, s, params):
    d = params.gamma * theta - s
    return 0.5 * np.sum(params.K_S * d * d)


def damper_power(dtheta, sdot, params):
    d = params.gamma * dtheta - sdot
    return float(np.sum(params.K_D * d * d))


class RigidLimitModel:
    """Rigid-actuation equivalent of a fully elastic robot for K_S -> infinity.

    ``model`` carries the motor reflected inertia as joint armature, so its
    joint-space mass matrix is ``M_j + gamma^-1 I_m gamma^-1``; motor torques
    enter as joint torques ``gamma^-1 tau_m``.
    """

    def __init__(self, model, params):
        if params.m != model.n:
            raise ValueError("rigid-limit model needs every joint elastic")
        self.base = model
        self.params = params
        self.model = model.with_armature(model.armature + params.reflected_inertia)

    def input_torque(self, tau_m):
        return np.asarray(tau_m) / self.params.gamma

    def motor_angles(self, s):
        return np.asarray(s) / self.params.gamma


def rigid_limit_model(model, params):
    return RigidLimitModel(model, params)
