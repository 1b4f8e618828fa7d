"""Time integration of the contact-constrained robot with optional SEA motors.

The integrated vector is ``chi = (p_B, Q, s, theta, nu, dtheta)`` with
``nu = (pdot_B, omega_B, sdot)``. Control commands are recomputed every
control period and held in between (or, with ``hold='continuous'``,
re-evaluated at every integrator stage); the integrator (fixed-step RK4 or
adaptive Dormand-Prince 5(4)) takes one or more substeps per period.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .centroidal import centroidal_transform, momentum_rate_from_forces, offdiag_ratio
from .multibody import (SimState, compute_dynamics, constrained_forward_dynamics,
                        contact_anchors, contact_pose_error, quat_derivative)
from .sea import coupling_torque, motor_acceleration

OK, DIVERGED = "ok", "diverged"


class SimulationDiverged(RuntimeError):
    pass


@dataclass
class IntegratorConfig:
    method: str = "rk4"            # "rk4" or "rk45"
    dt: float = 1e-3               # fixed step (rk4) / initial step (rk45), s
    rtol: float = 1e-6
    atol: float = 1e-8
    lambda_q: float = 10.0         # quaternion norm correction, 1/s
    baumgarte: tuple = (100.0, 20.0)
    horizon: float = 5.0           # s
    control_period: float = 1e-3   # s
    hold: str = "zoh"              # "zoh" or "continuous"
    output_rate: float = 100.0     # Hz
    max_velocity: float = 1e4
    max_angle: float = 1e3
    fall_guard: bool = True
    fall_guard_time: float = 0.05  # s of continuous contact-wrench violation
    min_step: float = 1e-10

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.hold not in ("zoh", "continuous"):
            raise ValueError(f"unknown control hold {self.hold!r}")
        if not self.dt > 0 or self.lambda_q < 0 or not self.control_period > 0:
            raise ValueError("need dt > 0, control_period > 0, lambda_q >= 0")


@dataclass
class Plant:
    """Robot model with its actuation partition and true SEA parameters."""

    model: object
    actuation: object = None
    sea: object = None

    def __post_init__(self):
        if self.actuation is None:
            from .sea import ActuationSpec
            self.actuation = ActuationSpec.all_rigid(self.model.n)
        if self.actuation.m2 and (self.sea is None or self.sea.m != self.actuation.m2):
            raise ValueError("elastic joints need SEA parameters of matching size")
        n, m2 = self.model.n, self.actuation.m2
        self.n, self.m2 = n, m2
        o = np.cumsum([0, 3, 4, n, m2, n + 6, m2])
        self.sl = {k: slice(o[i], o[i + 1]) for i, k in enumerate(("p", "quat", "s", "theta", "nu", "dtheta"))}
        self.size = int(o[-1])

    def pack(self, st):
        x = np.empty(self.size)
        for k, sl in self.sl.items():
            x[sl] = getattr(st, k)
        return x

    def unpack(self, x):
        sl = self.sl
        return SimState(x[sl["p"]], x[sl["quat"]], x[sl["s"]], x[sl["nu"]], x[sl["theta"]], x[sl["dtheta"]])


@dataclass
class Derivative:
    xdot: np.ndarray
    nudot: np.ndarray
    f: np.ndarray
    tau: np.ndarray        # link-side joint torque
    tau_m: np.ndarray
    dyn: object


def state_derivative(plant, state, cmd, cfg=None, anchors=None, dyn=None):
    """chi_dot for the held command ``cmd`` (see ControlCommand)."""
    cfg = cfg or IntegratorConfig()
    model = plant.model
    e = plant.actuation.elastic
    if dyn is None:
        dyn = compute_dynamics(model, state)
    tau = np.array(cmd.tau, dtype=float)
    tau_m = np.zeros(plant.m2)
    thdd = np.zeros(plant.m2)
    if plant.m2:
        s_e, sd_e = state.s[e], state.nu[6:][e]
        tau_c = coupling_torque(state.theta, state.dtheta, s_e, sd_e, plant.sea)
        tau[e] += tau_c
        if not cmd.ideal_velocity:
            # the actuator limit of the plant applies whatever the controller believes
            lim = plant.sea.tau_m_max
            tau_m = np.clip(cmd.motor_torque(state.dtheta, state.theta, s_e, sd_e), -lim, lim)
            thdd = motor_acceleration(tau_m, tau_c, plant.sea)
    nudot, f = constrained_forward_dynamics(model, state, tau, cfg.baumgarte, dyn=dyn, anchors=anchors,
                                            check_rank=False)
    sl = plant.sl
    xd = np.empty(plant.size)
    xd[sl["p"]] = state.nu[:3]
    xd[sl["quat"]] = quat_derivative(state.quat, state.nu[3:6], cfg.lambda_q)
    xd[sl["s"]] = state.nu[6:]
    xd[sl["theta"]] = state.dtheta
    xd[sl["nu"]] = nudot
    xd[sl["dtheta"]] = thdd
    return Derivative(xd, nudot, f, tau, tau_m, dyn)


# Dormand-Prince 5(4) tableau
_DP_A = [np.array(r) for r in (
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
)]
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class Integrator:
    def __init__(self, plant, cfg, anchors):
        self.plant = plant
        self.cfg = cfg
        self.anchors = anchors
        self.h = cfg.dt
        self.evals = 0
        self.steps = 0
        self.rejected = 0

    def f(self, x, cmd, t=0.0):
        """chi_dot at x; ``cmd`` is a held ControlCommand or a callable
        ``cmd(t, x)`` evaluated at the stage time offset t."""
        self.evals += 1
        if callable(cmd):
            cmd = cmd(t, x)
        d = state_derivative(self.plant, self.plant.unpack(x), cmd, self.cfg, self.anchors)
        if not np.all(np.isfinite(d.xdot)):
            raise SimulationDiverged("non-finite state derivative")
        return d.xdot

    def rk4_step(self, x, h, cmd, k1=None, t=0.0):
        k1 = self.f(x, cmd, t) if k1 is None else k1
        k2 = self.f(x + 0.5 * h * k1, cmd, t + 0.5 * h)
        k3 = self.f(x + 0.5 * h * k2, cmd, t + 0.5 * h)
        k4 = self.f(x + h * k3, cmd, t + h)
        self.steps += 1
        return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def advance(self, x, T, cmd, k1=None):
        """Integrate over a held-command segment of length T.

        ``k1`` optionally supplies the derivative at ``x`` (already computed
        at the control tick).
        """
        if self.cfg.method == "rk4":
            k = max(1, int(np.ceil(T / self.cfg.dt - 1e-9)))
            h = T / k
            for i in range(k):
                x = self.rk4_step(x, h, cmd, k1, i * h)
                k1 = None
            return x
        return self._advance_dp(x, T, cmd, k1)

    def _advance_dp(self, x, T, cmd, k1=None):
        cfg = self.cfg
        t = 0.0
        K = np.empty((7, x.size))
        K[0] = self.f(x, cmd, 0.0) if k1 is None else k1
        while T - t > 1e-15 * max(1.0, T):
            h = min(self.h, T - t)
            for i in range(1, 7):
                K[i] = self.f(x + h * (_DP_A[i] @ K[:i]), cmd, t + _DP_C[i] * h)
            x5 = x + h * (_DP_B5 @ K)
            err = h * ((_DP_B5 - _DP_B4) @ K)
            sc = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x5))
            en = np.sqrt(np.mean((err / sc) ** 2))
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            if en <= 1.0:
                x = x5
                t += h
                self.steps += 1
                K[0] = K[6]  # first-same-as-last
                # a step clipped to the segment end does not shrink the proposal
                self.h = max(self.h, h * fac) if h < self.h else h * fac
            else:
                self.rejected += 1
                self.h = h * fac
                if self.h < cfg.min_step:
                    raise SimulationDiverged("step size underflow")
        return x


@dataclass
class Trajectory:
    columns: dict
    status: str = OK
    reason: str = ""
    meta: dict = field(default_factory=dict)

    def __getitem__(self, k):
        return self.columns[k]

    @property
    def t(self):
        return self.columns["t"]

    def __len__(self):
        return len(self.columns["t"])


class _Recorder:
    def __init__(self):
        self.rows = {}

    def add(self, **kw):
        for k, v in kw.items():
            self.rows.setdefault(k, []).append(np.array(v, dtype=float))

    def finish(self):
        return {k: np.array(v) for k, v in self.rows.items()}


def _wrench_ok(specs, dyn, f, mu_margin=1e-6):
    """Whether contact wrenches stay inside the unilateral support set (f_z >= 0, CoP, friction)."""
    from .qp import build_contact_constraints
    for c, spec in enumerate(specs):
        C, b = build_contact_constraints(spec, dyn.kin.crot[c])
        b = b.copy()
        b[0] = 0.0  # only require a non-negative normal force
        if np.any(C @ f[6 * c:6 * c + 6] > b + mu_margin * max(1.0, abs(f[6 * c + 2]))):
            return False
    return True


def run(plant, policy, state0, cfg, refs=None, anchors=None, fall_specs=None, monitor_every=1):
    """Simulate with a zero-order-held policy; returns a Trajectory.

    Divergence (guard trip, non-finite numbers, singular constraints, or a
    sustained physically impossible contact wrench) ends the run early and is
    recorded in ``status``; it is not raised.
    """
    model = plant.model
    P = cfg.control_period
    n_ctrl = int(round(cfg.horizon / P))
    out_every = max(1, int(round(1.0 / (cfg.output_rate * P))))
    x = plant.pack(state0)
    dyn0 = compute_dynamics(model, state0)
    anchors = contact_anchors(dyn0) if anchors is None else anchors
    integ = Integrator(plant, cfg, anchors)
    rec = _Recorder()
    policy.reset(state0, anchors)
    status, reason = OK, ""
    max_offdiag = 0.0
    bad_wrench_time = 0.0
    wall = time.perf_counter()
    t = 0.0
    k = 0
    try:
        for k in range(n_ctrl + 1):
            t = k * P
            st = plant.unpack(x)
            nub = np.concatenate([st.nu, st.dtheta])
            if not np.all(np.isfinite(x)):
                raise SimulationDiverged("non-finite state")
            if np.abs(nub).max() > cfg.max_velocity:
                raise SimulationDiverged("velocity guard")
            if st.s.size and np.abs(st.s).max() > cfg.max_angle:
                raise SimulationDiverged("joint angle guard")
            dyn = compute_dynamics(model, st)
            cq = centroidal_transform(model, st, dyn)
            if k % monitor_every == 0:
                max_offdiag = max(max_offdiag, offdiag_ratio(cq, dyn))
            cmd = policy.update(t, st, dyn, cq)
            if cmd.ideal_velocity and plant.m2:
                x[plant.sl["dtheta"]] = cmd.dtheta_d
                st = plant.unpack(x)
            need_sample = k % out_every == 0
            d = state_derivative(plant, st, cmd, cfg, anchors, dyn=dyn)
            if not np.all(np.isfinite(d.xdot)):
                raise SimulationDiverged("non-finite state derivative")
            if cfg.fall_guard and fall_specs:
                if _wrench_ok(fall_specs, dyn, d.f):
                    bad_wrench_time = 0.0
                else:
                    bad_wrench_time += P
                    if bad_wrench_time >= cfg.fall_guard_time - 1e-12:
                        raise SimulationDiverged("contact wrench left the support set (fall)")
            if need_sample:
                _record(rec, plant, t, st, dyn, cq, d, cmd, policy, refs, anchors, model)
            if k == n_ctrl:
                break
            policy.after(t, st, cq, P)
            integ.evals += 1
            x = integ.advance(x, P, _live_command(plant, policy, model, t) if cfg.hold == "continuous" else cmd,
                              k1=d.xdot)
    except (SimulationDiverged, np.linalg.LinAlgError, FloatingPointError) as exc:
        status, reason = DIVERGED, str(exc) or type(exc).__name__
    meta = dict(max_offdiag=max_offdiag, evals=integ.evals, steps=integ.steps, rejected=integ.rejected,
                qp_flags=policy.flags, t_end=t, wall_s=time.perf_counter() - wall,
                control_period=P, n=model.n, m2=plant.m2, nc=model.nc)
    cols = rec.finish() if rec.rows else {"t": np.zeros(0)}
    return Trajectory(cols, status, reason, meta)


def _live_command(plant, policy, model, t0):
    def cmd(t, x):
        st = plant.unpack(x)
        dyn = compute_dynamics(model, st)
        return policy.update(t0 + t, st, dyn, centroidal_transform(model, st, dyn))
    return cmd


def _record(rec, plant, t, st, dyn, cq, d, cmd, policy, refs, anchors, model):
    e = contact_pose_error(dyn, anchors)
    nc = model.nc
    drift = np.abs(e).max() if nc else 0.0
    info = policy.info
    if refs is not None:
        p_d = refs.com(t)[0]
        s_d = refs.posture(t)
        H_d = refs.momentum(t, cq.m)[0]
    else:
        p_d = np.full(3, np.nan)
        s_d = np.full(model.n, np.nan)
        H_d = np.full(6, np.nan)
    dth_d = cmd.dtheta_d if cmd.dtheta_d is not None else np.full(plant.m2, np.nan)
    rec.add(t=t, p=st.p, quat=st.quat, s=st.s, theta=st.theta, nu=st.nu, dtheta=st.dtheta,
            f=d.f if nc else np.zeros(0), H=cq.H, H_des=H_d, p_c=cq.p_c, p_c_des=p_d, s_des=s_d,
            dtheta_des=dth_d, tau_m=d.tau_m, tau=d.tau, sdd=d.nudot[6:],
            Hdot_f=momentum_rate_from_forces(d.f, cq) if nc else np.zeros(6),
            quat_err=abs(1.0 - np.linalg.norm(st.quat)), contact_drift=drift,
            motor_residual=_motor_residual(plant, st, cmd, d))


def _motor_residual(plant, st, cmd, d):
    """thetadd + K_m (dtheta - dtheta_d) per motor (NaN without a velocity law)."""
    if not plant.m2 or cmd.dtheta_d is None or cmd.ideal_velocity:
        return np.full(plant.m2, np.nan)
    thdd = d.xdot[plant.sl["dtheta"]]
    return thdd + cmd.K_m * (st.dtheta - cmd.dtheta_d)
