"""Scenario assembly, metrics, verdicts and parameter sweeps."""

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..centroidal import centroidal_transform
from ..control.elastic import ElasticController, ElasticGains
from ..control.policies import ElasticPolicy, MotorPDPolicy, RigidPolicy, ZeroPolicy
from ..control.rigid import References, RigidController, RigidGains, posed_state
from ..model import load_model
from ..multibody import SimState, compute_dynamics, contact_anchors, gravity_torques
from ..qp import ContactConstraintSpec
from ..sea import ELASTIC, RIGID, ActuationSpec, SeaParams, rigid_limit_model
from ..sim import DIVERGED, IntegratorConfig, Plant, run
from .config import ScenarioConfig

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class Setup:
    config: ScenarioConfig
    model: object          # model the plant integrates
    plant: Plant
    policy: object
    state0: SimState
    refs: References
    anchors: list
    specs: list
    integrator: IntegratorConfig
    s0: np.ndarray
    s_d: np.ndarray


@dataclass
class RunMetrics:
    verdict: str
    reason: str
    t_end_s: float
    com_err_rms_m: float
    com_err_max_m: float
    joint_err_final_rad: float
    joint_err_tail_max_rad: float
    momentum_err_max: float
    momentum_err_final: float
    max_abs_tau_m_nm: list
    dtheta_track_rms_rad_s: float
    dtheta_settling_s: float
    max_quat_drift: float
    max_contact_drift: float
    max_offdiag_ratio: float
    qp_flags: int
    wall_s: float
    joint_err_norm: np.ndarray = field(default=None, repr=False)

    def summary(self):
        d = asdict(self)
        d.pop("joint_err_norm")
        return d


# ---------------------------------------------------------------- assembly

def joint_vector(model, values, default=0.0):
    v = np.full(model.n, float(default))
    for name, x in values.items():
        v[model.joint_index(name)] = x
    return v


def support_point(anchors):
    return np.mean([pos for pos, _ in anchors], axis=0)


def com_of(model, state):
    return centroidal_transform(model, state, compute_dynamics(model, state)).p_c


def balanced_posture(model, s_init, directions, anchors, tol=1e-12, max_iter=50):
    """Move s along the given joint-space directions until the CoM lies
    above the support point (Gauss-Newton with a finite-difference Jacobian).
    """
    s = np.asarray(s_init, float).copy()
    if not directions:
        return s
    D = np.array(directions, dtype=float).T
    target = support_point(anchors)[:2]

    def resid(a):
        return com_of(model, posed_state(model, s + D @ a, anchors))[:2] - target

    a = np.zeros(D.shape[1])
    r = resid(a)
    for _ in range(max_iter):
        if np.abs(r).max() < tol:
            break
        eps = 1e-7
        Jr = np.column_stack([(resid(a + eps * e) - r) / eps for e in np.eye(a.size)])
        step = np.linalg.lstsq(Jr, -r, rcond=1e-10)[0]
        if np.abs(step).max() < 1e-15:
            break
        a = a + step
        r = resid(a)
    return s + D @ a


def sea_params(sec, m):
    vals = []
    for k in ("K_S_nm_per_rad", "K_D_nms_per_rad", "gamma", "I_m_kgm2", "tau_m_max_nm"):
        v = np.asarray(getattr(sec, k), float)
        if v.ndim and v.size != m:
            raise ValueError(f"sea.{k} needs {m} entries")
        vals.append(np.broadcast_to(v, (m,)).copy())
    return SeaParams(*vals)


def actuation_spec(model, sec):
    if sec.plant != "elastic":
        return ActuationSpec.all_rigid(model.n)
    if sec.elastic_joints == "all":
        return ActuationSpec.all_elastic(model.n)
    names = set(sec.elastic_joints)
    unknown = names - set(model.joint_names)
    if unknown:
        raise ValueError(f"unknown elastic joints {sorted(unknown)}")
    return ActuationSpec(tuple(ELASTIC if j in names else RIGID for j in model.joint_names))


def make_references(cfg, model, s0, anchors):
    r = cfg.references
    s_d = s0.copy()
    if r.step_rad:
        for j in r.step_joints:
            s_d[model.joint_index(j)] += r.step_rad
    # the CoM reference follows the stepped posture so both tasks agree
    p_base = com_of(model, posed_state(model, s_d, anchors))
    e = np.zeros(3)
    e[AXES[r.com_axis]] = 1.0
    A, w = r.amplitude_m, 2 * np.pi * r.frequency_hz
    z = np.zeros(3)

    def com(t):
        if A == 0.0:
            return p_base, z, z
        return (p_base + A * np.sin(w * t) * e, A * w * np.cos(w * t) * e, -A * w * w * np.sin(w * t) * e)

    return References(com, lambda t: s_d), s_d


def integrator_config(sec):
    return IntegratorConfig(method=sec.method, dt=sec.dt_s, rtol=sec.rtol, atol=sec.atol,
                            lambda_q=sec.lambda_q_per_s, baumgarte=(sec.baumgarte_kp, sec.baumgarte_kd),
                            horizon=sec.horizon_s, control_period=sec.control_period_s, hold=sec.control_hold,
                            output_rate=sec.output_rate_hz, fall_guard=sec.fall_guard,
                            fall_guard_time=sec.fall_guard_time_s)


def build(cfg):
    base = load_model(cfg.model_path())
    anchors = contact_anchors(compute_dynamics(base, SimState.rest(base)))
    r = cfg.references
    s_init = joint_vector(base, r.posture_rad)
    dirs = [joint_vector(base, d) for d in r.balance]
    s0 = balanced_posture(base, s_init, dirs, anchors)
    refs, s_d = make_references(cfg, base, s0, anchors)
    c = cfg.contact
    specs = [ContactConstraintSpec.from_half_extents(k.half_extents, c.mu, c.n_edges, c.f_min_n)
             for k in base.contacts]
    act = actuation_spec(base, cfg.actuation)
    sea = sea_params(cfg.sea, act.m2 if cfg.actuation.plant == "elastic" else base.n)
    st = posed_state(base, s0, anchors)
    ctl = cfg.controller
    n = base.n
    gains = RigidGains(np.broadcast_to(np.asarray(ctl.K_p, float), (6,)),
                       np.broadcast_to(np.asarray(ctl.K_i, float), (6,)),
                       np.broadcast_to(np.asarray(ctl.K_pj, float), (n,)),
                       np.broadcast_to(np.asarray(ctl.K_dj, float), (n,)))

    if cfg.actuation.plant == "rigid_limit":
        model = rigid_limit_model(base, sea).model
        plant = Plant(model)
    else:
        model = base
        plant = Plant(base, act, sea if act.m2 else None)
    if act.m2:
        e = act.elastic
        tau_g = gravity_torques(base, st)[0]
        theta0 = (s0[e] + tau_g[e] / sea.K_S) / sea.gamma
        st = st.copy(theta=theta0, dtheta=np.zeros(act.m2))

    f0 = None if ctl.f0 is None else np.asarray(ctl.f0, float)
    if f0 is not None and f0.shape != (6 * base.nc,):
        raise ValueError(f"controller.f0 needs {6 * base.nc} entries")
    if ctl.kind == "rigid":
        policy = RigidPolicy(RigidController(model, gains, refs, specs, f0=f0), act,
                             sea.gamma if act.m2 else None, ctl.injection)
    elif ctl.kind == "elastic":
        est = sea.scaled(K_S=ctl.K_S_scale, K_D=ctl.K_D_scale)
        eg = ElasticGains(gains, ctl.K_m_per_s, est)
        policy = ElasticPolicy(ElasticController(model, eg, refs, specs, act, f0=f0,
                                                 ideal_velocity=ctl.ideal_velocity))
    elif ctl.kind == "motor_pd":
        policy = MotorPDPolicy(base, s_d, sea.gamma, ctl.pd_kp_nm_per_rad, ctl.pd_kd_nms_per_rad,
                               rigid_limit=cfg.actuation.plant == "rigid_limit")
    else:
        policy = ZeroPolicy(n, act.m2)
    return Setup(cfg, model, plant, policy, st, refs, anchors, specs, integrator_config(cfg.integrator),
                 s0, s_d)


# ---------------------------------------------------------------- metrics

def settling_time(t, err, tol):
    """Last sample time at which err exceeds tol (0 if it never does)."""
    ok = np.isfinite(err)
    idx = np.flatnonzero(ok & (err > tol))
    return float(t[idx[-1]]) if idx.size else 0.0


def verdict(tr, cfg, com_err, joint_err):
    """Diverged iff a guard fired; Converged when the tail errors are inside
    tolerance and not growing; Bounded otherwise."""
    if tr.status == DIVERGED:
        return "Diverged"
    m = cfg.metrics
    t = tr.t
    if t.size == 0:
        return "Bounded"
    tail = t >= t[-1] - m.tail_s
    prev = (t >= t[-1] - 2 * m.tail_s) & ~tail
    if np.nanmax(com_err[tail]) > m.com_tol_m:
        return "Bounded"
    if prev.any() and np.nanmax(com_err[tail]) > m.growth_floor_m \
            and np.nanmax(com_err[tail]) > m.growth_factor * np.nanmax(com_err[prev]) + 1e-9:
        return "Bounded"
    if m.joint_tol_rad is not None and np.nanmax(joint_err[tail]) > m.joint_tol_rad:
        return "Bounded"
    return "Converged"


def compute_metrics(tr, cfg):
    t = tr.t
    nanv = float("nan")
    if t.size == 0:
        return RunMetrics("Diverged", tr.reason, 0.0, *([nanv] * 6), [], nanv, nanv, nanv, nanv, nanv,
                          tr.meta.get("qp_flags", 0), tr.meta.get("wall_s", nanv), np.zeros(0))
    com_err = np.linalg.norm(tr["p_c"] - tr["p_c_des"], axis=1)
    joint_err = np.linalg.norm(tr["s"] - tr["s_des"], axis=1)
    mom_err = np.linalg.norm(tr["H"] - tr["H_des"], axis=1)
    tail = t >= t[-1] - cfg.metrics.tail_s
    m2 = tr["dtheta"].shape[1]
    if m2 and np.isfinite(tr["dtheta_des"]).all():
        derr = np.linalg.norm(tr["dtheta"] - tr["dtheta_des"], axis=1)
        d_rms = float(np.sqrt(np.mean(derr ** 2)))
        settle = settling_time(t, derr, cfg.metrics.settle_tol_rad_s)
    else:
        d_rms = settle = nanv
    tau_m = tr["tau_m"]
    return RunMetrics(
        verdict=verdict(tr, cfg, com_err, joint_err),
        reason=tr.reason,
        t_end_s=float(tr.meta["t_end"]),
        com_err_rms_m=float(np.sqrt(np.mean(com_err ** 2))),
        com_err_max_m=float(com_err.max()),
        joint_err_final_rad=float(joint_err[-1]),
        joint_err_tail_max_rad=float(joint_err[tail].max()),
        momentum_err_max=float(mom_err.max()),
        momentum_err_final=float(mom_err[-1]),
        max_abs_tau_m_nm=np.abs(tau_m).max(axis=0).tolist() if tau_m.shape[1] else [],
        dtheta_track_rms_rad_s=d_rms,
        dtheta_settling_s=settle,
        max_quat_drift=float(tr["quat_err"].max()),
        max_contact_drift=float(tr["contact_drift"].max()),
        max_offdiag_ratio=float(tr.meta["max_offdiag"]),
        qp_flags=int(tr.meta["qp_flags"]),
        wall_s=float(tr.meta["wall_s"]),
        joint_err_norm=joint_err,
    )


def simulate(setup):
    return run(setup.plant, setup.policy, setup.state0, setup.integrator, refs=setup.refs,
               anchors=setup.anchors, fall_specs=setup.specs)


def run_scenario(cfg):
    """Build and simulate one scenario; returns (Trajectory, RunMetrics, Setup)."""
    setup = build(cfg)
    tr = simulate(setup)
    return tr, compute_metrics(tr, cfg), setup


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepResult:
    params: list            # parameter paths, one per axis
    rows: list              # dicts: parameter values, status, metrics
    boundaries: dict        # param -> list of transitions

    def column(self, key):
        return [r.get(key) for r in self.rows]


def sweep_cells(sweep):
    if sweep is None or not sweep.axes:
        return [{}]
    if sweep.mode == "list":
        lens = {len(a.values) for a in sweep.axes}
        if len(lens) != 1:
            raise ValueError("list sweeps need equally long value lists")
        return [{a.param: a.values[i] for a in sweep.axes} for i in range(lens.pop())]
    names = [a.param for a in sweep.axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(a.values for a in sweep.axes))]


def _run_cell(cfg, overrides):
    row = dict(overrides)
    try:
        tr, met, _ = run_scenario(cfg.with_overrides(overrides))
    except Exception as exc:  # per-cell failures are recorded, the sweep goes on
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return row, None, None
    row.update(status="ok", error="", **met.summary())
    return row, tr.t, tr["s"]


def run_sweep(cfg, workers=1):
    cells = sweep_cells(cfg.sweep)
    base = cfg.model_copy(update={"sweep": None})
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_run_cell, [base] * len(cells), cells))
    else:
        out = [_run_cell(base, c) for c in cells]
    rows = [o[0] for o in out]
    if cfg.sweep is not None and cfg.sweep.reference:
        _, t_ref, s_ref = _run_cell(base, dict(cfg.sweep.reference))
        for row, (_, t, s) in zip(rows, out):
            row["ref_distance_rad"] = trajectory_distance(t, s, t_ref, s_ref)
    params = [a.param for a in cfg.sweep.axes] if cfg.sweep is not None else []
    return SweepResult(params, rows, stability_boundaries(rows, params))


def trajectory_distance(t, s, t_ref, s_ref):
    """Sup-norm distance between two joint trajectories on common samples."""
    if t is None or t_ref is None:
        return float("nan")
    k = min(len(t), len(t_ref))
    if k == 0 or np.abs(t[:k] - t_ref[:k]).max() > 1e-9 or len(t) != len(t_ref):
        return float("inf")
    return float(np.abs(s[:k] - s_ref[:k]).max())


def _num(v):
    return float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else None


def stability_boundaries(rows, params):
    """For each numeric axis, the transitions Converged <-> Diverged between
    neighbouring values (other axes held fixed)."""
    out = {}
    for p in params:
        others = [q for q in params if q != p]
        groups = {}
        for r in rows:
            if _num(r.get(p)) is None:
                continue
            groups.setdefault(tuple(repr(r.get(q)) for q in others), []).append(r)
        trans = []
        for key, grp in groups.items():
            grp = sorted(grp, key=lambda r: _num(r[p]))
            for a, b in zip(grp, grp[1:]):
                va, vb = a.get("verdict"), b.get("verdict")
                if {va, vb} == {"Converged", "Diverged"}:
                    trans.append({"fixed": dict(zip(others, key)), "last_stable" if va == "Converged"
                                  else "last_unstable": _num(a[p]),
                                  "first_unstable" if vb == "Diverged" else "first_stable": _num(b[p])})
        out[p] = trans
    return out


def expected_matches(cfg, met):
    return cfg.expected_verdict is None or cfg.expected_verdict == met.verdict
