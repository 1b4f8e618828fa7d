"""Command line interface: ``seabalance {run,sweep,plot,validate}``.

Exit codes: 0 success (and the declared expected verdict matched), 1 the
run finished but the verdict (or a validation check) did not match, 2 bad
configuration or input.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, bundled_scenarios, load_config
from .output import read_sweep_table, read_trajectory, write_sweep_table, write_trajectory
from .runner import build, compute_metrics, expected_matches, run_sweep, simulate

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


def _common(p):
    p.add_argument("--config", help="scenario TOML (path or bundled scenario name)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep cells (default: 1)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized test models (never affects scenario physics)")


def parser():
    ap = argparse.ArgumentParser(prog="seabalance", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    _common(sub.add_parser("run", help="simulate one scenario, write trajectory CSV and metrics"))
    _common(sub.add_parser("sweep", help="run the sweep declared in a scenario, write a CSV table"))
    p = sub.add_parser("plot", help="render figures from trajectory CSVs or a sweep table")
    _common(p)
    p.add_argument("--kind", choices=["com_error", "joint_error", "motor_velocity", "stability_map"],
                   default="com_error")
    p.add_argument("--input", nargs="*", default=[], help="trajectory CSVs (overlaid) or one sweep CSV")
    p.add_argument("--label", nargs="*", default=[], help="legend labels for the inputs")
    p.add_argument("--param", help="swept parameter for stability_map")
    p.add_argument("--motor", type=int, default=0)
    p.add_argument("--format", choices=["png", "svg", "pdf"], default="png")
    _common(sub.add_parser("validate", help="check a config, its model and the dynamics kernels"))
    sub.add_parser("list", help="list bundled scenarios")
    return ap


def _out_dir(args, cfg):
    d = Path(args.out) / cfg.name
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_run(args):
    cfg = load_config(args.config)
    setup = build(cfg)
    tr = simulate(setup)
    met = compute_metrics(tr, cfg)
    d = _out_dir(args, cfg)
    motors = [setup.model.joint_names[i] for i in setup.plant.actuation.elastic]
    meta = {"scenario": cfg.name, "model": cfg.model, "status": tr.status, "reason": tr.reason,
            "control_period_s": cfg.integrator.control_period_s, "output_rate_hz": cfg.integrator.output_rate_hz}
    write_trajectory(d / "trajectory.csv", tr, setup.model.joint_names, motors, meta)
    (d / "metrics.json").write_text(json.dumps(met.summary(), indent=2, sort_keys=True, default=float) + "\n")
    ok = expected_matches(cfg, met)
    exp = f" (expected {cfg.expected_verdict})" if cfg.expected_verdict else ""
    print(f"{cfg.name}: {met.verdict}{exp} t_end={met.t_end_s:.3f}s com_err_rms={met.com_err_rms_m:.3e}m "
          f"joint_err_final={met.joint_err_final_rad:.3e}rad wall={met.wall_s:.1f}s -> {d}")
    if tr.reason:
        print(f"  reason: {tr.reason}")
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_sweep(args):
    cfg = load_config(args.config)
    if cfg.sweep is None:
        print(f"{cfg.name}: no [sweep] section; running a single cell")
    res = run_sweep(cfg, workers=max(1, args.workers))
    d = _out_dir(args, cfg)
    path = write_sweep_table(d / "sweep.csv", res)
    errors = 0
    for r in res.rows:
        vals = ", ".join(f"{p}={r[p]}" for p in res.params)
        if r["status"] != "ok":
            errors += 1
            print(f"  {vals or 'base'}: error {r['error']}")
        else:
            extra = f" dist={r['ref_distance_rad']:.3e}" if "ref_distance_rad" in r else ""
            print(f"  {vals or 'base'}: {r['verdict']} com_err_rms={r['com_err_rms_m']:.3e}{extra}")
    for p, trans in res.boundaries.items():
        for t in trans:
            print(f"  boundary on {p}: {t}")
    print(f"{cfg.name}: {len(res.rows)} cells -> {path}")
    return EXIT_OK if errors == 0 else EXIT_MISMATCH


def cmd_plot(args):
    from . import plots
    inputs = list(args.input)
    out = Path(args.out)
    if not inputs:
        if not args.config:
            raise ConfigError("plot needs --input files or a --config whose outputs exist")
        cfg = load_config(args.config)
        name = "sweep.csv" if args.kind == "stability_map" else "trajectory.csv"
        inputs = [str(out / cfg.name / name)]
    for p in inputs:
        if not Path(p).is_file():
            raise ConfigError(f"input {p!r} not found")
    target = out / f"{args.kind}.{args.format}"
    if args.kind == "stability_map":
        rows, bounds = read_sweep_table(inputs[0])
        param = args.param or next(iter(bounds), None)
        if param is None:
            raise ConfigError("stability_map needs --param")
        path = plots.stability_map(rows, bounds, param, target)
    else:
        labels = args.label + [Path(p).parent.name or Path(p).stem for p in inputs[len(args.label):]]
        runs = [(lab, read_trajectory(p)[0]) for lab, p in zip(labels, inputs)]
        if args.kind == "com_error":
            path = plots.com_error(runs, target)
        elif args.kind == "joint_error":
            path = plots.joint_error(runs, target)
        else:
            path = plots.motor_velocity(runs, target, args.motor)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_validate(args):
    from ..centroidal import centroidal_transform, offdiag_ratio
    from ..multibody import (SimState, compute_dynamics, constrained_forward_dynamics, contact_anchors,
                             kkt_residual)
    from ..randmodel import random_model

    checks = []
    if args.config:
        cfg = load_config(args.config)
        setup = build(cfg)
        dyn = compute_dynamics(setup.model, setup.state0)
        setup.policy.reset(setup.state0, setup.anchors)
        cq = centroidal_transform(setup.model, setup.state0, dyn)
        cmd = setup.policy.update(0.0, setup.state0, dyn, cq)
        checks.append((f"{cfg.name}: initial command finite", bool(np.all(np.isfinite(cmd.tau)))))
        checks.append((f"{cfg.name}: centroidal block diagonal", offdiag_ratio(cq, dyn) < 1e-9))
    rng = np.random.default_rng(args.seed)
    for k in range(3):
        m = random_model(rng, nc=1)
        st = SimState(rng.normal(size=3), _unit(rng.normal(size=4)), rng.normal(size=m.n),
                      rng.normal(size=m.n + 6))
        dyn = compute_dynamics(m, st)
        tau = rng.normal(size=m.n)
        anchors = contact_anchors(dyn)
        nud, f = constrained_forward_dynamics(m, st, tau, dyn=dyn, anchors=anchors)
        rhs = dyn.J @ nud
        r1, _ = kkt_residual(dyn, nud, f, tau, rhs)
        checks.append((f"random model {k} (n={m.n}): KKT residual", float(np.abs(r1).max()) < 1e-9))
        cq = centroidal_transform(m, st, dyn)
        checks.append((f"random model {k}: centroidal block diagonal", offdiag_ratio(cq, dyn) < 1e-9))
    ok = True
    for name, passed in checks:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}")
    return EXIT_OK if ok else EXIT_MISMATCH


def _unit(q):
    return q / np.linalg.norm(q)


def main(argv=None):
    args = parser().parse_args(argv)
    if args.verb == "list":
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    if args.verb in ("run", "sweep") and not args.config:
        print(f"seabalance {args.verb}: --config is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return {"run": cmd_run, "sweep": cmd_sweep, "plot": cmd_plot, "validate": cmd_validate}[args.verb](args)
    except ValueError as exc:  # includes ConfigError
        print(f"seabalance {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
