"""Compiled vs numpy kernel timings, plus one end-to-end scenario per backend.

    python benchmarks/bench_kernels.py [--repeat 200] [--scenario balance_rigid]

The end-to-end runs start a fresh interpreter per backend, since the backend
is chosen at import.
"""

import argparse
import os
import subprocess
import sys
import timeit
from importlib import resources

import numpy as np

from seabalance import kernels
from seabalance.centroidal import centroidal_transform
from seabalance.model import load_model
from seabalance.multibody import SimState, compute_dynamics


def _model(name):
    return load_model(resources.files("seabalance.scenarios.data.models") / f"{name}.model")


def _state(model, rng):
    q = rng.normal(size=4)
    return SimState(rng.normal(size=3) * 0.3, q / np.linalg.norm(q), rng.uniform(-1, 1, model.n),
                    rng.normal(size=model.n + 6))


def kernel_cases(rng):
    for name in ("biped5", "biped14"):
        m = _model(name)
        st = _state(m, rng)
        dyn = compute_dynamics(m, st)
        cq = centroidal_transform(m, st, dyn)
        yield f"dynamics {name}", lambda b, m=m, st=st: kernels.dynamics(
            m.kernel, st.p, st.quat, st.s, st.nu, b)
        yield f"locked_inertia_rate {name}", lambda b, m=m, dyn=dyn, cq=cq: kernels.locked_inertia_rate(
            m.kernel, dyn.kin, cq.p_c, cq.v_B[:3], b)
        J = dyn.J
        Q = rng.normal(size=J.shape[1])
        rhs = rng.normal(size=J.shape[0])
        yield f"kkt_solve {name}", lambda b, dyn=dyn, Q=Q, J=J, rhs=rhs: kernels.kkt_solve(dyn.M, Q, J, rhs, b)


def bench_kernels(repeat):
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, fn in kernel_cases(rng):
        us = [min(timeit.repeat(lambda: fn(b), number=repeat, repeat=3)) / repeat * 1e6 for b in backends]
        line = f"{label:32s}" + "".join(f"{u:12.1f}us" for u in us)
        if len(us) > 1:
            line += f"{us[0] / us[1]:11.1f}x"
        print(line)


_E2E = """
import time
from seabalance import kernels
from seabalance.scenarios import load_config, run_scenario
cfg = load_config({name!r}).with_overrides({{"integrator.horizon_s": {horizon}}})
t0 = time.perf_counter()
run_scenario(cfg)
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def bench_scenario(name, horizon):
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("SEABALANCE_PURE_PYTHON", None)
        if pure:
            env["SEABALANCE_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", _E2E.format(name=name, horizon=horizon)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"scenario {name} ({horizon:g} s simulated), {out[0]} kernels: {float(out[1]):.2f} s wall")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--scenario", default="balance_rigid")
    ap.add_argument("--horizon", type=float, default=1.0)
    args = ap.parse_args(argv)
    bench_kernels(args.repeat)
    if args.scenario:
        bench_scenario(args.scenario, args.horizon)


if __name__ == "__main__":
    main()
