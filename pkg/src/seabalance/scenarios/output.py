"""Trajectory and sweep-table CSV files.

Trajectory CSVs start with comment lines carrying the schema version and
run metadata, then one header row and one row per output sample. Vector
signals are flattened into ``signal:component`` columns. A sidecar
``<stem>.columns.txt`` documents every column with its unit.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA = "seabalance-trajectory"
SCHEMA_VERSION = 1
SWEEP_SCHEMA = "seabalance-sweep"

# signal -> (unit, description, component naming)
SIGNALS = {
    "t": ("s", "time", None),
    "p": ("m", "base position (world)", "xyz"),
    "quat": ("1", "base orientation quaternion (w, x, y, z)", "wxyz"),
    "s": ("rad", "joint position", "joint"),
    "theta": ("rad", "motor position (motor side)", "motor"),
    "nu": ("m/s | rad/s", "generalized velocity: base linear, base angular (world), joint rates", "nu"),
    "dtheta": ("rad/s", "motor velocity", "motor"),
    "f": ("N | N m", "contact wrench per contact: force then moment (world axes)", "wrench"),
    "H": ("kg m/s | kg m^2/s", "centroidal momentum: linear then angular", "lin_ang"),
    "H_des": ("kg m/s | kg m^2/s", "desired centroidal momentum", "lin_ang"),
    "p_c": ("m", "center of mass", "xyz"),
    "p_c_des": ("m", "desired center of mass", "xyz"),
    "s_des": ("rad", "postural reference", "joint"),
    "dtheta_des": ("rad/s", "commanded motor velocity", "motor"),
    "tau_m": ("N m", "applied motor torque", "motor"),
    "tau": ("N m", "link-side joint torque (actuator plus transmission)", "joint"),
    "sdd": ("rad/s^2", "joint acceleration", "joint"),
    "Hdot_f": ("N | N m", "momentum rate implied by contact wrenches and gravity", "lin_ang"),
    "quat_err": ("1", "|1 - |Q||", None),
    "contact_drift": ("m | rad", "max contact pose error against the anchors", None),
    "motor_residual": ("rad/s^2", "thetadd + K_m (dtheta - dtheta_d)", "motor"),
}


def _components(kind, width, joints, motors, nc):
    if kind in ("xyz", "wxyz"):
        return list(kind)
    if kind == "joint":
        return list(joints)
    if kind == "motor":
        return list(motors)
    if kind == "lin_ang":
        return ["lx", "ly", "lz", "ax", "ay", "az"]
    if kind == "nu":
        return ["vx", "vy", "vz", "wx", "wy", "wz"] + list(joints)
    if kind == "wrench":
        return [f"c{c}.{k}" for c in range(nc) for k in ("fx", "fy", "fz", "mx", "my", "mz")]
    return [str(i) for i in range(width)]


def _fmt(x):
    return repr(float(x)) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def trajectory_table(tr, joint_names, motor_names):
    """(column names, 2D array, signal of each column)."""
    n_rows = len(tr)
    names, blocks, sig = [], [], []
    nc = tr["f"].shape[1] // 6 if "f" in tr.columns and tr["f"].ndim == 2 else 0
    for key, (unit, desc, kind) in SIGNALS.items():
        if key not in tr.columns:
            continue
        a = np.asarray(tr[key], float).reshape(n_rows, -1)
        comps = [None] if kind is None else _components(kind, a.shape[1], joint_names, motor_names, nc)
        if kind is not None and len(comps) != a.shape[1]:
            comps = [str(i) for i in range(a.shape[1])]
        for c in comps:
            names.append(key if c is None else f"{key}:{c}")
            sig.append(key)
        blocks.append(a)
    data = np.hstack(blocks) if blocks else np.zeros((n_rows, 0))
    return names, data, sig


def write_trajectory(path, tr, joint_names, motor_names, meta=None):
    """Write the trajectory CSV and its sidecar column file; returns both paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names, data, sig = trajectory_table(tr, joint_names, motor_names)
    info = {"status": tr.status, "reason": tr.reason}
    info.update(meta or {})
    with path.open("w", newline="") as fh:
        fh.write(f"# {SCHEMA} v{SCHEMA_VERSION}\n")
        fh.write(f"# meta {json.dumps(info, sort_keys=True, default=str)}\n")
        fh.write(f"# columns documented in {path.stem}.columns.txt\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in data:
            w.writerow([_fmt(x) for x in row])
    side = path.with_name(f"{path.stem}.columns.txt")
    with side.open("w") as fh:
        fh.write(f"{SCHEMA} v{SCHEMA_VERSION} column reference for {path.name}\n\n")
        for name, key in zip(names, sig):
            unit, desc, _ = SIGNALS[key]
            fh.write(f"{name}\t[{unit}]\t{desc}\n")
    return path, side


def read_trajectory(path):
    """Columns (grouped by signal, as 2D arrays; 't' as 1D), plus the metadata."""
    path = Path(path)
    meta = {}
    with path.open() as fh:
        first = fh.readline().strip()
        if not first.startswith(f"# {SCHEMA} v"):
            raise ValueError(f"{path}: not a trajectory file")
        version = int(first.rsplit("v", 1)[1])
        if version > SCHEMA_VERSION:
            raise ValueError(f"{path}: schema v{version} is newer than supported v{SCHEMA_VERSION}")
        lines = []
        for ln in fh:
            if ln.startswith("# meta "):
                meta = json.loads(ln[len("# meta "):])
            elif not ln.startswith("#"):
                lines.append(ln)
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(header)))
    cols = {}
    for j, name in enumerate(header):
        cols.setdefault(name.split(":", 1)[0], []).append(j)
    # scalar signals come back 1D, vector signals 2D (possibly zero columns)
    out = {k: data[:, idx[0]] if ":" not in header[idx[0]] else data[:, idx] for k, idx in cols.items()}
    return out, meta, header


def write_sweep_table(path, result):
    """One row per sweep cell: parameter values, status and scalar metrics."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(result.params)
    for r in result.rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with path.open("w", newline="") as fh:
        fh.write(f"# {SWEEP_SCHEMA} v{SCHEMA_VERSION}\n")
        fh.write(f"# boundaries {json.dumps(result.boundaries, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in result.rows:
            w.writerow([_cell(r.get(k, "")) for k in keys])
    return path


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return _fmt(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(float(x)) for x in v)
    return str(v)


def read_sweep_table(path):
    path = Path(path)
    boundaries = {}
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith(f"# {SWEEP_SCHEMA} v"):
            raise ValueError(f"{path}: not a sweep table")
        lines = []
        for ln in fh:
            if ln.startswith("# boundaries "):
                boundaries = json.loads(ln[len("# boundaries "):])
            elif not ln.startswith("#"):
                lines.append(ln)
    rows = list(csv.DictReader(lines))
    return rows, boundaries
