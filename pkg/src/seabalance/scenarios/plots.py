"""Static figures from trajectory CSVs and sweep tables (matplotlib, Agg)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PLOTS = ("com_error", "joint_error", "motor_velocity", "stability_map")


class PlotError(ValueError):
    pass


def _need(cols, *keys):
    missing = [k for k in keys if k not in cols]
    if missing:
        raise PlotError(f"missing columns: {', '.join(missing)}")


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # dropping timestamps and tool versions keeps repeated renders byte-identical
    meta = {".png": {"Software": None}, ".svg": {"Date": None, "Creator": None},
            ".pdf": {"Creator": None, "Producer": None, "CreationDate": None}}.get(path.suffix, {})
    with plt.rc_context({"svg.hashsalt": "seabalance"}):
        fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def com_error(runs, path, axis=1):
    """CoM error along one axis for each (label, columns) run."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, cols in runs:
        _need(cols, "t", "p_c", "p_c_des")
        ax.plot(cols["t"], cols["p_c"][:, axis] - cols["p_c_des"][:, axis], label=label)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"CoM error {'xyz'[axis]} [m]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def joint_error(runs, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, cols in runs:
        _need(cols, "t", "s", "s_des")
        ax.plot(cols["t"], np.linalg.norm(cols["s"] - cols["s_des"], axis=1), label=label)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("|s - s_d| [rad]")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def motor_velocity(runs, path, motor=0):
    """Motor velocity against its commanded value, overlaid across runs."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, cols in runs:
        _need(cols, "t", "dtheta", "dtheta_des")
        if cols["dtheta"].shape[1] <= motor:
            raise PlotError(f"run {label!r} has no motor {motor}")
        line, = ax.plot(cols["t"], cols["dtheta"][:, motor], label=f"{label}: dtheta")
        ax.plot(cols["t"], cols["dtheta_des"][:, motor], "--", color=line.get_color(),
                label=f"{label}: dtheta_d")
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"motor {motor} velocity [rad/s]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def stability_map(rows, boundaries, param, path, metric="com_err_rms_m"):
    """Metric against one swept parameter, coloured by verdict, boundary marked."""
    pts = [(float(r[param]), r) for r in rows if r.get(param) not in (None, "")]
    if not pts:
        raise PlotError(f"sweep table has no column {param!r}")
    pts.sort(key=lambda p: p[0])
    colors = {"Converged": "tab:green", "Bounded": "tab:orange", "Diverged": "tab:red"}
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for v, r in pts:
        try:
            y = float(r.get(metric, "nan"))
        except ValueError:
            y = float("nan")
        verdict = r.get("verdict") or "error"
        ax.scatter([v], [y if np.isfinite(y) else 0.0], color=colors.get(verdict, "k"),
                   marker="o" if np.isfinite(y) else "x", label=verdict)
    for tr in boundaries.get(param, []):
        lo = tr.get("last_stable", tr.get("last_unstable"))
        hi = tr.get("first_unstable", tr.get("first_stable"))
        ax.axvspan(lo, hi, color="grey", alpha=0.2)
    handles, labels = ax.get_legend_handles_labels()
    uniq = dict(zip(labels, handles))
    ax.legend(uniq.values(), uniq.keys())
    ax.set_xlabel(param)
    ax.set_ylabel(metric)
    ax.set_xscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
