"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set ``SEABALANCE_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

import os
from types import SimpleNamespace

import numpy as np

from . import pycore

# note: no placeholder binding before the import, since ``from . import``
# would pick up an existing package attribute instead of the extension
if os.environ.get("SEABALANCE_PURE_PYTHON"):
    _core = None
else:
    try:
        from . import _core
    except ImportError:  # extension not built
        _core = None

BACKEND = "cython" if _core is not None else "python"


class KernelModel:
    """Contiguous array view of a RobotModel, as consumed by the kernels."""

    def __init__(self, parent, joint, axis, jrot, jpos, mass, lcom, linertia,
                 clink, cpos, crot, armature, gravity):
        self.parent = np.ascontiguousarray(parent, dtype=np.int32)
        self.joint = np.ascontiguousarray(joint, dtype=np.int32)
        self.axis = np.ascontiguousarray(axis, dtype=float).reshape(-1, 3)
        self.jrot = np.ascontiguousarray(jrot, dtype=float).reshape(-1, 3, 3)
        self.jpos = np.ascontiguousarray(jpos, dtype=float).reshape(-1, 3)
        self.mass = np.ascontiguousarray(mass, dtype=float)
        self.lcom = np.ascontiguousarray(lcom, dtype=float).reshape(-1, 3)
        self.linertia = np.ascontiguousarray(linertia, dtype=float).reshape(-1, 3, 3)
        self.clink = np.ascontiguousarray(clink, dtype=np.int32)
        self.cpos = np.ascontiguousarray(cpos, dtype=float).reshape(-1, 3)
        self.crot = np.ascontiguousarray(crot, dtype=float).reshape(-1, 3, 3)
        self.armature = np.ascontiguousarray(armature, dtype=float)
        self.gravity = float(gravity)

    @property
    def nl(self):
        return self.mass.shape[0]

    @property
    def nc(self):
        return self.clink.shape[0]


def _alloc(km):
    nl, nc = km.nl, km.nc
    N = nl + 5
    return SimpleNamespace(
        rot=np.empty((nl, 3, 3)), org=np.empty((nl, 3)), com=np.empty((nl, 3)),
        vel=np.empty((nl, 6)), acc=np.empty((nl, 6)),
        M=np.empty((N, N)), h=np.empty(N), grav=np.empty(N),
        J=np.empty((6 * nc, N)), Jdv=np.empty(6 * nc),
        cpos=np.empty((nc, 3)), crot=np.empty((nc, 3, 3)),
    )


def dynamics(km, p, quat, s, v, backend=None):
    """Evaluate kinematics and dynamics terms for one state.

    Returns a namespace with link frames (``rot``, ``org``), world CoMs,
    spatial velocities, ``M``, ``h`` (bias incl. gravity), ``grav``, contact
    ``J``, ``Jdv`` and contact frame poses.
    """
    backend = backend or BACKEND
    out = _alloc(km)
    p = np.ascontiguousarray(p, dtype=float)
    quat = np.ascontiguousarray(quat, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    if backend == "cython":
        if _core is None:
            raise RuntimeError("compiled kernels are not available")
        nl = km.nl
        _core.dynamics(km.parent, km.joint, km.axis, km.jrot, km.jpos, km.mass, km.lcom,
                       km.linertia, km.clink, km.cpos, km.crot, km.armature, km.gravity,
                       p, quat, s, v, out.rot, out.org, out.com, out.vel, out.acc,
                       out.M, out.h, out.grav, out.J, out.Jdv, out.cpos, out.crot,
                       np.empty((nl, 6)), np.empty((nl, 6, 6)),
                       np.empty((nl, 6)), np.empty((nl, 6)))
    else:
        pycore.dynamics(km, p, quat, s, v, out)
    return out


def available_backends():
    return ["python"] + (["cython"] if _core is not None else [])


def kkt_solve(M, Q, J, rhs, backend=None):
    """Solve ``M nud - J^T f = Q``, ``J nud = rhs``; returns (status, nud, f).

    Status 0 is success, 1 means M is not positive definite, 2 that the rows
    of J are (numerically) dependent.
    """
    if (backend or BACKEND) == "cython":
        return _core.kkt_solve(np.ascontiguousarray(M), np.ascontiguousarray(Q),
                               np.ascontiguousarray(J), np.ascontiguousarray(rhs))
    return pycore.kkt_solve(M, Q, J, rhs)


def locked_inertia_rate(km, kin, p_c, pd_c, backend=None):
    if (backend or BACKEND) == "cython":
        out = np.empty((3, 3))
        _core.locked_inertia_rate(km.mass, km.linertia, kin.rot, kin.com, kin.vel,
                                  np.ascontiguousarray(p_c, dtype=float),
                                  np.ascontiguousarray(pd_c, dtype=float), out)
        return out
    return pycore.locked_inertia_rate(km.mass, km.linertia, kin.rot, kin.com, kin.vel, p_c, pd_c)
