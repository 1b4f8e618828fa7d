"""Pure-Python (numpy) rigid-body kernels.

Reference implementation of the hot loop; the compiled ``_core`` extension
mirrors it line for line. All spatial quantities are expressed in world
coordinates at the world origin, ordered (angular, linear).
"""

import numpy as np

_I3 = np.eye(3)


def skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def quat_to_rot(q):
    """Rotation matrix of a (w, x, y, z) quaternion; normalises first."""
    w, x, y, z = q / np.sqrt(q @ q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def axis_angle(axis, angle):
    K = skew(axis)
    return _I3 + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _crm(V, X):
    w, v = V[:3], V[3:]
    return np.concatenate([np.cross(w, X[:3]), np.cross(w, X[3:]) + np.cross(v, X[:3])])


def _crf(V, F):
    w, v = V[:3], V[3:]
    return np.concatenate([np.cross(w, F[:3]) + np.cross(v, F[3:]), np.cross(w, F[3:])])


def _base_force(F, p):
    # generalized base force for nu_b = (pdot_B, omega_B): (force, moment about p_B)
    return np.concatenate([F[3:], F[:3] - np.cross(p, F[3:])])


def dynamics(km, p, quat, s, v, out):
    """Fill ``out`` with kinematics, M, h, gravity term, contact J and Jdot*nu."""
    parent, joint = km.parent, km.joint
    nl = km.mass.shape[0]
    nc = km.clink.shape[0]
    rot, org, com, vel, acc = out.rot, out.org, out.com, out.vel, out.acc

    S = np.zeros((nl, 6))
    rot[0] = quat_to_rot(quat)
    org[0] = p
    for i in range(1, nl):
        pa, k = parent[i], joint[i]
        Rj = rot[pa] @ km.jrot[k]
        org[i] = org[pa] + rot[pa] @ km.jpos[k]
        a = Rj @ km.axis[k]
        rot[i] = Rj @ axis_angle(km.axis[k], s[k])
        S[i, :3] = a
        S[i, 3:] = np.cross(org[i], a)

    com[:] = org + np.einsum('ijk,ik->ij', rot, km.lcom)
    Isp = np.zeros((nl, 6, 6))
    for i in range(nl):
        C = skew(com[i])
        m = km.mass[i]
        Iw = rot[i] @ km.linertia[i] @ rot[i].T
        Isp[i, :3, :3] = Iw + m * C @ C.T
        Isp[i, :3, 3:] = m * C
        Isp[i, 3:, :3] = m * C.T
        Isp[i, 3:, 3:] = m * _I3

    pd, w0, sd = v[0:3], v[3:6], v[6:]
    vel[0, :3] = w0
    vel[0, 3:] = pd + np.cross(p, w0)
    acc[0] = 0.0
    acc[0, 3:] = -np.cross(w0, pd)
    for i in range(1, nl):
        pa, k = parent[i], joint[i]
        vel[i] = vel[pa] + S[i] * sd[k]
        acc[i] = acc[pa] + _crm(vel[i], S[i]) * sd[k]

    ag = np.array([0.0, 0.0, 0.0, 0.0, 0.0, km.gravity])
    Fv = np.empty((nl, 6))
    Fg = np.empty((nl, 6))
    for i in range(nl):
        Fv[i] = Isp[i] @ acc[i] + _crf(vel[i], Isp[i] @ vel[i])
        Fg[i] = Isp[i] @ ag
    Ic = Isp.copy()
    for i in range(nl - 1, 0, -1):
        pa = parent[i]
        Fv[pa] += Fv[i]
        Fg[pa] += Fg[i]
        Ic[pa] += Ic[i]

    h, grav, M = out.h, out.grav, out.M
    grav[:6] = _base_force(Fg[0], p)
    h[:6] = _base_force(Fv[0], p) + grav[:6]
    M[:] = 0.0
    for i in range(1, nl):
        k = joint[i]
        grav[6 + k] = S[i] @ Fg[i]
        h[6 + k] = S[i] @ Fv[i] + grav[6 + k]
        Fi = Ic[i] @ S[i]
        M[6 + k, 6 + k] = S[i] @ Fi + km.armature[k]
        j = parent[i]
        while j != 0:
            l = joint[j]
            M[6 + k, 6 + l] = M[6 + l, 6 + k] = S[j] @ Fi
            j = parent[j]
        M[:6, 6 + k] = M[6 + k, :6] = _base_force(Fi, p)
    Tb = np.zeros((6, 6))
    Tb[:3, 3:] = _I3
    Tb[3:, :3] = _I3
    Tb[3:, 3:] = skew(p)
    M[:6, :6] = Tb.T @ Ic[0] @ Tb

    J, Jdv = out.J, out.Jdv
    J[:] = 0.0
    for c in range(nc):
        i = km.clink[c]
        cp = org[i] + rot[i] @ km.cpos[c]
        out.cpos[c] = cp
        out.crot[c] = rot[i] @ km.crot[c]
        r = 6 * c
        J[r:r + 3, 0:3] = _I3
        J[r:r + 3, 3:6] = -skew(cp - p)
        J[r + 3:r + 6, 3:6] = _I3
        j = i
        while j != 0:
            k = joint[j]
            J[r:r + 3, 6 + k] = S[j, 3:] + np.cross(S[j, :3], cp)
            J[r + 3:r + 6, 6 + k] = S[j, :3]
            j = parent[j]
        w, vO = vel[i, :3], vel[i, 3:]
        wd, vOd = acc[i, :3], acc[i, 3:]
        vc = vO + np.cross(w, cp)
        Jdv[r:r + 3] = vOd + np.cross(wd, cp) + np.cross(w, vc)
        Jdv[r + 3:r + 6] = wd


def kkt_solve(M, Q, J, rhs):
    """numpy twin of the compiled KKT solve: (status, nud, f)."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return 1, np.zeros(M.shape[0]), np.zeros(J.shape[0])

    def solve(b):
        return np.linalg.solve(L.T, np.linalg.solve(L, b))

    a = solve(Q)
    if J.shape[0] == 0:
        return 0, a, np.zeros(0)
    Y = solve(J.T)
    Lam = J @ Y
    try:
        Lc = np.linalg.cholesky(Lam)
    except np.linalg.LinAlgError:
        return 2, a, np.zeros(J.shape[0])
    if np.diag(Lc).min() ** 2 <= 1e-12 * np.diag(Lam).max():
        return 2, a, np.zeros(J.shape[0])
    f = np.linalg.solve(Lc.T, np.linalg.solve(Lc, rhs - J @ a))
    return 0, a + Y @ f, f


def locked_inertia_rate(mass, linertia, rot, com, vel, p_c, pd_c):
    """Time derivative of the locked inertia about the CoM."""
    Idot = np.zeros((3, 3))
    for i in range(mass.shape[0]):
        R = rot[i]
        Iw = R @ linertia[i] @ R.T
        W = skew(vel[i, :3])
        d = com[i] - p_c
        cd = vel[i, 3:] + np.cross(vel[i, :3], com[i])
        D, Dd = skew(d), skew(cd - pd_c)
        Idot += W @ Iw - Iw @ W - mass[i] * (Dd @ D + D @ Dd)
    return Idot
