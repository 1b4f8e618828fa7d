"""Centroidal velocity transform and the quantities derived from it.

The transform ``nu_bar = T nu`` replaces the base velocity by
``v_B = (pdot_c, omega_o)`` (CoM velocity and average angular velocity), which
makes the mass matrix block diagonal: ``diag(M_b, M_j)`` with
``M_b = diag(m I3, I_c)``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .kernels.pycore import skew


@dataclass
class CentroidalQuantities:
    m: float
    p_c: np.ndarray
    H: np.ndarray          # (linear, angular about CoM)
    v_B: np.ndarray        # (pdot_c, omega_o)
    M_b: np.ndarray
    M_j: np.ndarray
    h_b: np.ndarray
    h_j: np.ndarray
    J_b: np.ndarray
    J_j: np.ndarray
    Jdv_bar: np.ndarray    # drift term of the transformed constraint
    T: np.ndarray
    Tinv: np.ndarray
    A_G: np.ndarray        # centroidal momentum matrix, H = A_G nu
    X: np.ndarray          # M_bb^-1 M_bs
    Phi: np.ndarray
    g: float

    @property
    def n(self):
        return self.M_j.shape[0]

    @property
    def H_L(self):
        return self.H[:3]

    @property
    def H_w(self):
        return self.H[3:]


def _phi(r):
    Phi = np.eye(6)
    Phi[:3, 3:] = skew(r)
    return Phi


def locked_inertia_rate(dyn, km, p_c, pd_c):
    """Time derivative of the locked inertia about the CoM."""
    return kernels.locked_inertia_rate(km, dyn.kin, p_c, pd_c)


def centroidal_transform(model, state, dyn):
    km = model.kernel
    n = model.n
    m = float(km.mass.sum())
    p_c = km.mass @ dyn.kin.com / m
    r = p_c - state.p
    Phi = _phi(r)
    M = dyn.M
    Mbb, Mbs = M[:6, :6], M[:6, 6:]
    X = np.linalg.solve(Mbb, Mbs)
    A_G = Phi.T @ M[:6, :]
    M_b = Phi.T @ Mbb @ Phi
    # exact block structure; numerical off-diagonal dust removed
    M_b[:3, 3:] = 0.0
    M_b[3:, :3] = 0.0
    M_b[:3, :3] = m * np.eye(3)
    I_c = M_b[3:, 3:] = 0.5 * (M_b[3:, 3:] + M_b[3:, 3:].T)
    H = A_G @ state.nu
    v_B = np.concatenate([H[:3] / m, np.linalg.solve(I_c, H[3:])])

    T = np.eye(n + 6)
    T[:6, :] = np.vstack([A_G[:3] / m, np.linalg.solve(I_c, A_G[3:])])
    Tinv = np.eye(n + 6)
    Tinv[:6, :6] = Phi
    Tinv[:6, 6:] = -X

    M_j = M[6:, 6:] - Mbs.T @ X
    M_j = 0.5 * (M_j + M_j.T)
    h = dyn.h
    h_base = h[:6]
    h_j = h[6:] - X.T @ h_base

    # Hdot with nudot = 0 is Phi^T (C nu)_base; subtract the locked-inertia rate term
    Cnu_base = h_base - dyn.grav[:6]
    Hd0 = Phi.T @ Cnu_base
    Idot = locked_inertia_rate(dyn, km, p_c, v_B[:3])
    Mbd_vB = np.concatenate([np.zeros(3), Idot @ v_B[3:]])
    vBd0 = np.concatenate([Hd0[:3] / m, np.linalg.solve(I_c, Hd0[3:] - Mbd_vB[3:])])
    h_b = np.concatenate([np.zeros(3), Mbd_vB[3:]])
    h_b[2] += m * model.gravity

    J = dyn.J
    J_b = J[:, :6] @ Phi
    J_j = J[:, 6:] - J[:, :6] @ X
    Jdv_bar = dyn.Jdv - J_b @ vBd0
    return CentroidalQuantities(m=m, p_c=p_c, H=H, v_B=v_B, M_b=M_b, M_j=M_j, h_b=h_b, h_j=h_j,
                                J_b=J_b, J_j=J_j, Jdv_bar=Jdv_bar, T=T, Tinv=Tinv, A_G=A_G,
                                X=X, Phi=Phi, g=model.gravity)


def transformed_mass_matrix(cq, dyn):
    return cq.Tinv.T @ dyn.M @ cq.Tinv


def offdiag_ratio(cq, dyn):
    """Norm of the base/joint block of the transformed mass matrix relative to |M|."""
    Mt = transformed_mass_matrix(cq, dyn)
    return np.linalg.norm(Mt[:6, 6:]) / np.linalg.norm(dyn.M)


def gravity_wrench(cq):
    e = np.zeros(6)
    e[2] = cq.m * cq.g
    return e


def momentum_rate_from_forces(f, cq, model=None):
    """Rate of change of centroidal momentum produced by contact wrenches f."""
    return cq.J_b.T @ f - gravity_wrench(cq)


class RankDeficientError(np.linalg.LinAlgError):
    pass


def pinv(A, rcond=1e-8):
    """SVD pseudoinverse with relative cutoff; returns (A^+, rank)."""
    if A.size == 0:
        return np.zeros(A.shape[::-1]), 0
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    keep = sv > rcond * sv[0]
    inv = (Vt[keep].T / sv[keep]) @ U[:, keep].T
    return inv, int(keep.sum())


def jg_bar(cq):
    """Momentum Jacobian of joint velocities on the constraint manifold.

    Returns ``(J_G, ok)`` with ``J_G = -M_b J_b^+ J_j`` split as rows 0-2
    (linear) and 3-5 (angular); ``ok`` is False when J_b loses column rank.
    """
    Jb_pinv, rank = pinv(cq.J_b)
    return -cq.M_b @ Jb_pinv @ cq.J_j, rank == 6
