# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rigid-body kernels (mirror of ``pycore.dynamics``)."""

from libc.math cimport sin, cos, sqrt
import numpy as np


cdef inline void cross3(const double* a, const double* b, double* o) noexcept nogil:
    o[0] = a[1] * b[2] - a[2] * b[1]
    o[1] = a[2] * b[0] - a[0] * b[2]
    o[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void matmul3(const double* A, const double* B, double* C) noexcept nogil:
    cdef int r, c
    for r in range(3):
        for c in range(3):
            C[3 * r + c] = A[3 * r] * B[c] + A[3 * r + 1] * B[3 + c] + A[3 * r + 2] * B[6 + c]


cdef inline void matvec3(const double* A, const double* x, double* y) noexcept nogil:
    y[0] = A[0] * x[0] + A[1] * x[1] + A[2] * x[2]
    y[1] = A[3] * x[0] + A[4] * x[1] + A[5] * x[2]
    y[2] = A[6] * x[0] + A[7] * x[1] + A[8] * x[2]


cdef inline void matvec6(const double* A, const double* x, double* y) noexcept nogil:
    cdef int r, c
    cdef double acc
    for r in range(6):
        acc = 0.0
        for c in range(6):
            acc += A[6 * r + c] * x[c]
        y[r] = acc


cdef inline double dot6(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4] + a[5] * b[5]


cdef inline void crf(const double* V, const double* F, double* o) noexcept nogil:
    # force cross product: (w x n + v x f, w x f)
    cdef double t[3]
    cross3(V, F, o)
    cross3(&V[3], &F[3], t)
    o[0] += t[0]
    o[1] += t[1]
    o[2] += t[2]
    cross3(V, &F[3], &o[3])


cdef inline void crm(const double* V, const double* X, double* o) noexcept nogil:
    # motion cross product: (w x xa, w x xl + v x xa)
    cdef double t[3]
    cross3(V, X, o)
    cross3(V, &X[3], &o[3])
    cross3(&V[3], X, t)
    o[3] += t[0]
    o[4] += t[1]
    o[5] += t[2]


cdef inline void base_force(const double* F, const double* p, double* o) noexcept nogil:
    cdef double t[3]
    cross3(p, &F[3], t)
    o[0] = F[3]
    o[1] = F[4]
    o[2] = F[5]
    o[3] = F[0] - t[0]
    o[4] = F[1] - t[1]
    o[5] = F[2] - t[2]


def dynamics(const int[::1] parent, const int[::1] joint,
             const double[:, ::1] axis, const double[:, :, ::1] jrot, const double[:, ::1] jpos,
             const double[::1] mass, const double[:, ::1] lcom, const double[:, :, ::1] linertia,
             const int[::1] clink, const double[:, ::1] cpos, const double[:, :, ::1] crot,
             const double[::1] armature, double gravity,
             const double[::1] p, const double[::1] quat, const double[::1] s, const double[::1] v,
             double[:, :, ::1] rot, double[:, ::1] org, double[:, ::1] com,
             double[:, ::1] vel, double[:, ::1] acc,
             double[:, ::1] M, double[::1] h, double[::1] grav,
             double[:, ::1] J, double[::1] Jdv,
             double[:, ::1] cpos_out, double[:, :, ::1] crot_out,
             double[:, ::1] S, double[:, :, ::1] Isp, double[:, ::1] Fv, double[:, ::1] Fg):
    cdef int nl = mass.shape[0]
    cdef int nc = clink.shape[0]
    cdef int N = M.shape[0]
    cdef int i, j, k, l, pa, r, c, a_, b_
    cdef double qw, qx, qy, qz, qn, ct, st, m
    cdef double Rj[9]
    cdef double Ra[9]
    cdef double K[9]
    cdef double K2[9]
    cdef double Iw[9]
    cdef double T[9]
    cdef double tmp[3]
    cdef double tmp2[3]
    cdef double cp[3]
    cdef double vc[3]
    cdef double t6[6]
    cdef double u6[6]
    cdef double Fi[6]
    cdef double ax0, ax1, ax2
    cdef double Tb[36]
    cdef double IT[36]
    cdef double* R

    with nogil:
        qn = sqrt(quat[0] * quat[0] + quat[1] * quat[1] + quat[2] * quat[2] + quat[3] * quat[3])
        qw = quat[0] / qn
        qx = quat[1] / qn
        qy = quat[2] / qn
        qz = quat[3] / qn
        R = &rot[0, 0, 0]
        R[0] = 1 - 2 * (qy * qy + qz * qz)
        R[1] = 2 * (qx * qy - qw * qz)
        R[2] = 2 * (qx * qz + qw * qy)
        R[3] = 2 * (qx * qy + qw * qz)
        R[4] = 1 - 2 * (qx * qx + qz * qz)
        R[5] = 2 * (qy * qz - qw * qx)
        R[6] = 2 * (qx * qz - qw * qy)
        R[7] = 2 * (qy * qz + qw * qx)
        R[8] = 1 - 2 * (qx * qx + qy * qy)
        org[0, 0] = p[0]
        org[0, 1] = p[1]
        org[0, 2] = p[2]
        for a_ in range(6):
            S[0, a_] = 0.0

        # forward kinematics
        for i in range(1, nl):
            pa = parent[i]
            k = joint[i]
            matmul3(&rot[pa, 0, 0], &jrot[k, 0, 0], Rj)
            matvec3(&rot[pa, 0, 0], &jpos[k, 0], tmp)
            org[i, 0] = org[pa, 0] + tmp[0]
            org[i, 1] = org[pa, 1] + tmp[1]
            org[i, 2] = org[pa, 2] + tmp[2]
            matvec3(Rj, &axis[k, 0], &S[i, 0])
            cross3(&org[i, 0], &S[i, 0], &S[i, 3])
            ax0 = axis[k, 0]
            ax1 = axis[k, 1]
            ax2 = axis[k, 2]
            K[0] = 0.0
            K[1] = -ax2
            K[2] = ax1
            K[3] = ax2
            K[4] = 0.0
            K[5] = -ax0
            K[6] = -ax1
            K[7] = ax0
            K[8] = 0.0
            matmul3(K, K, K2)
            st = sin(s[k])
            ct = 1.0 - cos(s[k])
            for a_ in range(9):
                Ra[a_] = st * K[a_] + ct * K2[a_]
            Ra[0] += 1.0
            Ra[4] += 1.0
            Ra[8] += 1.0
            matmul3(Rj, Ra, &rot[i, 0, 0])

        # spatial inertias at the world origin
        for i in range(nl):
            R = &rot[i, 0, 0]
            matvec3(R, &lcom[i, 0], tmp)
            com[i, 0] = org[i, 0] + tmp[0]
            com[i, 1] = org[i, 1] + tmp[1]
            com[i, 2] = org[i, 2] + tmp[2]
            matmul3(R, &linertia[i, 0, 0], T)
            for r in range(3):
                for c in range(3):
                    Iw[3 * r + c] = T[3 * r] * R[3 * c] + T[3 * r + 1] * R[3 * c + 1] + T[3 * r + 2] * R[3 * c + 2]
            m = mass[i]
            K[0] = 0.0
            K[1] = -com[i, 2]
            K[2] = com[i, 1]
            K[3] = com[i, 2]
            K[4] = 0.0
            K[5] = -com[i, 0]
            K[6] = -com[i, 1]
            K[7] = com[i, 0]
            K[8] = 0.0
            for r in range(3):
                for c in range(3):
                    # C C^T
                    Isp[i, r, c] = Iw[3 * r + c] + m * (K[3 * r] * K[3 * c] + K[3 * r + 1] * K[3 * c + 1] + K[3 * r + 2] * K[3 * c + 2])
                    Isp[i, r, 3 + c] = m * K[3 * r + c]
                    Isp[i, 3 + r, c] = m * K[3 * c + r]
                    Isp[i, 3 + r, 3 + c] = m if r == c else 0.0

        # velocities and velocity-product accelerations
        vel[0, 0] = v[3]
        vel[0, 1] = v[4]
        vel[0, 2] = v[5]
        cross3(&p[0], &v[3], tmp)
        vel[0, 3] = v[0] + tmp[0]
        vel[0, 4] = v[1] + tmp[1]
        vel[0, 5] = v[2] + tmp[2]
        cross3(&v[3], &v[0], tmp)
        acc[0, 0] = 0.0
        acc[0, 1] = 0.0
        acc[0, 2] = 0.0
        acc[0, 3] = -tmp[0]
        acc[0, 4] = -tmp[1]
        acc[0, 5] = -tmp[2]
        for i in range(1, nl):
            pa = parent[i]
            k = joint[i]
            for a_ in range(6):
                vel[i, a_] = vel[pa, a_] + S[i, a_] * v[6 + k]
            crm(&vel[i, 0], &S[i, 0], t6)
            for a_ in range(6):
                acc[i, a_] = acc[pa, a_] + t6[a_] * v[6 + k]

        # recursive Newton-Euler, split into velocity and gravity parts
        for i in range(nl):
            matvec6(&Isp[i, 0, 0], &acc[i, 0], &Fv[i, 0])
            matvec6(&Isp[i, 0, 0], &vel[i, 0], t6)
            crf(&vel[i, 0], t6, u6)
            for a_ in range(6):
                Fv[i, a_] += u6[a_]
                Fg[i, a_] = Isp[i, a_, 5] * gravity
        for i in range(nl - 1, 0, -1):
            pa = parent[i]
            for a_ in range(6):
                Fv[pa, a_] += Fv[i, a_]
                Fg[pa, a_] += Fg[i, a_]
                for b_ in range(6):
                    Isp[pa, a_, b_] += Isp[i, a_, b_]

        base_force(&Fg[0, 0], &p[0], t6)
        base_force(&Fv[0, 0], &p[0], u6)
        for a_ in range(6):
            grav[a_] = t6[a_]
            h[a_] = u6[a_] + t6[a_]
        for r in range(N):
            for c in range(N):
                M[r, c] = 0.0

        # composite rigid body algorithm (Isp now holds composite inertias)
        for i in range(1, nl):
            k = joint[i]
            grav[6 + k] = dot6(&S[i, 0], &Fg[i, 0])
            h[6 + k] = dot6(&S[i, 0], &Fv[i, 0]) + grav[6 + k]
            matvec6(&Isp[i, 0, 0], &S[i, 0], Fi)
            M[6 + k, 6 + k] = dot6(&S[i, 0], Fi) + armature[k]
            j = parent[i]
            while j != 0:
                l = joint[j]
                M[6 + k, 6 + l] = dot6(&S[j, 0], Fi)
                M[6 + l, 6 + k] = M[6 + k, 6 + l]
                j = parent[j]
            base_force(Fi, &p[0], t6)
            for a_ in range(6):
                M[a_, 6 + k] = t6[a_]
                M[6 + k, a_] = t6[a_]

        for a_ in range(36):
            Tb[a_] = 0.0
        Tb[0 * 6 + 3] = 1.0
        Tb[1 * 6 + 4] = 1.0
        Tb[2 * 6 + 5] = 1.0
        Tb[3 * 6 + 0] = 1.0
        Tb[4 * 6 + 1] = 1.0
        Tb[5 * 6 + 2] = 1.0
        Tb[3 * 6 + 4] = -p[2]
        Tb[3 * 6 + 5] = p[1]
        Tb[4 * 6 + 3] = p[2]
        Tb[4 * 6 + 5] = -p[0]
        Tb[5 * 6 + 3] = -p[1]
        Tb[5 * 6 + 4] = p[0]
        for r in range(6):
            for c in range(6):
                IT[6 * r + c] = 0.0
                for a_ in range(6):
                    IT[6 * r + c] += Isp[0, r, a_] * Tb[6 * a_ + c]
        for r in range(6):
            for c in range(6):
                m = 0.0
                for a_ in range(6):
                    m += Tb[6 * a_ + r] * IT[6 * a_ + c]
                M[r, c] = m

        # contact Jacobians and drift accelerations
        for r in range(J.shape[0]):
            for c in range(N):
                J[r, c] = 0.0
        for c in range(nc):
            i = clink[c]
            R = &rot[i, 0, 0]
            matvec3(R, &cpos[c, 0], tmp)
            cp[0] = org[i, 0] + tmp[0]
            cp[1] = org[i, 1] + tmp[1]
            cp[2] = org[i, 2] + tmp[2]
            cpos_out[c, 0] = cp[0]
            cpos_out[c, 1] = cp[1]
            cpos_out[c, 2] = cp[2]
            matmul3(R, &crot[c, 0, 0], &crot_out[c, 0, 0])
            r = 6 * c
            J[r, 0] = 1.0
            J[r + 1, 1] = 1.0
            J[r + 2, 2] = 1.0
            J[r + 3, 3] = 1.0
            J[r + 4, 4] = 1.0
            J[r + 5, 5] = 1.0
            # -skew(cp - p)
            J[r, 4] = cp[2] - p[2]
            J[r, 5] = -(cp[1] - p[1])
            J[r + 1, 3] = -(cp[2] - p[2])
            J[r + 1, 5] = cp[0] - p[0]
            J[r + 2, 3] = cp[1] - p[1]
            J[r + 2, 4] = -(cp[0] - p[0])
            j = i
            while j != 0:
                k = joint[j]
                cross3(&S[j, 0], cp, tmp)
                J[r, 6 + k] = S[j, 3] + tmp[0]
                J[r + 1, 6 + k] = S[j, 4] + tmp[1]
                J[r + 2, 6 + k] = S[j, 5] + tmp[2]
                J[r + 3, 6 + k] = S[j, 0]
                J[r + 4, 6 + k] = S[j, 1]
                J[r + 5, 6 + k] = S[j, 2]
                j = parent[j]
            cross3(&vel[i, 0], cp, tmp)
            vc[0] = vel[i, 3] + tmp[0]
            vc[1] = vel[i, 4] + tmp[1]
            vc[2] = vel[i, 5] + tmp[2]
            cross3(&acc[i, 0], cp, tmp)
            cross3(&vel[i, 0], vc, tmp2)
            Jdv[r] = acc[i, 3] + tmp[0] + tmp2[0]
            Jdv[r + 1] = acc[i, 4] + tmp[1] + tmp2[1]
            Jdv[r + 2] = acc[i, 5] + tmp[2] + tmp2[2]
            Jdv[r + 3] = acc[i, 0]
            Jdv[r + 4] = acc[i, 1]
            Jdv[r + 5] = acc[i, 2]


cdef int cholesky(double* A, int n, double* L, double rel_tol) noexcept nogil:
    # lower factor of symmetric A (row-major); returns 0 on success
    cdef int i, j, k
    cdef double acc, dmax = 0.0
    for i in range(n):
        if A[i * n + i] > dmax:
            dmax = A[i * n + i]
    for j in range(n):
        acc = A[j * n + j]
        for k in range(j):
            acc -= L[j * n + k] * L[j * n + k]
        if acc <= rel_tol * dmax:
            return 1
        L[j * n + j] = sqrt(acc)
        for i in range(j + 1, n):
            acc = A[i * n + j]
            for k in range(j):
                acc -= L[i * n + k] * L[j * n + k]
            L[i * n + j] = acc / L[j * n + j]
        for i in range(j):
            L[i * n + j] = 0.0
    return 0


cdef void chol_solve(const double* L, int n, const double* b, double* x) noexcept nogil:
    cdef int i, k
    cdef double acc
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i * n + k] * x[k]
        x[i] = acc / L[i * n + i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= L[k * n + i] * x[k]
        x[i] = acc / L[i * n + i]


cdef int _kkt(const double* M, const double* Q, const double* J, const double* rhs,
              double* nud, double* f, double* L, double* Y, double* Lam, double* Lc,
              double* a, double* r, int N, int K) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    if cholesky(M, N, L, 1e-300) != 0:
        return 1
    chol_solve(L, N, Q, a)
    for k in range(K):
        chol_solve(L, N, &J[k * N], &Y[k * N])
    for i in range(K):
        for j in range(i + 1):
            acc = 0.0
            for k in range(N):
                acc += J[i * N + k] * Y[j * N + k]
            Lam[i * K + j] = acc
            Lam[j * K + i] = acc
        acc = rhs[i]
        for k in range(N):
            acc -= J[i * N + k] * a[k]
        r[i] = acc
    if K > 0:
        if cholesky(Lam, K, Lc, 1e-12) != 0:
            return 2
        chol_solve(Lc, K, r, f)
    for i in range(N):
        acc = a[i]
        for k in range(K):
            acc += Y[k * N + i] * f[k]
        nud[i] = acc
    return 0


def kkt_solve(const double[:, ::1] M, const double[::1] Q, const double[:, ::1] J,
              const double[::1] rhs):
    """Solve M nud - J^T f = Q, J nud = rhs by Cholesky and a Schur complement.

    Returns (status, nud, f); status 1 means M is not positive definite and
    2 that the constraint rows have lost rank.
    """
    cdef int N = M.shape[0]
    cdef int K = J.shape[0]
    cdef int status
    nud_a = np.zeros(N)
    f_a = np.zeros(K)
    cdef double[::1] nud = nud_a
    cdef double[::1] f = np.zeros(max(K, 1))
    cdef double[::1] L = np.zeros(N * N)
    cdef double[::1] Y = np.zeros(max(K, 1) * N)
    cdef double[::1] Lam = np.zeros(max(K, 1) ** 2)
    cdef double[::1] Lc = np.zeros(max(K, 1) ** 2)
    cdef double[::1] a = np.zeros(N)
    cdef double[::1] r = np.zeros(max(K, 1))
    cdef const double* Jp = &J[0, 0] if K > 0 else &M[0, 0]
    cdef const double* rp = &rhs[0] if K > 0 else &Q[0]
    with nogil:
        status = _kkt(&M[0, 0], &Q[0], Jp, rp, &nud[0], &f[0], &L[0], &Y[0], &Lam[0], &Lc[0],
                      &a[0], &r[0], N, K)
    if K:
        f_a[:] = np.asarray(f)
    return status, nud_a, f_a


def locked_inertia_rate(const double[::1] mass, const double[:, :, ::1] linertia,
                        const double[:, :, ::1] rot, const double[:, ::1] com,
                        const double[:, ::1] vel, const double[::1] p_c, const double[::1] pd_c,
                        double[:, ::1] out):
    """d/dt of the locked inertia about the CoM (world frame)."""
    cdef int nl = mass.shape[0]
    cdef int i, r, c, k
    cdef double Iw[9]
    cdef double tmp[9]
    cdef double d[3]
    cdef double dd[3]
    cdef double cd[3]
    cdef double w[3]
    cdef double acc, dot_dd
    with nogil:
        for r in range(3):
            for c in range(3):
                out[r, c] = 0.0
        for i in range(nl):
            # Iw = R I R^T
            for r in range(3):
                for c in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc += linertia[i, r, k] * rot[i, c, k]
                    tmp[3 * r + c] = acc
            for r in range(3):
                for c in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc += rot[i, r, k] * tmp[3 * k + c]
                    Iw[3 * r + c] = acc
            w[0] = vel[i, 0]
            w[1] = vel[i, 1]
            w[2] = vel[i, 2]
            cross3(w, &com[i, 0], cd)
            for k in range(3):
                cd[k] += vel[i, 3 + k]
                d[k] = com[i, k] - p_c[k]
                dd[k] = cd[k] - pd_c[k]
            # [w]x Iw - Iw [w]x
            for c in range(3):
                tmp[c] = w[1] * Iw[6 + c] - w[2] * Iw[3 + c]
                tmp[3 + c] = w[2] * Iw[c] - w[0] * Iw[6 + c]
                tmp[6 + c] = w[0] * Iw[3 + c] - w[1] * Iw[c]
            for r in range(3):
                for c in range(3):
                    out[r, c] += tmp[3 * r + c] + tmp[3 * c + r]
            # -m ([dd]x [d]x + [d]x [dd]x) = m (2 (d.dd) I - d dd^T - dd d^T)
            dot_dd = d[0] * dd[0] + d[1] * dd[1] + d[2] * dd[2]
            for r in range(3):
                for c in range(3):
                    out[r, c] += mass[i] * ((2.0 * dot_dd if r == c else 0.0) - d[r] * dd[c] - dd[r] * d[c])
