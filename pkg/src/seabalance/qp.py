"""Small dense least-squares QPs and contact wrench constraints.

Problems have the form ``min |W x - w|^2  s.t.  A_eq x = b_eq,  C x <= b``.
Equalities are eliminated through a null-space basis; the remaining
inequality problem is solved by a primal active-set method started from a
feasible point found by a phase-one problem of the same form.
"""

from dataclasses import dataclass, field

import numpy as np

SOLVED, INFEASIBLE, MAX_ITERATIONS = "solved", "infeasible", "max_iterations"


class QpInfeasible(RuntimeError):
    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = tuple(violated)


@dataclass
class QpProblem:
    W: np.ndarray
    w: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    C: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        d = self.W.shape[1]
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, d)), np.zeros(0)
        if self.C is None:
            self.C, self.b = np.zeros((0, d)), np.zeros(0)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, d)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, d)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.W.shape[0] != self.w.shape[0] or self.A_eq.shape[0] != self.b_eq.shape[0] \
                or self.C.shape[0] != self.b.shape[0]:
            raise ValueError("inconsistent QP dimensions")

    @property
    def d(self):
        return self.W.shape[1]


@dataclass
class QpResult:
    x: np.ndarray
    active: tuple
    status: str
    mu: np.ndarray = None      # inequality multipliers (>= 0)
    lam: np.ndarray = None     # equality multipliers
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == SOLVED


def _null_space(A, rcond=1e-12):
    d = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(d), 0
    U, sv, Vt = np.linalg.svd(A)
    r = int(np.sum(sv > rcond * max(sv[0], 1.0)))
    return Vt[r:].T, r


def _eqp_step(Q, g, A):
    """Step p minimising 1/2 p'Qp + g'p with A p = 0, plus multipliers."""
    k, d = A.shape
    K = np.zeros((d + k, d + k))
    K[:d, :d] = Q
    K[:d, d:] = A.T
    K[d:, :d] = A
    rhs = np.concatenate([-g, np.zeros(k)])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:d], sol[d:]


def _active_set(Q, q, C, b, x, working, max_iter, tol):
    """Primal active-set iterations from a feasible x; rows of C are unit norm."""
    working = list(working)
    it = 0
    scale = max(1.0, np.abs(q).max(initial=0.0), np.abs(Q).max(initial=0.0))
    while it < max_iter:
        it += 1
        g = Q @ x - q
        A = C[working]
        p, lam = _eqp_step(Q, g, A)
        if np.linalg.norm(p) <= tol * max(1.0, np.linalg.norm(x)):
            # multipliers at p = 0 (lam solves A' lam = -g in the KKT system)
            if not working or lam.min() >= -tol * scale:
                return x, working, lam, it, True
            working.pop(int(np.argmin(lam)))
            continue
        alpha, block = 1.0, None
        Cp = C @ p
        for i in range(C.shape[0]):
            if i in working or Cp[i] <= tol:
                continue
            a = (b[i] - C[i] @ x) / Cp[i]
            if a < alpha:
                alpha, block = max(a, 0.0), i
        x = x + alpha * p
        if block is not None:
            working.append(block)
    g = Q @ x - q
    lam = np.linalg.lstsq(C[working].T, -g, rcond=None)[0] if working else np.zeros(0)
    return x, working, lam, it, False


class ActiveSetSolver:
    """Reusable solver; remembers the last solution for warm starts."""

    def __init__(self, max_iter=200, tol=1e-11, phase1_weight=1e-6):
        self.max_iter = max_iter
        self.tol = tol
        self.phase1_weight = phase1_weight
        self._warm = None

    def reset(self):
        self._warm = None

    def solve(self, problem, x0=None):
        d = problem.d
        # equality elimination: x = xp + Z y
        Z, r = _null_space(problem.A_eq)
        if problem.A_eq.shape[0]:
            xp = np.linalg.lstsq(problem.A_eq, problem.b_eq, rcond=None)[0]
            res = problem.A_eq @ xp - problem.b_eq
            if np.abs(res).max() > 1e-9 * max(1.0, np.abs(problem.b_eq).max()):
                return QpResult(xp, (), INFEASIBLE, info={"reason": "inconsistent equalities"})
        else:
            xp = np.zeros(d)
        Wy = problem.W @ Z
        wy = problem.w - problem.W @ xp
        Cy = problem.C @ Z
        by = problem.b - problem.C @ xp
        norms = np.linalg.norm(Cy, axis=1)
        live = norms > 1e-14
        # rows with no dependence on y are either always satisfied or infeasible
        if np.any(by[~live] < -1e-9):
            bad = np.flatnonzero(~live)[by[~live] < -1e-9]
            return QpResult(xp, (), INFEASIBLE, info={"violated": bad.tolist()})
        idx = np.flatnonzero(live)
        Cn = Cy[idx] / norms[idx, None]
        bn = by[idx] / norms[idx]
        Q = Wy.T @ Wy
        q = Wy.T @ wy

        y0 = None
        start = x0 if x0 is not None else self._warm
        if start is not None and start.shape == (d,):
            yy = Z.T @ (start - xp)
            if np.all(Cn @ yy <= bn + 1e-12):
                y0 = yy
        if y0 is None:
            y0, feasible = self._phase1(Cn, bn, Z.shape[1])
            if not feasible:
                x = xp + Z @ y0
                viol = np.flatnonzero(problem.C @ x - problem.b > 1e-9)
                return QpResult(x, (), INFEASIBLE, info={"violated": viol.tolist()})
        y, working, lam_n, it, conv = _active_set(Q, q, Cn, bn, y0, [], self.max_iter, self.tol)
        x = xp + Z @ y
        mu = np.zeros(problem.C.shape[0])
        active = tuple(sorted(int(idx[i]) for i in working))
        for i, l in zip(working, lam_n):
            mu[idx[i]] = max(l, 0.0) / norms[idx[i]]
        # equality multipliers from stationarity
        grad = problem.W.T @ (problem.W @ x - problem.w) + problem.C.T @ mu
        lam = np.linalg.lstsq(problem.A_eq.T, -grad, rcond=None)[0] if problem.A_eq.shape[0] else np.zeros(0)
        status = SOLVED if conv else MAX_ITERATIONS
        if conv:
            self._warm = x.copy()
        return QpResult(x, active, status, mu=mu, lam=lam, iterations=it)

    def _phase1(self, C, b, d):
        """Feasible point via min t + delta(|y|^2 + t^2) s.t. C y - t <= b, t >= -1."""
        if C.shape[0] == 0:
            return np.zeros(d), True
        delta = self.phase1_weight
        sd = np.sqrt(delta)
        W = sd * np.eye(d + 1)
        w = np.zeros(d + 1)
        w[-1] = -0.5 / sd
        C1 = np.hstack([C, -np.ones((C.shape[0], 1))])
        nrm = np.linalg.norm(C1, axis=1)
        C1 = C1 / nrm[:, None]
        b1 = b / nrm
        tb = np.zeros(d + 1)
        tb[-1] = -1.0
        C1 = np.vstack([C1, tb])
        b1 = np.concatenate([b1, [1.0]])
        z0 = np.zeros(d + 1)
        z0[-1] = max(float(np.max(C @ np.zeros(d) - b)), -1.0) + 1e-9
        z, _, _, _, _ = _active_set(W.T @ W, W.T @ w, C1, b1, z0, [], 10 * self.max_iter, self.tol)
        y = z[:d]
        return y, bool(np.all(C @ y <= b + 1e-9))


def solve(problem, solver=None):
    """One-shot solve (see ActiveSetSolver)."""
    return (solver or ActiveSetSolver()).solve(problem)


def kkt_errors(problem, res):
    """Stationarity, primal infeasibility, dual infeasibility, complementarity."""
    x, mu, lam = res.x, res.mu, res.lam
    stat = problem.W.T @ (problem.W @ x - problem.w) + problem.A_eq.T @ lam + problem.C.T @ mu
    slack = problem.C @ x - problem.b
    primal = max(np.abs(problem.A_eq @ x - problem.b_eq).max(initial=0.0), slack.max(initial=0.0))
    return (float(np.linalg.norm(stat)), float(max(primal, 0.0)), float(max(-mu.min(initial=0.0), 0.0)),
            float(np.abs(mu * slack).max(initial=0.0)))


@dataclass(frozen=True)
class ContactConstraintSpec:
    mu: float = 0.5
    n_edges: int = 4
    f_min: float = 1.0
    x_min: float = -0.05
    x_max: float = 0.05
    y_min: float = -0.05
    y_max: float = 0.05

    def __post_init__(self):
        if not self.mu > 0 or self.f_min < 0 or self.n_edges < 4:
            raise ValueError("need mu > 0, f_min >= 0, n_edges >= 4")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("empty CoP rectangle")

    @classmethod
    def from_half_extents(cls, half_extents, mu=0.5, n_edges=4, f_min=1.0):
        hx, hy = half_extents
        return cls(mu, n_edges, f_min, -hx, hx, -hy, hy)


def build_contact_constraints(spec, R=None):
    """Rows ``C f <= b`` for one contact wrench f = (force, moment) in world axes.

    ``R`` is the contact frame orientation (z is the surface normal).
    """
    ne = spec.n_edges
    rows = []
    b = []
    # normal force lower bound
    rows.append([0, 0, -1, 0, 0, 0])
    b.append(-spec.f_min)
    # linearised friction cone
    for i in range(ne):
        a = 2 * np.pi * i / ne
        rows.append([np.cos(a), np.sin(a), -spec.mu, 0, 0, 0])
        b.append(0.0)
    # centre of pressure (x_cop = -tau_y / f_z, y_cop = tau_x / f_z)
    rows += [[0, 0, -spec.x_max, 0, -1, 0],
             [0, 0, spec.x_min, 0, 1, 0],
             [0, 0, -spec.y_max, 1, 0, 0],
             [0, 0, spec.y_min, -1, 0, 0]]
    b += [0.0] * 4
    C = np.array(rows, dtype=float)
    for i in range(1, ne + 1):
        C[i] = np.where(np.abs(C[i]) < 1e-15, 0.0, C[i])
    if R is not None:
        Rt = np.asarray(R).T
        C = np.hstack([C[:, :3] @ Rt, C[:, 3:] @ Rt])
    return C, np.array(b)


def stack_contact_constraints(specs, rots):
    blocks = [build_contact_constraints(s, R) for s, R in zip(specs, rots)]
    if not blocks:
        return np.zeros((0, 0)), np.zeros(0)
    r = sum(c.shape[0] for c, _ in blocks)
    C = np.zeros((r, 6 * len(blocks)))
    row = 0
    for k, (c, _) in enumerate(blocks):
        C[row:row + c.shape[0], 6 * k:6 * k + 6] = c
        row += c.shape[0]
    return C, np.concatenate([bb for _, bb in blocks])


def constraint_names(nc, n_edges=4):
    names = []
    for c in range(nc):
        names += [f"c{c}.normal"] + [f"c{c}.friction{i}" for i in range(n_edges)]
        names += [f"c{c}.cop_x_max", f"c{c}.cop_x_min", f"c{c}.cop_y_max", f"c{c}.cop_y_min"]
    return names
