"""Dense warm-started primal active-set solver for strictly convex QPs.

    min 0.5 z'Hz + g'z   s.t.  Crows z + cvec <= 0,  lb <= z <= ub

Constraints are identified by integer ids: 0..m-1 are the general rows,
m..m+n-1 the upper bounds, m+n..m+2n-1 the lower bounds.  The working set
holds the ids currently treated as equalities; carrying it into the next
solve is the warm start.  Each iteration refactorizes the reduced KKT
system from scratch, which is cheap at the problem sizes this package
produces (a few dozen variables).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class WorkingSet:
    """Ordered ids of the constraints treated as equalities."""

    active: tuple[int, ...] = ()


@dataclass
class DenseQp:
    """Strictly convex dense QP; rows encode Crows z + cvec <= 0."""

    H: np.ndarray
    g: np.ndarray
    Crows: np.ndarray = None
    cvec: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = len(self.g)
        if self.Crows is None:
            self.Crows = np.zeros((0, n))
        self.Crows = np.asarray(self.Crows, dtype=float).reshape(-1, n)
        if self.cvec is None:
            self.cvec = np.zeros(0)
        self.cvec = np.asarray(self.cvec, dtype=float).reshape(-1)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")

    @property
    def n(self) -> int:
        return len(self.g)

    @property
    def m(self) -> int:
        return self.Crows.shape[0]


@dataclass
class QpSolution:
    z: np.ndarray
    lam_rows: np.ndarray
    lam_lb: np.ndarray
    lam_ub: np.ndarray
    ws: WorkingSet
    iterations: int
    status: str  # "solved" | "max-iterations" | "infeasible-detected"
    obj_history: list = field(default_factory=list)


def _unified(qp: DenseQp):
    """All constraints as rows a_i' z <= b_i; ids of infinite bounds are excluded."""
    n, m = qp.n, qp.m
    A = np.zeros((m + 2 * n, n))
    b = np.zeros(m + 2 * n)
    usable = np.zeros(m + 2 * n, dtype=bool)
    if m:
        A[:m] = qp.Crows
        b[:m] = -qp.cvec
        usable[:m] = True
    for i in range(n):
        if np.isfinite(qp.ub[i]):
            A[m + i, i] = 1.0
            b[m + i] = qp.ub[i]
            usable[m + i] = True
        if np.isfinite(qp.lb[i]):
            A[m + n + i, i] = -1.0
            b[m + n + i] = -qp.lb[i]
            usable[m + n + i] = True
    return A, b, usable


def _eqp(H, g, A_w, b_w):
    """Minimize 0.5 z'Hz + g'z subject to A_w z = b_w; returns (z, lam).

    One pass of iterative refinement keeps the KKT residual near machine
    precision even for ill-conditioned systems, which makes warm restarts
    reproduce the cold solution essentially exactly.
    """
    n = len(g)
    k = A_w.shape[0]
    if k == 0:
        sol = np.linalg.solve(H, -g)
        sol += np.linalg.solve(H, -g - H @ sol)
        return sol, np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = A_w.T
    K[n:, :n] = A_w
    rhs = np.concatenate([-g, b_w])
    try:
        sol = np.linalg.solve(K, rhs)
        sol += np.linalg.solve(K, rhs - K @ sol)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _prune_dependent(A, ids):
    """Keep a maximal linearly independent subset of the rows, in order."""
    kept = []
    basis = np.zeros((0, A.shape[1]))
    for i in ids:
        a = A[i]
        if basis.shape[0]:
            resid = a - basis.T @ np.linalg.lstsq(basis.T, a, rcond=None)[0]
        else:
            resid = a
        if np.linalg.norm(resid) > 1e-10 * max(1.0, np.linalg.norm(a)):
            kept.append(i)
            basis = np.vstack([basis, a])
    return kept


def _restore_feasibility(z, A, b, usable, feas_tol):
    """Iteratively project onto the accumulated set of most-violated rows.

    Bound rows take part like any other row.  Stalls (a projected row gets
    re-violated by a later projection) fall back to the big-M phase 1.
    """
    forced: list[int] = []
    for _ in range(len(b) + 1):
        resid = A @ z - b
        resid[~usable] = -np.inf
        worst = int(np.argmax(resid))
        if resid[worst] <= feas_tol:
            return z, True
        if worst in forced:
            return z, False
        kept = _prune_dependent(A, forced + [worst])
        if worst not in kept:
            return z, False  # violated row dependent on already-forced rows
        forced = kept
        Af = A[forced]
        z = z + Af.T @ np.linalg.solve(Af @ Af.T, b[forced] - Af @ z)
    return z, False


def _phase1(qp: DenseQp, tol, max_iter):
    """Big-M fallback: minimize the QP objective plus M*s with rows relaxed by s >= 0.

    The augmented problem always has the strictly feasible start
    (clip(-H^-1 g), max violation + 1), so it never recurses.
    """
    n, m = qp.n, qp.m
    scale = max(1.0, np.abs(qp.g).max(initial=0.0), np.abs(qp.H).max())
    bigM = 1e6 * scale
    H1 = np.zeros((n + 1, n + 1))
    H1[:n, :n] = qp.H
    H1[n, n] = 1e-3 * scale
    g1 = np.concatenate([qp.g, [bigM]])
    C1 = np.hstack([qp.Crows, -np.ones((m, 1))])
    lb1 = np.concatenate([qp.lb, [0.0]])
    ub1 = np.concatenate([qp.ub, [np.inf]])
    aug = DenseQp(H=H1, g=g1, Crows=C1, cvec=qp.cvec, lb=lb1, ub=ub1)
    z0 = np.clip(np.linalg.solve(qp.H, -qp.g), qp.lb, qp.ub)
    s0 = max(0.0, float((qp.Crows @ z0 + qp.cvec).max(initial=0.0))) + 1.0
    sol = solve_qp(aug, tol=tol, max_iter=max_iter,
                   _start=np.concatenate([z0, [s0]]))
    return sol.z[:n], sol.z[n]


def solve_qp(qp: DenseQp, warm: WorkingSet | None = None, tol: float = 1e-8,
             max_iter: int | None = None, _start: np.ndarray | None = None) -> QpSolution:
    """Primal active-set iteration with deterministic tie-breaking.

    Blocking constraint: smallest step, ties by lowest id.  Removal: most
    negative multiplier, ties by lowest id.  Warm-started re-solves of
    unchanged data terminate after a single iteration.
    """
    n, m = qp.n, qp.m
    if max_iter is None:
        max_iter = 100 * (n + m)
    feas_tol = max(tol, 1e-9)
    A, b, usable = _unified(qp)
    cand = np.flatnonzero(usable)

    def feasible(z):
        return bool(np.all(A[cand] @ z - b[cand] <= feas_tol))

    # starting point: warm equality solve if usable, else clip + restoration
    z = None
    W: list[int] = []
    if _start is not None:
        z = np.asarray(_start, dtype=float).copy()
    elif warm is not None and len(warm.active):
        ids = [i for i in warm.active if 0 <= i < len(b) and usable[i]]
        ids = _prune_dependent(A, ids)
        z_try, _ = _eqp(qp.H, qp.g, A[ids], b[ids])
        if feasible(z_try):
            z, W = z_try, ids
    if z is None:
        z = np.clip(np.linalg.solve(qp.H, -qp.g), qp.lb, qp.ub)
        if not feasible(z):
            z, ok = _restore_feasibility(z, A, b, usable, feas_tol)
            if not ok:
                z, slack = _phase1(qp, tol, max_iter)
                if slack > 10.0 * feas_tol or not feasible(z):
                    return QpSolution(z=z, lam_rows=np.zeros(m), lam_lb=np.zeros(n),
                                      lam_ub=np.zeros(n), ws=WorkingSet(), iterations=0,
                                      status="infeasible-detected")
        W = []

    def solution(status, it, lam_W):
        lam_rows = np.zeros(m)
        lam_lb = np.zeros(n)
        lam_ub = np.zeros(n)
        for idx, lam in zip(W, lam_W):
            if idx < m:
                lam_rows[idx] = lam
            elif idx < m + n:
                lam_ub[idx - m] = lam
            else:
                lam_lb[idx - m - n] = lam
        return QpSolution(z=z, lam_rows=lam_rows, lam_lb=lam_lb, lam_ub=lam_ub,
                          ws=WorkingSet(tuple(W)), iterations=it, status=status,
                          obj_history=obj_history)

    def objective(v):
        return 0.5 * v @ qp.H @ v + qp.g @ v

    obj_history = [objective(z)]
    lam_W = np.zeros(len(W))

    def drop_worst():
        # most negative multiplier; exact ties broken by lowest constraint id
        lam_min = lam_W.min()
        worst = min(i for i, lam in enumerate(lam_W) if lam == lam_min)
        W.pop(worst)

    for it in range(1, max_iter + 1):
        grad = qp.H @ z + qp.g
        p, lam_W = _eqp(qp.H, grad, A[W], np.zeros(len(W)))
        step_tol = 1e-11 * max(1.0, float(np.abs(z).max(initial=0.0)))

        if np.abs(p).max(initial=0.0) <= step_tol:
            obj_history.append(objective(z))
            if len(W) == 0 or lam_W.min() >= -tol:
                return solution("solved", it, lam_W)
            drop_worst()
            continue

        # largest feasible step along p; blocking rows have a_i'p > 0
        alpha = 1.0
        blocker = -1
        Ap = A[cand] @ p
        resid = b[cand] - A[cand] @ z
        for local, i in enumerate(cand):
            if i in W or Ap[local] <= 1e-12:
                continue
            a_step = resid[local] / Ap[local]
            if a_step < alpha - 1e-14:
                alpha = max(a_step, 0.0)
                blocker = int(i)
        z = z + alpha * p
        obj_history.append(objective(z))
        if blocker >= 0:
            W.append(blocker)
        else:
            # full step reached the EQP minimizer: multipliers from this
            # solve are valid at the new point, so check optimality now
            if len(W) == 0 or lam_W.min() >= -tol:
                return solution("solved", it, lam_W)
            drop_worst()

    return solution("max-iterations", max_iter, lam_W)
