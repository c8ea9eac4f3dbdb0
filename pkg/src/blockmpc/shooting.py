"""Stage-wise QP data assembly at the current linearization point.

The linearization point is a trajectory of N+1 node states and M blocked
inputs.  Every shooting interval k is integrated with the input of its
block, so the stage data keeps N dynamic stages and N+1 cost stages
regardless of M: blocking reduces the degrees of freedom without
coarsening the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocking import BlockStructure, interval_blocks
from .integrator import IntegrationDivergedError, integrate_interval
from .model import OcpProblem, box_constraint_rows, stage_cost_terms


@dataclass
class Trajectory:
    """Linearization point: node states xs (N+1, nx) and blocked inputs us (M, nu)."""

    xs: np.ndarray
    us: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.us = np.asarray(self.us, dtype=float)
        if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.us))):
            raise ValueError("trajectory entries must be finite")

    def copy(self) -> "Trajectory":
        return Trajectory(self.xs.copy(), self.us.copy())


@dataclass
class StageData:
    """Per-node linearization data of the blocked stage-wise QP.

    Dynamic stages k = 0..N-1 carry sensitivities (A, B), shooting residual
    d_k = phi(x_k, u_block(k)) - x_{k+1}, Gauss-Newton Hessian blocks and
    cost gradients, and affine constraint rows Cx*dx + Cu*du + c <= 0.
    ``dx0`` is the initial-value embedding residual x0_measured - x_0.
    Input box bounds appear once per block as bounds on the input step.
    """

    As: np.ndarray
    Bs: np.ndarray
    ds: np.ndarray
    Qs: np.ndarray
    Ss: np.ndarray
    Rs: np.ndarray
    qs: np.ndarray
    rs: np.ndarray
    Cxs: list
    Cus: list
    cs: list
    QN: np.ndarray
    qN: np.ndarray
    CN: np.ndarray
    cN: np.ndarray
    dx0: np.ndarray
    du_lo: np.ndarray
    du_hi: np.ndarray

    @property
    def N(self) -> int:
        return self.As.shape[0]

    @property
    def nx(self) -> int:
        return self.As.shape[1]

    @property
    def nu(self) -> int:
        return self.Bs.shape[2]


def forward_simulate(problem: OcpProblem, bs: BlockStructure, x0: np.ndarray,
                     us: np.ndarray) -> Trajectory:
    """Simulate the shooting nodes forward from x0 under blocked inputs us."""
    us = np.atleast_2d(np.asarray(us, dtype=float))
    if us.shape[0] != bs.M:
        raise ValueError(f"expected {bs.M} blocked inputs, got {us.shape[0]}")
    blocks = interval_blocks(bs)
    xs = np.zeros((bs.N + 1, len(x0)))
    xs[0] = x0
    for k in range(bs.N):
        try:
            xs[k + 1], _, _ = integrate_interval(
                problem.intervals[k], problem.rhs, problem.jac, xs[k], us[blocks[k]])
        except IntegrationDivergedError as err:
            raise IntegrationDivergedError(node=k) from err
    return Trajectory(xs=xs, us=us)


def evaluate(problem: OcpProblem, bs: BlockStructure, traj: Trajectory,
             x0_measured: np.ndarray, _resim: bool = False) -> StageData:
    """Linearize the blocked problem at ``traj`` with measured initial state.

    Every interval in block j is integrated with u_hat_j; the residuals
    d_k close the shooting gaps, and dx0 embeds the new measurement.  With
    ``_resim`` the node states are overwritten by the forward simulation as
    it proceeds (used by :func:`simulate_and_evaluate`).
    """
    N, M = bs.N, bs.M
    nx, nu = problem.dims.nx, problem.dims.nu
    if traj.xs.shape != (N + 1, nx) or traj.us.shape != (M, nu):
        raise ValueError("trajectory shape inconsistent with problem/blocking")
    blocks = interval_blocks(bs)

    As = np.zeros((N, nx, nx))
    Bs = np.zeros((N, nx, nu))
    ds = np.zeros((N, nx))
    Qs = np.zeros((N, nx, nx))
    Ss = np.zeros((N, nx, nu))
    Rs = np.zeros((N, nu, nu))
    qs = np.zeros((N, nx))
    rs = np.zeros((N, nu))
    Cxs, Cus, cs = [], [], []

    for k in range(N):
        u_k = traj.us[blocks[k]]
        try:
            x_end, As[k], Bs[k] = integrate_interval(
                problem.intervals[k], problem.rhs, problem.jac, traj.xs[k], u_k)
        except IntegrationDivergedError as err:
            raise IntegrationDivergedError(node=k) from err
        if _resim:
            traj.xs[k + 1] = x_end
        ds[k] = x_end - traj.xs[k + 1]
        q, r, Qk, Sk, Rk = stage_cost_terms(traj.xs[k], u_k, problem.cost, k)
        w = problem.weight_scales[k]
        Qs[k], Ss[k], Rs[k] = w * Qk, w * Sk, w * Rk
        qs[k], rs[k] = w * q, w * r
        if k == 0:
            # dx0 is fixed by the initial-value embedding, so state rows at
            # node 0 would be constant; they are not emitted.
            Cxs.append(np.zeros((0, nx)))
            Cus.append(np.zeros((0, nu)))
            cs.append(np.zeros(0))
        else:
            Cx, Cu, c = box_constraint_rows(problem.bounds.x_lo, problem.bounds.x_hi,
                                            traj.xs[k], nu)
            Cxs.append(Cx)
            Cus.append(Cu)
            cs.append(c)

    qN = problem.cost.QN @ (traj.xs[N] - problem.cost.x_ref_at(N))
    CN, _, cN = box_constraint_rows(problem.bounds.x_lo, problem.bounds.x_hi,
                                    traj.xs[N], nu)

    du_lo = np.tile(problem.bounds.u_lo, (M, 1)) - traj.us
    du_hi = np.tile(problem.bounds.u_hi, (M, 1)) - traj.us

    return StageData(As=As, Bs=Bs, ds=ds, Qs=Qs, Ss=Ss, Rs=Rs, qs=qs, rs=rs,
                     Cxs=Cxs, Cus=Cus, cs=cs,
                     QN=problem.cost.QN.copy(), qN=qN, CN=CN, cN=cN,
                     dx0=np.asarray(x0_measured, dtype=float) - traj.xs[0],
                     du_lo=du_lo, du_hi=du_hi)


def simulate_and_evaluate(problem: OcpProblem, bs: BlockStructure, us: np.ndarray,
                          x0_measured: np.ndarray):
    """Initialize the problem with the blocked inputs and linearize in one pass.

    The node states are the forward simulation from the measured state under
    ``us``, so the returned stage data has d_k = 0 and dx0 = 0 (a feasible
    linearization point) at the cost of a single integration sweep.
    Returns (Trajectory, StageData).
    """
    us = np.atleast_2d(np.asarray(us, dtype=float))
    x0 = np.asarray(x0_measured, dtype=float)
    xs = np.tile(x0, (bs.N + 1, 1))
    traj = Trajectory(xs=xs, us=us.copy())
    sd = evaluate(problem, bs, traj, x0, _resim=True)
    return traj, sd
