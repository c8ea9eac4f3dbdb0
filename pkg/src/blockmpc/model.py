"""Continuous-time problem ingredients: dynamics, quadratic cost, box constraints.

The concrete plant is a cart-pole (inverted pendulum on a cart).  State is
x = [p, theta, p_dot, theta_dot] with p the cart position and theta the
pole angle measured from the upright position (theta = pi hangs down);
the input is the horizontal force u on the cart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrator import IntegratorConfig


@dataclass(frozen=True)
class ProblemDims:
    """Dimensions of the stage-wise problem."""

    nx: int
    nu: int
    nc: int = 0
    ncN: int = 0

    def __post_init__(self):
        if self.nx < 1 or self.nu < 1 or self.nc < 0 or self.ncN < 0:
            raise ValueError(f"invalid dimensions {self}")


@dataclass(frozen=True)
class PendulumParams:
    """Cart-pole physical parameters: pole mass m1, cart mass m2, pole length l, gravity g."""

    m1: float = 0.1
    m2: float = 1.0
    l: float = 0.8
    g: float = 9.81

    def __post_init__(self):
        if min(self.m1, self.m2, self.l, self.g) <= 0.0:
            raise ValueError(f"pendulum parameters must be positive, got {self}")


@dataclass
class QuadraticCost:
    """Tracking cost 0.5*||x - x_ref||_Q^2 + 0.5*||u - u_ref||_R^2 per stage.

    Q and QN must be symmetric positive semidefinite, R symmetric positive
    definite.  References may be a single vector (held constant) or one row
    per stage.
    """

    Q: np.ndarray
    R: np.ndarray
    QN: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.QN = np.atleast_2d(np.asarray(self.QN, dtype=float))
        self.x_ref = np.asarray(self.x_ref, dtype=float)
        self.u_ref = np.asarray(self.u_ref, dtype=float)
        for name, W in (("Q", self.Q), ("R", self.R), ("QN", self.QN)):
            if not np.allclose(W, W.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        # R must be PD for the condensed Hessian to be PD.
        np.linalg.cholesky(self.R)

    def x_ref_at(self, k: int) -> np.ndarray:
        return self.x_ref if self.x_ref.ndim == 1 else self.x_ref[k]

    def u_ref_at(self, k: int) -> np.ndarray:
        return self.u_ref if self.u_ref.ndim == 1 else self.u_ref[k]


@dataclass
class StageBounds:
    """Componentwise box bounds; use +-inf for unconstrained components."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray

    def __post_init__(self):
        self.x_lo = np.asarray(self.x_lo, dtype=float)
        self.x_hi = np.asarray(self.x_hi, dtype=float)
        self.u_lo = np.asarray(self.u_lo, dtype=float)
        self.u_hi = np.asarray(self.u_hi, dtype=float)
        if np.any(self.x_lo > self.x_hi) or np.any(self.u_lo > self.u_hi):
            raise ValueError("lower bounds must not exceed upper bounds")

    @staticmethod
    def unbounded(nx: int, nu: int) -> "StageBounds":
        inf = np.inf
        return StageBounds(-inf * np.ones(nx), inf * np.ones(nx),
                           -inf * np.ones(nu), inf * np.ones(nu))


def pendulum_rhs(x: np.ndarray, u, params: PendulumParams) -> np.ndarray:
    """Cart-pole state derivative [p_dot, theta_dot, p_ddot, theta_ddot]."""
    _, theta, p_dot, theta_dot = x
    f = float(np.asarray(u).reshape(-1)[0])
    s, c = np.sin(theta), np.cos(theta)
    m1, m2, l, g = params.m1, params.m2, params.l, params.g
    den = m2 + m1 - m1 * c * c
    p_dd = (-m1 * l * s * theta_dot ** 2 + m1 * g * c * s + f) / den
    th_dd = (f * c - m1 * l * c * s * theta_dot ** 2 + (m2 + m1) * g * s) / (l * den)
    return np.array([p_dot, theta_dot, p_dd, th_dd])


def pendulum_jacobians(x: np.ndarray, u, params: PendulumParams):
    """Analytic (d f/d x, d f/d u) of the cart-pole dynamics."""
    _, theta, _, theta_dot = x
    f = float(np.asarray(u).reshape(-1)[0])
    s, c = np.sin(theta), np.cos(theta)
    m1, m2, l, g = params.m1, params.m2, params.l, params.g
    den = m2 + m1 - m1 * c * c
    dden = 2.0 * m1 * s * c

    n2 = -m1 * l * s * theta_dot ** 2 + m1 * g * c * s + f
    dn2_dth = -m1 * l * c * theta_dot ** 2 + m1 * g * (c * c - s * s)
    n3 = f * c - m1 * l * c * s * theta_dot ** 2 + (m2 + m1) * g * s
    dn3_dth = -f * s - m1 * l * (c * c - s * s) * theta_dot ** 2 + (m2 + m1) * g * c

    A = np.zeros((4, 4))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2, 1] = (dn2_dth * den - n2 * dden) / den ** 2
    A[2, 3] = -2.0 * m1 * l * s * theta_dot / den
    A[3, 1] = (dn3_dth * den - n3 * dden) / (l * den ** 2)
    A[3, 3] = -2.0 * m1 * c * s * theta_dot / den

    B = np.zeros((4, 1))
    B[2, 0] = 1.0 / den
    B[3, 0] = c / (l * den)
    return A, B


def stage_cost_terms(x_k: np.ndarray, u_k: np.ndarray, cost: QuadraticCost, k: int):
    """Gradient/Hessian blocks of the stage cost at (x_k, u_k).

    Returns (q, r, Q_k, S_k, R_k).  The Hessian is the Gauss-Newton one of
    the quadratic tracking cost, so Q_k = Q, R_k = R, S_k = 0 exactly.
    """
    q = cost.Q @ (x_k - cost.x_ref_at(k))
    r = cost.R @ (u_k - cost.u_ref_at(k))
    S = np.zeros((cost.Q.shape[0], cost.R.shape[0]))
    return q, r, cost.Q.copy(), S, cost.R.copy()


def box_constraint_rows(x_lo, x_hi, x_k, nu: int):
    """Affine rows Cx*dx + Cu*du + c <= 0 encoding finite state box bounds at x_k.

    Upper bound i gives row  e_i*dx + (x_k[i] - hi) <= 0, lower bound i gives
    -e_i*dx + (lo - x_k[i]) <= 0.  Input parts are zero (input boxes are kept
    as simple bounds on the blocked inputs, never as rows).
    """
    nx = len(x_k)
    rows_Cx, rows_Cu, rows_c = [], [], []
    for i in range(nx):
        if np.isfinite(x_hi[i]):
            e = np.zeros(nx)
            e[i] = 1.0
            rows_Cx.append(e)
            rows_Cu.append(np.zeros(nu))
            rows_c.append(x_k[i] - x_hi[i])
        if np.isfinite(x_lo[i]):
            e = np.zeros(nx)
            e[i] = -1.0
            rows_Cx.append(e)
            rows_Cu.append(np.zeros(nu))
            rows_c.append(x_lo[i] - x_k[i])
    if not rows_Cx:
        return np.zeros((0, nx)), np.zeros((0, nu)), np.zeros(0)
    return np.array(rows_Cx), np.array(rows_Cu), np.array(rows_c)


@dataclass
class OcpProblem:
    """Discretized optimal-control problem over N shooting intervals.

    rhs/jac are callables (x, u) -> xdot and (x, u) -> (dfdx, dfdu).
    ``intervals`` carries one integrator configuration per shooting interval
    (nonuniform grids use unequal interval lengths); ``weight_scales``
    multiplies the stage cost of each interval, which is how nonuniform
    grids scale their weights by interval length.
    """

    dims: ProblemDims
    rhs: Callable
    jac: Callable
    cost: QuadraticCost
    bounds: StageBounds
    intervals: Sequence[IntegratorConfig]
    weight_scales: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weight_scales is None:
            self.weight_scales = np.ones(self.N)
        self.weight_scales = np.asarray(self.weight_scales, dtype=float)
        if len(self.weight_scales) != self.N:
            raise ValueError("need one weight scale per shooting interval")

    @property
    def N(self) -> int:
        return len(self.intervals)


def make_pendulum_problem(
    params: PendulumParams,
    cost: QuadraticCost,
    bounds: StageBounds,
    Ts: float,
    N: int,
    interval_lengths: Sequence[int] | None = None,
) -> OcpProblem:
    """Cart-pole OCP on a grid of N intervals.

    With ``interval_lengths`` given (nonuniform grid), interval j spans
    interval_lengths[j] * Ts seconds and is integrated with a single RK4
    step, the fixed per-interval effort of a standard shooting
    discretization; stage weights are scaled by the interval length.
    Coarser intervals therefore carry a coarser discretization, which is
    the accuracy trade nonuniform grids make.
    """
    rhs = lambda x, u: pendulum_rhs(x, u, params)
    jac = lambda x, u: pendulum_jacobians(x, u, params)
    nc = int(np.isfinite(bounds.x_lo).sum() + np.isfinite(bounds.x_hi).sum())
    dims = ProblemDims(nx=4, nu=1, nc=nc, ncN=nc)
    if interval_lengths is None:
        intervals = [IntegratorConfig(h=Ts, n_sub=1) for _ in range(N)]
        scales = np.ones(N)
    else:
        if sum(interval_lengths) != N:
            raise ValueError("interval lengths must sum to the uniform-grid interval count")
        intervals = [IntegratorConfig(h=float(n) * Ts, n_sub=1) for n in interval_lengths]
        scales = np.asarray(interval_lengths, dtype=float)
    return OcpProblem(dims=dims, rhs=rhs, jac=jac, cost=cost, bounds=bounds,
                      intervals=intervals, weight_scales=scales)
