"""Fixed-step RK4 integration with exact forward sensitivities.

Sensitivities are the Jacobians of the discrete RK4 map itself (chain rule
through the four stages), not of the exact flow, so they are consistent
with the states the shooting step actually produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IntegrationDivergedError(RuntimeError):
    """Integration produced a non-finite state; ``node`` is the shooting node if known."""

    def __init__(self, message: str = "integration diverged", node: int | None = None):
        super().__init__(message if node is None else f"{message} at shooting node {node}")
        self.node = node


@dataclass(frozen=True)
class IntegratorConfig:
    """n_sub RK4 sub-steps of length h; the interval spans h * n_sub seconds."""

    h: float
    n_sub: int = 1

    def __post_init__(self):
        if self.h <= 0.0 or self.n_sub < 1:
            raise ValueError(f"invalid integrator config {self}")

    @property
    def length(self) -> float:
        return self.h * self.n_sub


def rk4_step(rhs, jac, x: np.ndarray, u: np.ndarray, h: float):
    """One classical RK4 step with input held constant.

    Returns (x_next, A_step, B_step) where A_step = d x_next/d x and
    B_step = d x_next/d u are obtained by differentiating all four stages.
    """
    nx = len(x)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nu = len(u)
    I = np.eye(nx)

    k1 = rhs(x, u)
    J1x, J1u = jac(x, u)
    x2 = x + 0.5 * h * k1
    k2 = rhs(x2, u)
    J2x_loc, J2u_loc = jac(x2, u)
    k2x = J2x_loc @ (I + 0.5 * h * J1x)
    k2u = J2x_loc @ (0.5 * h * J1u) + J2u_loc

    x3 = x + 0.5 * h * k2
    k3 = rhs(x3, u)
    J3x_loc, J3u_loc = jac(x3, u)
    k3x = J3x_loc @ (I + 0.5 * h * k2x)
    k3u = J3x_loc @ (0.5 * h * k2u) + J3u_loc

    x4 = x + h * k3
    k4 = rhs(x4, u)
    J4x_loc, J4u_loc = jac(x4, u)
    k4x = J4x_loc @ (I + h * k3x)
    k4u = J4x_loc @ (h * k3u) + J4u_loc

    x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    A_step = I + (h / 6.0) * (J1x + 2.0 * k2x + 2.0 * k3x + k4x)
    B_step = (h / 6.0) * (J1u.reshape(nx, nu) + 2.0 * k2u.reshape(nx, nu)
                          + 2.0 * k3u.reshape(nx, nu) + k4u.reshape(nx, nu))

    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(A_step))
            and np.all(np.isfinite(B_step))):
        raise IntegrationDivergedError()
    return x_next, A_step, B_step


def integrate_interval(cfg: IntegratorConfig, rhs, jac, x: np.ndarray, u: np.ndarray):
    """Integrate one shooting interval: n_sub RK4 steps with the same held input.

    Sensitivities accumulate by the chain rule: A = A_step @ A,
    B = A_step @ B + B_step.
    """
    x_end = np.asarray(x, dtype=float)
    nx = len(x_end)
    nu = len(np.atleast_1d(u))
    A = np.eye(nx)
    B = np.zeros((nx, nu))
    for _ in range(cfg.n_sub):
        x_end, A_step, B_step = rk4_step(rhs, jac, x_end, u, cfg.h)
        A = A_step @ A
        B = A_step @ B + B_step
    return x_end, A, B
