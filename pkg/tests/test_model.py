import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockmpc.model import (
    PendulumParams,
    ProblemDims,
    QuadraticCost,
    StageBounds,
    box_constraint_rows,
    pendulum_jacobians,
    pendulum_rhs,
    stage_cost_terms,
)
from oracles import fd_input_jacobian, fd_state_jacobian

PARAMS = PendulumParams(m1=0.1, m2=1.0, l=0.8, g=9.81)


def test_upright_equilibrium():
    assert np.allclose(pendulum_rhs(np.zeros(4), 0.0, PARAMS), np.zeros(4))


def test_downward_equilibrium():
    # sin(pi) is ~1.2e-16 in floats, so the residual is bounded by ~g*eps
    x = np.array([0.0, np.pi, 0.0, 0.0])
    assert np.allclose(pendulum_rhs(x, 0.0, PARAMS), np.zeros(4), atol=1e-14)


def test_horizontal_pole_acceleration():
    # at theta = pi/2 the angular acceleration reduces to g/l
    x = np.array([0.0, np.pi / 2, 0.0, 0.0])
    f = pendulum_rhs(x, 0.0, PARAMS)
    assert abs(f[0]) < 1e-15 and abs(f[1]) < 1e-15
    assert abs(f[2]) < 1e-15
    assert f[3] == pytest.approx(PARAMS.g / PARAMS.l, abs=1e-12)
    assert f[3] == pytest.approx(12.2625, abs=1e-10)


def test_input_jacobian_velocity_rows_zero():
    A, B = pendulum_jacobians(np.array([0.0, np.pi, 0.0, 0.0]), 0.0, PARAMS)
    assert B[0, 0] == 0.0 and B[1, 0] == 0.0


def test_input_jacobian_theta_row_at_horizontal():
    _, B = pendulum_jacobians(np.array([0.0, np.pi / 2, 0.0, 0.0]), 0.0, PARAMS)
    assert B[3, 0] == pytest.approx(0.0, abs=1e-15)


def test_jacobians_match_finite_differences():
    rng = np.random.default_rng(1)
    f = lambda x, u: pendulum_rhs(x, u, PARAMS)
    for _ in range(100):
        x = rng.uniform(-5, 5, size=4)
        u = rng.uniform(-20, 20)
        A, B = pendulum_jacobians(x, u, PARAMS)
        A_fd = fd_state_jacobian(f, x, u)
        B_fd = fd_input_jacobian(f, x, np.array([u]))
        assert np.abs(A - A_fd).max() < 1e-6 * max(1.0, np.abs(A).max())
        assert np.abs(B - B_fd).max() < 1e-6 * max(1.0, np.abs(B).max())


@settings(max_examples=100, deadline=None)
@given(p=st.floats(-5, 5), th=st.floats(-10, 10), pd=st.floats(-5, 5),
       thd=st.floats(-5, 5), u=st.floats(-20, 20))
def test_rhs_periodic_in_theta(p, th, pd, thd, u):
    x = np.array([p, th, pd, thd])
    shifted = x + np.array([0.0, 2 * np.pi, 0.0, 0.0])
    assert np.allclose(pendulum_rhs(x, u, PARAMS), pendulum_rhs(shifted, u, PARAMS),
                       atol=1e-12)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        PendulumParams(m1=-0.1)
    with pytest.raises(ValueError):
        PendulumParams(l=0.0)


def test_dims_validation():
    with pytest.raises(ValueError):
        ProblemDims(nx=0, nu=1)
    d = ProblemDims(nx=4, nu=1, nc=2, ncN=2)
    assert d.nx == 4


def _cost():
    return QuadraticCost(Q=np.diag([10.0, 10.0, 0.1, 0.1]), R=np.diag([0.01]),
                         QN=np.diag([10.0, 10.0, 0.1, 0.1]),
                         x_ref=np.zeros(4), u_ref=np.zeros(1))


def test_stage_cost_zero_at_reference():
    cost = _cost()
    q, r, Qk, Sk, Rk = stage_cost_terms(np.zeros(4), np.zeros(1), cost, 0)
    assert np.allclose(q, 0) and np.allclose(r, 0)
    assert np.allclose(Sk, 0)


def test_stage_cost_identity_weight():
    cost = QuadraticCost(Q=np.eye(4), R=np.eye(1), QN=np.eye(4),
                         x_ref=np.zeros(4), u_ref=np.zeros(1))
    q, _, _, _, _ = stage_cost_terms(np.array([1.0, 0, 0, 0]), np.zeros(1), cost, 0)
    assert np.allclose(q, [1, 0, 0, 0])


def test_stage_cost_gradient_matches_numeric():
    cost = _cost()
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4)
    u = rng.standard_normal(1)
    q, r, Qk, Sk, Rk = stage_cost_terms(x, u, cost, 0)
    # numeric gradient of 0.5||x - xref||_Q^2 + 0.5||u - uref||_R^2
    eps = 1e-7

    def J(xv, uv):
        return 0.5 * (xv @ cost.Q @ xv) + 0.5 * (uv @ cost.R @ uv)

    for i in range(4):
        e = np.zeros(4)
        e[i] = eps
        num = (J(x + e, u) - J(x - e, u)) / (2 * eps)
        assert num == pytest.approx(q[i], rel=1e-6, abs=1e-8)
    assert np.allclose(Qk, Qk.T) and np.allclose(Rk, Rk.T)
    np.linalg.cholesky(Rk)


def test_cost_requires_spd_R():
    with pytest.raises(np.linalg.LinAlgError):
        QuadraticCost(Q=np.eye(2), R=np.array([[0.0]]), QN=np.eye(2),
                      x_ref=np.zeros(2), u_ref=np.zeros(1))


def test_box_rows_encode_current_point():
    x_lo = np.array([-2.0, -np.inf])
    x_hi = np.array([2.0, np.inf])
    Cx, Cu, c = box_constraint_rows(x_lo, x_hi, np.array([0.5, 3.0]), nu=1)
    # one upper and one lower row for the bounded component only
    assert Cx.shape == (2, 2) and Cu.shape == (2, 1)
    val = Cx @ np.zeros(2) + c
    assert val[0] == pytest.approx(0.5 - 2.0)
    assert val[1] == pytest.approx(-2.0 - 0.5)


def test_bounds_validation():
    with pytest.raises(ValueError):
        StageBounds(x_lo=np.array([1.0]), x_hi=np.array([0.0]),
                    u_lo=np.zeros(1), u_hi=np.ones(1))
