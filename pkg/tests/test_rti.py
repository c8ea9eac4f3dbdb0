import numpy as np
import pytest

from blockmpc.blocking import build_T, from_block_lengths, interval_blocks, unit_blocks
from blockmpc.condensing import expand, naive_condense
from blockmpc.harness import synthetic_stage_data
from blockmpc.integrator import IntegratorConfig
from blockmpc.model import (
    OcpProblem,
    PendulumParams,
    ProblemDims,
    QuadraticCost,
    StageBounds,
    make_pendulum_problem,
)
from blockmpc.qp_solver import DenseQp, QpSolution, WorkingSet, solve_qp
from blockmpc.rti import RtiController, kkt_residual, stationarity_blocks
from blockmpc.shooting import Trajectory, evaluate
from oracles import riccati_first_gain, rk4_linear_closed_form


def linear_problem(rng, nx=3, nu=2, N=12, Ts=0.1):
    Ac = rng.standard_normal((nx, nx)) * 0.4
    Bc = rng.standard_normal((nx, nu))
    Q = np.diag(rng.uniform(0.5, 3.0, nx))
    R = np.diag(rng.uniform(0.2, 1.0, nu))
    QN = np.diag(rng.uniform(0.5, 3.0, nx))
    cost = QuadraticCost(Q=Q, R=R, QN=QN, x_ref=np.zeros(nx), u_ref=np.zeros(nu))
    prob = OcpProblem(dims=ProblemDims(nx, nu), rhs=lambda x, u: Ac @ x + Bc @ u,
                      jac=lambda x, u: (Ac, Bc), cost=cost,
                      bounds=StageBounds.unbounded(nx, nu),
                      intervals=[IntegratorConfig(h=Ts) for _ in range(N)])
    return prob, Ac, Bc, Q, R, QN, Ts, N


def pendulum_controller(N=20, lengths=None, Ts=0.025):
    params = PendulumParams()
    cost = QuadraticCost(Q=np.diag([10.0, 10.0, 0.1, 0.1]), R=np.diag([0.01]),
                         QN=np.diag([10.0, 10.0, 0.1, 0.1]),
                         x_ref=np.zeros(4), u_ref=np.zeros(1))
    bounds = StageBounds(x_lo=np.array([-2.0, -np.inf, -np.inf, -np.inf]),
                         x_hi=np.array([2.0, np.inf, np.inf, np.inf]),
                         u_lo=np.array([-20.0]), u_hi=np.array([20.0]))
    prob = make_pendulum_problem(params, cost, bounds, Ts, N)
    bs = unit_blocks(N) if lengths is None else from_block_lengths(lengths)
    return RtiController(prob, bs)


def test_rti_step_matches_riccati_lqr():
    rng = np.random.default_rng(31)
    prob, Ac, Bc, Q, R, QN, Ts, N = linear_problem(rng)
    ctrl = RtiController(prob, unit_blocks(N))
    Ad, Bd = rk4_linear_closed_form(Ac, Bc, Ts)
    K = riccati_first_gain(Ad, Bd, Q, R, QN, N)
    x0 = rng.standard_normal(3)
    state = ctrl.initial_state(np.zeros(3))
    u, _ = ctrl.feedback(state, ctrl.prepare(state, x0), x0)
    assert np.abs(u - (-K @ x0)).max() < 1e-8


def test_zero_gradient_point_is_fixed():
    ctrl = pendulum_controller(N=10)
    x_eq = np.zeros(4)
    state = ctrl.initial_state(x_eq)
    u, new_state = ctrl.feedback(state, ctrl.prepare(state, x_eq), x_eq)
    assert np.abs(u).max() < 1e-12
    assert np.abs(new_state.traj.us).max() < 1e-12
    assert new_state.last_kkt.total < 1e-10


def test_full_step_policy():
    # post-update trajectory equals pre-update plus expansion output exactly
    ctrl = pendulum_controller(N=12, lengths=[2, 4, 6])
    x0 = np.array([0.0, 3.0, 0.0, 0.0])
    state = ctrl.initial_state(x0)
    xhat = np.array([0.05, 2.9, 0.1, 0.0])
    prep = ctrl.prepare(state, xhat)
    dense = DenseQp(H=prep.qp.H, g=prep.qp.g, Crows=prep.qp.C, cvec=prep.qp.c,
                    lb=prep.qp.lb, ub=prep.qp.ub)
    sol = solve_qp(dense)
    dxs = expand(prep.chain.Ghat, prep.chain.L, prep.sd.dx0, sol.z)
    u, new_state = ctrl.feedback(state, prep, xhat)
    assert np.allclose(new_state.traj.xs, state.traj.xs + dxs)
    assert np.allclose(new_state.traj.us, state.traj.us + sol.z.reshape(3, 1))
    assert np.allclose(u, new_state.traj.us[0])


def test_blocked_step_shares_input_in_expansion():
    # single integrator, lengths [2]: the one blocked step moves both intervals
    rhs = lambda x, u: np.atleast_1d(u)
    jac = lambda x, u: (np.zeros((1, 1)), np.eye(1))
    cost = QuadraticCost(Q=np.eye(1), R=0.1 * np.eye(1), QN=np.eye(1),
                         x_ref=np.ones(1), u_ref=np.zeros(1))
    prob = OcpProblem(dims=ProblemDims(1, 1), rhs=rhs, jac=jac, cost=cost,
                      bounds=StageBounds.unbounded(1, 1),
                      intervals=[IntegratorConfig(h=1.0)] * 2)
    ctrl = RtiController(prob, from_block_lengths([2]))
    state = ctrl.initial_state(np.zeros(1))
    prep = ctrl.prepare(state, np.zeros(1))
    u, new_state = ctrl.feedback(state, prep, np.zeros(1))
    du = float(new_state.traj.us[0, 0])
    assert abs(du) > 1e-3
    assert new_state.traj.xs[1, 0] == pytest.approx(du, abs=1e-12)
    assert new_state.traj.xs[2, 0] == pytest.approx(2 * du, abs=1e-12)


def test_timings_positive_and_bounded_by_total():
    ctrl = pendulum_controller(N=15, lengths=[5, 5, 5])
    x0 = np.array([0.0, 3.0, 0.0, 0.0])
    state = ctrl.initial_state(x0)
    _, new_state = ctrl.feedback(state, ctrl.prepare(state, x0), x0)
    tm = new_state.timings
    assert tm["shooting"] > 0 and tm["condensing"] > 0 and tm["qp"] > 0
    assert tm["shooting"] + tm["condensing"] + tm["qp"] <= tm["total"]


def test_unit_block_loop_matches_naive_reference():
    """Tailored controller vs an independent loop driven by naive condensing."""
    ctrl = pendulum_controller(N=20)
    prob, bs = ctrl.problem, ctrl.bs
    Ts = 0.025
    x0 = np.array([0.0, 0.4, 0.0, 0.0])

    def plant(x, u):
        h = Ts / 10
        for _ in range(10):
            k1 = prob.rhs(x, u)
            k2 = prob.rhs(x + 0.5 * h * k1, u)
            k3 = prob.rhs(x + 0.5 * h * k2, u)
            k4 = prob.rhs(x + h * k3, u)
            x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return x

    # tailored loop
    state = ctrl.initial_state(x0)
    x = x0.copy()
    us_tailored, xs_tailored = [], []
    for _ in range(50):
        u, state = ctrl.step(state, x)
        us_tailored.append(float(u[0]))
        x = plant(x, u)
        xs_tailored.append(x.copy())

    # reference loop: same update rules, naive condensing + fresh QP solves
    from blockmpc.shooting import forward_simulate
    traj = forward_simulate(prob, bs, x0, np.zeros((20, 1)))
    x = x0.copy()
    us_ref, xs_ref = [], []
    for _ in range(50):
        sd = evaluate(prob, bs, traj, x)
        qp = naive_condense(sd, bs)
        sol = solve_qp(DenseQp(H=qp.H, g=qp.g, Crows=qp.C, cvec=qp.c,
                               lb=qp.lb, ub=qp.ub))
        from blockmpc.condensing import compute_Ghat, compute_L
        Gh = compute_Ghat(sd, bs)
        L = compute_L(sd, bs, sd.dx0)
        dxs = expand(Gh, L, sd.dx0, sol.z)
        traj = Trajectory(xs=traj.xs + dxs, us=traj.us + sol.z.reshape(20, 1))
        u = traj.us[0].copy()
        us_ref.append(float(u[0]))
        x = plant(x, u)
        xs_ref.append(x.copy())

    assert np.abs(np.array(us_tailored) - np.array(us_ref)).max() < 1e-9
    assert np.abs(np.array(xs_tailored) - np.array(xs_ref)).max() < 1e-9


def test_kkt_zero_at_lq_optimum():
    rng = np.random.default_rng(32)
    prob, *_ , Ts, N = linear_problem(rng)
    ctrl = RtiController(prob, unit_blocks(N))
    x0 = rng.standard_normal(3)
    state = ctrl.initial_state(np.zeros(3))
    _, new_state = ctrl.feedback(state, ctrl.prepare(state, x0), x0)
    # linear dynamics: one full Newton step reaches the NLP optimum exactly
    assert new_state.last_kkt.total < 1e-8


def test_kkt_consistency_zero_step_zero_residuals():
    rng = np.random.default_rng(33)
    bs = from_block_lengths([2, 3])
    sd = synthetic_stage_data(rng, 5, 3, 1, M=2, nc=0, ncN=0)
    sd.ds[:] = 0.0
    sd.dx0[:] = 0.0
    sd.qs[:] = 0.0
    sd.rs[:] = 0.0
    sd.qN[:] = 0.0
    report = kkt_residual(sd, bs, np.zeros((6, 3)), np.zeros(2), None,
                          np.zeros(0, dtype=int))
    assert report.total == 0.0


def test_kkt_stationarity_is_T_transpose_of_unblocked():
    rng = np.random.default_rng(34)
    lengths = [2, 1, 3]
    bs = from_block_lengths(lengths)
    N, nx, nu = 6, 3, 2
    sd = synthetic_stage_data(rng, N, nx, nu, M=3, nc=2, ncN=1)
    dxs = rng.standard_normal((N + 1, nx))
    du = rng.standard_normal((3, nu))
    mu = [rng.uniform(0, 1, sd.Cxs[k].shape[0]) for k in range(N)] + \
         [rng.uniform(0, 1, sd.CN.shape[0])]
    blocks = interval_blocks(bs)

    got = stationarity_blocks(sd, bs, dxs, du, mu, np.zeros(3 * nu), np.zeros(3 * nu))

    # unblocked stationarity components via independent costate recursion
    lam = sd.qN + sd.QN @ dxs[N] + sd.CN.T @ mu[N]
    per_stage = np.zeros((N, nu))
    for k in range(N - 1, -1, -1):
        uk = du[blocks[k]]
        per_stage[k] = (sd.rs[k] + sd.Rs[k] @ uk + sd.Ss[k].T @ dxs[k]
                        + sd.Bs[k].T @ lam + sd.Cus[k].T @ mu[k])
        lam = (sd.qs[k] + sd.Qs[k] @ dxs[k] + sd.Ss[k] @ uk
               + sd.As[k].T @ lam + sd.Cxs[k].T @ mu[k])
    T = build_T(bs, nu)
    folded = (T.T @ per_stage.reshape(N * nu)).reshape(3, nu)
    assert np.abs(got - folded).max() < 1e-12 * max(1.0, np.abs(folded).max())


def test_kkt_ineq_violation_reports_exact_epsilon():
    rng = np.random.default_rng(35)
    bs = unit_blocks(3)
    sd = synthetic_stage_data(rng, 3, 2, 1, M=3, nc=0, ncN=0)
    eps = 0.017
    sd.Cxs[1] = np.array([[1.0, 0.0]])
    sd.Cus[1] = np.zeros((1, 1))
    sd.cs[1] = np.array([-1.0])
    dxs = np.zeros((4, 2))
    dxs[1, 0] = 1.0 + eps  # row value = dxs + c = eps > 0
    report = kkt_residual(sd, bs, dxs, np.zeros(3), None, np.array([1]))
    assert report.ineq_violation == pytest.approx(eps, abs=1e-15)


def test_advance_fixed_point_and_shift():
    ctrl = pendulum_controller(N=6)
    state = ctrl.initial_state(np.zeros(4))
    adv = ctrl.advance(state)
    assert np.allclose(adv.traj.xs, state.traj.xs)
    assert np.allclose(adv.traj.us, state.traj.us)

    prob = ctrl.problem
    shifting = RtiController(prob, unit_blocks(6), shift_inputs=True)
    traj = Trajectory(xs=np.arange(28, dtype=float).reshape(7, 4),
                      us=np.arange(6, dtype=float).reshape(6, 1))
    from blockmpc.rti import RtiState
    shifted = shifting.advance(RtiState(traj=traj))
    assert np.allclose(shifted.traj.us.ravel(), [1, 2, 3, 4, 5, 5])
    assert np.allclose(shifted.traj.xs[0], traj.xs[1])
    assert np.allclose(shifted.traj.xs[-1], traj.xs[-1])  # last state repeated


def test_shift_requires_unit_blocks():
    params = PendulumParams()
    cost = QuadraticCost(Q=np.eye(4), R=np.eye(1), QN=np.eye(4),
                         x_ref=np.zeros(4), u_ref=np.zeros(1))
    prob = make_pendulum_problem(params, cost, StageBounds.unbounded(4, 1), 0.025, 4)
    with pytest.raises(ValueError):
        RtiController(prob, from_block_lengths([2, 2]), shift_inputs=True)


def test_warm_start_single_iteration_at_steady_state():
    ctrl = pendulum_controller(N=10)
    x_eq = np.zeros(4)
    state = ctrl.initial_state(x_eq)
    _, state = ctrl.feedback(state, ctrl.prepare(state, x_eq), x_eq)
    state = ctrl.advance(state)
    _, state2 = ctrl.feedback(state, ctrl.prepare(state, x_eq), x_eq)
    assert state2.qp_iterations <= 1
