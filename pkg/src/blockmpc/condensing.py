"""State elimination for the blocked stage-wise QP.

Two routes produce the same dense reduced QP in the M*nu blocked input
steps:

* the tailored route works directly on the blocked stage data and costs
  O(N*M) block operations (the fast path used by the controller);
* the naive route condenses the unblocked problem in O(N^2) and then
  folds it with the explicit selection matrix T (kept as a test oracle
  and as the baseline for the complexity benchmark).

``FlopCounter`` instruments the multiply count of either route.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .blocking import BlockStructure, build_T, interval_blocks
from .model import ProblemDims
from .shooting import StageData


class FlopCounter:
    """Accumulates the multiply count of instrumented block operations."""

    def __init__(self):
        self.mults = 0

    def reset(self):
        self.mults = 0


def _mm(counter: FlopCounter | None, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix product with optional multiply counting ((a x b) @ (b x c) = a*b*c mults)."""
    if counter is not None:
        counter.mults += A.shape[0] * A.shape[1] * (B.shape[1] if B.ndim == 2 else 1)
    return A @ B


@dataclass
class SensitivityChain:
    """Ghat[k, j] = d x_{k+1} / d u_hat_j and residual chain L with dx_{k+1} = sum_j Ghat[k,j] du_j + L[k]."""

    Ghat: np.ndarray  # (N, M, nx, nu), zero for k < I[j]
    L: np.ndarray     # (N, nx)


@dataclass
class CondensedQp:
    """Dense reduced QP: min 0.5 z'Hz + g'z s.t. C z + c <= 0, lb <= z <= ub.

    ``row_node`` maps every constraint row back to the shooting node it came
    from (N for terminal rows), so multipliers can be attributed to nodes.
    """

    H: np.ndarray
    g: np.ndarray
    C: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_node: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.row_node is None:
            self.row_node = np.zeros(len(self.c), dtype=int)


def compute_Ghat(sd: StageData, bs: BlockStructure,
                 counter: FlopCounter | None = None) -> np.ndarray:
    """Blocked sensitivity chain by forward recursion, O(N*M) block products.

    Column j starts at row I[j] with B_{I[j]}; inside block j each row adds
    the direct B term, after the block it only propagates through A.
    """
    N, M, I = bs.N, bs.M, bs.I
    nx, nu = sd.nx, sd.nu
    Gh = np.zeros((N, M, nx, nu))
    for i in range(M):
        Gh[I[i], i] = sd.Bs[I[i]]
        for j in range(I[i] + 1, N):
            if j < I[i + 1]:
                Gh[j, i] = _mm(counter, sd.As[j], Gh[j - 1, i]) + sd.Bs[j]
            else:
                Gh[j, i] = _mm(counter, sd.As[j], Gh[j - 1, i])
    return Gh


def compute_L(sd: StageData, bs: BlockStructure, dx0: np.ndarray) -> np.ndarray:
    """Residual chain: L[0] = A_0 dx0 + d_0, L[k] = A_k L[k-1] + d_k."""
    N = bs.N
    L = np.zeros((N, sd.nx))
    L[0] = sd.As[0] @ dx0 + sd.ds[0]
    for k in range(1, N):
        L[k] = sd.As[k] @ L[k - 1] + sd.ds[k]
    return L


def compute_Hhat(sd: StageData, bs: BlockStructure, Ghat: np.ndarray,
                 counter: FlopCounter | None = None) -> np.ndarray:
    """Reduced Hessian in O(N*M) block products.

    Per column block i a backward sweep W_k = Q_k Ghat[k-1,i] + A_k' W_{k+1}
    collects the curvature behind stage k; the row accumulation then sums
    stage rows into their blocks and adds the summed R of each block to the
    diagonal.  The sweep fills row blocks k >= I[i] only; the upper block
    triangle is completed by symmetry (exact for the Gauss-Newton data this
    package produces, where the cross-term S is zero).
    """
    N, M, I = bs.N, bs.M, bs.I
    nx, nu = sd.nx, sd.nu
    Htmp = np.zeros((N, M, nu, nu))
    for i in range(M):
        W = _mm(counter, sd.QN, Ghat[N - 1, i])
        for k in range(N - 1, I[i], -1):
            Htmp[k, i] = _mm(counter, sd.Ss[k].T, Ghat[k - 1, i]) + _mm(counter, sd.Bs[k].T, W)
            W = _mm(counter, sd.Qs[k], Ghat[k - 1, i]) + _mm(counter, sd.As[k].T, W)
        Htmp[I[i], i] = _mm(counter, sd.Bs[I[i]].T, W)

    Hh = np.zeros((M * nu, M * nu))
    kblk = 0
    Rtmp = np.zeros((nu, nu))
    for i in range(N):
        Hh[kblk * nu:(kblk + 1) * nu, :] += np.transpose(Htmp[i], (1, 0, 2)).reshape(nu, M * nu)
        Rtmp = Rtmp + sd.Rs[i]
        if i + 1 == I[kblk + 1]:
            Hh[kblk * nu:(kblk + 1) * nu, kblk * nu:(kblk + 1) * nu] += Rtmp
            kblk += 1
            Rtmp = np.zeros((nu, nu))

    for b in range(M):
        for j in range(b + 1, M):
            Hh[b * nu:(b + 1) * nu, j * nu:(j + 1) * nu] = \
                Hh[j * nu:(j + 1) * nu, b * nu:(b + 1) * nu].T
    return Hh


def compute_ghat(sd: StageData, bs: BlockStructure, Ghat: np.ndarray,
                 L: np.ndarray, counter: FlopCounter | None = None) -> np.ndarray:
    """Reduced gradient by one backward sweep, mirroring the Hessian recursion.

    w_k = q_k + Q_k L[k-1] + A_k' w_{k+1} carries the state gradient behind
    stage k evaluated at the zero input step; stage k then contributes
    r_k + S_k' L[k-1] + B_k' w_{k+1} to its block.
    """
    N, M = bs.N, bs.M
    nu = sd.nu
    if Ghat.shape[:2] != (N, M):
        raise ValueError("Ghat inconsistent with block structure")
    blocks = interval_blocks(bs)
    g = np.zeros((M, nu))
    w = sd.qN + _mm(counter, sd.QN, L[N - 1])
    for k in range(N - 1, 0, -1):
        g[blocks[k]] += sd.rs[k] + _mm(counter, sd.Ss[k].T, L[k - 1]) + _mm(counter, sd.Bs[k].T, w)
        w = sd.qs[k] + _mm(counter, sd.Qs[k], L[k - 1]) + _mm(counter, sd.As[k].T, w)
    g[0] += sd.rs[0] + sd.Ss[0].T @ sd.dx0 + _mm(counter, sd.Bs[0].T, w)
    return g.reshape(M * nu)


def condense_constraints(sd: StageData, bs: BlockStructure, Ghat: np.ndarray,
                         L: np.ndarray, dx0: np.ndarray,
                         counter: FlopCounter | None = None):
    """Condense affine rows and fold input boxes into simple bounds.

    A row at node k >= 1 becomes Cx_k Ghat[k-1, :] plus its direct input part
    in column block_of(k), with constant shifted by Cx_k L[k-1]; node-0 rows
    see only dx0 and the direct input part.  Returns (C, c, lb, ub, row_node).
    """
    N, M = bs.N, bs.M
    nu = sd.nu
    blocks = interval_blocks(bs)
    rows, consts, row_node = [], [], []
    for k in range(N):
        Cx, Cu, c = sd.Cxs[k], sd.Cus[k], sd.cs[k]
        nr = Cx.shape[0]
        if nr == 0:
            continue
        row = np.zeros((nr, M * nu))
        if k == 0:
            const = c + Cx @ dx0
        else:
            for j in range(M):
                if bs.I[j] < k:
                    row[:, j * nu:(j + 1) * nu] = _mm(counter, Cx, Ghat[k - 1, j])
            const = c + _mm(counter, Cx, L[k - 1])
        jk = blocks[k]
        row[:, jk * nu:(jk + 1) * nu] += Cu
        rows.append(row)
        consts.append(const)
        row_node.extend([k] * nr)
    if sd.CN.shape[0] > 0:
        row = np.zeros((sd.CN.shape[0], M * nu))
        for j in range(M):
            row[:, j * nu:(j + 1) * nu] = _mm(counter, sd.CN, Ghat[N - 1, j])
        rows.append(row)
        consts.append(sd.cN + _mm(counter, sd.CN, L[N - 1]))
        row_node.extend([N] * sd.CN.shape[0])

    if rows:
        C = np.vstack(rows)
        c = np.concatenate(consts)
    else:
        C = np.zeros((0, M * nu))
        c = np.zeros(0)
    lb = sd.du_lo.reshape(M * nu).copy()
    ub = sd.du_hi.reshape(M * nu).copy()
    return C, c, lb, ub, np.asarray(row_node, dtype=int)


def condense(sd: StageData, bs: BlockStructure,
             counter: FlopCounter | None = None):
    """Tailored pipeline: stage data -> (CondensedQp, SensitivityChain)."""
    Ghat = compute_Ghat(sd, bs, counter)
    L = compute_L(sd, bs, sd.dx0)
    H = compute_Hhat(sd, bs, Ghat, counter)
    g = compute_ghat(sd, bs, Ghat, L, counter)
    C, c, lb, ub, row_node = condense_constraints(sd, bs, Ghat, L, sd.dx0, counter)
    return CondensedQp(H=H, g=g, C=C, c=c, lb=lb, ub=ub, row_node=row_node), \
        SensitivityChain(Ghat=Ghat, L=L)


def expand(Ghat: np.ndarray, L: np.ndarray, dx0: np.ndarray,
           du: np.ndarray) -> np.ndarray:
    """Recover the state steps from the blocked input step.

    Returns dxs with dxs[0] = dx0 and dxs[k+1] = sum_j Ghat[k,j] du_j + L[k];
    the result satisfies the stage recursion of the blocked QP exactly.
    """
    N, M, nx, nu = Ghat.shape
    du = np.asarray(du, dtype=float).reshape(M, nu)
    dxs = np.zeros((N + 1, nx))
    dxs[0] = dx0
    dxs[1:] = np.einsum("kjxy,jy->kx", Ghat, du) + L
    return dxs


def flop_count(dims: ProblemDims, bs: BlockStructure) -> int:
    """Leading-order multiply count of the reduced-Hessian recursion.

    Returns N*M*(nx^2*nu + nx*nu^2); the implementation executes roughly
    twice this (two products per sweep step), so instrumented counts land
    within a small constant factor of the prediction.
    """
    return bs.N * bs.M * (dims.nx ** 2 * dims.nu + dims.nx * dims.nu ** 2)


# --- naive explicit-T pipeline (oracle / baseline) -------------------------

def _full_G(sd: StageData, counter: FlopCounter | None = None) -> np.ndarray:
    """Unblocked sensitivity grid G[k, j] = d x_{k+1} / d u_j, O(N^2) blocks."""
    N, nx, nu = sd.N, sd.nx, sd.nu
    G = np.zeros((N, N, nx, nu))
    for j in range(N):
        G[j, j] = sd.Bs[j]
        for k in range(j + 1, N):
            G[k, j] = _mm(counter, sd.As[k], G[k - 1, j])
    return G


def _full_condense(sd: StageData, counter: FlopCounter | None = None):
    """Classical condensing of the unblocked problem (before any blocking).

    Returns (G, L, H_c, g_c, C_c, c_c, row_node) with H_c/g_c/C_c over the
    N*nu unblocked inputs.
    """
    N, nx, nu = sd.N, sd.nx, sd.nu
    G = _full_G(sd, counter)
    L = compute_L(sd, BlockStructure(N=N, M=N, I=tuple(range(N + 1))), sd.dx0)

    Hc = np.zeros((N * nu, N * nu))
    for j in range(N):
        W = _mm(counter, sd.QN, G[N - 1, j])
        for k in range(N - 1, j, -1):
            Hc[k * nu:(k + 1) * nu, j * nu:(j + 1) * nu] = \
                _mm(counter, sd.Ss[k].T, G[k - 1, j]) + _mm(counter, sd.Bs[k].T, W)
            W = _mm(counter, sd.Qs[k], G[k - 1, j]) + _mm(counter, sd.As[k].T, W)
        Hc[j * nu:(j + 1) * nu, j * nu:(j + 1) * nu] = sd.Rs[j] + _mm(counter, sd.Bs[j].T, W)
    for j in range(N):
        for k in range(j + 1, N):
            Hc[j * nu:(j + 1) * nu, k * nu:(k + 1) * nu] = \
                Hc[k * nu:(k + 1) * nu, j * nu:(j + 1) * nu].T

    gc = np.zeros((N, nu))
    w = sd.qN + _mm(counter, sd.QN, L[N - 1])
    for k in range(N - 1, 0, -1):
        gc[k] = sd.rs[k] + _mm(counter, sd.Ss[k].T, L[k - 1]) + _mm(counter, sd.Bs[k].T, w)
        w = sd.qs[k] + _mm(counter, sd.Qs[k], L[k - 1]) + _mm(counter, sd.As[k].T, w)
    gc[0] = sd.rs[0] + sd.Ss[0].T @ sd.dx0 + _mm(counter, sd.Bs[0].T, w)

    rows, consts, row_node = [], [], []
    for k in range(N):
        Cx, Cu, c = sd.Cxs[k], sd.Cus[k], sd.cs[k]
        nr = Cx.shape[0]
        if nr == 0:
            continue
        row = np.zeros((nr, N * nu))
        if k == 0:
            const = c + Cx @ sd.dx0
        else:
            for j in range(k):
                row[:, j * nu:(j + 1) * nu] = _mm(counter, Cx, G[k - 1, j])
            const = c + _mm(counter, Cx, L[k - 1])
        row[:, k * nu:(k + 1) * nu] += Cu
        rows.append(row)
        consts.append(const)
        row_node.extend([k] * nr)
    if sd.CN.shape[0] > 0:
        row = np.zeros((sd.CN.shape[0], N * nu))
        for j in range(N):
            row[:, j * nu:(j + 1) * nu] = _mm(counter, sd.CN, G[N - 1, j])
        rows.append(row)
        consts.append(sd.cN + _mm(counter, sd.CN, L[N - 1]))
        row_node.extend([N] * sd.CN.shape[0])
    Cc = np.vstack(rows) if rows else np.zeros((0, N * nu))
    cc = np.concatenate(consts) if consts else np.zeros(0)
    return G, L, Hc, gc.reshape(N * nu), Cc, cc, np.asarray(row_node, dtype=int)


def naive_condense(sd: StageData, bs: BlockStructure,
                   counter: FlopCounter | None = None) -> CondensedQp:
    """Baseline route: condense unblocked, then fold with the explicit T.

    Semantically identical to :func:`condense`; kept as the oracle for the
    tailored pipeline and as the O(N^2) baseline of the benchmark.
    """
    _, L, Hc, gc, Cc, cc, row_node = _full_condense(sd, counter)
    T = build_T(bs, sd.nu)
    HcT = _mm(counter, Hc, T)
    Hh = _mm(counter, T.T, HcT)
    gh = _mm(counter, T.T, gc.reshape(-1, 1)).ravel()
    Ch = _mm(counter, Cc, T) if Cc.shape[0] else np.zeros((0, bs.M * sd.nu))
    Hh = 0.5 * (Hh + Hh.T)
    lb = sd.du_lo.reshape(bs.M * sd.nu).copy()
    ub = sd.du_hi.reshape(bs.M * sd.nu).copy()
    return CondensedQp(H=Hh, g=gh, C=Ch, c=cc.copy(), lb=lb, ub=ub, row_node=row_node)


# --- text dump of a condensed QP (offline oracle comparison) ----------------

def write_matrix(path: str, mat: np.ndarray) -> None:
    """One matrix per file: 'rows cols' header, then whitespace-separated rows."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path: str) -> np.ndarray:
    with open(path) as fh:
        rows, cols = map(int, fh.readline().split())
        mat = np.array([[float(v) for v in fh.readline().split()] for _ in range(rows)])
    return mat.reshape(rows, cols)


def dump_condensed_qp(qp: CondensedQp, out_dir: str) -> None:
    """Write H, g, C, c, lb, ub of a condensed QP as text matrices in out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    for name, mat in (("H", qp.H), ("g", qp.g), ("C", qp.C), ("c", qp.c),
                      ("lb", qp.lb), ("ub", qp.ub)):
        write_matrix(os.path.join(out_dir, f"{name}.txt"), mat)
