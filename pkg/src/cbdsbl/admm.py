"""Bridge-node consensus ADMM for the decentralized M-step.

The M-step surrogate ``sum_j ||gamma_j - a_j||^2`` is minimized subject to
``gamma_j = gamma_b`` for every node ``j`` and bridge ``b`` in ``B_j``.  The
per-node kernels :func:`node_update`, :func:`bridge_average` and
:func:`dual_update` are the only arithmetic used, both here and in the
network simulator, so the two paths agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .graph import NetworkTopology, build_constraints

#: strong convexity and gradient Lipschitz constants of the M-step surrogate
M_F = 2.0


# ---------------------------------------------------------------- kernels

def node_update(a_j, gamma_b_rows, lam_rows, rho):
    """``(2 a_j + sum_b (rho gamma_b - lambda_j^b)) / (2 + rho |B_j|)``.

    ``gamma_b_rows`` and ``lam_rows`` are ``(|B_j|, n)`` arrays ordered by
    bridge id.
    """
    s = np.sum(rho * gamma_b_rows - lam_rows, axis=0)
    return (2.0 * a_j + s) / (2.0 + rho * gamma_b_rows.shape[0])


def bridge_average(gamma_j_rows):
    """Plain average of the fresh ``gamma_j`` of the nodes attached to a bridge."""
    return np.sum(gamma_j_rows, axis=0) / gamma_j_rows.shape[0]


def bridge_update_full(gamma_j_rows, lam_rows, rho):
    """Unsimplified bridge step ``(rho sum gamma_j + sum lambda_j^b) / (rho |N_b|)``."""
    return (rho * np.sum(gamma_j_rows, axis=0) + np.sum(lam_rows, axis=0)) / (rho * gamma_j_rows.shape[0])


def dual_update(lam, gamma_j, gamma_b, rho):
    """Dual ascent step ``lambda + rho (gamma_j - gamma_b)``."""
    return lam + rho * (gamma_j - gamma_b)


# ---------------------------------------------------------------- state

@dataclass
class AdmmState:
    """Stacked ADMM iterates.

    ``gamma_J`` is ``(L, n)``, ``gamma_B`` is ``(|B|, n)`` in bridge-id order
    and ``lam`` is ``(N_C, n)`` in constraint-row order.
    """

    gamma_J: np.ndarray
    gamma_B: np.ndarray
    lam: np.ndarray
    rho: float
    iter: int = 0

    def copy(self) -> "AdmmState":
        return AdmmState(self.gamma_J.copy(), self.gamma_B.copy(), self.lam.copy(), self.rho, self.iter)


class _Index:
    """Row bookkeeping for a topology (constraint rows per node and per bridge)."""

    def __init__(self, topo: NetworkTopology):
        self.rows = topo.constraint_rows()
        self.bcol = {b: i for i, b in enumerate(topo.bridges)}
        self.node_rows = [[] for _ in range(topo.L)]
        self.bridge_rows = {b: [] for b in topo.bridges}
        for i, (j, b) in enumerate(self.rows):
            self.node_rows[j].append(i)
            self.bridge_rows[b].append(i)
        self.node_rows = [np.array(r, dtype=int) for r in self.node_rows]
        self.node_bcols = [np.array([self.bcol[b] for b in bj], dtype=int) for bj in topo.bridge_nbrs]
        self.bridge_nodes = {b: np.array(topo.node_nbrs_of_bridge[b], dtype=int) for b in topo.bridges}
        self.row_node = np.array([j for j, _ in self.rows], dtype=int)
        self.row_bcol = np.array([self.bcol[b] for _, b in self.rows], dtype=int)


def init_state(topo: NetworkTopology, n: int, rho: float, gamma_J=None, gamma_B=None) -> AdmmState:
    """Zero multipliers; ``gamma_J``/``gamma_B`` default to zero as well."""
    if not rho > 0:
        raise InvalidArgumentError(f"rho={rho} must be > 0")
    L, nb, nc = topo.L, len(topo.bridges), topo.n_constraints
    gJ = np.zeros((L, n)) if gamma_J is None else np.array(gamma_J, dtype=float).reshape(L, n)
    gB = np.zeros((nb, n)) if gamma_B is None else np.array(gamma_B, dtype=float).reshape(nb, n)
    return AdmmState(gJ, gB, np.zeros((nc, n)), float(rho))


def update_gamma_j(state: AdmmState, a_j, j: int, topo: NetworkTopology, _ix: _Index | None = None):
    """Fresh ``gamma_j`` from the current bridge variables and multipliers."""
    ix = _ix or _Index(topo)
    return node_update(np.asarray(a_j, float), state.gamma_B[ix.node_bcols[j]], state.lam[ix.node_rows[j]], state.rho)


def update_gamma_b(state: AdmmState, b: int, topo: NetworkTopology, _ix: _Index | None = None):
    """Average of ``gamma_j`` over ``N_b`` (valid while multipliers sum to zero)."""
    ix = _ix or _Index(topo)
    return bridge_average(state.gamma_J[ix.bridge_nodes[b]])


def update_lambda(state: AdmmState, j: int, b: int, topo: NetworkTopology, _ix: _Index | None = None):
    """Fresh ``lambda_j^b`` given already-updated ``gamma_j`` and ``gamma_b``."""
    ix = _ix or _Index(topo)
    row = ix.rows.index((j, b))
    return dual_update(state.lam[row], state.gamma_J[j], state.gamma_B[ix.bcol[b]], state.rho)


def messages_per_iteration(topo: NetworkTopology, n: int) -> int:
    """Reals exchanged by one ADMM iteration: ``2 n sum_j |B_j|``."""
    return 2 * n * topo.n_constraints


def admm_iterate(a, topo: NetworkTopology, state: AdmmState, _ix: _Index | None = None) -> AdmmState:
    """One Gauss-Seidel sweep: all ``gamma_j``, then all ``gamma_b``, then all ``lambda``."""
    ix = _ix or _Index(topo)
    rho = state.rho
    gJ = np.empty_like(state.gamma_J)
    for j in range(topo.L):
        gJ[j] = node_update(a[j], state.gamma_B[ix.node_bcols[j]], state.lam[ix.node_rows[j]], rho)
    gB = np.empty_like(state.gamma_B)
    for b in topo.bridges:
        gB[ix.bcol[b]] = bridge_average(gJ[ix.bridge_nodes[b]])
    lam = dual_update(state.lam, gJ[ix.row_node], gB[ix.row_bcol], rho)
    return AdmmState(gJ, gB, lam, rho, state.iter + 1)


@dataclass
class Reference:
    """KKT point of the consensus problem: primal ``gamma_J``, ``gamma_B`` and dual ``lam``."""

    gamma_J: np.ndarray
    gamma_B: np.ndarray
    lam: np.ndarray


@dataclass
class GNormMonitor:
    """Per-iteration distances to a :class:`Reference`.

    ``g_norm_history[r]`` is ``||u^r - u*||_G`` for the state after ``r``
    iterations; ``primal_gap_history[r]`` is ``||gamma_J^r - gamma_J*||_2``.
    ``u_star`` stacks ``E2 gamma_B*`` (constraint-row order) over ``lambda*``.
    """

    reference: Reference
    topo: NetworkTopology
    g_norm_history: list = field(default_factory=list)
    primal_gap_history: list = field(default_factory=list)
    u_star: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ix = _Index(self.topo)
        e2gb = -self.reference.gamma_B[ix.row_bcol]
        self.u_star = np.concatenate([e2gb.ravel(), self.reference.lam.ravel()])

    def record(self, state: AdmmState):
        self.g_norm_history.append(gnorm_gap(state, self.reference, self.topo))
        self.primal_gap_history.append(float(np.linalg.norm(state.gamma_J - self.reference.gamma_J)))


def admm_mstep(a, topo: NetworkTopology, rho: float, r_max: int, state: AdmmState | None = None,
               monitor: GNormMonitor | None = None, ledger=None) -> AdmmState:
    """Run ``r_max`` ADMM iterations of the decentralized M-step.

    Parameters
    ----------
    a : array, shape (L, n)
        Per-node E-step statistics ``a_j``.
    topo : NetworkTopology
        Topology with a valid bridge assignment.
    rho : float
        Augmented-Lagrangian parameter.
    r_max : int
        Number of iterations.
    state : AdmmState, optional
        Warm start; defaults to all-zero iterates.
    monitor : GNormMonitor, optional
        Receives the state before the first and after every iteration.
    ledger : object with ``add(count)``, optional
        Credited with ``2 n sum_j |B_j|`` reals per iteration.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != topo.L:
        raise InvalidArgumentError(f"a must have shape (L={topo.L}, n), got {a.shape}")
    if int(r_max) < 1:
        raise InvalidArgumentError(f"r_max={r_max} must be >= 1")
    if len(topo.bridge_nbrs) != topo.L:
        raise InvalidArgumentError("topology has no bridge assignment")
    n = a.shape[1]
    st = init_state(topo, n, rho) if state is None else state.copy()
    if st.rho != rho:
        st.rho = float(rho)
    ix = _Index(topo)
    per_iter = messages_per_iteration(topo, n)
    if monitor is not None:
        monitor.record(st)
    for _ in range(int(r_max)):
        st = admm_iterate(a, topo, st, ix)
        if ledger is not None:
            ledger.add(per_iter)
        if monitor is not None:
            monitor.record(st)
    return st


def solve_reference(a, topo: NetworkTopology) -> Reference:
    """Primal-dual optimum reached by ADMM from zero multipliers.

    The primal part is the network average of ``a``.  The dual part is the
    minimum-norm solution of ``E1^T lam = -grad f(gamma_J*)``,
    ``E2^T lam = 0``, which is the unique KKT multiplier lying in the range
    the ADMM dual iterates are confined to.
    """
    a = np.asarray(a, dtype=float)
    cons = build_constraints(topo, 1)
    avg = np.mean(a, axis=0)
    grad = 2.0 * (avg[None, :] - a)
    A = np.vstack([cons.C1.T, cons.C2.T])
    rhs = np.vstack([-grad, np.zeros((cons.C2.shape[1], a.shape[1]))])
    lam, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = np.max(np.abs(A @ lam - rhs)) if rhs.size else 0.0
    if resid > 1e-8 * max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0):
        raise NumericError(f"KKT system inconsistent (residual {resid:.3g}); constraint matrices are wrong")
    gJ = np.tile(avg, (topo.L, 1))
    gB = np.tile(avg, (len(topo.bridges), 1))
    return Reference(gJ, gB, lam)


def kkt_residual(a, topo: NetworkTopology, ref: Reference) -> float:
    """Max-abs violation of stationarity, bridge dual feasibility and consensus."""
    cons = build_constraints(topo, 1)
    grad = 2.0 * (ref.gamma_J - np.asarray(a, float))
    r1 = grad + cons.C1.T @ ref.lam
    r2 = cons.C2.T @ ref.lam
    r3 = cons.C1 @ ref.gamma_J + cons.C2 @ ref.gamma_B
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2), initial=0.0), np.max(np.abs(r3))))


def gnorm_gap(state: AdmmState, reference: Reference, topo: NetworkTopology) -> float:
    """``sqrt(rho ||E2 (gamma_B - gamma_B*)||^2 + ||lam - lam*||^2 / rho)``."""
    ix = _Index(topo)
    d = (state.gamma_B - reference.gamma_B)[ix.row_bcol]
    dl = state.lam - reference.lam
    return float(np.sqrt(state.rho * np.sum(d * d) + np.sum(dl * dl) / state.rho))


def bridge_dual_sums(state: AdmmState, topo: NetworkTopology) -> np.ndarray:
    """``sum_{j in N_b} lambda_j^b`` for every bridge, shape ``(|B|, n)``."""
    ix = _Index(topo)
    out = np.zeros_like(state.gamma_B)
    np.add.at(out, ix.row_bcol, state.lam)
    return out
