"""Synchronous-round simulation of CB-DSBL over a bridge-node network.

Each :class:`NodeRuntime` owns its measurements and never exposes them;
the only values that cross node boundaries are hyperparameter vectors
(``gamma_j`` upstream to bridges, ``gamma_b`` downstream to nodes), passed as
immutable snapshots at round barriers.  Ground truth, when supplied, is used
by the harness for metrics only.

Failure handling
----------------
A failed node stops computing and transmitting.  Bridges average only over
alive members; once a member has been lost a bridge switches to the
unsimplified update using its own mirror of the multipliers, which restores
the zero-sum property after one round.  A failed bridge is removed from
every ``B_j``; an alive node left with no bridge freezes its ``gamma_j``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .admm import bridge_average, bridge_update_full, dual_update, node_update
from .errors import ConsensusImpossibleError, InvalidArgumentError
from .graph import NetworkTopology, build_constraints, cbdsbl_rate_constants, validate_bridges
from .metrics import nmse, to_db
from .model import MeasurementSet, NodeMeasurement
from .sbl import SolverConfig, e_step, threshold_support

TRACE_COLUMNS = ("outer_iter", "consensus_gap", "mean_nmse_db", "messages_cumulative")
SEMANTICS = ("drop", "freeze")


@dataclass
class MessageLedger:
    """Reals transmitted per ADMM round, in each direction."""

    node_to_bridge: list = field(default_factory=list)
    bridge_to_node: list = field(default_factory=list)

    def record_round(self, up: int, down: int):
        self.node_to_bridge.append(int(up))
        self.bridge_to_node.append(int(down))

    def add(self, count: int):
        half = int(count) // 2
        self.record_round(half, int(count) - half)

    @property
    def per_round(self) -> list:
        return [u + d for u, d in zip(self.node_to_bridge, self.bridge_to_node)]

    @property
    def total(self) -> int:
        return sum(self.node_to_bridge) + sum(self.bridge_to_node)


@dataclass
class FailureSchedule:
    """Outer-iteration index at which each node fails (absent: never).

    ``semantics`` decides how failed nodes are scored: ``"drop"`` removes them
    from the reported metrics, ``"freeze"`` keeps their last estimate.
    """

    fail_round: dict = field(default_factory=dict)
    semantics: str = "drop"

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise InvalidArgumentError(f"unknown failure semantics {self.semantics!r}")
        for j, r in self.fail_round.items():
            if int(r) < 0:
                raise InvalidArgumentError(f"node {j}: failure round {r} must be >= 0")

    @classmethod
    def random(cls, L: int, rate: float, k_max: int, seed: int, semantics: str = "drop") -> "FailureSchedule":
        """I.i.d. failures: every alive node fails in each round with probability ``rate``."""
        if not 0.0 <= rate <= 1.0:
            raise InvalidArgumentError(f"failure rate {rate} must lie in [0, 1]")
        g = _rng.stream(seed, _rng.FAILURES)
        fail = {}
        if rate > 0:
            # round index of the first success of a Bernoulli(rate) sequence, starting at 1
            first = g.geometric(rate, size=L)
            fail = {j: int(r) for j, r in enumerate(first) if r <= k_max}
        return cls(fail, semantics)

    def failed_by(self, j: int, k: int) -> bool:
        r = self.fail_round.get(j)
        return r is not None and k >= int(r)


class NodeRuntime:
    """One sensor: private measurements, local ``gamma_j``, ``a_j`` and ``lambda_j^b``.

    Bridge copies and multipliers are kept as ``(|B_j|, n)`` rows in ascending
    bridge-id order.
    """

    def __init__(self, j: int, meas: NodeMeasurement, bridges, gamma_init: float, n: int):
        self.id = j
        self._meas = meas
        self.gamma = np.full(n, gamma_init)
        self.bridges = list(bridges)
        self._slot = {b: i for i, b in enumerate(self.bridges)}
        self.gamma_b = np.zeros((len(self.bridges), n))
        self.lam = np.zeros((len(self.bridges), n))
        self.alive = True
        self._a = None
        self._mu = None

    @property
    def frozen(self) -> bool:
        return not self.bridges

    def estep(self):
        st = e_step(self._meas, np.maximum(self.gamma, 0.0))
        self._a, self._mu = st.a, st.mu

    def drop_bridge(self, b: int):
        if b in self._slot:
            keep = [i for i, bb in enumerate(self.bridges) if bb != b]
            self.bridges = [self.bridges[i] for i in keep]
            self.gamma_b, self.lam = self.gamma_b[keep], self.lam[keep]
            self._slot = {bb: i for i, bb in enumerate(self.bridges)}

    def primal_step(self, rho: float) -> np.ndarray:
        if not self.frozen:
            self.gamma = node_update(self._a, self.gamma_b, self.lam, rho)
        return self.gamma.copy()

    def receive(self, b: int, gamma_b: np.ndarray):
        self.gamma_b[self._slot[b]] = gamma_b

    def dual_step(self, rho: float):
        if not self.frozen:
            self.lam = dual_update(self.lam, self.gamma[None, :], self.gamma_b, rho)

    # harness-side accessors (metrics only; never called by other nodes)
    def estimate(self) -> np.ndarray:
        return self._mu

    def support(self, multiplier: float) -> frozenset:
        return threshold_support(np.maximum(self.gamma, 0.0), self._meas.noise_var, multiplier)


class BridgeRuntime:
    """Bridge role of a node: holds ``gamma_b`` and a mirror of its members' multipliers."""

    def __init__(self, b: int, members, n: int):
        self.id = b
        self.members = list(members)
        self.gamma = np.zeros(n)
        self.lam = np.zeros((len(self.members), n))
        self.alive = True
        self.lost_member = False

    def drop_member(self, j: int):
        if j in self.members:
            keep = [i for i, jj in enumerate(self.members) if jj != j]
            self.members = [self.members[i] for i in keep]
            self.lam = self.lam[keep]
            self.lost_member = True

    def update(self, received: dict, rho: float) -> np.ndarray:
        rows = np.stack([received[j] for j in self.members])
        if self.lost_member:
            self.gamma = bridge_update_full(rows, self.lam, rho)
        else:
            self.gamma = bridge_average(rows)
        self.lam = dual_update(self.lam, rows, self.gamma[None, :], rho)
        return self.gamma.copy()


def consensus_gap(gammas) -> float:
    """Largest ``||gamma_j1 - gamma_j2||_inf`` over node pairs."""
    g = np.atleast_2d(np.asarray(gammas, dtype=float))
    if g.shape[0] < 2:
        return 0.0
    return float(np.max(np.ptp(g, axis=0)))


@dataclass
class TraceRow:
    outer_iter: int
    consensus_gap: float
    mean_nmse_db: float
    messages_cumulative: int


@dataclass
class CBDSBLResult:
    gamma: np.ndarray
    x_hat: np.ndarray
    supports: list
    trace: list
    ledger: MessageLedger
    iters: int
    converged: bool
    alive: np.ndarray
    rho: float
    scored: np.ndarray = None

    def iterations_to(self, nmse_db_target: float) -> int | None:
        """First outer iteration whose NMSE is at or below the target."""
        for row in self.trace:
            if row.mean_nmse_db <= nmse_db_target:
                return row.outer_iter
        return None


def resolve_rho(topo: NetworkTopology, cfg: SolverConfig) -> float:
    base = cfg.rho if cfg.rho is not None else cbdsbl_rate_constants(build_constraints(topo, 1)).rho_opt
    return float(base) * float(cfg.rho_scale)


def run_cbdsbl(meas: MeasurementSet, topo: NetworkTopology, cfg: SolverConfig | None = None,
               failures: FailureSchedule | None = None, truth=None) -> CBDSBLResult:
    """Decentralized EM with ``r_max`` bridge-ADMM rounds per M-step.

    Parameters
    ----------
    meas : MeasurementSet
        Per-node data; node ``j`` only ever sees ``meas.node(j)``.
    topo : NetworkTopology
        Connected graph with a valid bridge assignment.
    cfg : SolverConfig
        ``rho=None`` uses the optimal parameter of ``topo``.
    failures : FailureSchedule, optional
    truth : array (L, n), optional
        Ground truth for the per-iteration NMSE column of the trace.
    """
    cfg = cfg or SolverConfig()
    failures = failures or FailureSchedule()
    if topo.L != meas.L:
        raise InvalidArgumentError(f"topology has {topo.L} nodes, measurements have {meas.L}")
    ok, why = validate_bridges(topo)
    if not ok:
        raise InvalidArgumentError("invalid bridge set: " + "; ".join(why))
    rho = resolve_rho(topo, cfg)
    n, L = meas.n, meas.L
    truth = None if truth is None else np.asarray(truth, dtype=float)

    nodes = [NodeRuntime(j, meas.node(j), topo.bridge_nbrs[j], cfg.gamma_init, n) for j in range(L)]
    bridges = {b: BridgeRuntime(b, topo.node_nbrs_of_bridge[b], n) for b in topo.bridges}
    ledger = MessageLedger()
    trace = []

    def apply_failures(k):
        for nd in nodes:
            if nd.alive and failures.failed_by(nd.id, k):
                nd.alive = False
                for br in bridges.values():
                    br.drop_member(nd.id)
                if nd.id in bridges:
                    bridges[nd.id].alive = False
                    for other in nodes:
                        other.drop_bridge(nd.id)
        if not any(nd.alive and not nd.frozen for nd in nodes):
            raise ConsensusImpossibleError(f"round {k}: no alive node is attached to an alive bridge")

    def scored_nodes():
        if failures.semantics == "freeze":
            return [nd for nd in nodes if nd.estimate() is not None]
        return [nd for nd in nodes if nd.alive]

    def record(k):
        alive = [nd for nd in nodes if nd.alive]
        gap = consensus_gap([nd.gamma for nd in alive])
        err = math.nan
        if truth is not None:
            sc = scored_nodes()
            err = to_db(nmse(truth[[nd.id for nd in sc]], np.stack([nd.estimate() for nd in sc])))
        trace.append(TraceRow(k, gap, err, ledger.total))

    k, converged = 0, False
    while True:
        apply_failures(k)
        for nd in nodes:
            if nd.alive:
                nd.estep()
        record(k)
        if converged or k >= cfg.k_max:
            break
        alive = [nd for nd in nodes if nd.alive]
        before = np.concatenate([nd.gamma for nd in alive])
        for _ in range(int(cfg.r_max)):
            # steps 1-2: node primal update, upstream transmission
            up = {}
            n_up = 0
            for nd in alive:
                g = nd.primal_step(rho)
                for b in nd.bridges:
                    up.setdefault(b, {})[nd.id] = g
                    n_up += n
            # steps 3-4: bridge averaging, downstream transmission
            down = {}
            n_down = 0
            for b, br in bridges.items():
                if br.alive and br.members:
                    down[b] = br.update(up[b], rho)
                    n_down += n * len(br.members)
            for nd in alive:
                for b in nd.bridges:
                    nd.receive(b, down[b])
            # step 5: multipliers
            for nd in alive:
                nd.dual_step(rho)
            ledger.record_round(n_up, n_down)
        after = np.concatenate([nd.gamma for nd in alive])
        converged = float(np.linalg.norm(after - before)) <= cfg.eps
        k += 1

    gamma = np.stack([nd.gamma for nd in nodes])
    x_hat = np.stack([nd.estimate() if nd.estimate() is not None else np.zeros(n) for nd in nodes])
    supports = [nd.support(cfg.threshold_multiplier) for nd in nodes]
    alive_mask = np.array([nd.alive for nd in nodes])
    scored = np.array([nd in scored_nodes() for nd in nodes])
    return CBDSBLResult(gamma, x_hat, supports, trace, ledger, k, converged, alive_mask, rho, scored)


def write_trace_csv(trace, path_or_buf=None) -> str:
    """Write trace rows with the documented columns; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.outer_iter, repr(float(r.consensus_gap)), repr(float(r.mean_nmse_db)), r.messages_cumulative])
    text = buf.getvalue()
    if path_or_buf is not None:
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
    return text


def read_trace_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [TraceRow(int(r["outer_iter"]), float(r["consensus_gap"]), float(r["mean_nmse_db"]),
                     int(r["messages_cumulative"])) for r in rows]
