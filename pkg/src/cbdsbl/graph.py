"""Network topology, bridge nodes, consensus constraints and ADMM rate constants.

Nodes are numbered ``0 .. L-1``.  Bridge neighborhoods are *closed*: a bridge
node belongs to its own ``B_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _rng
from .errors import InvalidArgumentError, TopologyGenerationError

MAX_REDRAWS = 100


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected graph plus an (optional) bridge assignment.

    Attributes
    ----------
    L : int
        Number of nodes.
    edges : tuple of (int, int)
        Sorted unordered pairs ``(j1, j2)`` with ``j1 < j2``.
    bridges : tuple of int
        Bridge set ``B`` in ascending order (empty until assigned).
    bridge_nbrs : tuple of tuple of int
        ``B_j`` for every node: bridges in the closed neighborhood of ``j``.
    node_nbrs_of_bridge : dict
        ``N_b`` for every bridge ``b``: nodes having ``b`` in their ``B_j``.
    """

    L: int
    edges: tuple
    bridges: tuple = ()
    bridge_nbrs: tuple = ()
    node_nbrs_of_bridge: dict = field(default_factory=dict)

    @property
    def n_constraints(self) -> int:
        return sum(len(b) for b in self.bridge_nbrs)

    def neighbors(self, j: int) -> list[int]:
        return self._adjacency()[j]

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._adjacency()])

    def _adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.L)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return [sorted(x) for x in adj]

    def is_connected(self) -> bool:
        return _is_connected(self.L, self.edges)

    def with_bridges(self, bridges) -> "NetworkTopology":
        """Copy of this topology with ``B_j`` and ``N_b`` derived from ``bridges``."""
        bset = sorted({int(b) for b in bridges})
        for b in bset:
            if not 0 <= b < self.L:
                raise InvalidArgumentError(f"bridge id {b} out of range for L={self.L}")
        adj = self._adjacency()
        inb = set(bset)
        bj = tuple(tuple(sorted(v for v in [j, *adj[j]] if v in inb)) for j in range(self.L))
        nb = {b: tuple(j for j in range(self.L) if b in bj[j]) for b in bset}
        return replace(self, bridges=tuple(bset), bridge_nbrs=bj, node_nbrs_of_bridge=nb)

    def constraint_rows(self) -> list[tuple[int, int]]:
        """``(node, bridge)`` pairs in lexicographic order, one per constraint."""
        return [(j, b) for j in range(self.L) for b in self.bridge_nbrs[j]]


def _is_connected(L, edges) -> bool:
    if L == 1:
        return True
    if not edges:
        return False
    e = np.asarray(edges)
    adj = csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(L, L))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


def make_topology(L: int, edges) -> NetworkTopology:
    """Build a bridge-less topology from an edge iterable (self loops dropped)."""
    L = int(L)
    if L < 1:
        raise InvalidArgumentError(f"L={L} must be >= 1")
    norm = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if not (0 <= a < L and 0 <= b < L):
            raise InvalidArgumentError(f"edge ({a}, {b}) out of range for L={L}")
        if a != b:
            norm.add((min(a, b), max(a, b)))
    return NetworkTopology(L, tuple(sorted(norm)))


def generate_erdos_renyi(L: int, p: float, seed: int = 0, max_redraws: int = MAX_REDRAWS) -> NetworkTopology:
    """Connected G(L, p) graph, redrawing whole graphs until connected."""
    L = int(L)
    p = float(p)
    if L < 2:
        raise InvalidArgumentError(f"L={L} must be >= 2")
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"edge probability p={p} must lie in [0, 1]")
    iu, ju = np.triu_indices(L, k=1)
    for attempt in range(max_redraws):
        g = _rng.stream(seed, _rng.TOPOLOGY, attempt)
        keep = g.random(iu.size) < p
        edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
        if _is_connected(L, edges):
            return NetworkTopology(L, edges)
    raise TopologyGenerationError(f"no connected G({L}, {p}) graph after {max_redraws} draws")


def validate_bridges(topo: NetworkTopology) -> tuple[bool, list[str]]:
    """Check both bridge-set conditions; return ``(ok, violations)``."""
    violations = []
    if len(topo.bridge_nbrs) != topo.L:
        return False, ["bridges not assigned"]
    for j, bj in enumerate(topo.bridge_nbrs):
        if not bj:
            violations.append(f"node {j} has no bridge in its neighborhood")
    for a, b in topo.edges:
        if not set(topo.bridge_nbrs[a]) & set(topo.bridge_nbrs[b]):
            violations.append(f"edge ({a}, {b}) has no common bridge")
    return not violations, violations


def select_bridges(topo: NetworkTopology, n_bridges: int | None = None) -> tuple[int, ...]:
    """Greedy bridge selection by descending degree (ties to the lower id).

    Nodes are added one at a time until both bridge conditions hold.  If
    ``n_bridges`` is larger than that minimal greedy prefix, the selection
    keeps extending along the same order up to ``n_bridges`` nodes.
    """
    deg = topo.degrees()
    order = sorted(range(topo.L), key=lambda v: (-deg[v], v))
    chosen = []
    for v in order:
        chosen.append(v)
        if validate_bridges(topo.with_bridges(chosen))[0]:
            break
    if n_bridges is not None:
        n_bridges = min(int(n_bridges), topo.L)
        for v in order[len(chosen):n_bridges]:
            chosen.append(v)
    return tuple(sorted(chosen))


@dataclass(frozen=True)
class ConstraintMatrices:
    """Consensus constraints ``E1 gamma_J + E2 gamma_B = 0``.

    ``C1`` and ``C2`` are the node-level incidence matrices, ``E1 = C1 kron I_n``
    and ``E2 = C2 kron I_n``.
    """

    C1: np.ndarray
    C2: np.ndarray
    n: int
    sigma2_min: float
    sigma2_max: float

    @property
    def kappa(self) -> float:
        return self.sigma2_max / self.sigma2_min

    @property
    def E1(self) -> np.ndarray:
        return np.kron(self.C1, np.eye(self.n))

    @property
    def E2(self) -> np.ndarray:
        return np.kron(self.C2, np.eye(self.n))


def build_constraints(topo: NetworkTopology, n: int = 1) -> ConstraintMatrices:
    """One row per ``(j, b in B_j)`` pair, ordered by ``(j, b)``.

    The extreme eigenvalues of ``E1^T E1`` are read off the bridge counts
    ``|B_j|``, since ``E1^T E1`` is diagonal.
    """
    ok, why = validate_bridges(topo)
    if not ok:
        raise InvalidArgumentError("invalid bridge set: " + "; ".join(why))
    rows = topo.constraint_rows()
    col = {b: i for i, b in enumerate(topo.bridges)}
    C1 = np.zeros((len(rows), topo.L))
    C2 = np.zeros((len(rows), len(topo.bridges)))
    for i, (j, b) in enumerate(rows):
        C1[i, j] = 1.0
        C2[i, col[b]] = -1.0
    counts = [len(bj) for bj in topo.bridge_nbrs]
    return ConstraintMatrices(C1, C2, int(n), float(min(counts)), float(max(counts)))


@dataclass(frozen=True)
class RateConstants:
    m_f: float
    M_f: float
    kappa_f: float
    rho_opt: float
    delta_opt: float


def _spectrum(spectrum) -> tuple[float, float]:
    if hasattr(spectrum, "sigma2_min"):
        return float(spectrum.sigma2_min), float(spectrum.sigma2_max)
    lo, hi = spectrum
    return float(lo), float(hi)


def rho_opt(m_f: float, M_f: float, sigma2_min: float, sigma2_max: float) -> RateConstants:
    """Optimal augmented-Lagrangian parameter and its contraction constant.

    For the CB-DSBL surrogate (``m_f = M_f = 2``) this reduces to
    ``rho = 2 / sigma2_min`` and ``delta = 1 / (kappa + 1)``.
    """
    vals = dict(m_f=m_f, M_f=M_f, sigma2_min=sigma2_min, sigma2_max=sigma2_max)
    for name, v in vals.items():
        if not (v > 0 and math.isfinite(v)):
            raise InvalidArgumentError(f"{name}={v} must be positive and finite")
    if M_f < m_f:
        raise InvalidArgumentError(f"M_f={M_f} must be >= m_f={m_f}")
    if sigma2_max < sigma2_min:
        raise InvalidArgumentError("sigma2_max must be >= sigma2_min")
    kappa = sigma2_max / sigma2_min
    kappa_f = M_f / m_f
    root = math.sqrt((kappa - 1.0) ** 2 + 4.0 * kappa * kappa_f**2)
    ratio = (root + (kappa - 1.0)) / (root - (kappa - 1.0))
    rho = M_f / math.sqrt(sigma2_max * sigma2_min) * math.sqrt(ratio)
    delta = 2.0 / (kappa + 1.0 + root)
    return RateConstants(float(m_f), float(M_f), kappa_f, rho, delta)


def delta_general(mu, nu, rho, consts: RateConstants, spectrum):
    """Contraction constant ``min(f1, f2, f3)`` at fixed ``(mu, nu, rho)``.

    Broadcasts over array arguments.  ``spectrum`` is either a
    :class:`ConstraintMatrices` or a ``(sigma2_min, sigma2_max)`` pair.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(mu <= 1) or np.any(nu <= 1):
        raise InvalidArgumentError("mu and nu must be > 1")
    if np.any(rho <= 0):
        raise InvalidArgumentError("rho must be > 0")
    s2min, s2max = _spectrum(spectrum)
    f1 = 2.0 * consts.m_f / (nu * consts.M_f**2 / (rho * (nu - 1.0) * s2min) + mu * rho * s2max)
    f2 = s2min / (nu * s2max)
    f3 = (mu - 1.0) / mu
    out = np.minimum(np.minimum(f1, f2), f3)
    return float(out) if out.ndim == 0 else out


def cbdsbl_rate_constants(cons: ConstraintMatrices) -> RateConstants:
    """Rate constants of the CB-DSBL M-step surrogate (``m_f = M_f = 2``)."""
    return rho_opt(2.0, 2.0, cons.sigma2_min, cons.sigma2_max)


# ---------------------------------------------------------------- text format

def format_topology(topo: NetworkTopology) -> str:
    """Edge-list text: ``L``, one ``j k`` pair per line, then ``bridges: ...``."""
    lines = [str(topo.L)]
    lines += [f"{a} {b}" for a, b in topo.edges]
    lines.append("bridges: " + " ".join(str(b) for b in topo.bridges))
    return "\n".join(lines) + "\n"


def parse_topology(text: str) -> NetworkTopology:
    """Inverse of :func:`format_topology`; a missing bridges line means none."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InvalidArgumentError("empty topology text")
    try:
        L = int(lines[0])
    except ValueError as exc:
        raise InvalidArgumentError(f"line 1: expected node count, got {lines[0]!r}") from exc
    edges, bridges = [], None
    for ln in lines[1:]:
        if ln.startswith("bridges:"):
            bridges = [int(t) for t in ln.split(":", 1)[1].split()]
            continue
        parts = ln.split()
        if len(parts) != 2:
            raise InvalidArgumentError(f"malformed edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    topo = make_topology(L, edges)
    return topo.with_bridges(bridges) if bridges else topo
