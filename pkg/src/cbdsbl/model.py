"""JSM-2 ground truth and per-node noisy linear measurements.

Every node ``j`` observes ``y_j = Phi_j x_j + w_j`` where all ``x_j`` share one
support.  Random draws come from per-node streams derived from a root seed,
so the output does not depend on the order in which nodes are generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import DegenerateSNRError, InvalidArgumentError, NumericError

#: noise variance used when noiseless data is requested
NOISE_FLOOR = 1e-12

COEFF_DISTS = ("rademacher", "gaussian")


@dataclass(frozen=True)
class SparseEnsemble:
    """``L`` jointly sparse signals of length ``n`` sharing ``support``.

    ``signals`` has shape ``(L, n)``; ``support`` is a sorted integer array
    of the ``k`` active indices (0-based).
    """

    n: int
    k: int
    L: int
    support: np.ndarray
    signals: np.ndarray
    coeff_dist: str = "rademacher"

    @property
    def support_set(self) -> frozenset:
        return frozenset(int(i) for i in self.support)


@dataclass(frozen=True)
class NodeMeasurement:
    """The private data ``(Phi_j, y_j, sigma_j^2)`` held by one node."""

    phi: np.ndarray
    y: np.ndarray
    noise_var: float

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class MeasurementSet:
    """Stacked measurements: ``phi`` is ``(L, m, n)``, ``y`` is ``(L, m)``."""

    phi: np.ndarray
    y: np.ndarray
    noise_var: np.ndarray
    snr_db: float = math.inf

    @property
    def L(self) -> int:
        return self.phi.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    @property
    def n(self) -> int:
        return self.phi.shape[2]

    def node(self, j: int) -> NodeMeasurement:
        return NodeMeasurement(self.phi[j], self.y[j], float(self.noise_var[j]))

    def nodes(self) -> list[NodeMeasurement]:
        return [self.node(j) for j in range(self.L)]

    def subset(self, nodes) -> "MeasurementSet":
        idx = np.asarray(list(nodes), dtype=int)
        return MeasurementSet(self.phi[idx], self.y[idx], self.noise_var[idx], self.snr_db)


def generate_ensemble(n: int, k: int, L: int, dist: str = "rademacher", seed: int = 0) -> SparseEnsemble:
    """Draw a common support uniformly and i.i.d. nonzero coefficients.

    Parameters
    ----------
    n, k, L : int
        Signal length, support size and number of nodes.
    dist : {"rademacher", "gaussian"}
        Distribution of the nonzero coefficients.
    seed : int
        Root seed.
    """
    n, k, L = int(n), int(k), int(L)
    if n < 1 or L < 1:
        raise InvalidArgumentError(f"need n >= 1 and L >= 1, got n={n}, L={L}")
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"support size k={k} must satisfy 1 <= k <= n={n}")
    dist = dist.lower()
    if dist not in COEFF_DISTS:
        raise InvalidArgumentError(f"unknown coefficient distribution {dist!r}")

    support = np.sort(_rng.stream(seed, _rng.SUPPORT).choice(n, size=k, replace=False))
    signals = np.zeros((L, n))
    for j in range(L):
        g = _rng.stream(seed, _rng.COEFFS, j)
        if dist == "rademacher":
            signals[j, support] = g.choice([-1.0, 1.0], size=k)
        else:
            signals[j, support] = g.standard_normal(k)
    return SparseEnsemble(n, k, L, support, signals, dist)


def _sensing_matrix(g: np.random.Generator, m: int, n: int) -> np.ndarray:
    phi = g.standard_normal((m, n))
    return phi / np.linalg.norm(phi, axis=0)


def generate_measurements(ens: SparseEnsemble, m: int, snr_db: float = 30.0, seed: int = 0) -> MeasurementSet:
    """Column-normalized Gaussian sensing and additive white noise per node.

    The noise variance at node ``j`` is set so that
    ``||Phi_j x_j||^2 / (m sigma_j^2)`` equals the requested SNR.  Pass
    ``snr_db=math.inf`` for noiseless data; the variance is then reported
    as :data:`NOISE_FLOOR` so that support thresholding stays defined.
    """
    m = int(m)
    if m < 1:
        raise InvalidArgumentError(f"number of measurements m={m} must be >= 1")
    if m > ens.n:
        raise InvalidArgumentError(f"m={m} exceeds the signal length n={ens.n}")
    snr_db = float(snr_db)
    if math.isnan(snr_db):
        raise InvalidArgumentError("snr_db is NaN")
    noiseless = math.isinf(snr_db) and snr_db > 0

    phis = np.empty((ens.L, m, ens.n))
    ys = np.empty((ens.L, m))
    noise_var = np.empty(ens.L)
    for j in range(ens.L):
        g = _rng.stream(seed, _rng.SENSING, j)
        phi = _sensing_matrix(g, m, ens.n)
        if np.linalg.matrix_rank(phi) < m:
            # one regeneration attempt from a separate stream
            phi = _sensing_matrix(_rng.stream(seed, _rng.SENSING, j, 1), m, ens.n)
            if np.linalg.matrix_rank(phi) < m:
                raise NumericError(f"sensing matrix at node {j} is rank deficient twice")
        clean = phi @ ens.signals[j]
        if noiseless:
            var = NOISE_FLOOR
            y = clean
        else:
            power = float(clean @ clean)
            if power == 0.0:
                raise DegenerateSNRError(f"node {j} has a zero clean signal; SNR {snr_db} dB is undefined")
            var = power / (m * 10.0 ** (snr_db / 10.0))
            y = clean + math.sqrt(var) * _rng.stream(seed, _rng.NOISE, j).standard_normal(m)
        phis[j], ys[j], noise_var[j] = phi, y, var
    return MeasurementSet(phis, ys, noise_var, snr_db)
