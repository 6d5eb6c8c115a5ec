"""Reconstruction and support-recovery error metrics."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgumentError


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def nmse(truth, estimates) -> float:
    """Average over nodes of ``||x_j - xhat_j||^2 / ||x_j||^2`` (linear scale)."""
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if truth.shape != est.shape:
        raise InvalidArgumentError(f"shape mismatch {truth.shape} vs {est.shape}")
    energy = np.sum(truth * truth, axis=1)
    if np.any(energy == 0):
        raise InvalidArgumentError("NMSE undefined for an all-zero true signal")
    err = np.sum((truth - est) ** 2, axis=1)
    return float(np.mean(err / energy))


def nmse_db(truth, estimates) -> float:
    return to_db(nmse(truth, estimates))


def _as_set(s):
    if isinstance(s, np.ndarray) and s.dtype == bool:
        return frozenset(np.flatnonzero(s).tolist())
    return frozenset(int(i) for i in s)


def nser(true_support, est_supports) -> float:
    """Average over nodes of ``(|S minus S_j| + |S_j minus S|) / |S|``.

    ``est_supports`` is a sequence with one index collection (or boolean
    mask) per node.
    """
    S = _as_set(true_support)
    if not S:
        raise InvalidArgumentError("NSER undefined for an empty true support")
    est = [_as_set(s) for s in est_supports]
    if not est:
        raise InvalidArgumentError("need at least one estimated support")
    return float(np.mean([len(S - Sj) + len(Sj - S) for Sj in est]) / len(S))
