"""Centralized multiple-response sparse Bayesian learning (M-SBL).

The E-step works on the ``m x m`` matrix ``sigma^2 I + Phi Gamma Phi^T`` and
never inverts ``Gamma``, so it stays exact when some ``gamma(i)`` are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lapack

from .errors import InvalidArgumentError, NumericError
from .model import MeasurementSet, NodeMeasurement

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SolverConfig:
    """Knobs shared by the centralized and decentralized EM loops.

    ``rho=None`` selects the optimal ADMM parameter of the topology;
    ``rho_scale`` multiplies whatever ``rho`` resolves to.
    """

    eps: float = 1e-6
    k_max: int = 200
    gamma_init: float = 1e-3
    threshold_multiplier: float = 4.0
    r_max: int = 2
    rho: float | None = None
    rho_scale: float = 1.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise InvalidArgumentError(f"eps={self.eps} must be >= 0")
        if int(self.k_max) < 0:
            raise InvalidArgumentError(f"k_max={self.k_max} must be >= 0")
        if int(self.r_max) < 1:
            raise InvalidArgumentError(f"r_max={self.r_max} must be >= 1")
        if not self.gamma_init > 0:
            raise InvalidArgumentError("gamma_init must be > 0")
        if self.rho is not None and not self.rho > 0:
            raise InvalidArgumentError(f"rho={self.rho} must be > 0")
        if not self.rho_scale > 0:
            raise InvalidArgumentError(f"rho_scale={self.rho_scale} must be > 0")
        if not self.threshold_multiplier >= 0:
            raise InvalidArgumentError("threshold_multiplier must be >= 0")


@dataclass
class PosteriorStats:
    """Posterior summary of one node.

    ``a = sigma_diag + mu**2`` is the only quantity the M-step needs.
    """

    mu: np.ndarray
    sigma_diag: np.ndarray
    a: np.ndarray
    loglik: float


def _check_gamma(gamma, n):
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (n,):
        raise InvalidArgumentError(f"gamma has shape {gamma.shape}, expected ({n},)")
    if not np.isfinite(gamma).all():
        raise NumericError("gamma contains non-finite entries")
    if (gamma < 0).any():
        raise InvalidArgumentError("gamma must be elementwise nonnegative")
    return gamma


def e_step(meas: NodeMeasurement, gamma) -> PosteriorStats:
    """Gaussian posterior of ``x_j`` given ``y_j`` under prior variances ``gamma``.

    Computes ``diag(Sigma)`` with
    ``Sigma = Gamma - Gamma Phi^T (sigma^2 I + Phi Gamma Phi^T)^{-1} Phi Gamma``
    and ``mu = Gamma Phi^T (sigma^2 I + Phi Gamma Phi^T)^{-1} y`` (equal to
    ``sigma^-2 Sigma Phi^T y``), plus the log marginal likelihood
    ``log N(y; 0, sigma^2 I + Phi Gamma Phi^T)``.
    """
    phi, y, s2 = meas.phi, meas.y, float(meas.noise_var)
    if not s2 > 0:
        raise InvalidArgumentError(f"noise variance {s2} must be > 0")
    if not (np.isfinite(phi).all() and np.isfinite(y).all() and math.isfinite(s2)):
        raise NumericError("non-finite measurement data")
    m, n = phi.shape
    gamma = _check_gamma(gamma, n)

    pg = phi * gamma  # Phi Gamma
    S = pg @ phi.T
    S.flat[:: m + 1] += s2
    # raw LAPACK calls: these matrices are tiny and the wrapper overhead dominates
    c, info = lapack.dpotrf(S, lower=1, clean=1)
    if info != 0:
        raise NumericError("E-step covariance is not positive definite")
    W, _ = lapack.dtrtrs(c, pg, lower=1)  # C^-1 Phi Gamma
    z, _ = lapack.dtrtrs(c, y, lower=1)  # C^-1 y
    sigma_diag = gamma - np.einsum("ij,ij->j", W, W)
    np.clip(sigma_diag, 0.0, gamma, out=sigma_diag)
    mu = W.T @ z
    logdet = 2.0 * float(np.log(c.diagonal()).sum())
    loglik = -0.5 * (m * LOG_2PI + logdet + float(z @ z))
    if not (np.isfinite(mu).all() and math.isfinite(loglik)):
        raise NumericError("E-step produced non-finite values")
    return PosteriorStats(mu, sigma_diag, sigma_diag + mu * mu, loglik)


def _stack_a(stats) -> np.ndarray:
    if isinstance(stats, np.ndarray):
        a = np.atleast_2d(stats)
    else:
        stats = list(stats)
        if not stats:
            raise InvalidArgumentError("M-step needs at least one node")
        a = np.stack([s.a if isinstance(s, PosteriorStats) else np.asarray(s, float) for s in stats])
    if a.shape[0] == 0:
        raise InvalidArgumentError("M-step needs at least one node")
    return a


def m_step_centralized(stats) -> np.ndarray:
    """``gamma(i) = mean_j a_j(i)``; accepts PosteriorStats or an ``(L, n)`` array."""
    a = _stack_a(stats)
    gamma = np.zeros(a.shape[1])
    for row in a:  # fixed ascending-node reduction order
        gamma += row
    return gamma / a.shape[0]


def m_step_cost(gamma, stats) -> float:
    """``sum_j sum_i log gamma(i) + a_j(i) / gamma(i)`` (minimized by the M-step)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~(gamma > 0)):
        raise InvalidArgumentError("m_step_cost needs gamma > 0 elementwise")
    a = _stack_a(stats)
    return float(np.sum(np.log(gamma)[None, :] + a / gamma[None, :]))


def map_estimate(gamma, meas: NodeMeasurement) -> np.ndarray:
    """MAP (posterior mean) estimate of ``x_j`` at the given hyperparameters."""
    return e_step(meas, gamma).mu


def threshold_support(gamma, noise_var: float, multiplier: float = 4.0) -> frozenset:
    """Indices with ``gamma(i) > multiplier * noise_var`` (strict)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise InvalidArgumentError("gamma must be nonnegative")
    return frozenset(np.flatnonzero(gamma > multiplier * noise_var).tolist())


def genie_lmmse(meas: NodeMeasurement, true_support, signal_var: float = 1.0) -> np.ndarray:
    """Support-aware LMMSE estimate with prior variance ``signal_var`` on the support.

    Solves the ``k x k`` system ``(Phi_S^T Phi_S / sigma^2 + I / signal_var) x_S
    = Phi_S^T y / sigma^2``; entries off the support are zero.
    """
    n = meas.n
    idx = np.array(sorted(int(i) for i in true_support), dtype=int)
    x = np.zeros(n)
    if idx.size == 0:
        return x
    if not signal_var > 0:
        raise InvalidArgumentError("signal_var must be > 0")
    s2 = float(meas.noise_var)
    ps = meas.phi[:, idx]
    A = ps.T @ ps / s2
    A[np.diag_indices(idx.size)] += 1.0 / signal_var
    try:
        x[idx] = cho_solve(cho_factor(A), ps.T @ meas.y / s2)
    except np.linalg.LinAlgError as exc:
        raise NumericError("restricted LMMSE system is singular") from exc
    if not np.all(np.isfinite(x)):
        raise NumericError("restricted LMMSE system is singular")
    return x


@dataclass
class MSBLResult:
    """Output of :func:`msbl_solve`.

    ``loglik`` holds ``log p(Y; gamma^k)`` for ``k = 0 .. iters``; the last
    entry belongs to the returned ``gamma``.
    """

    gamma: np.ndarray
    x_hat: np.ndarray
    supports: list
    loglik: list = field(default_factory=list)
    iters: int = 0
    converged: bool = False
    gamma_history: list = field(default_factory=list)


def msbl_solve(meas: MeasurementSet, cfg: SolverConfig | None = None, keep_history: bool = False) -> MSBLResult:
    """Run EM until ``||gamma^k - gamma^{k-1}||_2 <= eps`` or ``k_max`` M-steps."""
    cfg = cfg or SolverConfig()
    nodes = meas.nodes()
    gamma = np.full(meas.n, cfg.gamma_init)
    trace, history = [], []
    k, converged = 0, False
    while True:
        stats = [e_step(nm, gamma) for nm in nodes]
        trace.append(sum(s.loglik for s in stats))
        if keep_history:
            history.append(gamma.copy())
        if converged or k >= cfg.k_max:
            break
        new = m_step_centralized(stats)
        converged = float(np.linalg.norm(new - gamma)) <= cfg.eps
        gamma = new
        k += 1
    x_hat = np.stack([s.mu for s in stats])
    supports = [threshold_support(gamma, nm.noise_var, cfg.threshold_multiplier) for nm in nodes]
    return MSBLResult(gamma, x_hat, supports, trace, k, converged, history)
