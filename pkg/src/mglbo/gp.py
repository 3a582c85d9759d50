"""Gaussian process posterior with a constant prior mean.

Observations are treated as noise free. A small diagonal jitter keeps the
kernel matrix factorizable; it starts at ``1e-8`` times the mean prior
variance and is escalated tenfold up to ``1e-2`` times that scale.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import AllCandidatesFailed, FactorizationFailure
from .kernels import KernelConfig, gram, kernel_diag

log = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_MAX = 1e-2
SIGNAL_VARIANCE_FLOOR = 1e-12
LOO_GRID_SIZE = 25
LOO_GRID_MAX = 2.0


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed points in the unit hypercube and their objective values."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 0)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if pts.shape[0] != vals.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {vals.shape[0]} values")
        if pts.size and (np.any(pts < 0.0) or np.any(pts > 1.0)):
            raise ValueError("points must lie in the unit hypercube")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def append(self, x, y: float) -> "Dataset":
        x = np.asarray(x, float).reshape(1, -1)
        return Dataset(np.vstack([self.points, x]), np.append(self.values, y))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.points[idx].reshape(len(idx), self.dim), self.values[idx])


class HyperMethod(str, enum.Enum):
    MAX_LIKELIHOOD = "max_likelihood"
    LOO_CV = "loo_cv"
    FIXED = "fixed"


@dataclass(frozen=True)
class HyperEstimate:
    c_mu: float
    sigma_f_sq: float
    length_scale: float
    method: HyperMethod = HyperMethod.FIXED

    def __post_init__(self):
        if not (self.sigma_f_sq > 0 and self.length_scale > 0):
            raise ValueError("sigma_f_sq and length_scale must be positive")


def _factorize(K: np.ndarray, jitter: Optional[float] = None):
    """Cholesky factor of ``K + jitter*I`` with tenfold jitter escalation."""
    n = K.shape[0]
    scale = float(np.mean(np.diag(K))) if n else 1.0
    if not scale > 0:
        scale = 1.0
    jit = JITTER_START * scale if jitter is None else float(jitter)
    ceiling = JITTER_MAX * scale
    while True:
        try:
            L = linalg.cholesky(K + jit * np.eye(n), lower=True, check_finite=True)
            return L, jit
        except (linalg.LinAlgError, ValueError):
            if jit * 10.0 > ceiling * (1.0 + 1e-12):
                raise FactorizationFailure(
                    f"kernel matrix not positive definite with jitter {jit:.3g}"
                ) from None
            jit *= 10.0


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """Immutable posterior; safe to share between threads for queries."""

    data: Dataset
    kernel: KernelConfig
    prior_mean: float
    factor: np.ndarray
    alpha: np.ndarray
    jitter: float

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, float))
        prior_var = kernel_diag(self.kernel, X)
        if len(self.data) == 0:
            return np.full(X.shape[0], self.prior_mean), prior_var
        Ks = gram(self.kernel, X, self.data.points)
        mean = self.prior_mean + Ks @ self.alpha
        v = linalg.solve_triangular(self.factor, Ks.T, lower=True, check_finite=False)
        var = prior_var - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def mean_var(self, x) -> tuple[float, float]:
        mean, var = self.predict(np.asarray(x, float).reshape(1, -1))
        return float(mean[0]), float(var[0])


def fit_posterior(
    data: Dataset,
    kernel: KernelConfig,
    c_mu: float = 0.0,
    jitter: Optional[float] = None,
) -> GPPosterior:
    """Condition the prior ``GP(c_mu, k)`` on ``data``.

    An empty dataset yields the prior itself.
    """
    if len(data) == 0:
        return GPPosterior(data, kernel, float(c_mu), np.zeros((0, 0)), np.zeros(0), 0.0)
    K = gram(kernel, data.points)
    L, jit = _factorize(K, jitter)
    alpha = linalg.cho_solve((L, True), data.values - c_mu, check_finite=False)
    return GPPosterior(data, kernel, float(c_mu), L, alpha, jit)


def posterior_mean_var(gp: GPPosterior, x) -> tuple[float, float]:
    return gp.mean_var(x)


# ---------------------------------------------------------------------------
# Hyperparameter estimation
# ---------------------------------------------------------------------------


def _unit_variance(kernel: KernelConfig) -> KernelConfig:
    if kernel.sigma_f_sq == 1.0:
        return kernel
    return KernelConfig(kernel.variant, kernel.length_scale, 1.0, kernel.regions)


def ml_constant_mean(data: Dataset, kernel: KernelConfig) -> float:
    """Closed-form ML prior mean ``(1' K^-1 y) / (1' K^-1 1)``.

    Values are shifted by the first observation before solving so that a
    constant dataset returns its constant exactly.
    """
    if len(data) == 0:
        raise ValueError("need at least one observation")
    L, _ = _factorize(gram(kernel, data.points))
    y0 = data.values[0]
    ones = np.ones(len(data))
    w = linalg.cho_solve((L, True), ones, check_finite=False)
    return float(y0 + w @ (data.values - y0) / (w @ ones))


def ml_signal_variance(data: Dataset, correlation_kernel: KernelConfig, c_mu: float) -> float:
    """Profile-likelihood optimum ``r' R^-1 r / N`` of the prior variance."""
    if len(data) == 0:
        raise ValueError("need at least one observation")
    R = gram(_unit_variance(correlation_kernel), data.points)
    L, _ = _factorize(R)
    r = data.values - c_mu
    z = linalg.solve_triangular(L, r, lower=True, check_finite=False)
    s2 = float(z @ z) / len(data)
    if not s2 > SIGNAL_VARIANCE_FLOOR:
        log.debug("signal variance %.3g below floor; degenerate data", s2)
        return SIGNAL_VARIANCE_FLOOR
    return s2


def log_marginal_likelihood(data: Dataset, kernel: KernelConfig, c_mu: float) -> float:
    K = gram(kernel, data.points)
    L, _ = _factorize(K)
    r = data.values - c_mu
    z = linalg.solve_triangular(L, r, lower=True, check_finite=False)
    n = len(data)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi))


def ml_hyperparameters(data: Dataset, length_scale: float) -> HyperEstimate:
    """ML prior mean and variance of an SE prior with the given length-scale."""
    corr = KernelConfig.se(length_scale, 1.0)
    c_mu = ml_constant_mean(data, corr)
    s2 = ml_signal_variance(data, corr, c_mu)
    return HyperEstimate(c_mu, s2, length_scale, HyperMethod.MAX_LIKELIHOOD)


def loo_residuals(data: Dataset, kernel: KernelConfig, c_mu: float) -> np.ndarray:
    """Leave-one-out residuals ``y_i - mu_{-i}(x_i)`` from ``K^-1``."""
    L, _ = _factorize(gram(kernel, data.points))
    Kinv = linalg.cho_solve((L, True), np.eye(len(data)), check_finite=False)
    return (Kinv @ (data.values - c_mu)) / np.diag(Kinv)


def default_length_scale_grid(n: int, d: int, min_correlation: float = 0.2) -> np.ndarray:
    from .lengthscale import length_scale_lower_bound

    lo = min(length_scale_lower_bound(d, n, min_correlation), LOO_GRID_MAX)
    return np.geomspace(lo, LOO_GRID_MAX, LOO_GRID_SIZE)


def loo_cv_scores(data: Dataset, candidates: Sequence[float]) -> np.ndarray:
    """Sum of squared LOO residuals per candidate; NaN where factorization failed."""
    scores = np.full(len(candidates), np.nan)
    for j, l in enumerate(candidates):
        kernel = KernelConfig.se(float(l), 1.0)
        try:
            c_mu = ml_constant_mean(data, kernel)
            res = loo_residuals(data, kernel, c_mu)
        except FactorizationFailure:
            continue
        scores[j] = float(res @ res)
    return scores


def loo_cv_length_scale(data: Dataset, candidates: Optional[Sequence[float]] = None) -> float:
    """Length-scale minimizing the LOO squared error; ties go to the larger one."""
    if len(data) < 3:
        raise ValueError("LOO-CV needs at least three observations")
    if candidates is None:
        candidates = default_length_scale_grid(len(data), data.dim)
    candidates = np.asarray(candidates, float)
    if candidates.size == 0:
        raise ValueError("empty candidate list")
    scores = loo_cv_scores(data, candidates)
    ok = ~np.isnan(scores)
    if not ok.any():
        raise AllCandidatesFailed("every length-scale candidate failed to factorize")
    best = np.min(scores[ok])
    tol = 1e-9 * best
    tied = ok & (scores <= best + tol)
    return float(np.max(candidates[tied]))
