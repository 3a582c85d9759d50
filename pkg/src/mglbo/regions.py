"""Local minimum region identification.

Every sample seeds a growing k-nearest-neighbour ball. A quadratic is fitted
to the samples in the ball; the ball becomes a candidate region when the fit
is convex, its minimizer lies inside the ball, improves on the best sample,
has not already been sampled, and no outside sample crowds the ball. The
surviving candidates are made pairwise disjoint, best predicted value first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import RankDeficient
from .gp import Dataset
from .kernels import Region

RANK_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class QuadraticFit:
    """Least-squares model ``beta0 + beta1 @ x + 0.5 * x @ hessian @ x``."""

    beta0: float
    beta1: np.ndarray
    hessian: np.ndarray
    residual_sse: float

    def __call__(self, x) -> float:
        x = np.asarray(x, float)
        return float(self.beta0 + self.beta1 @ x + 0.5 * x @ self.hessian @ x)

    def stationary_point(self, paper_literal: bool = False) -> np.ndarray:
        """Zero of the model gradient, ``-B^-1 beta1``.

        ``paper_literal`` halves it (the alternative fidelity mode).
        """
        x = -linalg.solve(self.hessian, self.beta1, assume_a="sym")
        return 0.5 * x if paper_literal else x

    def value_at(self, x, paper_literal: bool = False) -> float:
        if not paper_literal:
            return self(x)
        x = np.asarray(x, float)
        return float(self.beta0 + self.beta1 @ x + x @ self.hessian @ x)


@dataclass(frozen=True)
class LmriConfig:
    epsilon: float = 1e-9
    ignorance_threshold: float = 0.05
    pd_tolerance: float = 1e-10
    continue_on_reject: bool = False
    paper_literal_minimizer: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def n_unknowns(d: int) -> int:
    return 1 + d + d * (d + 1) // 2


def _design(Z: np.ndarray) -> np.ndarray:
    n, d = Z.shape
    cols = [np.ones(n)]
    cols += [Z[:, i] for i in range(d)]
    cols += [0.5 * Z[:, i] ** 2 for i in range(d)]
    cols += [Z[:, i] * Z[:, j] for i in range(d) for j in range(i + 1, d)]
    return np.column_stack(cols)


def fit_quadratic(points, values) -> QuadraticFit:
    """Least-squares quadratic with a symmetric Hessian.

    The Hessian is parametrized by its upper triangle: diagonal entries
    multiply ``x_i^2 / 2`` and each off-diagonal entry multiplies
    ``x_i * x_j`` once, which accounts for the symmetric duplicate. The fit
    runs in centred and scaled coordinates and is mapped back.
    """
    X = np.atleast_2d(np.asarray(points, float))
    y = np.asarray(values, float).reshape(-1)
    n, d = X.shape
    nu = n_unknowns(d)
    if n < nu:
        raise RankDeficient(f"{n} points cannot determine {nu} coefficients")
    center = X.mean(axis=0)
    scale = float(np.max(np.abs(X - center)))
    if scale == 0.0:
        raise RankDeficient("all points coincide")
    Z = (X - center) / scale
    A = _design(Z)
    coef, _, rank, sv = np.linalg.lstsq(A, y, rcond=RANK_RCOND)
    if rank < nu:
        raise RankDeficient(f"design matrix rank {rank} < {nu}")

    a0, a1 = coef[0], coef[1 : 1 + d]
    Hz = np.diag(coef[1 + d : 1 + 2 * d])
    off = coef[1 + 2 * d :]
    pos = 0
    for i in range(d):
        for j in range(i + 1, d):
            Hz[i, j] = Hz[j, i] = off[pos]
            pos += 1

    hessian = Hz / scale**2
    beta1 = a1 / scale - hessian @ center
    beta0 = a0 - a1 @ center / scale + 0.5 * center @ hessian @ center
    resid = A @ coef - y
    return QuadraticFit(float(beta0), beta1, hessian, float(resid @ resid))


def knn(query, points, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the ``k`` nearest points; ties by lower index."""
    P = np.atleast_2d(np.asarray(points, float))
    if k > P.shape[0]:
        raise ValueError(f"k={k} exceeds {P.shape[0]} points")
    dist = np.linalg.norm(P - np.asarray(query, float), axis=1)
    order = np.argsort(dist, kind="stable")[:k]
    return order, dist[order]


def distance_to_ball(x, region: Region) -> float:
    return max(float(np.linalg.norm(np.asarray(x, float) - region.center)) - region.radius, 0.0)


def is_positive_definite(B: np.ndarray, rel_tol: float = 1e-10) -> bool:
    tr = float(np.trace(B))
    if not tr > 0:
        return False
    try:
        np.linalg.cholesky(B - rel_tol * tr * np.eye(B.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


def _disjoint(a: Region, b: Region) -> bool:
    return float(np.linalg.norm(a.center - b.center)) > a.radius + b.radius


def remove_overlaps(candidates: list) -> list:
    """Keep regions best ``predicted_min_value`` first, dropping any that overlap a kept one."""
    order = sorted(range(len(candidates)), key=lambda j: candidates[j].predicted_min_value)
    kept = []
    for j in order:
        reg = candidates[j]
        if all(_disjoint(reg, other) for other in kept):
            kept.append(reg)
    return kept


def candidate_regions(data: Dataset, cfg: LmriConfig = LmriConfig(), rejections: Optional[list] = None) -> list:
    X, y = data.points, data.values
    n, d = X.shape
    nu = n_unknowns(d)
    y_min = float(np.min(y)) if n else np.inf
    out = []

    def reject(i, k, reason):
        if rejections is not None:
            rejections.append((i, k, reason))
        return cfg.continue_on_reject

    for i in range(n):
        for k in range(nu, min(2 * nu, n - 1) + 1):
            idx, dist = knn(X[i], X, k)
            center, radius = X[i], float(dist[-1])
            try:
                fit = fit_quadratic(X[idx], y[idx])
            except RankDeficient:
                if rejections is not None:
                    rejections.append((i, k, "rank"))
                continue
            if not is_positive_definite(fit.hessian, cfg.pd_tolerance):
                if reject(i, k, "not_pd"):
                    continue
                break
            x_star = fit.stationary_point(cfg.paper_literal_minimizer)
            y_star = fit.value_at(x_star, cfg.paper_literal_minimizer)
            if np.linalg.norm(x_star - center) > radius:
                if reject(i, k, "outside"):
                    continue
                break
            if y_star > y_min:
                if reject(i, k, "no_improvement"):
                    continue
                break
            if np.min(np.linalg.norm(X - x_star, axis=1)) < cfg.epsilon:
                if reject(i, k, "converged"):
                    continue
                break
            others = np.setdiff1d(np.arange(n), idx)
            tau = np.min(np.linalg.norm(X[others] - center, axis=1)) - radius
            if max(tau, 0.0) < cfg.ignorance_threshold:
                if reject(i, k, "ignorance"):
                    continue
                break
            out.append(
                Region(
                    center=center.copy(),
                    radius=radius,
                    beta0=fit.beta0,
                    beta1=fit.beta1,
                    hessian=fit.hessian,
                    predicted_min_point=x_star,
                    predicted_min_value=y_star,
                    member_indices=tuple(int(j) for j in np.sort(idx)),
                )
            )
    return out


def identify_regions(data: Dataset, cfg: LmriConfig = LmriConfig(), rejections: Optional[list] = None) -> list:
    """Pairwise disjoint convex regions found in ``data`` (possibly none)."""
    return remove_overlaps(candidate_regions(data, cfg, rejections))
