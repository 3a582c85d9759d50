"""Expected Improvement and its minimization over the unit hypercube.

EI is written as a non-positive quantity to be minimized:
``-sigma * (u * Phi(u) + phi(u))`` with ``u = (best - mean) / sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special
from scipy.stats import qmc

from .gp import GPPosterior
from .kernels import Region

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class SearchBudget:
    """Inner optimizer settings: space-filling candidates plus simplex refinement."""

    candidates_per_dim: int = 250
    n_refine: int = 5
    refine_iterations: int = 100
    xatol: float = 1e-10
    fatol: float = 1e-15


@dataclass(frozen=True, eq=False)
class AcquisitionResult:
    minimizer: np.ndarray
    value: float
    restarts_used: int
    per_region_values: Optional[list] = None
    # (point, value) pairs, best first; used to dodge duplicate queries
    ranked: tuple = ()


def improvement_factor(u):
    """``u * Phi(u) + phi(u)``, computed without cancellation for negative u."""
    u = np.asarray(u, float)
    out = np.empty_like(u)
    pos = u >= 0
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        up = u[pos]
        out[pos] = up * special.ndtr(up) + _INV_SQRT_2PI * np.exp(-0.5 * up * up)
        un = u[~pos]
        bracket = _INV_SQRT_2PI + 0.5 * un * special.erfcx(-un * _SQRT_HALF)
        out[~pos] = np.exp(-0.5 * un * un) * np.maximum(bracket, 0.0)
    return out


def ei_array(mean, std, best_so_far: float) -> np.ndarray:
    mean = np.asarray(mean, float)
    std = np.asarray(std, float)
    gap = best_so_far - mean
    # zero spread: the improvement is deterministic
    out = -np.maximum(gap, 0.0)
    pos = std > 0
    if np.any(pos):
        with np.errstate(over="ignore", divide="ignore"):
            u = gap[pos] / std[pos]
            val = -std[pos] * improvement_factor(u)
        # infinite u (std far below the gap): the zero-spread limit is exact
        out[pos] = np.where(np.isfinite(val), val, out[pos])
    return out


def ei(mean: float, std: float, best_so_far: float) -> float:
    if std < 0:
        raise ValueError("std must be non-negative")
    return float(ei_array(np.array([mean]), np.array([std]), best_so_far)[0])


def acquisition_values(gp: GPPosterior, X, best_so_far: float) -> np.ndarray:
    mean, var = gp.predict(X)
    return ei_array(mean, np.sqrt(var), best_so_far)


def _cube_corners(d: int) -> np.ndarray:
    if d > 6:
        return np.zeros((0, d))
    grid = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij"))
    return grid.reshape(d, -1).T


def _candidates(d: int, n: int, seed: int, ball: Optional[Region]) -> np.ndarray:
    sampler = qmc.Halton(d, scramble=True, seed=seed)
    if ball is None:
        return np.vstack([sampler.random(n), _cube_corners(d)])
    lo = np.clip(ball.center - ball.radius, 0.0, 1.0)
    hi = np.clip(ball.center + ball.radius, 0.0, 1.0)
    raw = lo + (hi - lo) * sampler.random(4 * n)
    inside = np.linalg.norm(raw - ball.center, axis=1) <= ball.radius
    extra = [ball.center]
    if _feasible(ball.predicted_min_point, ball):
        extra.append(ball.predicted_min_point)
    return np.vstack([np.array(extra), raw[inside][:n]])


def _feasible(x: np.ndarray, ball: Optional[Region]) -> bool:
    if np.any(x < 0.0) or np.any(x > 1.0):
        return False
    return ball is None or np.linalg.norm(x - ball.center) <= ball.radius


def minimize_acquisition(
    gp: GPPosterior,
    best_so_far: Optional[float] = None,
    budget: SearchBudget = SearchBudget(),
    seed: int = 0,
    ball: Optional[Region] = None,
) -> AcquisitionResult:
    """Multi-start minimization of EI over the unit cube (or a ball inside it).

    EI is scored on a scrambled Halton set, the best ``n_refine`` distinct
    candidates are polished with bounded Nelder-Mead, and the lowest probe
    wins. Steps that leave ``ball`` are rejected by an infinite objective.
    """
    d = gp.data.dim
    if best_so_far is None:
        best_so_far = float(np.min(gp.data.values))
    cand = _candidates(d, budget.candidates_per_dim * d, seed, ball)
    vals = acquisition_values(gp, cand, best_so_far)

    order = np.argsort(vals, kind="stable")
    starts = []
    for j in order:
        if len(starts) >= budget.n_refine:
            break
        if all(np.any(cand[j] != cand[s]) for s in starts):
            starts.append(j)

    def fun(x):
        if not _feasible(x, ball):
            return np.inf
        return float(acquisition_values(gp, x.reshape(1, -1), best_so_far)[0])

    step = 0.5 * (len(cand) ** (-1.0 / d))
    if ball is not None:
        step = min(step, 0.5 * ball.radius)
    probes = [(cand[j], float(vals[j])) for j in order]
    for j in starts:
        x0 = cand[j]
        simplex = np.vstack([x0] + [_simplex_vertex(x0, i, step) for i in range(d)])
        res = optimize.minimize(
            fun,
            x0,
            method="Nelder-Mead",
            bounds=[(0.0, 1.0)] * d,
            options={
                "maxiter": budget.refine_iterations,
                "xatol": budget.xatol,
                "fatol": budget.fatol,
                "initial_simplex": simplex,
            },
        )
        x = np.clip(res.x, 0.0, 1.0)
        if _feasible(x, ball):
            probes.append((x, fun(x)))

    probes.sort(key=lambda p: p[1])
    best_x, best_v = probes[0]
    return AcquisitionResult(
        minimizer=np.array(best_x, float),
        value=float(best_v),
        restarts_used=len(starts),
        ranked=tuple(probes),
    )


def _simplex_vertex(x0: np.ndarray, i: int, step: float) -> np.ndarray:
    v = x0.copy()
    v[i] = x0[i] + step if x0[i] + step <= 1.0 else x0[i] - step
    return v


def minimize_acquisition_mgl(
    global_gp: GPPosterior,
    region_gps: Sequence[tuple],
    best_so_far: float,
    budget: SearchBudget = SearchBudget(),
    seed: int = 0,
) -> AcquisitionResult:
    """Solve the global SE sub-problem and one ball-constrained problem per region.

    The sub-problems share no state, so the merge is a plain argmin; ties go
    to the lowest region index and the global branch loses ties.
    """
    glob = minimize_acquisition(global_gp, best_so_far, budget, seed)
    per_region = []
    for i, (region, gp) in enumerate(region_gps):
        res = minimize_acquisition(gp, best_so_far, budget, seed, ball=region)
        per_region.append((i, res.minimizer, res.value, res))

    winner, restarts = glob, glob.restarts_used
    for _, _, value, res in per_region:
        restarts += res.restarts_used
    for _, _, value, res in reversed(per_region):
        if value <= winner.value:
            winner = res
    ranked = sorted(
        [p for _, _, _, r in per_region for p in r.ranked] + list(glob.ranked),
        key=lambda p: p[1],
    )
    return AcquisitionResult(
        minimizer=winner.minimizer,
        value=winner.value,
        restarts_used=restarts,
        per_region_values=[(i, x, v) for i, x, v, _ in per_region],
        ranked=tuple(ranked),
    )
