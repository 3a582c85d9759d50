"""The Bayesian optimization loop with pluggable model adaptation."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .acquisition import AcquisitionResult, SearchBudget, minimize_acquisition, minimize_acquisition_mgl
from .errors import ObjectiveFailure
from .gp import (
    Dataset,
    GPPosterior,
    HyperEstimate,
    HyperMethod,
    default_length_scale_grid,
    fit_posterior,
    loo_cv_length_scale,
    ml_hyperparameters,
)
from .kernels import KernelConfig, memberships
from .lengthscale import CoolDownDecision, CoolDownState, advance, ar_cool_down
from .regions import LmriConfig, identify_regions, n_unknowns

log = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-12


class KernelMode(str, enum.Enum):
    SE_FIXED = "SE_fixed"
    SE_LOOCV = "SE_loocv"
    SE_AR = "SE_ar"
    MGL_AR = "MGL_ar"


@dataclass(frozen=True)
class CoolDownConfig:
    initial_length_scale: float = 1.0
    min_correlation: float = 0.2
    alpha_ratio_threshold: float = 1.5
    recompute_reference: bool = False
    floor: float = 1e-3


@dataclass(frozen=True)
class BoConfig:
    max_iterations: int = 30
    kernel_mode: KernelMode = KernelMode.MGL_AR
    initial_design_size: int = 3
    seed: int = 0
    cool_down: CoolDownConfig = CoolDownConfig()
    lmri: LmriConfig = LmriConfig()
    variance_downscale: float = 100.0
    search: SearchBudget = SearchBudget()
    fixed_hypers: Optional[HyperEstimate] = None
    detect_regions: bool = True

    def __post_init__(self):
        if self.max_iterations < 1 or self.initial_design_size < 1:
            raise ValueError("max_iterations and initial_design_size must be >= 1")
        object.__setattr__(self, "kernel_mode", KernelMode(self.kernel_mode))


@dataclass
class TraceRecord:
    iteration: int
    x: np.ndarray
    y: float
    best_so_far: float
    immediate_regret: float
    length_scale: float = math.nan
    alpha_ratio: float = math.nan
    region_count: int = 0
    reduced: bool = False


@dataclass
class RunTrace:
    dim: int
    known_optimum: Optional[float] = None
    records: list = field(default_factory=list)

    @property
    def best_index(self) -> int:
        return int(np.argmin([r.y for r in self.records]))

    @property
    def best_point(self) -> np.ndarray:
        return self.records[self.best_index].x

    @property
    def best_value(self) -> float:
        return self.records[self.best_index].y

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def latin_hypercube(n: int, d: int, seed: int) -> np.ndarray:
    return qmc.LatinHypercube(d, seed=np.random.default_rng([seed, 0])).random(n)


def _search_seed(run_seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([run_seed, iteration]).generate_state(1)[0])


class SESearch:
    """Per-iteration cache of SE-model acquisition searches.

    All searches of an iteration share one candidate set, so acquisition
    values under different length-scales are directly comparable. Prior
    mean and variance are the ML estimates at ``variance_length_scale``
    (defaulting to the queried length-scale); the cool down pins them to
    the current length-scale so that its alpha ratio isolates the effect
    of the length-scale alone.
    """

    def __init__(self, data: Dataset, cfg: BoConfig, seed: int):
        self.data = data
        self.cfg = cfg
        self.seed = seed
        self.best = float(np.min(data.values))
        self._cache = {}

    def hypers(self, length_scale: float, variance_length_scale: Optional[float] = None) -> HyperEstimate:
        fixed = self.cfg.fixed_hypers
        if fixed is not None:
            return fixed
        if variance_length_scale is None or variance_length_scale == length_scale:
            return ml_hyperparameters(self.data, length_scale)
        h = ml_hyperparameters(self.data, variance_length_scale)
        return HyperEstimate(h.c_mu, h.sigma_f_sq, length_scale, h.method)

    def model(self, length_scale: float, variance_length_scale: Optional[float] = None) -> GPPosterior:
        h = self.hypers(length_scale, variance_length_scale)
        return fit_posterior(self.data, KernelConfig.se(h.length_scale, h.sigma_f_sq), h.c_mu)

    def result(self, length_scale: float, variance_length_scale: Optional[float] = None) -> AcquisitionResult:
        key = (float(length_scale), float(length_scale if variance_length_scale is None else variance_length_scale))
        if key not in self._cache:
            model = self.model(*key)
            self._cache[key] = minimize_acquisition(model, self.best, self.cfg.search, self.seed)
        return self._cache[key]


@dataclass(frozen=True, eq=False)
class AdaptedModel:
    length_scale: float
    hypers: HyperEstimate
    global_gp: GPPosterior
    region_gps: tuple
    decision: Optional[CoolDownDecision]
    search: SESearch

    @property
    def regions(self) -> tuple:
        return tuple(r for r, _ in self.region_gps)


def initial_state(cfg: BoConfig) -> CoolDownState:
    cd = cfg.cool_down
    return CoolDownState(
        current_length_scale=cd.initial_length_scale,
        previous_alpha_star=None,
        threshold=cd.alpha_ratio_threshold,
        min_correlation=cd.min_correlation,
        initial_length_scale=cd.initial_length_scale,
        floor=cd.floor,
    )


def adapt_model(data: Dataset, cfg: BoConfig, state: CoolDownState, iteration: int = 1):
    """Model adaptation for one iteration; returns ``(model, next_state)``.

    Order: length-scale (cool down on the region-free SE model, LOO-CV or
    fixed), then region identification, then ML prior mean and variance on
    the exterior partition.
    """
    d, n = data.dim, len(data)
    mode = cfg.kernel_mode
    search = SESearch(data, cfg, _search_seed(cfg.seed, iteration))
    decision = None

    if mode in (KernelMode.SE_AR, KernelMode.MGL_AR):
        current = state.current_length_scale
        decision = ar_cool_down(
            state,
            lambda l: search.result(l, current).value,
            d,
            n,
            recompute_reference=cfg.cool_down.recompute_reference,
        )
        length_scale = decision.new_length_scale
        state = advance(state, decision, search.result(length_scale).value)
    elif mode is KernelMode.SE_LOOCV:
        grid = default_length_scale_grid(n, d, cfg.cool_down.min_correlation)
        length_scale = loo_cv_length_scale(data, grid)
    elif cfg.fixed_hypers is not None:
        length_scale = cfg.fixed_hypers.length_scale
    else:
        length_scale = cfg.cool_down.initial_length_scale

    regions = []
    if mode is KernelMode.MGL_AR and cfg.detect_regions and n >= n_unknowns(d) + 1:
        regions = identify_regions(data, cfg.lmri)

    if not regions:
        model = AdaptedModel(
            length_scale, search.hypers(length_scale), search.model(length_scale), (), decision, search
        )
        return model, state

    member = memberships(data.points, regions)
    exterior = data.subset(np.flatnonzero(member < 0))
    base = ml_hyperparameters(exterior if len(exterior) else data, length_scale)
    hypers = HyperEstimate(
        base.c_mu, base.sigma_f_sq / cfg.variance_downscale, length_scale, HyperMethod.MAX_LIKELIHOOD
    )
    global_gp = fit_posterior(exterior, KernelConfig.se(length_scale, hypers.sigma_f_sq), hypers.c_mu)
    region_gps = tuple(
        (reg, fit_posterior(data.subset(np.flatnonzero(member == i)), KernelConfig.quadratic(), hypers.c_mu))
        for i, reg in enumerate(regions)
    )
    return AdaptedModel(length_scale, hypers, global_gp, region_gps, decision, search), state


def select_query(model: AdaptedModel, data: Dataset, cfg: BoConfig, iteration: int) -> AcquisitionResult:
    if not model.region_gps:
        return model.search.result(model.length_scale)
    return minimize_acquisition_mgl(
        model.global_gp,
        model.region_gps,
        float(np.min(data.values)),
        cfg.search,
        _search_seed(cfg.seed, iteration),
    )


def _dedupe(result: AcquisitionResult, data: Dataset, rng: np.random.Generator) -> np.ndarray:
    def is_dup(x):
        return np.min(np.linalg.norm(data.points - x, axis=1)) <= DUPLICATE_TOL

    if not is_dup(result.minimizer):
        return result.minimizer
    for x, _ in result.ranked:
        if not is_dup(x):
            log.debug("acquisition minimizer duplicates a sample; using next best candidate")
            return np.asarray(x, float)
    return rng.random(data.dim)


def run_bo(
    objective: Callable[[np.ndarray], float],
    dim: int,
    cfg: BoConfig,
    known_optimum: Optional[float] = None,
) -> RunTrace:
    """Minimize ``objective`` over ``[0, 1]^dim``; deterministic for a fixed seed."""
    trace = RunTrace(dim=dim, known_optimum=known_optimum)
    rng = np.random.default_rng([cfg.seed, 1])

    def evaluate(x):
        try:
            return float(objective(x))
        except Exception as exc:
            raise ObjectiveFailure(f"objective raised at {x!r}: {exc}", trace) from exc

    def regret(best):
        return best - known_optimum if known_optimum is not None else math.nan

    X0 = latin_hypercube(cfg.initial_design_size, dim, cfg.seed)
    data = Dataset.empty(dim)
    best = math.inf
    for x in X0:
        y = evaluate(x)
        data = data.append(x, y)
        best = min(best, y)
        trace.records.append(TraceRecord(0, x.copy(), y, best, regret(best)))

    state = initial_state(cfg)
    for it in range(1, cfg.max_iterations + 1):
        model, state = adapt_model(data, cfg, state, it)
        result = select_query(model, data, cfg, it)
        x = np.clip(_dedupe(result, data, rng), 0.0, 1.0)
        y = evaluate(x)
        data = data.append(x, y)
        best = min(best, y)
        dec = model.decision
        trace.records.append(
            TraceRecord(
                iteration=it,
                x=x.copy(),
                y=y,
                best_so_far=best,
                immediate_regret=regret(best),
                length_scale=model.length_scale,
                alpha_ratio=dec.alpha_ratio if dec is not None else math.nan,
                region_count=len(model.region_gps),
                reduced=bool(dec.reduced) if dec is not None else False,
            )
        )
        log.debug("iter %d y=%.6g best=%.6g l=%.4g regions=%d", it, y, best, model.length_scale, len(model.region_gps))
    return trace
