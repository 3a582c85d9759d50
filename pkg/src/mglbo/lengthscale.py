"""Alpha-ratio length-scale cool down and the dimension-aware lower bound.

The lower bound comes from a best-case 1D design with spacing ``1/n``; the
sample-free volume it implies is transferred to ``d`` dimensions by
matching ball volumes, and the resulting distance is turned into the
length-scale at which the SE correlation equals ``min_correlation``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .errors import InvalidCorrelation

ZERO_ALPHA = 1e-12


def sphere_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) * r**d / math.gamma(d / 2 + 1)


def equivalent_min_distance(d: int, n: int) -> float:
    """Radius whose ``d``-ball has the volume of a 1D ball of radius ``1/n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if d == 1:
        return 1.0 / n
    target = sphere_volume(1, 1.0 / n)
    return (target * math.gamma(d / 2 + 1) / math.pi ** (d / 2)) ** (1.0 / d)


def length_scale_lower_bound(d: int, n: int, min_correlation: float) -> float:
    if not 0.0 < min_correlation < 1.0:
        raise InvalidCorrelation(f"min_correlation must be in (0, 1), got {min_correlation}")
    if n < 1:
        raise ValueError("n must be >= 1")
    corr_factor = math.sqrt(-1.0 / (2.0 * math.log(min_correlation)))
    inner = math.gamma(d / 2 + 1) / math.gamma(1.5) * math.pi ** (0.5 * (1 - d)) / n
    return corr_factor * inner ** (1.0 / d)


@dataclass(frozen=True)
class CoolDownState:
    current_length_scale: float
    previous_alpha_star: Optional[float] = None
    threshold: float = 1.5
    min_correlation: float = 0.2
    initial_length_scale: float = 1.0
    floor: float = 1e-3

    def __post_init__(self):
        if not self.threshold > 1.0:
            raise ValueError("threshold must exceed 1")
        if not 0.0 < self.min_correlation < 1.0:
            raise InvalidCorrelation(f"min_correlation must be in (0, 1), got {self.min_correlation}")


@dataclass(frozen=True)
class CoolDownDecision:
    new_length_scale: float
    alpha_ratio: float
    reduced: bool
    candidate: float
    lower_bound: float
    reference_alpha: float
    candidate_alpha: float


def alpha_ratio(candidate_alpha: float, reference_alpha: float) -> float:
    if abs(reference_alpha) < ZERO_ALPHA:
        return math.inf if abs(candidate_alpha) > ZERO_ALPHA else 1.0
    return candidate_alpha / reference_alpha


def ar_cool_down(
    state: CoolDownState,
    alpha_star: Callable[[float], float],
    d: int,
    n: int,
    recompute_reference: bool = False,
) -> CoolDownDecision:
    """Decide whether to halve the length-scale.

    ``alpha_star(l)`` must return the minimal acquisition value on the
    current data when the model uses length-scale ``l``. The reference is
    ``state.previous_alpha_star`` unless it is missing or
    ``recompute_reference`` is set, in which case ``alpha_star`` is called
    with the current length-scale.
    """
    current = state.current_length_scale
    bound = max(length_scale_lower_bound(d, n, state.min_correlation), state.floor)
    candidate = min(max(current / 2.0, bound), current)

    if state.previous_alpha_star is None or recompute_reference:
        reference = alpha_star(current)
    else:
        reference = state.previous_alpha_star
    cand_alpha = alpha_star(candidate)
    ratio = alpha_ratio(cand_alpha, reference)

    reduced = candidate < current and ratio > state.threshold
    return CoolDownDecision(
        new_length_scale=candidate if reduced else current,
        alpha_ratio=ratio,
        reduced=reduced,
        candidate=candidate,
        lower_bound=bound,
        reference_alpha=reference,
        candidate_alpha=cand_alpha,
    )


def advance(state: CoolDownState, decision: CoolDownDecision, alpha_star_new: float) -> CoolDownState:
    """State for the next iteration after ``decision`` was applied."""
    return replace(
        state,
        current_length_scale=decision.new_length_scale,
        previous_alpha_star=alpha_star_new,
    )
