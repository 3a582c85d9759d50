"""Benchmark objectives with native boxes and known optima.

Every benchmark is minimized over its native box; ``unit_objective`` maps
the unit cube affinely onto that box so the optimizer never sees native
coordinates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from .gp import Dataset, HyperEstimate, HyperMethod, _factorize, loo_cv_length_scale, ml_hyperparameters, default_length_scale_grid
from .kernels import KernelConfig, gram


@dataclass(frozen=True, eq=False)
class Benchmark:
    name: str
    dim: int
    native_bounds: np.ndarray
    evaluate: Callable[[np.ndarray], float]
    known_optimum_value: Optional[float] = None
    known_optimizer: Optional[np.ndarray] = None
    # default BO iteration budget for the harness
    iterations: int = 60

    def __post_init__(self):
        object.__setattr__(self, "native_bounds", np.asarray(self.native_bounds, float).reshape(self.dim, 2))

    def to_native(self, u) -> np.ndarray:
        lo, hi = self.native_bounds[:, 0], self.native_bounds[:, 1]
        return lo + np.asarray(u, float) * (hi - lo)

    def to_unit(self, x) -> np.ndarray:
        lo, hi = self.native_bounds[:, 0], self.native_bounds[:, 1]
        return (np.asarray(x, float) - lo) / (hi - lo)

    def unit_objective(self, u) -> float:
        return float(self.evaluate(self.to_native(u)))


# ---------------------------------------------------------------------------
# Closed-form test functions
# ---------------------------------------------------------------------------


def quadratic(x) -> float:
    x = np.asarray(x, float)
    return float(x @ x)


def exp_matrix(d: int) -> np.ndarray:
    if d == 1:
        return np.ones(1)
    return 10.0 ** (np.arange(d) / (d - 1))


def exp_paper(x) -> float:
    """``1 - exp(x' C x)``; minimized at the corners of the box."""
    x = np.asarray(x, float)
    with np.errstate(over="ignore"):
        return float(1.0 - np.exp(np.sum(exp_matrix(x.size) * x * x)))


def exp_bowl(x) -> float:
    """``1 - exp(-x' C x)``; minimized at the origin."""
    x = np.asarray(x, float)
    return float(1.0 - np.exp(-np.sum(exp_matrix(x.size) * x * x)))


def rosenbrock(x) -> float:
    x = np.asarray(x, float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def branin(x) -> float:
    x1, x2 = float(x[0]), float(x[1])
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * math.cos(x1) + 10.0


_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array([[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]])

_H6_ALPHA = _H3_ALPHA
_H6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def _hartmann(x, alpha, A, P) -> float:
    x = np.asarray(x, float)
    inner = np.sum(A * (x - P) ** 2, axis=1)
    return float(-np.sum(alpha * np.exp(-inner)))


def hartmann3(x) -> float:
    return _hartmann(x, _H3_ALPHA, _H3_A, _H3_P)


def hartmann6(x) -> float:
    return _hartmann(x, _H6_ALPHA, _H6_A, _H6_P)


def make_exponential(d: int, variant: str = "paper") -> Benchmark:
    C = exp_matrix(d)
    if variant == "paper":
        opt = 1.0 - math.exp(4.0 * float(np.sum(C)))
        return Benchmark(f"exp{d}d", d, [[-2.0, 2.0]] * d, exp_paper, opt, np.full(d, 2.0), iterations=100)
    if variant == "bowl":
        return Benchmark(f"exp{d}d_bowl", d, [[-2.0, 2.0]] * d, exp_bowl, 0.0, np.zeros(d), iterations=100)
    raise ValueError(f"unknown exponential variant {variant!r}")


def standard_suite(exp_variant: str = "paper") -> list:
    return [
        Benchmark("quadratic2d", 2, [[-2.0, 2.0]] * 2, quadratic, 0.0, np.zeros(2), iterations=60),
        make_exponential(5, exp_variant),
        Benchmark("rosenbrock2d", 2, [[-5.0, 10.0]] * 2, rosenbrock, 0.0, np.ones(2), iterations=80),
        Benchmark(
            "branin", 2, [[-5.0, 10.0], [0.0, 15.0]], branin, 0.39788735772973816,
            np.array([-math.pi, 12.275]), iterations=60,
        ),
        Benchmark(
            "hartmann3", 3, [[0.0, 1.0]] * 3, hartmann3, -3.862779787332663,
            np.array([0.11458888, 0.5556489, 0.85254698]), iterations=80,
        ),
        Benchmark(
            "hartmann6", 6, [[0.0, 1.0]] * 6, hartmann6, -3.322368011415515,
            np.array([0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054]),
            iterations=100,
        ),
    ]


# ---------------------------------------------------------------------------
# GP sample objectives
# ---------------------------------------------------------------------------

INNER_FRACTION = 0.6


@dataclass(frozen=True, eq=False)
class InsertedQuadratic:
    """Convex bowl ``min_value + 0.5 (x-c)' H (x-c)`` pasted into a ball.

    Inside ``INNER_FRACTION * radius`` the bowl is exact; towards the ball
    boundary it blends smoothly back into the surrounding field.
    """

    center: np.ndarray
    radius: float
    min_value: float
    hessian: np.ndarray = field(default=None)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, float))
        object.__setattr__(self, "center", c)
        H = self.hessian
        if H is None:
            H = np.eye(c.size)
        H = np.asarray(H, float)
        if H.ndim == 0:
            H = H * np.eye(c.size)
        object.__setattr__(self, "hessian", H)

    def bowl(self, X: np.ndarray) -> np.ndarray:
        D = X - self.center
        return self.min_value + 0.5 * np.einsum("ij,jk,ik->i", D, self.hessian, D)

    def blend_weight(self, X: np.ndarray) -> np.ndarray:
        """0 in the exact bowl, 1 outside the ball, smoothstep in between."""
        rho = np.linalg.norm(X - self.center, axis=1) / self.radius
        t = np.clip((rho - INNER_FRACTION) / (1.0 - INNER_FRACTION), 0.0, 1.0)
        return t * t * (3.0 - 2.0 * t)


class GPSampleFunction:
    """Piecewise-linear interpolant of one GP draw on a regular grid."""

    def __init__(self, length_scale: float, seed: int, dim: int = 1, grid_resolution: Optional[int] = None,
                 inserted: Sequence[InsertedQuadratic] = ()):
        if dim not in (1, 2):
            raise ValueError("GP sample objectives support 1D and 2D only")
        res = grid_resolution or (256 if dim == 1 else 40)
        if res < 32:
            raise ValueError("grid_resolution must be >= 32")
        self.dim = dim
        self.length_scale = length_scale
        self.axis = np.linspace(0.0, 1.0, res)
        mesh = np.meshgrid(*[self.axis] * dim, indexing="ij")
        self.grid_points = np.column_stack([m.ravel() for m in mesh])
        K = gram(KernelConfig.se(length_scale, 1.0), self.grid_points)
        L, _ = _factorize(K)
        z = np.random.default_rng(seed).standard_normal(len(self.grid_points))
        self.grid_values = L @ z
        self.inserted = tuple(inserted)
        if dim == 2:
            self._interp = RegularGridInterpolator(
                (self.axis, self.axis), self.grid_values.reshape(res, res), method="linear"
            )

    def field(self, X: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return np.interp(X[:, 0], self.axis, self.grid_values)
        return self._interp(np.clip(X, 0.0, 1.0))

    def batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        out = self.field(X)
        for ins in self.inserted:
            w = ins.blend_weight(X)
            q = ins.bowl(X)
            out = q + w * (out - q)
        return out

    def __call__(self, x) -> float:
        return float(self.batch(np.asarray(x, float).reshape(1, -1))[0])


def _global_min(fn: GPSampleFunction) -> tuple[float, np.ndarray]:
    """Exhaustive fine-grid scan followed by bounded local refinement."""
    fine = 20001 if fn.dim == 1 else 401
    axis = np.linspace(0.0, 1.0, fine)
    mesh = np.meshgrid(*[axis] * fn.dim, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    extra = [fn.grid_points] + [ins.center.reshape(1, -1) for ins in fn.inserted]
    pts = np.vstack([pts] + [e for e in extra if np.all((e >= 0) & (e <= 1))])
    vals = fn.batch(pts)
    best_v, best_x = float(np.min(vals)), pts[int(np.argmin(vals))]
    for j in np.argsort(vals)[:8]:
        res = optimize.minimize(
            fn, pts[j], method="Nelder-Mead", bounds=[(0.0, 1.0)] * fn.dim,
            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000},
        )
        if res.fun < best_v:
            best_v, best_x = float(res.fun), np.clip(res.x, 0.0, 1.0)
    return best_v, best_x


def gp_sample_objective(
    length_scale: float,
    seed: int,
    grid_resolution: Optional[int] = None,
    inserted_regions: Sequence[InsertedQuadratic] = (),
    dim: int = 1,
    name: Optional[str] = None,
    iterations: int = 40,
) -> Benchmark:
    fn = GPSampleFunction(length_scale, seed, dim, grid_resolution, inserted_regions)
    opt_v, opt_x = _global_min(fn)
    name = name or f"gp{dim}d_l{length_scale:g}_s{seed}"
    return Benchmark(name, dim, [[0.0, 1.0]] * dim, fn, opt_v, opt_x, iterations=iterations)


def heteroscedastic_objective(seed: int, depth: float = 2.0) -> Benchmark:
    """1D GP draw with ``l=0.05`` and one deep convex bowl inserted.

    The bowl sits at 0.7 with radius 0.15; its floor lies ``depth`` below
    the lowest value of the underlying draw.
    """
    base = GPSampleFunction(0.05, seed, 1)
    floor = float(np.min(base.grid_values)) - depth
    radius = 0.15
    # bowl rises to roughly the field's upper range at the ball edge
    rise = float(np.max(base.grid_values)) - floor
    curvature = 2.0 * rise / radius**2
    bowl = InsertedQuadratic(np.array([0.7]), radius, floor, np.array([[curvature]]))
    return gp_sample_objective(0.05, seed, inserted_regions=[bowl], name=f"hetero1d_s{seed}", iterations=40)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_GP_NAME = re.compile(r"^gp(?P<d>[12])d_l(?P<l>[0-9.eE-]+)_s(?P<s>\d+)$")
_HETERO_NAME = re.compile(r"^hetero1d_s(?P<s>\d+)$")
_EXP_NAME = re.compile(r"^exp(?P<d>\d+)d(?P<bowl>_bowl)?$")


STANDARD_NAMES = ("quadratic2d", "exp5d", "rosenbrock2d", "branin", "hartmann3", "hartmann6")


def is_benchmark_name(name: str) -> bool:
    return name in STANDARD_NAMES or any(p.match(name) for p in (_EXP_NAME, _GP_NAME, _HETERO_NAME))


def get_benchmark(name: str, exp_variant: str = "paper") -> Benchmark:
    """Resolve a benchmark by name.

    Besides the standard suite this accepts ``exp<d>d``/``exp<d>d_bowl``,
    ``gp<d>d_l<l>_s<seed>`` and ``hetero1d_s<seed>``.
    """
    for bench in standard_suite(exp_variant):
        if bench.name == name:
            return bench
    m = _EXP_NAME.match(name)
    if m:
        return make_exponential(int(m["d"]), "bowl" if m["bowl"] else exp_variant)
    m = _GP_NAME.match(name)
    if m:
        return gp_sample_objective(float(m["l"]), int(m["s"]), dim=int(m["d"]))
    m = _HETERO_NAME.match(name)
    if m:
        return heteroscedastic_objective(int(m["s"]))
    raise KeyError(f"unknown benchmark {name!r}")


# ---------------------------------------------------------------------------
# A-posteriori hyperparameters
# ---------------------------------------------------------------------------


def optimal_hyperparameters(
    benchmark: Benchmark,
    n_samples: int = 1000,
    seed: int = 0,
    loo_subsample: int = 300,
    min_correlation: float = 0.2,
) -> HyperEstimate:
    """Length-scale by LOO-CV and prior mean/variance by ML on random samples.

    The LOO-CV runs on the first ``loo_subsample`` of the uniform draws (a
    uniform subsample); ML uses all ``n_samples``.
    """
    rng = np.random.default_rng([seed, benchmark.dim])
    U = rng.random((n_samples, benchmark.dim))
    y = np.array([benchmark.unit_objective(u) for u in U])
    data = Dataset(U, y)
    sub = data.subset(np.arange(min(loo_subsample, n_samples)))
    grid = default_length_scale_grid(len(sub), benchmark.dim, min_correlation)
    length_scale = loo_cv_length_scale(sub, grid)
    ml = ml_hyperparameters(data, length_scale)
    return HyperEstimate(ml.c_mu, ml.sigma_f_sq, length_scale, HyperMethod.LOO_CV)
