"""Kernel functions: squared exponential, quadratic and Mixed-Global-Local.

The MGL kernel is quadratic inside each convex region, squared exponential
between two points that both lie outside every region, and zero otherwise.
Because the cross terms vanish, a GP with this kernel splits into one
independent GP per region plus one for the exterior.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class KernelVariant(str, enum.Enum):
    SE = "SE"
    QUADRATIC = "Quadratic"
    MGL = "MGL"


@dataclass(frozen=True, eq=False)
class Region:
    """Closed ball with a fitted convex quadratic model.

    The model is ``beta0 + beta1 @ x + 0.5 * x @ hessian @ x`` in absolute
    (unit-cube) coordinates.
    """

    center: np.ndarray
    radius: float
    beta0: float
    beta1: np.ndarray
    hessian: np.ndarray
    predicted_min_point: np.ndarray
    predicted_min_value: float
    member_indices: tuple = ()

    def contains(self, x) -> bool:
        return bool(np.linalg.norm(np.asarray(x, float) - self.center) <= self.radius)


@dataclass(frozen=True, eq=False)
class KernelConfig:
    variant: KernelVariant = KernelVariant.SE
    length_scale: float = 1.0
    sigma_f_sq: float = 1.0
    regions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not self.sigma_f_sq > 0:
            raise ValueError(f"sigma_f_sq must be positive, got {self.sigma_f_sq}")
        object.__setattr__(self, "variant", KernelVariant(self.variant))
        object.__setattr__(self, "regions", tuple(self.regions))

    @classmethod
    def se(cls, length_scale: float, sigma_f_sq: float = 1.0) -> "KernelConfig":
        return cls(KernelVariant.SE, length_scale, sigma_f_sq)

    @classmethod
    def quadratic(cls) -> "KernelConfig":
        return cls(KernelVariant.QUADRATIC)

    @classmethod
    def mgl(cls, length_scale: float, sigma_f_sq: float, regions: Sequence[Region] = ()) -> "KernelConfig":
        return cls(KernelVariant.MGL, length_scale, sigma_f_sq, tuple(regions))

    def with_length_scale(self, length_scale: float) -> "KernelConfig":
        return KernelConfig(self.variant, length_scale, self.sigma_f_sq, self.regions)


def k_se(x, y, l: float, sigma_f_sq: float = 1.0) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    r2 = float(np.sum((x - y) ** 2))
    return sigma_f_sq * float(np.exp(-0.5 * r2 / l**2))


def k_quadratic(x, y) -> float:
    return (float(np.dot(x, y)) + 1.0) ** 2


def region_membership(x, regions: Sequence[Region]) -> Optional[int]:
    """Index of the region whose closed ball contains ``x``, else None."""
    x = np.asarray(x, float)
    for i, reg in enumerate(regions):
        if np.linalg.norm(x - reg.center) <= reg.radius:
            return i
    return None


def k_mgl(x, y, cfg: KernelConfig) -> float:
    ix = region_membership(x, cfg.regions)
    iy = region_membership(y, cfg.regions)
    if ix is None and iy is None:
        return k_se(x, y, cfg.length_scale, cfg.sigma_f_sq)
    if ix is not None and ix == iy:
        return k_quadratic(x, y)
    return 0.0


def kernel_value(x, y, cfg: KernelConfig) -> float:
    if cfg.variant is KernelVariant.SE:
        return k_se(x, y, cfg.length_scale, cfg.sigma_f_sq)
    if cfg.variant is KernelVariant.QUADRATIC:
        return k_quadratic(x, y)
    return k_mgl(x, y, cfg)


# ---------------------------------------------------------------------------
# Vectorised Gram matrices
# ---------------------------------------------------------------------------


def memberships(X: np.ndarray, regions: Sequence[Region]) -> np.ndarray:
    """Region index per row of ``X``; -1 marks the exterior."""
    X = np.atleast_2d(np.asarray(X, float))
    out = np.full(X.shape[0], -1, dtype=int)
    for i, reg in enumerate(regions):
        inside = np.linalg.norm(X - reg.center, axis=1) <= reg.radius
        out[(out < 0) & inside] = i
    return out


def gram(cfg: KernelConfig, X, Y=None) -> np.ndarray:
    """Kernel matrix ``[k(x, y)]`` for rows of ``X`` and ``Y``."""
    X = np.atleast_2d(np.asarray(X, float))
    symmetric = Y is None
    Y = X if symmetric else np.atleast_2d(np.asarray(Y, float))
    if cfg.variant is KernelVariant.QUADRATIC:
        K = (X @ Y.T + 1.0) ** 2
    else:
        diff = X[:, None, :] - Y[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        K = cfg.sigma_f_sq * np.exp(-0.5 * d2 / cfg.length_scale**2)
        if cfg.variant is KernelVariant.MGL and cfg.regions:
            mx = memberships(X, cfg.regions)
            my = mx if symmetric else memberships(Y, cfg.regions)
            both_out = (mx[:, None] < 0) & (my[None, :] < 0)
            same = (mx[:, None] >= 0) & (mx[:, None] == my[None, :])
            K = np.where(both_out, K, 0.0)
            K = np.where(same, (X @ Y.T + 1.0) ** 2, K)
    if symmetric:
        K = 0.5 * (K + K.T)
    return K


def kernel_diag(cfg: KernelConfig, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    if cfg.variant is KernelVariant.SE:
        return np.full(X.shape[0], cfg.sigma_f_sq)
    quad = (np.sum(X**2, axis=1) + 1.0) ** 2
    if cfg.variant is KernelVariant.QUADRATIC:
        return quad
    m = memberships(X, cfg.regions)
    return np.where(m >= 0, quad, cfg.sigma_f_sq)
