"""
Fonctions de coût c(x, y) = f(d(x, y)) sur S².

Dans le repère aligné sur la direction de transport, D²_xx c a pour valeurs
propres f''(d) (radiale) et f'(d)·cot d (tangentielle), et
|det D²_xy c| = |f''(d)·f'(d) / sin d|.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from geometry.sphere import FloatArray

from .exceptions import NoRadialSolution

SERIES_CUTOFF = 1e-4
BISECTION_STEPS = 80


class CostKind(enum.StrEnum):
    SQUARED_GEODESIC = "squared_geodesic"
    LOGARITHMIC = "logarithmic"


# Alias de la ligne de commande.
COST_ALIASES = {"sqgeo": CostKind.SQUARED_GEODESIC, "log": CostKind.LOGARITHMIC}


def d_cot_d(d: FloatArray) -> FloatArray:
    """d·cot d, avec la limite 1 en 0."""
    small = np.abs(d) < SERIES_CUTOFF
    safe = np.where(small, 1.0, d)
    return np.where(small, 1.0 - d * d / 3.0, safe / np.tan(safe))


def sinc(d: FloatArray) -> FloatArray:
    """sin d / d, évalué par série près de 0."""
    small = np.abs(d) < SERIES_CUTOFF
    safe = np.where(small, 1.0, d)
    return np.where(small, 1.0 - d * d / 6.0, np.sin(safe) / safe)


@dataclass(frozen=True)
class CostModel:
    kind: CostKind

    @classmethod
    def from_name(cls, name: str) -> CostModel:
        kind = COST_ALIASES.get(name) or CostKind(name)
        return cls(kind=kind)

    @property
    def is_squared_geodesic(self) -> bool:
        return self.kind is CostKind.SQUARED_GEODESIC

    def f(self, d: ArrayLike) -> FloatArray:
        d = np.asarray(d, dtype=float)
        if self.is_squared_geodesic:
            return 0.5 * d * d
        return -2.0 * np.log(1.0 - np.cos(d))

    def fprime(self, d: ArrayLike) -> FloatArray:
        d = np.asarray(d, dtype=float)
        if self.is_squared_geodesic:
            return d
        return -2.0 / np.tan(0.5 * d)

    def fsecond(self, d: ArrayLike) -> FloatArray:
        d = np.asarray(d, dtype=float)
        if self.is_squared_geodesic:
            return np.ones_like(d)
        return 1.0 / np.sin(0.5 * d) ** 2

    @property
    def slope_range(self) -> tuple[float, float]:
        """Intervalle des ‖p‖ admissibles (valeurs de |f'| sur (0, π))."""
        if self.is_squared_geodesic:
            return 0.0, np.pi
        return 0.0, np.inf

    def direction_sign(self) -> float:
        """Signe de f' : la carte suit p (+1) ou -p (-1)."""
        return 1.0 if self.is_squared_geodesic else -1.0

    def distance_for_slope(self, slope: ArrayLike) -> FloatArray:
        """
        Distance d ∈ [0, π) telle que |f'(d)| = ‖p‖, par dichotomie.

        Le coût quadratique est résolu directement (d = ‖p‖).
        """
        s = np.asarray(slope, dtype=float)
        lo, hi = self.slope_range
        bad = (s < lo) | (s >= hi) | ((s == 0.0) & (not self.is_squared_geodesic))
        if np.any(bad):
            raise NoRadialSolution(
                f"‖p‖ = {float(s[bad].flat[0]):.6g} hors de l'image de |f'| ({self.kind})"
            )
        if self.is_squared_geodesic:
            return s.copy()

        increasing = self.direction_sign() > 0
        left = np.zeros_like(s)
        right = np.full_like(s, np.pi)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (left + right)
            above = np.abs(self.fprime(mid)) > s
            go_left = above if increasing else ~above
            right = np.where(go_left, mid, right)
            left = np.where(go_left, left, mid)
        return 0.5 * (left + right)

    def hessian_along(self, d: ArrayLike, cos2: ArrayLike) -> FloatArray:
        """
        D_νν c(x, y) pour ν faisant un angle φ avec la direction de y.

        cos²φ·f''(d) + sin²φ·f'(d)·cot d.
        """
        d = np.asarray(d, dtype=float)
        cos2 = np.asarray(cos2, dtype=float)
        if self.is_squared_geodesic:
            tangential = d_cot_d(d)
        else:
            tangential = self.fprime(d) / np.tan(d)
        return cos2 * self.fsecond(d) + (1.0 - cos2) * tangential

    def mixed_determinant(self, d: ArrayLike) -> FloatArray:
        """|det D²_xy c| en fonction de la distance."""
        d = np.asarray(d, dtype=float)
        if self.is_squared_geodesic:
            return 1.0 / sinc(d)
        return np.abs(self.fsecond(d) * self.fprime(d) / np.sin(d))
