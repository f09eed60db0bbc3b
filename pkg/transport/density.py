"""
Densités sur la grille : densités intégrées (uniforme, équateur),
normalisation à 4π avec plancher, contrôle d'équilibre des masses.

Convention : ∫ρ = 4π (uniforme ≡ 1), de sorte que √ρ est directement la
racine de densité utilisée par la géodésique de Fisher-Rao.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq

from geometry.grid import FloatArray, Grid, ScalarField

from .exceptions import NonpositiveDensity, UnknownDensityName

logger = logging.getLogger(__name__)

TOTAL_MASS = 4.0 * np.pi
DEFAULT_FLOOR = 1e-3
MASS_TOL = 1e-6
NORMALIZED_TOL = 1e-12

# Constante imprimée de la densité "équateur" ; la normalisation est
# de toute façon refaite par quadrature.
EQUATOR_CONSTANT = 3.53552
EQUATOR_WIDTH = 30.0


@dataclass(frozen=True, eq=False)
class DensityField(ScalarField):
    """Champ strictement positif d'intégrale 4π."""

    floor: float = DEFAULT_FLOOR

    def __post_init__(self) -> None:
        super().__post_init__()
        if np.any(self.values <= 0.0):
            raise NonpositiveDensity("Densité nulle ou négative")

    @property
    def sqrt(self) -> FloatArray:
        return np.sqrt(self.values)


def _is_normalized(grid: Grid, values: FloatArray, delta: float) -> bool:
    total = grid.integrate(values)
    return (
        abs(total - TOTAL_MASS) <= NORMALIZED_TOL * TOTAL_MASS
        and float(values.min()) >= delta
    )


def normalize(grid: Grid, values: ArrayLike, floor: float = DEFAULT_FLOOR) -> FloatArray:
    """
    Normalise à ∫ρ = 4π avec plancher δ = floor × moyenne.

    Le point fixe « plancher puis renormalisation » est résolu directement :
    on cherche c tel que ∫ max(c·ρ, δ) = 4π. Idempotent.
    """
    raw = np.asarray(values, dtype=float)
    if raw.shape != (grid.size,):
        raise NonpositiveDensity(f"Champ de taille {raw.shape} pour {grid.size} noeuds")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0.0) or not np.any(raw > 0.0):
        raise NonpositiveDensity("Densité brute négative, non finie ou nulle")
    # Après normalisation la moyenne vaut 1 : δ = floor.
    delta = floor
    if _is_normalized(grid, raw, delta):
        return raw.copy()

    def excess(c: float) -> float:
        return grid.integrate(np.maximum(c * raw, delta)) - TOTAL_MASS

    hi = TOTAL_MASS / grid.integrate(raw)
    while excess(hi) < 0.0:
        hi *= 2.0
    c = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    out = np.maximum(c * raw, delta)
    floored = int(np.sum(c * raw < delta))
    if floored:
        logger.info("Plancher δ=%.1e appliqué à %d noeuds", delta, floored)
    # Dernière mise à l'échelle exacte, sans repasser sous le plancher.
    out = np.maximum(out * (TOTAL_MASS / grid.integrate(out)), delta)
    return out


def make_density(grid: Grid, values: ArrayLike, floor: float = DEFAULT_FLOOR) -> DensityField:
    return DensityField(grid=grid, values=normalize(grid, values, floor), floor=floor)


def equator_profile(z: ArrayLike) -> FloatArray:
    """(1 − exp(−(arccos z − π/2)²/30)) / 3.53552, avant normalisation."""
    polar = np.arccos(np.clip(np.asarray(z, dtype=float), -1.0, 1.0))
    return (1.0 - np.exp(-((polar - np.pi / 2) ** 2) / EQUATOR_WIDTH)) / EQUATOR_CONSTANT


BUILTIN_DENSITIES = {
    "uniform": lambda grid: np.ones(grid.size),
    "equator": lambda grid: equator_profile(grid.points[:, 2]),
}


def builtin_density(name: str, g: Grid, floor: float = DEFAULT_FLOOR) -> DensityField:
    try:
        raw = BUILTIN_DENSITIES[name](g)
    except KeyError as e:
        raise UnknownDensityName(
            f"Densité inconnue '{name}' (disponibles : {', '.join(BUILTIN_DENSITIES)})"
        ) from e
    return make_density(g, raw, floor)


def mass_balance_check(rho0: ScalarField, rho1: ScalarField) -> float:
    """|∫ρ0 − ∫ρ1|."""
    return abs(rho0.integrate() - rho1.integrate())
