"""
Opérateurs discrets sur la grille : Laplacien, gradient, opérateur de
transport optimal F^h, contrainte de Lipschitz E^h et schéma G^h = max(F^h, E^h).

Toutes les fonctions sont vectorisées sur les noeuds : la valeur au noeud i
est la composante i du résultat.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from geometry.grid import FloatArray, Grid
from geometry.interpolation import interp_scalar
from geometry.sphere import exp_map
from geometry.stencil import COORD_ROWS, Stencil

from .costs import CostModel
from .exceptions import GradientOutOfRange, NonpositiveDensity

logger = logging.getLogger(__name__)

DEFAULT_R = np.pi + 1.0


@dataclass(frozen=True)
class OperatorParams:
    """ε_g (monotonisation), ε^h (décalage de Poisson), R (borne de Lipschitz)."""

    eps_g: float
    eps_h: float
    R: float = DEFAULT_R

    @classmethod
    def defaults(
        cls,
        grid: Grid,
        stencil: Stencil,
        eps_g: float | None = None,
        eps_h: float | None = None,
        R: float | None = None,
    ) -> OperatorParams:
        """
        ε_g = dθ, ε^h = h², R = π + 1.

        ε^h reste strictement positif mais en O(h²) : la solution de
        (−Δ^h + ε^h)u = 2z vaut 2z/(2 + ε^h), biais négligeable devant
        l'erreur de consistance.
        """
        return cls(
            eps_g=stencil.directions.dtheta if eps_g is None else eps_g,
            eps_h=grid.h**2 if eps_h is None else eps_h,
            R=DEFAULT_R if R is None else R,
        )


def laplacian(st: Stencil, u: ArrayLike) -> FloatArray:
    """Δ^h u = D_(1,0)(1,0) u + D_(0,1)(0,1) u."""
    u = np.asarray(u, dtype=float)
    rows = list(COORD_ROWS)
    diffs = u[st.nbr[:, rows]] - u[:, None, None]
    return np.einsum("nkj,nkj->n", st.a[:, rows], diffs)


def gradient_coords(st: Stencil, u: ArrayLike) -> FloatArray:
    """(D_(1,0) u, D_(0,1) u) dans le repère de chaque noeud : (N, 2)."""
    u = np.asarray(u, dtype=float)
    rows = list(COORD_ROWS)
    diffs = u[st.nbr[:, rows]] - u[:, None, None]
    return np.einsum("nkj,nkj->nk", st.b[:, rows], diffs)


def gradient(grid: Grid, st: Stencil, u: ArrayLike) -> FloatArray:
    """∇^h u comme vecteur tangent ambiant : (N, 3)."""
    g = gradient_coords(st, u)
    return g[:, 0, None] * grid.e1 + g[:, 1, None] * grid.e2


def consistency_error(grid: Grid, st: Stencil) -> float:
    """max |Δ^h z + 2z| : erreur de consistance du Laplacien sur la grille."""
    z = grid.points[:, 2]
    return float(np.max(np.abs(laplacian(st, z) + 2.0 * z)))


def transport_points(
    grid: Grid, st: Stencil, u: ArrayLike, cost: CostModel
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    T(x_i, ∇^h u(x_i)) pour tous les noeuds.

    Retourne (images, distances d, coordonnées du gradient).
    """
    pc = gradient_coords(st, u)
    pn = np.linalg.norm(pc, axis=1)
    out = np.flatnonzero(pn >= cost.slope_range[1])
    if out.size:
        raise GradientOutOfRange(out, float(pn.max()))
    d = cost.distance_for_slope(pn)
    scale = np.where(pn > 0.0, cost.direction_sign() * d / np.where(pn > 0.0, pn, 1.0), 0.0)
    v = scale[:, None] * (pc[:, 0, None] * grid.e1 + pc[:, 1, None] * grid.e2)
    return exp_map(grid.points, v), d, pc


def ot_operator(
    grid: Grid,
    st: Stencil,
    u: ArrayLike,
    f0: ArrayLike,
    f1: ArrayLike,
    cost: CostModel,
    params: OperatorParams,
) -> FloatArray:
    """
    F^h(x_i) = min_{ν₁⊥ν₂} Π max{D_νν u + g₁(ν) + ε_g Δ^h u, 0} − (H − ε_g Δ^h u)

    avec g₁(ν) = D_νν c(x_i, T) et H = |det D²_xy c|·f0(x_i)/f1(T(x_i, p)).
    """
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    if np.any(f0 <= 0.0) or np.any(f1 <= 0.0):
        raise NonpositiveDensity("Densités strictement positives requises")

    images, d, pc = transport_points(grid, st, u, cost)
    lap = laplacian(st, u)

    vec = st.directions.vectors  # (K, 2)
    pn2 = np.sum(pc * pc, axis=1)
    cos2 = np.where(
        pn2[:, None] > 0.0,
        (pc @ vec.T) ** 2 / np.where(pn2 > 0.0, pn2, 1.0)[:, None],
        1.0,
    )
    g1 = cost.hessian_along(d[:, None], cos2)  # (N, K)

    terms = np.maximum(st.second_derivatives(u) + g1 + params.eps_g * lap[:, None], 0.0)
    det = np.min(terms[:, 0::2] * terms[:, 1::2], axis=1)

    h_term = cost.mixed_determinant(d) * f0 / interp_scalar(grid, f1, images)
    return det - (h_term - params.eps_g * lap)


def gradient_norm_proxy(st: Stencil, u: ArrayLike) -> FloatArray:
    """max(‖∇^h u‖, max_ν |D_ν u|) par noeud."""
    grad = np.linalg.norm(gradient_coords(st, u), axis=1)
    directional = np.max(np.abs(st.first_derivatives(u)), axis=1)
    return np.maximum(grad, directional)


def lipschitz_constraint(st: Stencil, u: ArrayLike, R: float) -> FloatArray:
    """E^h = max(‖∇^h u‖, max_ν |D_ν u|) − R."""
    return gradient_norm_proxy(st, u) - R


def scheme_g(f_values: ArrayLike, e_values: ArrayLike) -> FloatArray:
    """G^h = max(F^h, E^h), point par point."""
    return np.maximum(np.asarray(f_values, float), np.asarray(e_values, float))


def ot_scheme(
    grid: Grid,
    st: Stencil,
    u: ArrayLike,
    f0: ArrayLike,
    f1: ArrayLike,
    cost: CostModel,
    params: OperatorParams,
) -> FloatArray:
    return scheme_g(
        ot_operator(grid, st, u, f0, f1, cost, params),
        lipschitz_constraint(st, u, params.R),
    )
