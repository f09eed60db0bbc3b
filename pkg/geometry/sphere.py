"""
Primitives exactes sur la sphère unité S².

Les points sont des ``numpy.ndarray`` de forme ``(..., 3)`` ; toutes les
fonctions sont vectorisées sur les dimensions de tête, pures et sans état
partagé.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import (
    AntipodalPoints,
    DegenerateVector,
    InvalidSpherePoint,
    MagnitudeExceedsInjectivityRadius,
)

FloatArray = NDArray[np.float64]

UNIT_TOL = 1e-12
TANGENT_TOL = 1e-10
ANTIPODAL_CUTOFF = np.pi - 1e-9
DEGENERATE_NORM = 1e-12


def dot(a: ArrayLike, b: ArrayLike) -> FloatArray:
    """Produit scalaire sur le dernier axe."""
    return np.einsum("...i,...i->...", np.asarray(a, float), np.asarray(b, float))


def norm(a: ArrayLike) -> FloatArray:
    return np.linalg.norm(np.asarray(a, float), axis=-1)


def as_sphere_points(x: ArrayLike, tol: float = UNIT_TOL) -> FloatArray:
    """Valide et retourne des points de S² (forme ``(..., 3)``)."""
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1:] != (3,):
        raise InvalidSpherePoint(f"Forme {pts.shape} : 3 coordonnées attendues")
    err = np.abs(norm(pts) - 1.0)
    if np.any(err > tol):
        raise InvalidSpherePoint(
            f"Point hors de la sphère unité (écart max {float(np.max(err)):.3e})"
        )
    return pts


def geodesic_distance(a: ArrayLike, b: ArrayLike) -> FloatArray:
    """
    Distance géodésique dans [0, π].

    Formulation atan2(‖a×b‖, a·b), précise près de 0 comme près de π.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return np.arctan2(norm(np.cross(a, b)), dot(a, b))


def tangent_project(base: ArrayLike, v: ArrayLike) -> FloatArray:
    """Projection orthogonale de ``v`` sur le plan tangent en ``base``."""
    base = np.asarray(base, float)
    v = np.asarray(v, float)
    return v - dot(v, base)[..., None] * base


def exp_map(base: ArrayLike, v: ArrayLike) -> FloatArray:
    """exp_base(v) ; ``v`` doit être tangent et de norme < π."""
    base = np.asarray(base, float)
    v = np.asarray(v, float)
    r = norm(v)
    if np.any(r >= np.pi):
        raise MagnitudeExceedsInjectivityRadius(
            f"‖v‖ = {float(np.max(r)):.6f} ≥ π"
        )
    safe = np.where(r > 0.0, r, 1.0)
    sinc = np.where(r > 0.0, np.sin(r) / safe, 1.0)
    out = np.cos(r)[..., None] * base + sinc[..., None] * v
    # exp(0) = base exactement
    return np.where((r > 0.0)[..., None], out, base)


def log_map(base: ArrayLike, target: ArrayLike) -> FloatArray:
    """Vecteur tangent v en ``base`` tel que exp_base(v) = target."""
    base = np.asarray(base, float)
    target = np.asarray(target, float)
    d = geodesic_distance(base, target)
    if np.any(d >= ANTIPODAL_CUTOFF):
        raise AntipodalPoints("log_map : points (quasi) antipodaux")
    w = target - dot(target, base)[..., None] * base
    nw = norm(w)
    scale = np.where(nw > 0.0, d / np.where(nw > 0.0, nw, 1.0), 0.0)
    return scale[..., None] * w


def tangent_frame(base: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """
    Repère tangent déterministe (e1, e2) en ``base``.

    e1 : axe ambiant de plus petite composante (le premier en cas d'égalité),
    orthogonalisé ; e2 = base × e1, de sorte que (e1, e2, base) est direct.
    """
    base = np.asarray(base, float)
    axis = np.argmin(np.abs(base), axis=-1)
    e = np.zeros_like(base)
    np.put_along_axis(e, axis[..., None], 1.0, axis=-1)
    e1 = tangent_project(base, e)
    e1 = e1 / norm(e1)[..., None]
    e2 = np.cross(base, e1)
    return e1, e2


def project_to_tangent(
    center: ArrayLike, x: ArrayLike, e1: ArrayLike, e2: ArrayLike
) -> FloatArray:
    """
    Coordonnées normales géodésiques de ``x`` autour de ``center``.

    Le résultat z vérifie ‖z‖ = d(x, center).
    """
    v = log_map(center, x)
    return np.stack([dot(v, e1), dot(v, e2)], axis=-1)


def project_to_sphere(q: ArrayLike) -> FloatArray:
    """q / ‖q‖, cohérent avec l'exponentielle à l'ordre 2."""
    q = np.asarray(q, float)
    n = norm(q)
    if np.any(n <= DEGENERATE_NORM):
        raise DegenerateVector(f"‖q‖ = {float(np.min(n)):.3e} trop petit")
    return q / n[..., None]


@dataclass(frozen=True)
class TangentVector:
    base: FloatArray
    v: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "base", as_sphere_points(self.base))
        object.__setattr__(self, "v", np.asarray(self.v, float))
        if np.any(np.abs(dot(self.v, self.base)) > TANGENT_TOL):
            raise InvalidSpherePoint("Vecteur non tangent au point de base")

    def exp(self) -> FloatArray:
        return exp_map(self.base, self.v)

    @property
    def magnitude(self) -> FloatArray:
        return norm(self.v)


@dataclass(frozen=True)
class TangentFrame:
    """Repère orthonormé direct {e1, e2, base}."""

    base: FloatArray
    e1: FloatArray
    e2: FloatArray

    @classmethod
    def at(cls, base: ArrayLike) -> TangentFrame:
        b = as_sphere_points(base)
        e1, e2 = tangent_frame(b)
        return cls(base=b, e1=e1, e2=e2)

    def coords(self, x: ArrayLike) -> FloatArray:
        return project_to_tangent(self.base, x, self.e1, self.e2)

    def to_ambient(self, z: ArrayLike) -> FloatArray:
        """Vecteur tangent ambiant de coordonnées ``z`` dans le repère."""
        z = np.asarray(z, float)
        return z[..., 0, None] * self.e1 + z[..., 1, None] * self.e2
