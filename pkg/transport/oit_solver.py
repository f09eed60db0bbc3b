"""
Transport d'information optimal (OIT).

On suit la géodésique de Fisher-Rao μ(t) = g(t)² entre les densités ρ0 et ρ1,
avec g(t) = (sin((1−t)θ)·w0 + sin(tθ)·w1)/sin θ et w = √ρ. À chaque pas
d'Euler on résout Δ^h f = ν(S(x_i)) (ν = μ̇/μ), puis on met à jour
l'application directe T (flot de ∇f) et l'application inverse S.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from geometry.grid import FloatArray, Grid, MapField, ScalarField
from geometry.interpolation import interp_map, interp_scalar, interp_vector
from geometry.sphere import geodesic_distance, project_to_sphere
from geometry.stencil import Stencil, build_stencil

from .density import TOTAL_MASS
from .exceptions import GeodesicDegenerate, NonpositiveDensity, TangledIntermediateMap
from .operators import OperatorParams, gradient
from .poisson import PoissonOperator

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 100
THETA_EPS = 1e-10
COMPOSITION_LIMIT = 0.5
LOG_EVERY = 10


@dataclass(frozen=True, eq=False)
class GeodesicData:
    theta: float
    w0: ScalarField
    w1: ScalarField

    @property
    def stationary(self) -> bool:
        return self.theta < THETA_EPS

    def coefficients(self, t: float) -> tuple[float, float, float, float]:
        """(a, b, ȧ, ḃ) avec g = a·w0 + b·w1."""
        th = self.theta
        s = np.sin(th)
        return (
            np.sin((1.0 - t) * th) / s,
            np.sin(t * th) / s,
            -th * np.cos((1.0 - t) * th) / s,
            th * np.cos(t * th) / s,
        )

    def root(self, t: float) -> FloatArray:
        """g(t) aux noeuds."""
        if self.stationary:
            return self.w0.values.copy()
        a, b, _, _ = self.coefficients(t)
        return a * self.w0.values + b * self.w1.values

    def density(self, t: float) -> FloatArray:
        """μ(t) = g(t)² aux noeuds."""
        return self.root(t) ** 2


def fisher_rao_theta(g: Grid, rho0: ScalarField, rho1: ScalarField) -> GeodesicData:
    """
    Angle de Fisher-Rao θ entre deux densités d'intégrale 4π.

    Forme par la corde : θ = 2·arcsin(‖w0 − w1‖/(2√(4π))), égale à
    arccos(⟨w0, w1⟩/4π) mais exacte en 0.
    """
    if np.any(rho0.values <= 0.0) or np.any(rho1.values <= 0.0):
        raise NonpositiveDensity("L'angle de Fisher-Rao exige des densités positives")
    w0 = np.sqrt(rho0.values)
    w1 = np.sqrt(rho1.values)
    chord = np.sqrt(max(g.integrate((w0 - w1) ** 2), 0.0))
    theta = 2.0 * float(np.arcsin(min(chord / (2.0 * np.sqrt(TOTAL_MASS)), 1.0)))
    logger.info("Angle de Fisher-Rao θ = %.6f", theta)
    return GeodesicData(theta=theta, w0=ScalarField(g, w0), w1=ScalarField(g, w1))


def geodesic_log_derivative(gd: GeodesicData, t: float) -> ScalarField:
    """ν_t = μ̇/μ = 2ġ/g, nul sur une géodésique stationnaire."""
    grid = gd.w0.grid
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} hors de [0, 1]")
    if gd.stationary:
        return ScalarField(grid, np.zeros(grid.size))
    a, b, da, db = gd.coefficients(t)
    root = a * gd.w0.values + b * gd.w1.values
    if np.any(root <= 0.0):
        raise GeodesicDegenerate(f"g(t) ≤ 0 sur la géodésique à t={t}")
    droot = da * gd.w0.values + db * gd.w1.values
    return ScalarField(grid, 2.0 * droot / root)


def mass_rate(gd: GeodesicData, t: float) -> float:
    """∫ ν_t μ_t dA = d/dt ∫ μ_t, nul à la précision de quadrature."""
    grid = gd.w0.grid
    nu = geodesic_log_derivative(gd, t).values
    return grid.integrate(nu * gd.density(t))


@dataclass(frozen=True, eq=False)
class OitState:
    t: float
    T: MapField
    S: MapField
    step: int = 0
    composition: float = 0.0

    @classmethod
    def initial(cls, grid: Grid) -> OitState:
        return cls(t=0.0, T=MapField.identity(grid), S=MapField.identity(grid), step=0)


def composition_error(g: Grid, T: MapField, S: MapField) -> float:
    """max_i d(S(T(x_i)), x_i)."""
    back = interp_map(g, S, T.images)
    return float(np.max(geodesic_distance(back, g.points)))


def oit_step(
    state: OitState,
    gd: GeodesicData,
    g: Grid,
    stencil: Stencil,
    poisson: PoissonOperator,
    dt: float,
    composition_limit: float = COMPOSITION_LIMIT,
) -> OitState:
    """Un pas d'Euler : second membre en S_n, Poisson, mises à jour de T et S."""
    if gd.stationary:
        return replace(state, t=state.t + dt, step=state.step + 1)

    nu = geodesic_log_derivative(gd, min(state.t, 1.0)).values
    rhs = interp_scalar(g, nu, state.S.images)
    sol = poisson.solve(rhs)
    grad = gradient(g, stencil, sol.u)

    forward = project_to_sphere(state.T.images + dt * interp_vector(g, grad, state.T.images))
    inverse = interp_map(g, state.S, project_to_sphere(g.points - dt * grad))
    new = OitState(
        t=state.t + dt,
        T=MapField(g, forward),
        S=MapField(g, inverse),
        step=state.step + 1,
    )
    error = composition_error(g, new.T, new.S)
    if error > composition_limit:
        raise TangledIntermediateMap(error, new.step)
    return replace(new, composition=error)


@dataclass(eq=False)
class OitResult:
    forward: MapField
    inverse: MapField
    theta: float
    t_end: float
    steps: int
    dt: float
    mass_defects: list[float] = field(default_factory=list)
    composition: list[float] = field(default_factory=list)
    fallback_steps: int = 0

    @property
    def max_mass_defect(self) -> float:
        return max(self.mass_defects, default=0.0)

    @property
    def composition_error(self) -> float:
        return self.composition[-1] if self.composition else 0.0


def end_time(sigma: float | None) -> float:
    """1 pour le problème exact, s = 1/(1+σ) sinon (0 pour σ = ∞)."""
    if sigma is None:
        return 1.0
    if sigma < 0.0:
        raise ValueError(f"σ={sigma} doit être positif")
    if np.isinf(sigma):
        return 0.0
    return 1.0 / (1.0 + sigma)


def solve_oit(
    g: Grid,
    rho0: ScalarField,
    rho1: ScalarField,
    steps: int = DEFAULT_STEPS,
    sigma: float | None = None,
    params: OperatorParams | None = None,
    stencil: Stencil | None = None,
    composition_limit: float = COMPOSITION_LIMIT,
) -> OitResult:
    """
    Intègre la géodésique jusqu'à t_end en ``steps`` pas de dt = t_end/steps.

    Retourne les échantillons de T (direct) et S (inverse) aux noeuds.
    """
    if steps < 1:
        raise ValueError("Au moins un pas est requis")
    gd = fisher_rao_theta(g, rho0, rho1)
    t_end = end_time(sigma)
    dt = t_end / steps
    identity = OitResult(
        forward=MapField.identity(g),
        inverse=MapField.identity(g),
        theta=gd.theta,
        t_end=t_end,
        steps=steps,
        dt=dt,
    )
    if gd.stationary or t_end == 0.0:
        logger.info("OIT : géodésique de longueur nulle, application identité")
        return identity

    st = stencil or build_stencil(g)
    params = params or OperatorParams.defaults(g, st)
    poisson = PoissonOperator(g, st, params)
    logger.info(
        "OIT : N=%d, θ=%.6f, t_end=%.4f, %d pas (dt=%.4e)", g.size, gd.theta, t_end, steps, dt
    )

    state = OitState.initial(g)
    result = identity
    for n in range(steps):
        result.mass_defects.append(abs(mass_rate(gd, state.t)))
        state = oit_step(state, gd, g, st, poisson, dt, composition_limit)
        result.composition.append(state.composition)
        if (n + 1) % LOG_EVERY == 0:
            logger.info(
                "OIT pas %d/%d : t=%.4f, composition %.3e",
                n + 1,
                steps,
                state.t,
                result.composition[-1],
            )
    result.mass_defects.append(abs(mass_rate(gd, min(state.t, 1.0))))
    result.forward, result.inverse = state.T, state.S
    result.fallback_steps = poisson.fallbacks
    logger.info(
        "OIT terminé : composition %.3e, défaut de masse max %.3e",
        result.composition_error,
        result.max_mass_defect,
    )
    return result
