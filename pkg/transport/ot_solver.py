"""
Transport optimal : itération parabolique explicite sur G^h puis extraction
de l'application T(x) = exp_x(∇u) (ou son analogue pour un coût général).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from geometry.grid import FloatArray, Grid, MapField, ScalarField
from geometry.sphere import exp_map, norm
from geometry.stencil import Stencil, build_stencil

from .costs import CostModel
from .density import DensityField, MASS_TOL, mass_balance_check
from .exceptions import GradientOutOfRange, MassImbalance, MaxItersExceeded
from .operators import OperatorParams, ot_scheme, transport_points

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 20_000
MIN_DT_FACTOR = 1e-8
GROWTH_TOL = 2.0
LOG_EVERY = 100


class Normalization(enum.StrEnum):
    FIXED_POINT = "fixed_point"
    MEAN_ZERO = "mean_zero"


@dataclass(frozen=True)
class SolverConfig:
    dt: float | None = None
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    normalization: Normalization = Normalization.MEAN_ZERO
    anchor: int = 0


@dataclass(eq=False)
class OtResult:
    u: ScalarField
    history: list[float] = field(default_factory=list)
    dt: float = 0.0
    params: OperatorParams | None = None
    defect: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def residual(self) -> float:
        return self.history[-1] if self.history else 0.0


def stability_dt(st: Stencil, params: OperatorParams) -> float:
    """
    0.5 / (1 + L), L : plus grande somme de ligne du schéma linéarisé.

    L = 2·max Σa (paire de directions) + 3·ε_g·max Σa (Laplacien).
    """
    sums = st.row_sums()
    lap = sums[:, 0] + sums[:, 1]
    pair = sums[:, 0::2] + sums[:, 1::2]
    bound = 2.0 * float(pair.max()) + 3.0 * params.eps_g * float(lap.max())
    return 0.5 / (1.0 + bound)


def _normalizer(grid: Grid, cfg: SolverConfig):
    if cfg.normalization is Normalization.FIXED_POINT:
        return lambda u: float(u[cfg.anchor])
    return grid.mean


def solve_ot(
    g: Grid,
    f0: DensityField,
    f1: DensityField,
    cost: CostModel,
    cfg: SolverConfig | None = None,
    params: OperatorParams | None = None,
    stencil: Stencil | None = None,
) -> OtResult:
    """
    Itère u ← u + dt·(G^h(u) − n(u)) depuis u₀ ≡ 0.

    n(u) vaut u(x₀) ou la moyenne de u selon la normalisation ; ce terme de
    rang un absorbe le défaut de compatibilité discret. Le résidu sup peut
    stagner ou osciller légèrement sans que le pas soit réduit ; dt est divisé
    par deux (avec retour au meilleur itéré) seulement si le résidu dépasse
    GROWTH_TOL fois le meilleur résidu ou devient non fini.
    """
    cfg = cfg or SolverConfig()
    imbalance = mass_balance_check(f0, f1)
    if imbalance > MASS_TOL:
        raise MassImbalance(imbalance)

    st = stencil or build_stencil(g)
    params = params or OperatorParams.defaults(g, st)
    dt = cfg.dt or stability_dt(st, params)
    dt_min = dt * MIN_DT_FACTOR
    normalizer = _normalizer(g, cfg)
    logger.info(
        "OT : N=%d, coût=%s, dt=%.3e, ε_g=%.4f, R=%.4f",
        g.size,
        cost.kind,
        dt,
        params.eps_g,
        params.R,
    )

    def residual_field(u: FloatArray) -> FloatArray:
        return ot_scheme(g, st, u, f0.values, f1.values, cost, params) - normalizer(u)

    u = np.zeros(g.size)
    best_u, best_res = u, np.inf
    history: list[float] = []
    for it in range(1, cfg.max_iters + 1):
        try:
            r = residual_field(u)
        except GradientOutOfRange:
            if dt / 2.0 < dt_min:
                raise
            dt /= 2.0
            logger.warning("Gradient hors domaine : retour arrière, dt=%.3e", dt)
            u = best_u
            continue
        res = float(np.max(np.abs(r)))
        history.append(res)
        logger.debug("OT itération %d : résidu %.3e", it, res)
        if it % LOG_EVERY == 0:
            logger.info("OT itération %d : résidu %.3e", it, res)

        if res <= cfg.tol:
            best_u, best_res = u, res
            break
        if not np.isfinite(res) or res > GROWTH_TOL * best_res:
            if dt / 2.0 < dt_min:
                break
            dt /= 2.0
            logger.warning("Résidu en hausse (%.3e > %.3e) : dt=%.3e", res, best_res, dt)
            u = best_u
            continue
        if res < best_res:
            best_u, best_res = u, res
        u = u + dt * r

    defect = normalizer(best_u)
    final = best_u - defect
    if best_res > cfg.tol:
        raise MaxItersExceeded(final, best_res, history)
    logger.info("OT convergé en %d itérations (résidu %.3e)", len(history), best_res)
    return OtResult(
        u=ScalarField(grid=g, values=final),
        history=history,
        dt=dt,
        params=params,
        defect=defect,
    )


def extract_point(x: ArrayLike, p: ArrayLike, cost: CostModel) -> FloatArray:
    """
    T(x, p) : point y tel que ∇_x c(x, y) = −p.

    Coût quadratique : exp_x(p). Coût logarithmique : exp_x(−d·p/‖p‖) avec
    |f'(d)| = ‖p‖ ; p = 0 lève NoRadialSolution.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    pn = norm(p)
    d = cost.distance_for_slope(pn)
    scale = np.where(pn > 0.0, cost.direction_sign() * d / np.where(pn > 0.0, pn, 1.0), 0.0)
    return exp_map(x, scale[..., None] * p)


def extract_map(g: Grid, st: Stencil, u: ScalarField | ArrayLike, cost: CostModel) -> MapField:
    """T(x_i) = extract_point(x_i, ∇^h u(x_i)) pour chaque noeud."""
    values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    images, _, _ = transport_points(g, st, values, cost)
    return MapField(grid=g, images=images)
