"""
Problème de Poisson modifié sur la grille.

Forme propre : Δ^h u − ε^h u = f, soit (−Δ^h + ε^h I) u = −f, matrice à
diagonale strictement dominante pour ε^h > 0. Le second membre est projeté à
moyenne nulle ; la solution est recentrée à moyenne nulle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, gmres, spilu, spsolve

from geometry.grid import FloatArray, Grid
from geometry.stencil import COORD_ROWS, Stencil

from .exceptions import FallbackDidNotConverge, LinearSolveFailure
from .operators import OperatorParams, laplacian, lipschitz_constraint

logger = logging.getLogger(__name__)

LINEAR_TOL = 1e-10
FALLBACK_TOL = 1e-8
FALLBACK_MAX_ITERS = 50_000


@dataclass(frozen=True, eq=False)
class PoissonProblem:
    grid: Grid
    rhs: FloatArray
    params: OperatorParams

    def compatible_rhs(self) -> FloatArray:
        """Second membre projeté à moyenne de quadrature nulle."""
        f = np.asarray(self.rhs, dtype=float)
        return f - self.grid.mean(f)


@dataclass
class PoissonSolution:
    u: FloatArray
    residual: float
    used_fallback: bool = False
    fallback_iterations: int = 0


def laplacian_matrix(st: Stencil) -> sparse.csr_matrix:
    """Matrice creuse de Δ^h (directions de coordonnées)."""
    rows = list(COORD_ROWS)
    a = st.a[:, rows].reshape(st.size, -1)
    cols = st.nbr[:, rows].reshape(st.size, -1)
    row_idx = np.repeat(np.arange(st.size), a.shape[1])
    off = sparse.csr_matrix(
        (a.ravel(), (row_idx, cols.ravel())), shape=(st.size, st.size)
    )
    return (off - sparse.diags(a.sum(axis=1))).tocsr()


@dataclass(eq=False)
class PoissonOperator:
    """
    Opérateur −Δ^h + ε^h I assemblé une fois, préconditionneur ILU en cache.

    Réutilisé à chaque étape du transport d'information.
    """

    grid: Grid
    stencil: Stencil
    params: OperatorParams
    calls: int = field(default=0, init=False)
    fallbacks: int = field(default=0, init=False)

    @cached_property
    def matrix(self) -> sparse.csc_matrix:
        lap = laplacian_matrix(self.stencil)
        eye = sparse.identity(self.stencil.size, format="csr")
        return (-lap + self.params.eps_h * eye).tocsc()

    @cached_property
    def preconditioner(self) -> LinearOperator:
        ilu = spilu(self.matrix, drop_tol=1e-6, fill_factor=20)
        return LinearOperator(self.matrix.shape, ilu.solve)

    def residual(self, u: FloatArray, f: FloatArray) -> float:
        """‖Δ^h u − ε^h u − f‖_∞."""
        return float(np.max(np.abs(laplacian(self.stencil, u) - self.params.eps_h * u - f)))

    def _linear_solve(self, f: FloatArray) -> FloatArray:
        b = -f
        scale = max(float(np.max(np.abs(b))), 1.0)
        u, info = gmres(
            self.matrix,
            b,
            rtol=1e-13,
            atol=1e-3 * LINEAR_TOL * scale,
            restart=60,
            maxiter=500,
            M=self.preconditioner,
        )
        if info != 0 or self.residual(u, f) > LINEAR_TOL * scale:
            logger.warning("GMRES insuffisant (info=%s), résolution directe", info)
            try:
                u = spsolve(self.matrix, b)
            except RuntimeError as e:
                raise LinearSolveFailure(f"Résolution directe impossible : {e}") from e
        if not np.all(np.isfinite(u)):
            raise LinearSolveFailure("Solution non finie")
        res = self.residual(u, f)
        if res > LINEAR_TOL * scale:
            raise LinearSolveFailure(f"Résidu {res:.3e} au-dessus de la tolérance")
        return u

    def _fallback(self, u: FloatArray, f: FloatArray) -> tuple[FloatArray, int]:
        """Itération parabolique u ← u − dt·max{−Δu + εu + f, E}."""
        st, eps = self.stencil, self.params.eps_h
        diag = st.a[:, list(COORD_ROWS)].sum(axis=(1, 2)) + eps
        dt = 0.5 / float(diag.max())
        for it in range(1, FALLBACK_MAX_ITERS + 1):
            g = np.maximum(
                -laplacian(st, u) + eps * u + f,
                lipschitz_constraint(st, u, self.params.R),
            )
            if np.max(np.abs(g)) <= FALLBACK_TOL:
                return u, it
            u = u - dt * g
        raise FallbackDidNotConverge(
            f"Itération de secours sans convergence après {FALLBACK_MAX_ITERS} pas"
        )

    def solve(self, rhs: ArrayLike) -> PoissonSolution:
        self.calls += 1
        problem = PoissonProblem(self.grid, np.asarray(rhs, dtype=float), self.params)
        f = problem.compatible_rhs()
        u = self._linear_solve(f)
        residual = self.residual(u, f)

        used_fallback, iterations = False, 0
        if np.any(lipschitz_constraint(self.stencil, u, self.params.R) >= 0.0):
            logger.warning("Contrainte de Lipschitz active : itération de secours")
            u, iterations = self._fallback(u, f)
            used_fallback = True
            self.fallbacks += 1

        u = u - self.grid.mean(u)
        return PoissonSolution(
            u=u,
            residual=residual,
            used_fallback=used_fallback,
            fallback_iterations=iterations,
        )


def solve_poisson(problem: PoissonProblem, stencil: Stencil) -> PoissonSolution:
    """Résout Δ^h u − ε^h u = f (f projeté) et retourne u à moyenne nulle."""
    return PoissonOperator(problem.grid, stencil, problem.params).solve(problem.rhs)
