from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    import numpy as np


class TransportError(Exception):
    """Exception de base des solveurs de transport."""

    pass


class NonpositiveDensity(TransportError):
    """Densité nulle ou négative en au moins un noeud."""

    pass


class UnknownDensityName(TransportError):
    """Nom de densité intégrée inconnu."""

    pass


class UnsupportedRasterFormat(TransportError):
    """Image qui n'est pas un PGM 8 bits (P5 ou P2)."""

    pass


class DegenerateRange(TransportError):
    """Intervalle [lo, hi] vide pour la conversion des pixels."""

    pass


class MassImbalance(TransportError):
    """Les densités source et cible n'ont pas la même masse."""

    def __init__(self, imbalance: float) -> None:
        self.imbalance = imbalance
        super().__init__(f"Déséquilibre de masse {imbalance:.3e}")


class GradientOutOfRange(TransportError):
    """‖∇u‖ hors du domaine de l'application de transport."""

    def __init__(self, nodes: np.ndarray, max_norm: float) -> None:
        self.nodes = nodes
        self.max_norm = max_norm
        super().__init__(
            f"Gradient hors domaine en {len(nodes)} noeuds (max {max_norm:.4f})"
        )


class NoRadialSolution(TransportError):
    """Aucune distance d telle que |f'(d)| = ‖p‖."""

    pass


class LinearSolveFailure(TransportError):
    """Échec de la résolution du système de Poisson."""

    pass


class FallbackDidNotConverge(TransportError):
    """L'itération parabolique de secours n'a pas convergé."""

    pass


class MaxItersExceeded(TransportError):
    """Nombre maximal d'itérations atteint ; porte le meilleur itéré."""

    def __init__(self, best: np.ndarray, residual: float, history: list[float]) -> None:
        self.best = best
        self.residual = residual
        self.history = history
        super().__init__(
            f"Pas de convergence en {len(history)} itérations (résidu {residual:.3e})"
        )


class GeodesicDegenerate(TransportError):
    """La géodésique de Fisher-Rao s'annule en un noeud."""

    pass


class TangledIntermediateMap(TransportError):
    """S∘T s'écarte trop de l'identité en cours d'intégration."""

    def __init__(self, error: float, step: int) -> None:
        self.error = error
        self.step = step
        super().__init__(f"Composition S∘T dégradée à l'étape {step} ({error:.4f} rad)")


class UnreliableJacobian(TransportError):
    """Jacobien discret non fiable : maillage retourné."""

    def __init__(self, inverted_count: int) -> None:
        self.inverted_count = inverted_count
        super().__init__(f"{inverted_count} triangles retournés")


class TangledMesh(TransportError):
    """Maillage déplacé enchevêtré alors qu'un maillage valide est exigé."""

    def __init__(self, inverted_count: int, inverted_fraction: float) -> None:
        self.inverted_count = inverted_count
        self.inverted_fraction = inverted_fraction
        super().__init__(
            f"{inverted_count} triangles retournés ({inverted_fraction:.4%})"
        )
