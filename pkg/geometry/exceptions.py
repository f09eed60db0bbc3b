class GeometryError(Exception):
    """Exception de base du module géométrie."""

    pass


class MagnitudeExceedsInjectivityRadius(GeometryError):
    """Vecteur tangent de norme ≥ π : l'exponentielle n'est plus injective."""

    pass


class AntipodalPoints(GeometryError):
    """Points antipodaux : la direction du logarithme n'est pas définie."""

    pass


class DegenerateVector(GeometryError):
    """Vecteur ambiant trop petit pour être projeté sur la sphère."""

    pass


class InvalidSpherePoint(GeometryError):
    """Coordonnées qui ne sont pas sur la sphère unité."""

    pass


class DegenerateConfiguration(GeometryError):
    """Ensemble de points impossible à trianguler (coplanaire, trop petit...)."""

    pass


class TriangleNotFound(GeometryError):
    """Aucun triangle ne contient le point : triangulation corrompue."""

    pass


class GridFileError(GeometryError):
    """Fichier de grille illisible ou mal formé."""

    pass


class EmptyNeighborhood(GeometryError):
    """Aucun noeud dans la boule de rayon √h."""

    pass


class QuadrantEmpty(GeometryError):
    """Un quadrant du voisinage ne contient aucun point admissible."""

    def __init__(self, quadrant: int, node: int | None = None) -> None:
        self.quadrant = quadrant
        self.node = node
        where = f" au noeud {node}" if node is not None else ""
        super().__init__(f"Quadrant Q{quadrant} vide{where}")


class SingularMomentSystem(GeometryError):
    """Système des moments singulier (points quasi alignés)."""

    pass
