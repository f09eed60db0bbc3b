"""
Formats de fichiers des grilles.

Format texte versionné ::

    spheregrid v1 N T h
    x y z          (N lignes)
    i j k          (T lignes, indices à partir de 0)

Les réels sont écrits avec 17 chiffres significatifs : relecture exacte.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .exceptions import GeometryError, GridFileError
from .grid import FloatArray, Grid, IntArray

logger = logging.getLogger(__name__)

MAGIC = "spheregrid"
VERSION = "v1"


def write_mesh(path: Path | str, points: FloatArray, triangles: IntArray, h: float) -> Path:
    """Écrit points + triangles au format ``spheregrid v1``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} {VERSION} {len(points)} {len(triangles)} {h:.17g}\n")
        np.savetxt(fh, points, fmt="%.17g")
        np.savetxt(fh, triangles, fmt="%d")
    logger.info("Grille écrite : %s (N=%d, T=%d)", path, len(points), len(triangles))
    return path


def write_grid(path: Path | str, grid: Grid) -> Path:
    return write_mesh(path, grid.points, grid.triangles, grid.h)


def read_grid(path: Path | str) -> Grid:
    """Relit une grille ; lève GridFileError si le fichier est invalide."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise GridFileError(f"Lecture impossible de {path} : {e}") from e
    if not lines:
        raise GridFileError(f"{path} : fichier vide")

    header = lines[0].split()
    if len(header) != 5 or header[0] != MAGIC:
        raise GridFileError(f"{path} : en-tête invalide {lines[0]!r}")
    if header[1] != VERSION:
        raise GridFileError(f"{path} : version {header[1]} non supportée")
    try:
        n, t = int(header[2]), int(header[3])
        points = np.loadtxt(lines[1 : 1 + n], dtype=float, ndmin=2)
        triangles = np.loadtxt(lines[1 + n : 1 + n + t], dtype=np.int64, ndmin=2)
    except ValueError as e:
        raise GridFileError(f"{path} : contenu illisible ({e})") from e
    if points.shape != (n, 3) or triangles.shape != (t, 3):
        raise GridFileError(f"{path} : tailles incohérentes avec l'en-tête")
    if triangles.min() < 0 or triangles.max() >= n:
        raise GridFileError(f"{path} : indice de sommet hors bornes")

    try:
        grid = Grid.from_points(points, triangles)
    except GeometryError as e:
        raise GridFileError(f"{path} : grille invalide ({e})") from e
    logger.info("Grille lue : %s (N=%d, h=%.6f)", path, grid.size, grid.h)
    return grid


def write_obj(path: Path | str, points: FloatArray, triangles: IntArray) -> Path:
    """Export OBJ (sommets + faces, indices à partir de 1)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# spheremesh\n")
        np.savetxt(fh, points, fmt="v %.17g %.17g %.17g")
        np.savetxt(fh, triangles + 1, fmt="f %d %d %d")
    return path
