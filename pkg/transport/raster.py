"""
Densités issues d'images équirectangulaires en niveaux de gris (PGM P5/P2).

Ligne 0 = nord ; le pixel (r, c) couvre la latitude π/2 − π(r+0.5)/H et la
longitude 2π(c+0.5)/W − π. Échantillonnage au plus proche pixel, par
troncature des indices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from geometry.grid import FloatArray, Grid

from .density import DEFAULT_FLOOR, DensityField, make_density
from .exceptions import DegenerateRange, UnsupportedRasterFormat

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Raster:
    pixels: NDArray[np.uint8]  # (H, W)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class RasterOptions:
    invert: bool = False
    floor: float = DEFAULT_FLOOR
    lo: float = 0.2
    hi: float = 1.0


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Lit ``count`` jetons d'en-tête PGM (commentaires ignorés)."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise UnsupportedRasterFormat("En-tête PGM tronqué")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path: Path | str) -> Raster:
    """Charge un PGM 8 bits binaire (P5) ou texte (P2)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise UnsupportedRasterFormat(f"Lecture impossible de {path} : {e}") from e

    (magic, *dims), pos = _header_tokens(data, 4)
    if magic not in (b"P5", b"P2"):
        raise UnsupportedRasterFormat(f"{path} : format {magic!r} non supporté")
    try:
        width, height, maxval = (int(tok) for tok in dims)
    except ValueError as e:
        raise UnsupportedRasterFormat(f"{path} : en-tête invalide") from e
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise UnsupportedRasterFormat(f"{path} : seules les images 8 bits sont acceptées")

    if magic == b"P5":
        # Un seul blanc sépare l'en-tête des données binaires.
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1) \
            if len(data) >= pos + 1 + width * height else None
        if raw is None:
            raise UnsupportedRasterFormat(f"{path} : données binaires tronquées")
        values = raw.astype(np.int64)
    else:
        body = data[pos:].split()
        if len(body) < width * height:
            raise UnsupportedRasterFormat(f"{path} : données texte tronquées")
        values = np.array([int(tok) for tok in body[: width * height]], dtype=np.int64)

    if values.max(initial=0) > maxval:
        raise UnsupportedRasterFormat(f"{path} : valeur de pixel > maxval")
    if maxval != 255:
        values = np.rint(values * (255.0 / maxval)).astype(np.int64)
    logger.info("Image %s : %dx%d", path, width, height)
    return Raster(pixels=values.reshape(height, width).astype(np.uint8))


def pixel_indices(raster: Raster, points: FloatArray) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Indices (ligne, colonne) du pixel contenant chaque point."""
    lat = np.arcsin(np.clip(points[:, 2], -1.0, 1.0))
    lon = np.arctan2(points[:, 1], points[:, 0])
    row = np.floor((np.pi / 2 - lat) / np.pi * raster.height).astype(np.int64)
    col = np.floor((lon + np.pi) / (2 * np.pi) * raster.width).astype(np.int64)
    return np.clip(row, 0, raster.height - 1), np.clip(col, 0, raster.width - 1)


def raster_values(raster: Raster, opts: RasterOptions, g: Grid) -> FloatArray:
    """Valeurs avant normalisation : v/255 ↦ [lo, hi], inversion optionnelle."""
    if opts.hi <= opts.lo:
        raise DegenerateRange(f"hi={opts.hi} ≤ lo={opts.lo}")
    row, col = pixel_indices(raster, g.points)
    v = raster.pixels[row, col].astype(float)
    if opts.invert:
        v = 255.0 - v
    return opts.lo + (opts.hi - opts.lo) * v / 255.0


def from_raster(raster: Raster, opts: RasterOptions, g: Grid) -> DensityField:
    return make_density(g, raster_values(raster, opts, g), opts.floor)
