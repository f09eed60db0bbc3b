"""
Exports de données de tracé : historique des résidus, profil méridien des
densités, échantillons d'applications, rapport d'enchevêtrement.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from geometry.grid import FloatArray, Grid, MapField, ScalarField
from geometry.interpolation import interp_scalar

from .mesh_pipeline import PushforwardDensity, TanglingReport

logger = logging.getLogger(__name__)

PROFILE_SAMPLES = 181


def _target(path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_residuals(path: Path | str, history: Iterable[float]) -> Path:
    path = _target(path)
    values = np.asarray(list(history), dtype=float)
    rows = np.column_stack([np.arange(1, len(values) + 1), values])
    np.savetxt(path, rows, fmt=["%d", "%.10e"], delimiter=",", header="iteration,residual", comments="")
    return path


def meridian_points(longitude: float = 0.0, samples: int = PROFILE_SAMPLES) -> tuple[FloatArray, FloatArray]:
    """Latitudes (degrés) et points du méridien, du pôle sud au pôle nord."""
    lat = np.linspace(-90.0, 90.0, samples)
    phi, lam = np.radians(lat), np.radians(longitude)
    points = np.column_stack(
        [np.cos(phi) * np.cos(lam), np.cos(phi) * np.sin(lam), np.sin(phi)]
    )
    return lat, points


def meridian_profile(
    g: Grid,
    rho0: ScalarField,
    rho1: ScalarField,
    push: PushforwardDensity | None = None,
    longitude: float = 0.0,
    samples: int = PROFILE_SAMPLES,
) -> FloatArray:
    """
    Colonnes : latitude, source, cible, densité poussée.

    La densité poussée est lue au noeud déplacé le plus proche (NaN si le
    maillage est enchevêtré).
    """
    lat, points = meridian_points(longitude, samples)
    source = interp_scalar(g, rho0.values, points)
    target = interp_scalar(g, rho1.values, points)
    if push is None:
        pushed = np.full(samples, np.nan)
    else:
        _, nearest = cKDTree(push.moved.points).query(points)
        pushed = push.values[nearest]
    return np.column_stack([lat, source, target, pushed])


def write_profile(path: Path | str, profile: FloatArray) -> Path:
    path = _target(path)
    np.savetxt(path, profile, fmt="%.10g", delimiter=",", header="latitude,source,target,pushforward", comments="")
    return path


def write_map(path: Path | str, mapf: MapField) -> Path:
    """Une ligne ``x y z`` par noeud."""
    path = _target(path)
    np.savetxt(path, mapf.images, fmt="%.17g")
    return path


def write_report(
    text_path: Path | str,
    csv_path: Path | str,
    report: TanglingReport,
    extras: Mapping[str, object] | None = None,
) -> tuple[Path, Path]:
    """Rapport ``clé=valeur`` et ligne CSV (en-tête compris)."""
    extras = dict(extras or {})
    text_path, csv_path = _target(text_path), _target(csv_path)
    lines = report.as_text() + "".join(f"{k}={v}\n" for k, v in extras.items())
    text_path.write_text(lines, encoding="utf-8")
    header = ",".join([TanglingReport.csv_header(), *extras])
    row = ",".join([report.as_csv_row(), *(str(v) for v in extras.values())])
    csv_path.write_text(f"{header}\n{row}\n", encoding="utf-8")
    logger.info("Rapport écrit : %s", text_path)
    return text_path, csv_path
