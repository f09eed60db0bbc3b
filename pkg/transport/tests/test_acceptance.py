"""
Expériences complètes sur la grille N = 5048 (m = 29).

Lancer avec ``pytest -m slow``.
"""

import json
from io import StringIO

import numpy as np
import pytest
from django.core.management import call_command

from geometry.grid import gen_cube_sphere
from geometry.stencil import build_stencil
from transport.costs import CostKind, CostModel
from transport.density import builtin_density
from transport.mesh_pipeline import (
    apply_map,
    pushforward_density,
    relative_l1,
    tangling_report,
)
from transport.oit_solver import fisher_rao_theta, mass_rate, solve_oit
from transport.operators import OperatorParams, consistency_error
from transport.ot_solver import extract_map, solve_ot
from transport.poisson import PoissonOperator

pytestmark = pytest.mark.slow

SQGEO = CostModel(CostKind.SQUARED_GEODESIC)


@pytest.fixture(scope="module")
def grid():
    g = gen_cube_sphere(29)
    assert g.size == 5048
    return g


@pytest.fixture(scope="module")
def stencil(grid):
    return build_stencil(grid)


@pytest.fixture(scope="module")
def params(grid, stencil):
    return OperatorParams.defaults(grid, stencil)


@pytest.fixture(scope="module")
def equator(grid):
    return builtin_density("uniform", grid), builtin_density("equator", grid)


def test_laplacian_convergence_order():
    """Test: erreur de consistance décroissante, rapport ≥ 1.3 par raffinement"""
    errors = []
    for m in (10, 20, 40):
        g = gen_cube_sphere(m)
        errors.append(consistency_error(g, build_stencil(g)))
    assert errors[0] / errors[1] >= 1.3
    assert errors[1] / errors[2] >= 1.3


def test_poisson_eigenfunctions(grid, stencil, params):
    """Test: erreur relative sur z et x² − y² sous l'erreur de consistance"""
    op = PoissonOperator(grid, stencil, params)
    bound = consistency_error(grid, stencil)
    assert bound < 0.5
    x = grid.points
    for exact, factor in ((x[:, 2], -2.0), (x[:, 0] ** 2 - x[:, 1] ** 2, -6.0)):
        u = op.solve(factor * exact).u
        rel = np.max(np.abs(u - exact)) / np.max(np.abs(exact))
        assert rel <= bound


def test_ot_identity(grid, stencil, params):
    """Test: densités uniformes, déplacement ≤ 5h et résidu ≤ 1e-6"""
    rho = builtin_density("uniform", grid)
    result = solve_ot(grid, rho, rho, SQGEO, params=params, stencil=stencil)
    assert result.residual <= 1e-6
    forward = extract_map(grid, stencil, result.u, SQGEO)
    assert np.max(forward.displacement()) <= 5 * grid.h


def test_ot_equator(grid, stencil, params, equator):
    """Test: OT vers la bande équatoriale sans enchevêtrement, L1 ≤ 0.1"""
    rho0, rho1 = equator
    result = solve_ot(grid, rho0, rho1, SQGEO, params=params, stencil=stencil)
    assert result.residual <= 1e-6
    moved = apply_map(grid, extract_map(grid, stencil, result.u, SQGEO))
    report = tangling_report(grid, moved)
    assert report.inverted_count == 0
    push = pushforward_density(grid, moved, rho0, report)
    assert relative_l1(push, rho1) <= 0.1


def test_oit_equator(grid, stencil, params, equator):
    """Test: OIT exact, 100 pas, masse conservée, sans enchevêtrement, L1 ≤ 0.1"""
    rho0, rho1 = equator
    result = solve_oit(grid, rho0, rho1, steps=100, params=params, stencil=stencil)
    assert result.max_mass_defect < 1e-8

    gd = fisher_rao_theta(grid, rho0, rho1)
    assert all(abs(mass_rate(gd, t)) < 1e-8 for t in np.linspace(0.0, 1.0, 101))

    moved = apply_map(grid, result.inverse)
    report = tangling_report(grid, moved)
    assert report.inverted_count == 0
    push = pushforward_density(grid, moved, rho0, report)
    assert relative_l1(push, rho1) <= 0.1


def test_theta_against_dense_quadrature(grid, equator):
    """Test: θ à m = 29 égal à l'oracle m = 60 à 1 % près"""
    theta = fisher_rao_theta(grid, *equator).theta
    fine = gen_cube_sphere(60)
    root = np.sqrt(builtin_density("equator", fine).values)
    oracle = np.arccos(fine.integrate(root) / (4 * np.pi))
    assert theta == pytest.approx(oracle, rel=0.01)


def synthetic_world(path, width=360, height=180):
    """Planisphère synthétique : trois « continents » clairs sur fond sombre."""
    lon = (np.arange(width) + 0.5) / width * 2 * np.pi - np.pi
    lat = np.pi / 2 - (np.arange(height) + 0.5) / height * np.pi
    lon, lat = np.meshgrid(lon, lat)
    land = np.zeros_like(lon)
    for clon, clat, radius in ((-1.6, 0.6, 0.6), (0.3, 0.2, 0.8), (2.2, -0.4, 0.5)):
        land += np.exp(-((lon - clon) ** 2 + (lat - clat) ** 2) / radius**2)
    pixels = np.clip(255 * land, 0, 255).astype(np.uint8)
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode() + pixels.tobytes())
    return path


def test_oit_world_map(tmp_path):
    """Test: OIT vers une image, fraction de triangles retournés ≤ 1 %"""
    world = synthetic_world(tmp_path / "world.pgm")
    out_dir = tmp_path / "world"
    call_command(
        "solve",
        method="oit",
        source="uniform",
        target=f"raster:{world}",
        cube=29,
        steps=100,
        output=str(out_dir),
        stdout=StringIO(),
    )
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["results"]["inverted_fraction"] <= 0.01
