import numpy as np
import pytest
from django.test import SimpleTestCase

from geometry.grid import gen_cube_sphere
from geometry.stencil import build_stencil
from transport.costs import CostKind, CostModel
from transport.density import DensityField, builtin_density, make_density
from transport.exceptions import MassImbalance, MaxItersExceeded, NoRadialSolution
from transport.mesh_pipeline import (
    apply_map,
    pushforward_density,
    relative_l1,
    tangling_report,
)
from transport.operators import OperatorParams
from transport.ot_solver import (
    DEFAULT_TOL,
    Normalization,
    SolverConfig,
    extract_map,
    extract_point,
    solve_ot,
    stability_dt,
)

SQGEO = CostModel(CostKind.SQUARED_GEODESIC)
LOG = CostModel(CostKind.LOGARITHMIC)
NORTH = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def grid():
    return gen_cube_sphere(10)


@pytest.fixture(scope="module")
def stencil(grid):
    return build_stencil(grid)


@pytest.fixture(scope="module")
def params(grid, stencil):
    return OperatorParams.defaults(grid, stencil)


class ExtractPointTestCase(SimpleTestCase):
    """Tests pour l'extraction T(x, p)"""

    def test_squared_geodesic_follows_gradient(self):
        """Test: coût quadratique, T = exp_x(p)"""
        y = extract_point(NORTH, [0.5, 0.0, 0.0], SQGEO)
        self.assertAlmostEqual(float(np.arccos(y[2])), 0.5, places=12)
        self.assertGreater(y[0], 0.0)

    def test_zero_gradient_is_fixed_point(self):
        """Test: p = 0 laisse x en place"""
        self.assertTrue(np.array_equal(extract_point(NORTH, np.zeros(3), SQGEO), NORTH))

    def test_log_cost_moves_against_gradient(self):
        """Test: coût logarithmique, d = 2·arctan(2/‖p‖) dans la direction −p"""
        y = extract_point(NORTH, [0.5, 0.0, 0.0], LOG)
        self.assertAlmostEqual(float(np.arccos(y[2])), 2.0 * np.arctan(4.0), places=10)
        self.assertLess(y[0], 0.0)

    def test_log_cost_without_gradient(self):
        """Test: coût logarithmique et p = 0 : pas de solution"""
        with self.assertRaises(NoRadialSolution):
            extract_point(NORTH, np.zeros(3), LOG)


def test_stability_dt_is_positive(stencil, params):
    """Test: pas explicite strictement positif et borné par 1/2"""
    dt = stability_dt(stencil, params)
    assert 0.0 < dt < 0.5


@pytest.mark.parametrize("normalization", list(Normalization))
def test_identity_transport(grid, stencil, params, normalization):
    """Test: ρ0 = ρ1 uniformes, convergence immédiate vers u = 0"""
    rho = builtin_density("uniform", grid)
    result = solve_ot(
        grid,
        rho,
        rho,
        SQGEO,
        SolverConfig(normalization=normalization),
        params=params,
        stencil=stencil,
    )
    assert result.iterations == 1
    assert result.residual == 0.0
    assert np.all(result.u.values == 0.0)
    forward = extract_map(grid, stencil, result.u, SQGEO)
    assert np.array_equal(forward.images, grid.points)


def test_mass_imbalance(grid, stencil, params):
    """Test: masses différentes refusées avant toute itération"""
    rho0 = builtin_density("uniform", grid)
    rho1 = DensityField(grid=grid, values=2.0 * np.ones(grid.size))
    with pytest.raises(MassImbalance) as exc:
        solve_ot(grid, rho0, rho1, SQGEO, params=params, stencil=stencil)
    assert exc.value.imbalance == pytest.approx(4 * np.pi, rel=1e-10)


def test_max_iters_exceeded(grid, stencil, params):
    """Test: le meilleur itéré est transmis avec l'historique des résidus"""
    rho0 = builtin_density("uniform", grid)
    rho1 = builtin_density("equator", grid)
    with pytest.raises(MaxItersExceeded) as exc:
        solve_ot(grid, rho0, rho1, SQGEO, SolverConfig(max_iters=5), params=params, stencil=stencil)
    err = exc.value
    assert err.best.shape == (grid.size,)
    assert 0 < len(err.history) <= 5
    assert err.residual <= err.history[0]
    assert err.residual > 0.0


def test_small_potential_moves_north(grid, stencil):
    """Test: u = 0.01·z déplace les noeuds vers le nord d'au plus ~0.01"""
    z = grid.points[:, 2]
    forward = extract_map(grid, stencil, 0.01 * z, SQGEO)
    disp = forward.displacement()
    assert np.max(disp) == pytest.approx(0.01, rel=0.2)
    away_from_poles = np.abs(z) < 0.9
    assert np.all(forward.images[away_from_poles, 2] > z[away_from_poles])


def scripted_scheme(levels):
    """Schéma factice : résidu constant égal à levels[k] à l'appel k."""
    calls = iter(levels)

    def scheme(g, st, u, f0, f1, cost, params):
        return np.full(g.size, next(calls)) + u[0]

    return scheme


def test_flat_residual_keeps_dt(grid, stencil, params, monkeypatch):
    """Test: un résidu qui stagne ou remonte un peu ne réduit pas dt"""
    monkeypatch.setattr(
        "transport.ot_solver.ot_scheme", scripted_scheme([1.385, 1.386, 1.39, 1.2, 1e-7])
    )
    rho = builtin_density("uniform", grid)
    cfg = SolverConfig(normalization=Normalization.FIXED_POINT)
    result = solve_ot(grid, rho, rho, SQGEO, cfg, params=params, stencil=stencil)
    assert result.iterations == 5
    assert result.dt == stability_dt(stencil, params)


def test_residual_blowup_halves_dt(grid, stencil, params, monkeypatch):
    """Test: résidu plus que doublé, retour au meilleur itéré et dt / 2"""
    monkeypatch.setattr("transport.ot_solver.ot_scheme", scripted_scheme([1.0, 3.0, 1e-7]))
    rho = builtin_density("uniform", grid)
    cfg = SolverConfig(normalization=Normalization.FIXED_POINT)
    result = solve_ot(grid, rho, rho, SQGEO, cfg, params=params, stencil=stencil)
    assert result.history == [1.0, 3.0, 1e-7]
    assert result.dt == stability_dt(stencil, params) / 2.0


def test_converges_towards_equator(grid, stencil, params):
    """Test: densité concentrée à l'équateur, convergence sans enchevêtrement"""
    z = grid.points[:, 2]
    rho0 = builtin_density("uniform", grid)
    rho1 = make_density(grid, 1.0 + 0.5 * (1.0 - z**2))
    result = solve_ot(grid, rho0, rho1, SQGEO, params=params, stencil=stencil)
    assert result.residual <= DEFAULT_TOL
    assert result.iterations > 1

    moved = apply_map(grid, extract_map(grid, stencil, result.u, SQGEO))
    report = tangling_report(grid, moved)
    assert report.inverted_count == 0
    push = pushforward_density(grid, moved, rho0, report)
    gap = grid.integrate(np.abs(rho0.values - rho1.values))
    assert relative_l1(push, rho1) < gap / grid.integrate(rho1.values)
    assert np.mean(np.abs(moved.points[:, 2])) < np.mean(np.abs(z))
