import numpy as np
import pytest
from django.test import SimpleTestCase

from geometry.exceptions import DegenerateConfiguration, GeometryError
from geometry.grid import (
    Grid,
    MapField,
    ScalarField,
    compute_h,
    gen_cube_sphere,
    gen_fibonacci_sphere,
    orientation_det,
    triangulate,
)

OCTAHEDRON = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
)


@pytest.fixture(scope="module")
def cube29():
    return gen_cube_sphere(29)


class CubeSphereTestCase(SimpleTestCase):
    """Tests pour la génération de la grille cube-sphère"""

    def test_smallest_cube(self):
        """Test: m = 2 donne 26 points et une triangulation fermée"""
        g = gen_cube_sphere(2)
        self.assertEqual(g.size, 26)
        self.assertEqual(len(g.triangles), 12 * 4)
        g.check()

    def test_points_are_unit(self):
        """Test: tous les points sont sur la sphère unité"""
        g = gen_cube_sphere(5)
        self.assertLess(np.max(np.abs(np.linalg.norm(g.points, axis=1) - 1)), 1e-12)

    def test_positive_orientation(self):
        """Test: tous les triangles sont orientés positivement"""
        g = gen_cube_sphere(6)
        self.assertTrue(np.all(orientation_det(g.points, g.triangles) > 0))

    def test_rejects_m_below_two(self):
        """Test: m < 2 est refusé"""
        with self.assertRaises(GeometryError):
            gen_cube_sphere(1)


def test_cube_29_has_5048_points(cube29):
    """Test: 6·29² + 2 = 5048"""
    assert cube29.size == 5048


@pytest.mark.parametrize("m", [10, 20, 29])
def test_h_is_quasi_uniform(m):
    """Test: h·√N reste dans [1, 6]"""
    g = gen_cube_sphere(m)
    assert 1.0 <= g.h * np.sqrt(g.size) <= 6.0


def test_h_halves_under_refinement():
    """Test: doubler m divise h par ~2"""
    ratio = gen_cube_sphere(10).h / gen_cube_sphere(20).h
    assert 1.8 <= ratio <= 2.2


def test_octahedron_h():
    """Test: rayon circonscrit de l'octaèdre = arccos(1/√3)"""
    g = Grid.from_points(OCTAHEDRON)
    assert len(g.triangles) == 8
    assert g.h == pytest.approx(np.arccos(1 / np.sqrt(3)), abs=1e-12)
    assert compute_h(g.points, g.triangles) == g.h


def test_triangulate_tetrahedron():
    """Test: 4 points tétraédriques → 4 triangles"""
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
    tris = triangulate(pts)
    assert tris.shape == (4, 3)
    assert np.all(orientation_det(pts, tris) > 0)


def test_triangulate_random_points():
    """Test: 500 points aléatoires, chacun dans au moins 3 triangles"""
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(500, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    g = Grid.from_points(pts)
    counts = np.bincount(g.triangles.ravel(), minlength=500)
    assert counts.min() >= 3


def test_triangulate_degenerate():
    """Test: moins de 4 points → DegenerateConfiguration"""
    with pytest.raises(DegenerateConfiguration):
        triangulate(OCTAHEDRON[:3])


def test_quadrature(cube29):
    """Test: ∫1 = 4π, ∫z = 0, ∫z² = 4π/3"""
    z = cube29.points[:, 2]
    assert cube29.integrate(np.ones(cube29.size)) == pytest.approx(4 * np.pi, abs=1e-6)
    assert abs(cube29.integrate(z)) <= 5e-3
    assert cube29.integrate(z**2) == pytest.approx(4 * np.pi / 3, rel=0.02)


def test_incident_triangles(cube29):
    """Test: la table d'incidence est cohérente avec les triangles"""
    table = cube29.incident_triangles
    node = 100
    listed = set(table[node][table[node] >= 0].tolist())
    expected = set(np.flatnonzero((cube29.triangles == node).any(axis=1)).tolist())
    assert listed == expected


def test_fields_validate_shape():
    """Test: champs de mauvaise taille refusés, identité sans déplacement"""
    g = gen_cube_sphere(2)
    with pytest.raises(GeometryError):
        ScalarField(grid=g, values=np.zeros(3))
    ident = MapField.identity(g)
    assert np.all(ident.displacement() == 0.0)
    assert ScalarField(grid=g, values=np.ones(g.size)).integrate() == pytest.approx(
        4 * np.pi
    )


def test_fibonacci_sphere():
    """Test: spirale de Fibonacci, N points et quadrature de masse 4π"""
    g = gen_fibonacci_sphere(500)
    assert g.size == 500
    assert len(g.triangles) == 2 * 500 - 4
    assert g.integrate(np.ones(g.size)) == pytest.approx(4 * np.pi, rel=1e-10)
    with pytest.raises(GeometryError):
        gen_fibonacci_sphere(3)
