import numpy as np
import pytest

from geometry.grid import gen_cube_sphere
from transport.density import TOTAL_MASS
from transport.exceptions import DegenerateRange, UnsupportedRasterFormat
from transport.raster import (
    Raster,
    RasterOptions,
    from_raster,
    pixel_indices,
    raster_values,
    read_pgm,
)


@pytest.fixture(scope="module")
def grid():
    return gen_cube_sphere(4)


@pytest.fixture
def north_black(tmp_path):
    """Image 1×2 : noir au nord, blanc au sud."""
    path = tmp_path / "hemispheres.pgm"
    path.write_bytes(b"P5\n1 2\n255\n" + bytes([0, 255]))
    return path


def test_read_binary_pgm(north_black):
    """Test: lecture P5"""
    img = read_pgm(north_black)
    assert (img.height, img.width) == (2, 1)
    assert img.pixels[:, 0].tolist() == [0, 255]


def test_read_ascii_pgm_with_comments(tmp_path):
    """Test: lecture P2 avec commentaires et maxval < 255"""
    path = tmp_path / "ascii.pgm"
    path.write_text("P2\n# commentaire\n2 1\n# encore\n15\n0 15\n")
    img = read_pgm(path)
    assert img.pixels.tolist() == [[0, 255]]


@pytest.mark.parametrize(
    "content",
    [
        b"P6\n1 1\n255\n\x00\x00\x00",
        b"P5\n2 2\n255\n\x00",
        b"P5\n1 1\n65535\n\x00\x00",
        b"P2\n2 1\n255\n0",
        b"P5\n",
    ],
)
def test_unsupported_files(tmp_path, content):
    """Test: formats non supportés ou fichiers tronqués"""
    path = tmp_path / "bad.pgm"
    path.write_bytes(content)
    with pytest.raises(UnsupportedRasterFormat):
        read_pgm(path)


def test_missing_file(tmp_path):
    """Test: fichier absent"""
    with pytest.raises(UnsupportedRasterFormat):
        read_pgm(tmp_path / "absent.pgm")


def test_pixel_lookup_orientation():
    """Test: ligne 0 au nord, colonne 0 à la longitude −π"""
    img = Raster(pixels=np.zeros((4, 8), dtype=np.uint8))
    points = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [-1.0, -1e-9, 0.0], [1.0, 0.0, 0.0]])
    points /= np.linalg.norm(points, axis=1)[:, None]
    row, col = pixel_indices(img, points)
    assert row.tolist() == [0, 3, 2, 2]
    assert col.tolist()[2] == 0
    assert col.tolist()[3] == 4


def test_values_before_normalization(grid, north_black):
    """Test: noir ↦ lo au nord, blanc ↦ hi au sud"""
    img = read_pgm(north_black)
    values = raster_values(img, RasterOptions(lo=0.5, hi=1.5), grid)
    z = grid.points[:, 2]
    assert np.all(values[z > 0] == 0.5)
    assert np.all(values[z < 0] == 1.5)


def test_invert(grid, north_black):
    """Test: l'inversion échange les hémisphères"""
    img = read_pgm(north_black)
    values = raster_values(img, RasterOptions(invert=True, lo=0.5, hi=1.5), grid)
    z = grid.points[:, 2]
    assert np.all(values[z > 0] == 1.5)
    assert np.all(values[z < 0] == 0.5)


def test_degenerate_range(grid, north_black):
    """Test: hi ≤ lo refusé"""
    with pytest.raises(DegenerateRange):
        raster_values(read_pgm(north_black), RasterOptions(lo=1.0, hi=1.0), grid)


def test_from_raster_is_normalized(grid, north_black):
    """Test: la densité issue d'une image intègre à 4π"""
    rho = from_raster(read_pgm(north_black), RasterOptions(lo=0.5, hi=1.5), grid)
    assert rho.integrate() == pytest.approx(TOTAL_MASS, rel=1e-12)
    z = grid.points[:, 2]
    assert rho.values[z < 0].min() > rho.values[z > 0].max()
