import json
from io import StringIO
from unittest.mock import patch

import numpy as np
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from geometry.grid import gen_cube_sphere
from geometry.gridfile import read_grid
from transport.mesh_pipeline import TanglingReport


def run_solve(**options):
    out = StringIO()
    call_command("solve", stdout=out, stderr=StringIO(), **options)
    return out.getvalue()


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def hemispheres(tmp_path):
    path = tmp_path / "hemispheres.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([40, 40, 220, 220]))
    return path


def test_gen_grid_cube(tmp_path):
    """Test: --cube 2 donne 26 noeuds"""
    out = StringIO()
    path = tmp_path / "g.grid"
    call_command("gen_grid", cube=2, output=str(path), stdout=out)
    assert "N=26" in out.getvalue()
    assert read_grid(path).size == 26


def test_gen_grid_fibonacci(tmp_path):
    """Test: --n 100 donne 100 noeuds"""
    path = tmp_path / "fib.grid"
    call_command("gen_grid", n=100, output=str(path), stdout=StringIO())
    assert read_grid(path).size == 100


def test_gen_grid_too_small(tmp_path):
    """Test: grille de Fibonacci trop petite, code 2"""
    with pytest.raises(CommandError) as exc:
        call_command("gen_grid", n=3, output=str(tmp_path / "g.grid"), stdout=StringIO())
    assert exc.value.returncode == 2


def test_gen_grid_requires_output():
    """Test: -o obligatoire"""
    with pytest.raises(CommandError):
        call_command("gen_grid", cube=2, stdout=StringIO())


def test_solve_identity(tmp_path):
    """Test: uniform → uniform, aucun triangle retourné, manifeste ok"""
    out_dir = tmp_path / "identity"
    stdout = run_solve(method="ot", source="uniform", target="uniform", cube=8, output=str(out_dir))
    assert "N=386 inverted_count=0" in stdout

    manifest = read_json(out_dir / "manifest.json")
    assert manifest["status"] == "ok"
    assert manifest["error"] is None
    assert manifest["config"]["cost"] == "sqgeo"
    assert manifest["results"]["iterations"] == 1
    assert manifest["results"]["pushforward_l1"] == 0.0
    for name in ("forward_map.txt", "moved.grid", "moved.obj", "profile.csv", "report.txt", "report.csv"):
        assert (out_dir / name).exists()
        assert name in manifest["files"]
    assert np.array_equal(read_grid(out_dir / "moved.grid").points, gen_cube_sphere(8).points)


def test_solve_invalid_config(tmp_path):
    """Test: configuration invalide, code 2 et manifeste « invalid »"""
    out_dir = tmp_path / "invalid"
    with pytest.raises(CommandError) as exc:
        run_solve(method="ot", source="uniform", target="uniform", cube=8, steps=10, output=str(out_dir))
    assert exc.value.returncode == 2
    manifest = read_json(out_dir / "manifest.json")
    assert manifest["status"] == "invalid"
    assert "method" in manifest["errors"]


def test_solve_missing_raster(tmp_path):
    """Test: image absente, code 7"""
    out_dir = tmp_path / "missing"
    with pytest.raises(CommandError) as exc:
        run_solve(
            method="ot",
            source="uniform",
            target=f"raster:{tmp_path / 'absent.pgm'}",
            cube=4,
            output=str(out_dir),
        )
    assert exc.value.returncode == 7
    manifest = read_json(out_dir / "manifest.json")
    assert manifest["status"] == "failed"
    assert manifest["error"]["type"] == "UnsupportedRasterFormat"


def test_solve_missing_grid_file(tmp_path):
    """Test: fichier de grille absent, code 7"""
    with pytest.raises(CommandError) as exc:
        run_solve(
            method="oit",
            source="uniform",
            target="equator",
            grid=str(tmp_path / "absent.grid"),
            output=str(tmp_path / "out"),
        )
    assert exc.value.returncode == 7


def test_solve_max_iters(tmp_path):
    """Test: pas de convergence, code 3 et résidus écrits"""
    out_dir = tmp_path / "maxiters"
    with pytest.raises(CommandError) as exc:
        run_solve(
            method="ot", source="uniform", target="equator", cube=8, max_iters=3, output=str(out_dir)
        )
    assert exc.value.returncode == 3
    manifest = read_json(out_dir / "manifest.json")
    assert manifest["status"] == "failed"
    assert manifest["error"]["type"] == "MaxItersExceeded"
    assert len((out_dir / "residuals.csv").read_text().splitlines()) == 4


def test_solve_require_untangled(tmp_path):
    """Test: maillage enchevêtré et --require-untangled, code 4"""
    tangled = TanglingReport(
        inverted_count=3,
        inverted_fraction=3 / 768,
        min_area_ratio=-0.2,
        worst_triangles=[0, 1, 2],
        triangle_count=768,
    )
    out_dir = tmp_path / "tangled"
    with patch("transport.runner.tangling_report", return_value=tangled):
        with pytest.raises(CommandError) as exc:
            run_solve(
                method="ot",
                source="uniform",
                target="uniform",
                cube=8,
                require_untangled=True,
                output=str(out_dir),
            )
    assert exc.value.returncode == 4
    manifest = read_json(out_dir / "manifest.json")
    assert manifest["error"]["type"] == "TangledMesh"
    assert manifest["results"]["pushforward_l1"] is None
    assert "inverted_count=3" in (out_dir / "report.txt").read_text()


def test_rerun_from_manifest(tmp_path, hemispheres):
    """Test: relancer depuis le manifeste reproduit l'application à l'octet près"""
    first = tmp_path / "first"
    run_solve(
        method="oit",
        source="uniform",
        target=f"raster:{hemispheres}",
        lo=0.5,
        hi=1.5,
        cube=8,
        steps=4,
        output=str(first),
    )
    second = tmp_path / "second"
    run_solve(manifest=str(first / "manifest.json"), output=str(second))
    for name in ("forward_map.txt", "inverse_map.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert read_json(second / "manifest.json")["config"]["steps"] == 4


def test_solve_oit_with_raster(tmp_path, hemispheres):
    """Test: oit vers une image, inverse utilisée pour déplacer le maillage"""
    out_dir = tmp_path / "raster"
    stdout = run_solve(
        method="oit",
        source="uniform",
        target=f"raster:{hemispheres}",
        lo=0.5,
        hi=1.5,
        cube=8,
        steps=5,
        output=str(out_dir),
    )
    assert "N=386" in stdout
    manifest = read_json(out_dir / "manifest.json")
    assert manifest["status"] == "ok"
    assert manifest["results"]["theta"] > 0.0
    assert manifest["resolved"]["max_displacement"] > 0.0
    assert "composition.csv" in manifest["files"]
