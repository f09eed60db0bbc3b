import logging
from typing import Any

from django.core.management.base import BaseCommand, CommandError, CommandParser

from geometry.exceptions import GeometryError
from geometry.grid import gen_cube_sphere, gen_fibonacci_sphere
from geometry.gridfile import write_grid

logger = logging.getLogger(__name__)

USAGE_ERROR = 2
FILE_ERROR = 7


class Command(BaseCommand):
    """
    Génère une grille sphérique et l'écrit au format ``spheregrid v1``.
    Exemple :
        python manage.py gen_grid --cube 29 -o g.grid
    """

    help = "Génère une grille cube-sphère (--cube m) ou de Fibonacci (--n N)."

    def add_arguments(self, parser: CommandParser) -> None:
        group = parser.add_mutually_exclusive_group(required=True)
        group.add_argument(
            "--cube",
            type=int,
            help="Subdivision m de chaque face du cube (N = 6m² + 2).",
        )
        group.add_argument(
            "--n",
            type=int,
            help="Nombre de points d'une spirale de Fibonacci.",
        )
        parser.add_argument("-o", "--output", required=True, help="Fichier de grille à écrire.")

    def handle(self, *args: Any, **options: Any) -> None:
        try:
            if options["cube"] is not None:
                grid = gen_cube_sphere(options["cube"])
            else:
                grid = gen_fibonacci_sphere(options["n"])
        except GeometryError as e:
            logger.error("Génération de grille impossible : %s", e)
            raise CommandError(str(e), returncode=USAGE_ERROR) from e

        try:
            path = write_grid(options["output"], grid)
        except OSError as e:
            logger.error("Écriture impossible : %s", e)
            raise CommandError(f"Écriture impossible : {e}", returncode=FILE_ERROR) from e

        self.stdout.write(self.style.SUCCESS(f"N={grid.size} h={grid.h:.6f}"))
        self.stdout.write(self.style.NOTICE(f"Grille écrite dans {path}"))
