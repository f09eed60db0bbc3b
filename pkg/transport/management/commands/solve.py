import logging
from typing import Any

from django.core.management.base import BaseCommand, CommandError, CommandParser
from rest_framework.exceptions import ParseError

from geometry.exceptions import GeometryError, GridFileError
from transport.exceptions import (
    MassImbalance,
    MaxItersExceeded,
    TangledMesh,
    TransportError,
    UnsupportedRasterFormat,
)
from transport.runner import MANIFEST_NAME, Run, output_dir, read_manifest, write_manifest
from transport.serializers import RunConfigSerializer

logger = logging.getLogger(__name__)

# Codes de sortie
USAGE_ERROR = 2
MAX_ITERS = 3
TANGLED = 4
MASS_IMBALANCE = 5
NUMERICAL_ERROR = 6
INPUT_ERROR = 7

# Ordre significatif : la première classe correspondante l'emporte.
EXIT_CODES: list[tuple[type[Exception], int]] = [
    (MaxItersExceeded, MAX_ITERS),
    (TangledMesh, TANGLED),
    (MassImbalance, MASS_IMBALANCE),
    (GridFileError, INPUT_ERROR),
    (UnsupportedRasterFormat, INPUT_ERROR),
    (TransportError, NUMERICAL_ERROR),
    (GeometryError, NUMERICAL_ERROR),
]

CONFIG_OPTIONS = (
    "method",
    "cost",
    "source",
    "target",
    "invert",
    "floor",
    "lo",
    "hi",
    "cube",
    "grid",
    "dt",
    "tol",
    "max_iters",
    "normalization",
    "steps",
    "sigma",
    "R",
    "eps_g",
    "apply",
    "output",
    "require_untangled",
)


def exit_code_for(error: Exception) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(error, cls):
            return code
    return NUMERICAL_ERROR


class Command(BaseCommand):
    """
    Calcule une application de redistribution (ot ou oit), déplace le maillage
    et écrit diagnostics, exports et manifeste.
    Exemple :
        python manage.py solve --method oit --source uniform --target equator \\
            --cube 29 --steps 100 -o runs/equateur
    """

    help = "Transport optimal ou transport d'information optimal sur la sphère."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--method", choices=["ot", "oit"])
        parser.add_argument("--cost", choices=["sqgeo", "log"], help="Coût (ot uniquement).")
        parser.add_argument("--source", help="uniform, equator ou raster:<fichier.pgm>.")
        parser.add_argument("--target", help="uniform, equator ou raster:<fichier.pgm>.")
        parser.add_argument("--invert", action="store_true", default=None, help="Inverse l'image.")
        parser.add_argument("--floor", type=float, help="Plancher δ relatif à la moyenne.")
        parser.add_argument("--lo", type=float, help="Valeur associée au noir.")
        parser.add_argument("--hi", type=float, help="Valeur associée au blanc.")
        parser.add_argument("--cube", type=int, help="Grille cube-sphère de subdivision m.")
        parser.add_argument("--grid", help="Fichier de grille (gen_grid).")
        parser.add_argument("--dt", type=float, help="Pas de l'itération OT.")
        parser.add_argument("--tol", type=float, help="Tolérance sur le résidu OT.")
        parser.add_argument("--max-iters", dest="max_iters", type=int)
        parser.add_argument("--normalization", choices=["fixed_point", "mean_zero"])
        parser.add_argument("--steps", type=int, help="Nombre de pas OIT.")
        parser.add_argument("--sigma", type=float, help="Problème OIT inexact de paramètre σ.")
        parser.add_argument("--R", dest="R", type=float, help="Borne de Lipschitz.")
        parser.add_argument("--eps-g", dest="eps_g", type=float)
        parser.add_argument(
            "--apply",
            choices=["transport", "forward", "inverse"],
            help="Application qui déplace le maillage (défaut : transport).",
        )
        parser.add_argument("-o", "--output", help="Répertoire de sortie.")
        parser.add_argument(
            "--require-untangled",
            dest="require_untangled",
            action="store_true",
            default=None,
            help="Code de sortie 4 si le maillage déplacé est enchevêtré.",
        )
        parser.add_argument("--manifest", help="Relance un calcul depuis un manifeste.")

    def _raw_config(self, options: dict[str, Any]) -> dict[str, Any]:
        config: dict[str, Any] = {}
        if options.get("manifest"):
            try:
                config = read_manifest(options["manifest"])
            except (OSError, ParseError, KeyError, TypeError) as e:
                logger.error("Manifeste illisible %s : %s", options["manifest"], e)
                raise CommandError(f"Manifeste illisible : {e}", returncode=INPUT_ERROR) from e
        for name in CONFIG_OPTIONS:
            if options.get(name) is not None:
                config[name] = options[name]
        return config

    def handle(self, *args: Any, **options: Any) -> None:
        raw = self._raw_config(options)
        serializer = RunConfigSerializer(data=raw)
        if not serializer.is_valid():
            logger.error("Configuration invalide : %s", serializer.errors)
            if raw.get("output"):
                write_manifest(
                    output_dir(raw["output"]) / MANIFEST_NAME,
                    {"status": "invalid", "errors": serializer.errors, "config": raw},
                )
            raise CommandError(f"Configuration invalide : {dict(serializer.errors)}", returncode=USAGE_ERROR)

        config = dict(serializer.validated_data)
        self.stdout.write(
            self.style.NOTICE(f"Calcul {config['method']} : {config['source']} → {config['target']}")
        )
        run = Run(config)
        try:
            summary = run.execute()
        except (TransportError, GeometryError) as e:
            code = exit_code_for(e)
            logger.error("Échec du calcul (%s) : %s", type(e).__name__, e)
            self.stderr.write(self.style.ERROR(f"Échec : {e}"))
            raise CommandError(str(e), returncode=code) from e
        except Exception as e:
            logger.exception("Erreur inattendue durant le calcul")
            raise CommandError(f"Erreur inattendue : {e}", returncode=NUMERICAL_ERROR) from e

        self.stdout.write(
            self.style.SUCCESS(
                f"N={summary.grid_size} inverted_count={summary.inverted_count} "
                f"inverted_fraction={summary.inverted_fraction:.6f} "
                f"pushforward_l1={summary.pushforward_l1}"
            )
        )
        self.stdout.write(self.style.NOTICE(f"Résultats écrits dans {summary.output}"))
