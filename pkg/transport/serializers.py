from __future__ import annotations

import math
from typing import Any

from rest_framework import serializers

from .costs import COST_ALIASES
from .density import BUILTIN_DENSITIES, DEFAULT_FLOOR
from .oit_solver import DEFAULT_STEPS
from .ot_solver import DEFAULT_MAX_ITERS, DEFAULT_TOL, Normalization

RASTER_PREFIX = "raster:"

METHOD_OT = "ot"
METHOD_OIT = "oit"

APPLY_TRANSPORT = "transport"
APPLY_FORWARD = "forward"
APPLY_INVERSE = "inverse"


def parse_density_spec(value: str) -> tuple[str, str]:
    """'uniform' → ('builtin', 'uniform') ; 'raster:x.pgm' → ('raster', 'x.pgm')."""
    if value.startswith(RASTER_PREFIX):
        return "raster", value[len(RASTER_PREFIX) :]
    return "builtin", value


class RunConfigSerializer(serializers.Serializer):
    """
    Configuration d'un calcul (`manage.py solve`).

    - `validate_<champ>` : densités, grille, bornes numériques
    - `validate()` : règles propres à chaque méthode (coût pour ot ;
      steps/sigma pour oit), grille unique, valeurs par défaut résolues
    """

    method = serializers.ChoiceField(choices=[METHOD_OT, METHOD_OIT])
    cost = serializers.ChoiceField(
        choices=sorted(COST_ALIASES), required=False, allow_null=True, default=None
    )
    source = serializers.CharField()
    target = serializers.CharField()

    invert = serializers.BooleanField(required=False, default=False)
    floor = serializers.FloatField(required=False, default=DEFAULT_FLOOR)
    lo = serializers.FloatField(required=False, default=0.2)
    hi = serializers.FloatField(required=False, default=1.0)

    cube = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=2)
    grid = serializers.CharField(required=False, allow_null=True, default=None)

    dt = serializers.FloatField(required=False, allow_null=True, default=None)
    tol = serializers.FloatField(required=False, default=DEFAULT_TOL)
    max_iters = serializers.IntegerField(required=False, default=DEFAULT_MAX_ITERS, min_value=1)
    normalization = serializers.ChoiceField(
        choices=[n.value for n in Normalization], required=False, default=Normalization.MEAN_ZERO.value
    )
    steps = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=1)
    sigma = serializers.FloatField(required=False, allow_null=True, default=None)
    R = serializers.FloatField(required=False, allow_null=True, default=None)
    eps_g = serializers.FloatField(required=False, allow_null=True, default=None)

    apply = serializers.ChoiceField(
        choices=[APPLY_TRANSPORT, APPLY_FORWARD, APPLY_INVERSE], required=False, default=APPLY_TRANSPORT
    )
    output = serializers.CharField()
    require_untangled = serializers.BooleanField(required=False, default=False)

    def _validate_density(self, value: str) -> str:
        kind, name = parse_density_spec(value)
        if kind == "raster":
            if not name:
                raise serializers.ValidationError("Chemin d'image manquant après 'raster:'.")
        elif name not in BUILTIN_DENSITIES:
            raise serializers.ValidationError(
                f"Densité inconnue '{name}' (uniform, equator ou raster:<fichier.pgm>)."
            )
        return value

    def validate_source(self, value: str) -> str:
        return self._validate_density(value)

    def validate_target(self, value: str) -> str:
        return self._validate_density(value)

    def validate_floor(self, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Le plancher doit être dans ]0, 1[.")
        return value

    def _positive(self, value: float | None) -> float | None:
        if value is not None and not (math.isfinite(value) and value > 0.0):
            raise serializers.ValidationError("Valeur strictement positive et finie attendue.")
        return value

    def validate_dt(self, value: float | None) -> float | None:
        return self._positive(value)

    def validate_tol(self, value: float) -> float:
        return self._positive(value)

    def validate_eps_g(self, value: float | None) -> float | None:
        return self._positive(value)

    def validate_sigma(self, value: float | None) -> float | None:
        if value is not None and not (math.isfinite(value) and value >= 0.0):
            raise serializers.ValidationError("σ doit être positif ou nul et fini.")
        return value

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        method = attrs["method"]
        if (attrs.get("cube") is None) == (attrs.get("grid") is None):
            raise serializers.ValidationError(
                {"grid": "Indiquer exactement une grille : --cube m ou --grid fichier."}
            )
        if attrs["lo"] >= attrs["hi"] or attrs["lo"] < 0.0:
            raise serializers.ValidationError({"hi": "Plage d'image invalide : 0 ≤ lo < hi requis."})

        if method == METHOD_OT:
            if attrs.get("steps") is not None or attrs.get("sigma") is not None:
                raise serializers.ValidationError(
                    {"method": "--steps et --sigma ne s'appliquent qu'à la méthode oit."}
                )
            if attrs["apply"] == APPLY_INVERSE:
                raise serializers.ValidationError(
                    {"apply": "L'application inverse n'est calculée que par oit."}
                )
            attrs["cost"] = attrs.get("cost") or "sqgeo"
        else:
            if attrs.get("cost") is not None:
                raise serializers.ValidationError({"cost": "--cost ne s'applique qu'à la méthode ot."})
            attrs["steps"] = attrs.get("steps") or DEFAULT_STEPS

        R = attrs.get("R")
        if R is not None and not math.isfinite(R):
            raise serializers.ValidationError({"R": "R doit être fini."})
        if R is not None and (attrs.get("cost") or "sqgeo") == "sqgeo" and R <= math.pi:
            raise serializers.ValidationError({"R": "R doit dépasser π pour le coût géodésique."})
        return attrs
