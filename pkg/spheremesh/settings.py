"""
Django settings for spheremesh project.

Le projet n'expose aucune surface HTTP : Django sert de socle pour la
configuration (django-environ), le logging et les commandes de gestion
(``python manage.py gen_grid`` / ``python manage.py solve``).
"""

from pathlib import Path

import environ  # type: ignore

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

env = environ.Env()

# Take environment variables from .env file if present
env_file = BASE_DIR / ".env"
if env_file.exists():
    env.read_env(env_file)

# Aucune requête n'est servie ; la clé ne protège rien mais Django l'exige.
SECRET_KEY = env.str("DJANGO_SECRET_KEY", default="spheremesh-local-only")

DEBUG = env.bool("DJANGO_DEBUG", default=False)

ALLOWED_HOSTS: list[str] = []


# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "geometry",
    "transport",
]

# Pas de base de données : grilles et champs vivent en mémoire ou sur disque.
DATABASES: dict[str, dict[str, str]] = {}


# Calcul

# 0 = os.cpu_count()
SPHEREMESH_THREADS = env.int("SPHEREMESH_THREADS", default=0)

SPHEREMESH_OUTPUT_ROOT = Path(env.str("SPHEREMESH_OUTPUT_ROOT", default="runs"))


# Logging

SPHEREMESH_LOG_LEVEL = env.str("SPHEREMESH_LOG_LEVEL", default="INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "geometry": {
            "handlers": ["console"],
            "level": SPHEREMESH_LOG_LEVEL,
            "propagate": True,
        },
        "transport": {
            "handlers": ["console"],
            "level": SPHEREMESH_LOG_LEVEL,
            "propagate": True,
        },
    },
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "fr-fr"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True
