from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Environment helper function
def env(key, default=None):
    return os.environ.get(key, default)


def env_bool(key, default):
    return str(env(key, default)).lower() == "true"


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = env("DJANGO_SECRET_KEY", "django-insecure-secret-key")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = env_bool("DEBUG", "True")  # Default to True for development

ALLOWED_HOSTS = env("ALLOWED_HOSTS", "localhost,127.0.0.1,0.0.0.0").split(",")

# Proxy configuration for Docker
USE_X_FORWARDED_HOST = True
SECURE_PROXY_SSL_HEADER = ("HTTP_X_FORWARDED_PROTO", "https")

if not DEBUG:
    SECURE_REFERRER_POLICY = "strict-origin-when-cross-origin"
    SECURE_CROSS_ORIGIN_OPENER_POLICY = "same-origin"

# Application definition
INSTALLED_APPS = [
    "core",
    "road_anomaly.apps.RoadAnomalyConfig",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.middleware.common.CommonMiddleware",
]

ROOT_URLCONF = "controller.urls"

WSGI_APPLICATION = "controller.wsgi.application"

# Everything lives in text files; no database
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Upload limit for the detection API (correspondences of a full sequence)
DATA_UPLOAD_MAX_MEMORY_SIZE = int(env("DATA_UPLOAD_MAX_MEMORY_SIZE", 200 * 1024 * 1024))


# Road anomaly detection defaults, each overridable as ROAD_ANOMALY_<KEY>
def _intensity_edges(raw):
    return tuple(float(v) for v in raw.split(","))


ROAD_ANOMALY = {
    # Response
    "WINDOW": int(env("ROAD_ANOMALY_WINDOW", 30)),
    "THRESHOLD": float(env("ROAD_ANOMALY_THRESHOLD", 1.0)),
    "NMS_RADIUS": int(env("ROAD_ANOMALY_NMS_RADIUS")) if env("ROAD_ANOMALY_NMS_RADIUS") else None,
    "COMPENSATION": env_bool("ROAD_ANOMALY_COMPENSATION", "True"),
    # Pitch estimator
    "MAX_ITERATIONS": int(env("ROAD_ANOMALY_MAX_ITERATIONS", 50)),
    "GRADIENT_TOLERANCE": float(env("ROAD_ANOMALY_GRADIENT_TOLERANCE", 1e-10)),
    "STEP_TOLERANCE": float(env("ROAD_ANOMALY_STEP_TOLERANCE", 1e-9)),
    "INITIAL_DAMPING": float(env("ROAD_ANOMALY_INITIAL_DAMPING", 1e-3)),
    "DAMPING_UP": float(env("ROAD_ANOMALY_DAMPING_UP", 10.0)),
    "DAMPING_DOWN": float(env("ROAD_ANOMALY_DAMPING_DOWN", 0.1)),
    "PHI_CLAMP": float(env("ROAD_ANOMALY_PHI_CLAMP", 0.3)),
    "MIN_PAIRS": int(env("ROAD_ANOMALY_MIN_PAIRS", 8)),
    "LOSS_SCALE": float(env("ROAD_ANOMALY_LOSS_SCALE", 1.0)),
    "LEAK": float(env("ROAD_ANOMALY_LEAK", 1.0)),
    # Evaluation
    "FOLDS": int(env("ROAD_ANOMALY_FOLDS", 5)),
    "SEED": int(env("ROAD_ANOMALY_SEED", 0)),
    "WORKERS": int(env("ROAD_ANOMALY_WORKERS", 1)),
    "INTENSITY_EDGES": _intensity_edges(
        env("ROAD_ANOMALY_INTENSITY_EDGES", "0,0.005,0.01,0.015,0.02,0.025,0.03")
    ),
}

# Logging Configuration
# stdout carries command output only, so every handler writes to stderr
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {process:d} {thread:d} {message}",
            "style": "{",
        },
        "simple": {
            "format": "{levelname} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "simple",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "INFO",
            "propagate": False,
        },
        "road_anomaly": {
            "handlers": ["console"],
            "level": env("ROAD_ANOMALY_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
        "core": {
            "handlers": ["console"],
            "level": env("ROAD_ANOMALY_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}

# Verbose format for container logs
if env_bool("LOG_VERBOSE", "False"):
    LOGGING["handlers"]["console"]["formatter"] = "verbose"
