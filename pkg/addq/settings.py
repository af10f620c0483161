from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-addq-local-key')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []

# Application definition
DJANGO_APPS = []

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'common',
    'tensorio',
    'quantization',
    'experiments',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# No ORM models: the dummy backend is enough for commands and SimpleTestCase.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Quantization toolkit settings
ADDQ = {
    'EXHAUSTIVE_CAP': config('ADDQ_EXHAUSTIVE_CAP', default=2 ** 20, cast=int),
    'THREADS': config('ADDQ_THREADS', default=1, cast=int),
    'CSV_DIGITS': config('ADDQ_CSV_DIGITS', default=9, cast=int),
}

LOG_LEVEL = config('ADDQ_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        name: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for name in ('addq', 'common', 'tensorio', 'quantization', 'experiments')
    },
}

# Serializers validate run configs; no request handling is configured.
REST_FRAMEWORK = {
    'NON_FIELD_ERRORS_KEY': 'config',
    'UNAUTHENTICATED_USER': None,
}
