"""
Django settings for django_font_diffusion project.

Only the parts of Django used by the text-control pipeline are enabled: the
settings module, management commands and the test runner. There is no web
surface and no database.
"""

import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SECRET_KEY = os.getenv('TEXTCONTROL_SECRET_KEY', 'textcontrol-offline-key')

DEBUG = os.getenv('TEXTCONTROL_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'textcontrol.apps.TextControlAppConfig',
]

DATABASES = {}

TIME_ZONE = 'UTC'

USE_TZ = True


# Logging: everything to standard error, data goes to files only.

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'textcontrol': {
            'handlers': ['stderr'],
            'level': os.getenv('TEXTCONTROL_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Celery settings. Tasks run in-process unless a broker is configured.
CELERY_BROKER_URL = os.getenv('TEXTCONTROL_CELERY_BROKER', 'memory://')
# Training results and the abort flag of train_run live here; workers on other hosts need a shared store (redis://).
CELERY_RESULT_BACKEND = os.getenv('TEXTCONTROL_CELERY_RESULT_BACKEND', 'cache+memory://')
CELERY_TASK_ALWAYS_EAGER = os.getenv('TEXTCONTROL_CELERY_EAGER', '1') == '1'
CELERY_TASK_EAGER_PROPAGATES = True


# Text-control settings
TEXTCONTROL_FONT_DIR = os.getenv('TEXTCONTROL_FONT_DIR')  # *.ttf / *.otf, ids are file stems
TEXTCONTROL_DEFAULT_FONT = os.getenv('TEXTCONTROL_DEFAULT_FONT', 'default')
TEXTCONTROL_CHARACTER_POOL = os.getenv('TEXTCONTROL_CHARACTER_POOL', 'ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789')
TEXTCONTROL_RECOGNIZER_ACCURACY_FLOOR = float(os.getenv('TEXTCONTROL_RECOGNIZER_ACCURACY_FLOOR', '0.95'))
TEXTCONTROL_CODEC_PSNR_FLOOR = float(os.getenv('TEXTCONTROL_CODEC_PSNR_FLOOR', '20.0'))
TEXTCONTROL_WORKERS = int(os.getenv('TEXTCONTROL_WORKERS', str(os.cpu_count() or 1)))
