import logging
import os

from celery import Celery
from celery.signals import worker_process_init

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'django_font_diffusion.settings')

logger = logging.getLogger('textcontrol.worker')

app = Celery('django_font_diffusion')

# Every CELERY_-prefixed Django setting configures the app.
app.config_from_object('django.conf:settings', namespace='CELERY')

# Long training runs get their own queue.
app.conf.task_routes = {
    'textcontrol.tasks.train_run': {'queue': 'training'},
    'textcontrol.tasks.build_hints': {'queue': 'hints'},
}

app.autodiscover_tasks()


@worker_process_init.connect
def limit_torch_threads(**kwargs):
    """
    Splits TEXTCONTROL_WORKERS torch threads across the pool processes.
    """
    import torch
    from django.conf import settings

    concurrency = app.conf.worker_concurrency or os.cpu_count() or 1
    threads = max(1, settings.TEXTCONTROL_WORKERS // concurrency)
    torch.set_num_threads(threads)
    logger.info("Worker process uses %d torch thread(s)", threads)
