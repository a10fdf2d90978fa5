import torch
from django.apps import AppConfig
from django.conf import settings


class TextControlAppConfig(AppConfig):
    name = 'textcontrol'
    verbose_name = "Font-controllable text diffusion"

    def ready(self):
        # Intra-op parallelism; commands override this with --workers.
        torch.set_num_threads(max(1, settings.TEXTCONTROL_WORKERS))
