import logging

from textcontrol.management.base import PipelineCommand
from textcontrol.tasks import train_run

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Trains the base model or the control branch on a dataset manifest."
    uses_train_config = True
    required = ('data', 'out')

    def add_command_arguments(self, parser):
        self.add_option(parser, '--data', help="Training manifest.")
        self.add_option(parser, '--recognizer', help="Pretrained recognizer, needed when use_ocr_loss is on.")
        self.add_option(parser, '--base-checkpoint', help="Checkpoint whose base weights initialise the model.")
        self.add_option(parser, '--resume', help="Checkpoint to resume training from.")

    def run(self, params, config):
        result = train_run.apply_async(kwargs={
            'config_values': config.to_dict(), 'manifest_path': params['data'], 'out_dir': params['out'],
            'recognizer_path': params['recognizer'], 'base_checkpoint': params['base_checkpoint'],
            'resume': params['resume'],
        }).get()
        logger.info("Training %s at step %d; checkpoint %s, metrics %s",
                    'stopped' if result['stopped'] else 'finished', result['step'], result['checkpoint'],
                    result['metrics'])
