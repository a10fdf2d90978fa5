import json
import logging
import os

from textcontrol.manifest import load_dataset
from textcontrol.management.base import PipelineCommand
from textcontrol.tasks import build_hints_group

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Builds the configured hint kind for every record of a manifest, as hints/<id>.png plus hints.jsonl."
    uses_train_config = True
    required = ('data', 'out')

    def add_command_arguments(self, parser):
        self.add_option(parser, '--data', help="Dataset manifest.")

    def run(self, params, config):
        dataset = load_dataset(params['data'])
        manifest_dir = os.path.dirname(os.path.abspath(params['data']))
        results = build_hints_group(dataset.images, manifest_dir, config, params['out'])
        skipped = 0
        with open(os.path.join(params['out'], 'hints.jsonl'), 'w', encoding='utf-8') as index:
            for result in results:
                skipped += len(result['notes'])
                index.write(json.dumps(result, sort_keys=True, ensure_ascii=False) + '\n')
        if skipped:
            logger.warning("%d region(s) were skipped while building hints; see hints.jsonl", skipped)
        logger.info("Built %d %s hint(s) into %s", len(results), config.hint_kind.value, params['out'])
