import json
import logging
import os

from textcontrol.hints.fonts import FontRegistry
from textcontrol.management.base import PipelineCommand, comma_list
from textcontrol.perception.corpus import build_corpus
from textcontrol.perception.recognizer import exact_match_accuracy, load_recognizer

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Measures a recognizer's exact-match accuracy per font on freshly rendered typographic patches."
    required = ('recognizer', 'out')

    def add_command_arguments(self, parser):
        self.add_option(parser, '--recognizer', help="Recognizer checkpoint.")
        self.add_option(parser, '--count', default=200, type=int, help="Patches per font.")
        self.add_option(parser, '--seed', default=1, type=int)
        self.add_option(parser, '--fonts', help="Comma-separated font ids (default: every registered font).")
        self.add_option(parser, '--min-char-px', default=6, type=int)
        self.add_option(parser, '--max-char-px', default=16, type=int)

    def run(self, params, config):
        recognizer = load_recognizer(params['recognizer'])
        registry = FontRegistry.from_settings()
        font_ids = comma_list(params['fonts']) or list(registry.font_ids)
        per_font = {}
        correct = total = 0
        for font_id in font_ids:
            corpus = build_corpus(registry, recognizer.alphabet, params['count'], params['seed'],
                                  patch_height=recognizer.patch_height, patch_max_width=recognizer.patch_max_width,
                                  font_ids=[font_id], min_char_px=params['min_char_px'],
                                  max_char_px=params['max_char_px'], scene_fraction=0.0)
            accuracy = exact_match_accuracy(recognizer, corpus.patches)
            per_font[font_id] = {'accuracy': accuracy, 'patches': len(corpus)}
            correct += accuracy * len(corpus)
            total += len(corpus)
            logger.info("%s: accuracy %.3f over %d patches", font_id, accuracy, len(corpus))
        result = {'recognizer': os.path.abspath(params['recognizer']), 'accuracy': correct / max(total, 1),
                  'patches': total, 'per_font': per_font}
        with open(os.path.join(params['out'], 'recognizer-eval.json'), 'w', encoding='utf-8') as report:
            json.dump(result, report, indent=2, sort_keys=True)
            report.write('\n')
        logger.info("Overall typographic accuracy %.3f", result['accuracy'])
