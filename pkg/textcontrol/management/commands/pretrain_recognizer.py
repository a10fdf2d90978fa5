import json
import logging
import os

from django.conf import settings

from textcontrol.hints.fonts import FontRegistry
from textcontrol.management.base import PipelineCommand, comma_list
from textcontrol.perception.corpus import build_corpus
from textcontrol.perception.recognizer import pretrain_recognizer, save_recognizer

logger = logging.getLogger(__name__)

RECOGNIZER_NAME = 'recognizer.pt'


class Command(PipelineCommand):
    help = "Renders a labelled patch corpus from the registered fonts and trains the text recognizer on it."

    def add_command_arguments(self, parser):
        self.add_option(parser, '--count', default=4000, type=int, help="Corpus size in patches.")
        self.add_option(parser, '--epochs', default=10, type=int)
        self.add_option(parser, '--seed', default=0, type=int)
        self.add_option(parser, '--batch-size', default=64, type=int)
        self.add_option(parser, '--learning-rate', default=1e-3, type=float)
        self.add_option(parser, '--accuracy-floor', default=settings.TEXTCONTROL_RECOGNIZER_ACCURACY_FLOOR,
                        type=float)
        self.add_option(parser, '--alphabet', help="Recognised characters (default: the character pool).")
        self.add_option(parser, '--fonts', help="Comma-separated font ids (default: every registered font).")
        self.add_option(parser, '--min-char-px', default=6, type=int)
        self.add_option(parser, '--max-char-px', default=16, type=int)
        self.add_option(parser, '--patch-height', default=32, type=int)
        self.add_option(parser, '--patch-max-width', default=256, type=int)

    def run(self, params, config):
        alphabet = params['alphabet'] or settings.TEXTCONTROL_CHARACTER_POOL
        corpus = build_corpus(FontRegistry.from_settings(), alphabet, params['count'], params['seed'],
                              patch_height=params['patch_height'], patch_max_width=params['patch_max_width'],
                              font_ids=comma_list(params['fonts']) or None, min_char_px=params['min_char_px'],
                              max_char_px=params['max_char_px'])
        recognizer = pretrain_recognizer(corpus, params['epochs'], params['seed'], params['accuracy_floor'],
                                         batch_size=params['batch_size'], learning_rate=params['learning_rate'])
        path = save_recognizer(os.path.join(params['out'], RECOGNIZER_NAME), recognizer,
                               extra={'corpus': corpus.parameters})
        with open(os.path.join(params['out'], 'recognizer.json'), 'w', encoding='utf-8') as summary:
            json.dump({'held_out_accuracy': recognizer.held_out_accuracy, 'corpus': corpus.parameters,
                       'recognizer': recognizer.metadata()}, summary, indent=2, sort_keys=True)
            summary.write('\n')
        logger.info("Recognizer written to %s (held-out accuracy %.3f)", path, recognizer.held_out_accuracy)
