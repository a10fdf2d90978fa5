import logging

from django.conf import settings
from django.core.management.base import CommandError

from textcontrol.enums import BenchmarkStyle
from textcontrol.hints.benchmark import generate_tiny_benchmark
from textcontrol.hints.fonts import FontRegistry
from textcontrol.management.base import PipelineCommand, comma_list

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Generates a small-text benchmark: plain images with 1..max-lines text lines, and its manifest."

    def add_command_arguments(self, parser):
        self.add_option(parser, '--count', default=10, type=int)
        self.add_option(parser, '--canvas', default=128, type=int)
        self.add_option(parser, '--max-lines', default=8, type=int)
        self.add_option(parser, '--max-char-px', default=16, type=int)
        self.add_option(parser, '--min-char-px', type=int)
        self.add_option(parser, '--seed', default=0, type=int)
        self.add_option(parser, '--style', default=BenchmarkStyle.PLAIN.value,
                        choices=[s.value for s in BenchmarkStyle])
        self.add_option(parser, '--fonts', help="Comma-separated font ids (default: every registered font).")
        self.add_option(parser, '--pool', help="Characters to draw text from.")

    def run(self, params, config):
        try:
            benchmark = generate_tiny_benchmark(
                count=params['count'], canvas=params['canvas'], max_lines=params['max_lines'],
                max_char_px=params['max_char_px'], seed=params['seed'], font_registry=FontRegistry.from_settings(),
                pool=params['pool'] or settings.TEXTCONTROL_CHARACTER_POOL,
                font_ids=comma_list(params['fonts']) or None, min_char_px=params['min_char_px'],
                style=BenchmarkStyle(params['style']))
        except ValueError as e:
            raise CommandError(str(e)) from e
        logger.info("Benchmark manifest written to %s", benchmark.write(params['out']))
