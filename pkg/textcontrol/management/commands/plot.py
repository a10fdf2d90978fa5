import logging

from textcontrol.evaluation.harness import EvalReport
from textcontrol.evaluation.plots import emit_plots
from textcontrol.management.base import PipelineCommand, comma_list

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Plots ACC/NED (and FID) per evaluation report and smoothed loss curves from training logs."
    required = ('reports', 'out')

    def add_command_arguments(self, parser):
        self.add_option(parser, '--reports', help="Comma-separated evaluation report files.")
        self.add_option(parser, '--logs', help="Comma-separated training metrics logs (metrics.jsonl).")
        self.add_option(parser, '--labels', help="Comma-separated configuration labels, one per report.")
        self.add_option(parser, '--window', default=50, type=int, help="Loss smoothing window in steps.")

    def run(self, params, config):
        reports = [EvalReport.read(path) for path in comma_list(params['reports'])]
        labels = comma_list(params['labels']) or None
        if labels and len(labels) != len(reports):
            logger.warning("%d labels for %d reports; using report names", len(labels), len(reports))
            labels = None
        result = emit_plots(reports, params['out'], comma_list(params['logs']), params['window'], labels)
        for note in result.notes:
            logger.info("Note: %s", note)
