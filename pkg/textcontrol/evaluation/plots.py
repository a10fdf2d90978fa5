"""
Result plots: ACC/NED per configuration, FID when reported, and smoothed training loss curves.

Figures are drawn on the Agg canvas with fixed sizes and no timestamp metadata, so identical inputs give identical
files.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use('Agg')

import numpy as np  # noqa: E402
from django.core.exceptions import ValidationError  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from textcontrol.evaluation.harness import EvalReport  # noqa: E402
from textcontrol.trainer import smoothed  # noqa: E402

logger = logging.getLogger(__name__)

DPI = 100
PNG_METADATA = {'Software': None}
LOSS_KEYS = ('total', 'l_ldm', 'l_ocr')


@dataclass
class PlotResult:
    files: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def note(self, message: str):
        logger.warning("%s", message)
        self.notes.append(message)


def read_metrics(path: str) -> List[dict]:
    with open(path, 'r', encoding='utf-8') as metrics:
        return [json.loads(line) for line in metrics if line.strip()]


def unique_labels(names: Sequence[str]) -> List[str]:
    seen = {}
    labels = []
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        labels.append(name if seen[name] == 1 else f"{name} ({seen[name]})")
    return labels


def _save(figure: Figure, path: str, result: PlotResult):
    figure.savefig(path, format='png', dpi=DPI, metadata=PNG_METADATA)
    result.files.append(path)


def plot_scores(reports: Sequence[EvalReport], labels: Sequence[str], path: str, result: PlotResult):
    figure = Figure(figsize=(max(4.0, 1.6 * len(reports) + 2.0), 4.0))
    axes = figure.add_subplot(1, 1, 1)
    positions = np.arange(len(reports))
    width = 0.38
    for offset, (metric, colour) in zip((-width / 2, width / 2), (('acc', '#4c72b0'), ('ned', '#dd8452'))):
        values = [getattr(r, metric) for r in reports]
        bars = axes.bar(positions + offset, values, width, label=metric.upper(), color=colour)
        axes.bar_label(bars, fmt='%.3f', fontsize=7)
    axes.set_xticks(positions, labels, rotation=20, ha='right')
    axes.set_ylim(0.0, 1.1)
    axes.set_ylabel('score')
    axes.set_title('Sentence accuracy and NED per configuration')
    axes.legend(loc='upper right')
    figure.tight_layout()
    _save(figure, path, result)


def plot_fid(reports: Sequence[EvalReport], labels: Sequence[str], path: str, result: PlotResult):
    chosen = [(label, r.fid) for label, r in zip(labels, reports) if r.fid is not None]
    figure = Figure(figsize=(max(4.0, 1.2 * len(chosen) + 2.0), 4.0))
    axes = figure.add_subplot(1, 1, 1)
    bars = axes.bar(np.arange(len(chosen)), [fid for _, fid in chosen], 0.6, color='#55a868')
    axes.bar_label(bars, fmt='%.2f', fontsize=7)
    axes.set_xticks(np.arange(len(chosen)), [label for label, _ in chosen], rotation=20, ha='right')
    axes.set_ylabel('FID (recognizer features)')
    axes.set_title('Frechet distance to the reference images')
    figure.tight_layout()
    _save(figure, path, result)


def plot_losses(logs: Sequence[str], path: str, result: PlotResult, window: int = 50):
    series = []
    for log in logs:
        records = read_metrics(log)
        if not records:
            result.note(f"Training log {log} is empty; left out of the loss curves")
            continue
        label = os.path.basename(os.path.dirname(os.path.abspath(log))) or log
        series.append((label, records))
    if not series:
        result.note("No training records; loss curves omitted")
        return
    figure = Figure(figsize=(9.0, 3.2))
    for column, key in enumerate(LOSS_KEYS):
        axes = figure.add_subplot(1, len(LOSS_KEYS), column + 1)
        drawn = False
        for label, records in series:
            points = [(r['step'], r[key]) for r in records if r.get(key) is not None]
            if not points:
                continue
            steps, values = zip(*points)
            axes.plot(steps, smoothed(values, window), label=label, linewidth=1.0)
            drawn = True
        axes.set_title(key)
        axes.set_xlabel('step')
        if drawn:
            axes.legend(fontsize=7)
        else:
            axes.text(0.5, 0.5, 'not recorded', ha='center', va='center', transform=axes.transAxes)
    figure.tight_layout()
    _save(figure, path, result)


def emit_plots(reports: Sequence[EvalReport], out_dir: str, training_logs: Sequence[str] = (),
               window: int = 50, labels: Optional[Sequence[str]] = None) -> PlotResult:
    """
    Writes ``scores.png``, ``fid.png`` (only when some report has an FID) and ``losses.png`` (only when training
    logs are given) into out_dir.
    :raises ValidationError: When no report is given.
    """
    if not reports:
        raise ValidationError("Plotting needs at least one evaluation report")
    os.makedirs(out_dir, exist_ok=True)
    labels = unique_labels(labels or [r.name for r in reports])
    result = PlotResult()

    plot_scores(reports, labels, os.path.join(out_dir, 'scores.png'), result)
    if any(r.fid is not None for r in reports):
        plot_fid(reports, labels, os.path.join(out_dir, 'fid.png'), result)
    else:
        result.note("No report carries an FID; FID panel omitted")
    if training_logs:
        plot_losses(training_logs, os.path.join(out_dir, 'losses.png'), result, window)
    logger.info("Wrote %d plot(s) to %s", len(result.files), out_dir)
    return result
