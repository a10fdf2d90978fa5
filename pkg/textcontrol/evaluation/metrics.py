import logging
import re
from typing import Iterable, Sequence, Tuple

import Levenshtein
import numpy as np
from scipy import linalg

from textcontrol.exceptions import MetricError

logger = logging.getLogger(__name__)

FRECHET_EPSILON = 1e-6

_WHITESPACE = re.compile(r'\s+')


def normalize_whitespace(text: str) -> str:
    """
    Strips the ends and collapses internal whitespace runs to one space. Case is kept.
    """
    return _WHITESPACE.sub(' ', text.strip())


def normalized_edit_distance(pred: str, gt: str) -> float:
    """
    1 - Levenshtein(pred, gt) / max(len(pred), len(gt)). Higher is better; two empty strings score 1.
    """
    longest = max(len(pred), len(gt))
    if longest == 0:
        return 1.0
    return 1.0 - Levenshtein.distance(pred, gt) / longest


def sentence_accuracy(pairs: Sequence[Tuple[str, str]]) -> float:
    """
    Fraction of (pred, gt) pairs that match exactly after whitespace normalisation.
    :raises MetricError: On an empty list.
    """
    if not pairs:
        raise MetricError("Sentence accuracy of an empty list is undefined")
    matches = sum(normalize_whitespace(pred) == normalize_whitespace(gt) for pred, gt in pairs)
    return matches / len(pairs)


def mean_ned(pairs: Iterable[Tuple[str, str]]) -> float:
    scores = [normalized_edit_distance(pred, gt) for pred, gt in pairs]
    if not scores:
        raise MetricError("Mean NED of an empty list is undefined")
    return float(np.mean(scores))


def gaussian_statistics(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, np.newaxis]
    if features.shape[0] < 2:
        raise MetricError(f"Need at least 2 feature vectors, got {features.shape[0]}")
    if features.shape[0] <= features.shape[1]:
        logger.warning("Fitting a %d-dimensional Gaussian to %d samples; the covariance is rank-deficient",
                       features.shape[1], features.shape[0])
    return features.mean(axis=0), np.atleast_2d(np.cov(features, rowvar=False))


def _symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def frechet_distance(features_a: np.ndarray, features_b: np.ndarray, epsilon: float = FRECHET_EPSILON) -> float:
    """
    Frechet distance between Gaussian fits of two (N, d) feature sets:
    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with epsilon * I added to both covariances.
    The cross term is evaluated as tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), which only needs symmetric square roots.
    :raises MetricError: When the result is not finite.
    """
    mu_a, sigma_a = gaussian_statistics(features_a)
    mu_b, sigma_b = gaussian_statistics(features_b)
    if mu_a.shape != mu_b.shape:
        raise MetricError(f"Feature dimensions differ: {mu_a.shape[0]} vs {mu_b.shape[0]}")
    offset = np.eye(sigma_a.shape[0]) * epsilon
    sigma_a, sigma_b = sigma_a + offset, sigma_b + offset
    root_a = _symmetric_sqrt(sigma_a)
    middle = root_a @ sigma_b @ root_a
    cross = np.sqrt(np.clip(linalg.eigvalsh((middle + middle.T) / 2.0), 0.0, None)).sum()
    diff = mu_a - mu_b
    distance = float(diff @ diff + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * cross)
    if not np.isfinite(distance):
        raise MetricError("Frechet distance is not finite")
    return max(distance, 0.0)
