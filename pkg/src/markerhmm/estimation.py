"""Read HMM parameters straight off labelled trails.

The hidden marker is observed in the training data, so A, B and pi are
frequency estimates rather than the result of EM. Transitions are counted
inside subjects only.
"""

from __future__ import annotations

import numpy as np

from .config import PipelineConfig
from .errors import DegenerateModelError, EstimationError, UnknownMarkerError
from .hmm import CategoricalHmm
from .ingest import Dataset


def _normalise_counts(counts: np.ndarray, smoothing: float) -> np.ndarray:
    smoothed = counts + smoothing
    totals = smoothed.sum(axis=-1, keepdims=True)
    width = counts.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = smoothed / totals
    return np.where(totals > 0, probs, 1.0 / width)


def hidden_counts(dataset: Dataset, hidden_marker: str):
    """Return ``(initial_counts, transition_counts)`` for the hidden marker."""
    n = len(dataset.alphabets[hidden_marker])
    starts = np.zeros(n)
    trans = np.zeros((n, n))
    for trails in dataset.subjects.values():
        h = trails[hidden_marker].states
        starts[h[0]] += 1
        np.add.at(trans, (h[:-1], h[1:]), 1)
    return starts, trans


def emission_counts(dataset: Dataset, hidden_marker: str, observed_marker: str) -> np.ndarray:
    n = len(dataset.alphabets[hidden_marker])
    m = len(dataset.alphabets[observed_marker])
    counts = np.zeros((n, m))
    for trails in dataset.subjects.values():
        np.add.at(counts, (trails[hidden_marker].states, trails[observed_marker].states), 1)
    return counts


def _check(dataset, hidden_marker, smoothing):
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    if hidden_marker not in dataset.alphabets:
        raise UnknownMarkerError(f"unknown marker {hidden_marker!r}")
    if not dataset.subjects:
        raise EstimationError("dataset has no subjects to estimate from")
    if len(dataset.alphabets[hidden_marker]) < 2:
        raise DegenerateModelError(f"hidden marker {hidden_marker!r} has fewer than two states")


def _shared_hidden(dataset, hidden_marker, smoothing):
    starts, trans = hidden_counts(dataset, hidden_marker)
    return _normalise_counts(trans, smoothing), _normalise_counts(starts, smoothing)


def extract_parameters(
    dataset: Dataset, hidden_marker: str, observed_marker: str, smoothing: float = 0.0
) -> CategoricalHmm:
    """Frequency estimate of the channel HMM ``observed_marker | hidden_marker``.

    ``smoothing`` is an additive (Laplace) pseudo-count. Rows without any
    evidence become uniform.
    """
    _check(dataset, hidden_marker, smoothing)
    if observed_marker not in dataset.alphabets:
        raise UnknownMarkerError(f"unknown marker {observed_marker!r}")
    A, pi = _shared_hidden(dataset, hidden_marker, smoothing)
    B = _normalise_counts(emission_counts(dataset, hidden_marker, observed_marker), smoothing)
    return CategoricalHmm(
        A, B, pi, dataset.alphabets[hidden_marker], dataset.alphabets[observed_marker]
    )


def build_all(
    dataset: Dataset, config: PipelineConfig, hidden_marker: str, smoothing: float = 0.0
) -> dict:
    """One channel HMM per configured non-hidden marker, sharing A and pi."""
    if hidden_marker not in config.markers:
        raise UnknownMarkerError(f"hidden marker {hidden_marker!r} is not configured")
    observed = sorted(m for m in config.markers if m != hidden_marker)
    if not observed:
        raise EstimationError("configuration has no marker besides the hidden one")
    _check(dataset, hidden_marker, smoothing)
    A, pi = _shared_hidden(dataset, hidden_marker, smoothing)
    hidden_labels = dataset.alphabets[hidden_marker]
    channels = {}
    for marker in observed:
        B = _normalise_counts(emission_counts(dataset, hidden_marker, marker), smoothing)
        channels[marker] = CategoricalHmm(A, B, pi, hidden_labels, dataset.alphabets[marker])
    return channels
