"""Multi-class F-scores and subject-level k-fold cross-validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .ingest import Dataset, Issue
from .mixture import MixtureModel, Query, predict_state_sequence


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    labels: tuple

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        k = len(self.labels)
        if k < 2 or c.shape != (k, k):
            raise InvalidInputError(f"confusion matrix must be K x K with K >= 2, got {c.shape}")
        if np.any(c < 0):
            raise InvalidInputError("confusion counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_predictions(cls, truth, predicted, labels) -> "ConfusionMatrix":
        k = len(labels)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (np.asarray(truth, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
        return cls(counts, labels)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise InvalidInputError("cannot add confusion matrices over different labels")
        return ConfusionMatrix(self.counts + other.counts, self.labels)


def per_class_fbeta(cm: ConfusionMatrix, beta: float = 1.0) -> np.ndarray:
    """F-beta of every class; a class with an undefined ratio scores 0."""
    if not beta > 0:
        raise InvalidInputError("beta must be > 0")
    c = cm.counts.astype(float)
    tp = np.diag(c)
    predicted = c.sum(axis=0)
    actual = c.sum(axis=1)
    b2 = beta * beta
    scores = np.zeros(len(tp))
    for i in range(len(tp)):
        if predicted[i] == 0 or actual[i] == 0 or tp[i] == 0:
            continue
        precision = tp[i] / predicted[i]
        recall = tp[i] / actual[i]
        scores[i] = (1 + b2) * precision * recall / (b2 * precision + recall)
    return scores


def score_fbeta(cm: ConfusionMatrix, beta: float = 1.0, averaging: str = "weighted") -> float:
    """Macro (unweighted) or support-weighted mean of the per-class F-beta."""
    scores = per_class_fbeta(cm, beta)
    if averaging == "macro":
        return float(math.fsum(scores) / len(scores))
    if averaging == "weighted":
        support = cm.counts.sum(axis=1)
        total = support.sum()
        if total == 0:
            return 0.0
        return float(math.fsum(scores * support) / total)
    raise InvalidInputError(f"averaging must be 'macro' or 'weighted', got {averaging!r}")


@dataclass(frozen=True, eq=False)
class CvReport:
    per_fold_scores: list
    mean: float
    std: float
    fold_assignment: dict
    skipped: list = field(default_factory=list)
    confusion: ConfusionMatrix = None

    def to_document(self) -> dict:
        return {
            "per_fold_scores": list(self.per_fold_scores),
            "mean": self.mean,
            "std": self.std,
            "fold_assignment": dict(sorted(self.fold_assignment.items())),
            "skipped": [{"kind": i.kind, "subject": i.subject, "message": i.message} for i in self.skipped],
            "confusion": None
            if self.confusion is None
            else {"labels": list(self.confusion.labels), "counts": self.confusion.counts.tolist()},
        }


def assign_folds(subject_ids, k: int, seed: int) -> dict:
    """Shuffle subjects with a seeded generator and deal them into k near-equal folds."""
    ids = sorted(subject_ids)
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if len(ids) < k:
        raise InvalidInputError(f"need at least {k} subjects for {k}-fold CV, got {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    assignment = {}
    for fold, chunk in enumerate(np.array_split(order, k)):
        for idx in chunk:
            assignment[ids[idx]] = fold
    return assignment


def k_fold_cv(
    dataset: Dataset,
    config,
    hidden_marker: str,
    k: int = 10,
    seed: int = 0,
    smoothing: float = 0.0,
    beta: float = 1.0,
    averaging: str = "weighted",
) -> CvReport:
    """Cross-validate Viterbi decoding of ``hidden_marker`` over subjects.

    Each held-out step is scored against the recorded hidden state. Steps whose
    true label never occurs in the training folds are skipped and reported.
    """
    if config is not None and config is not dataset.config:
        dataset = replace(dataset, config=config)
    assignment = assign_folds(dataset.subjects, k, seed)
    labels = tuple(dataset.alphabets[hidden_marker])
    observed = sorted(m for m in dataset.config.markers if m != hidden_marker)
    scores = []
    skipped: list = []
    pooled = ConfusionMatrix(np.zeros((len(labels), len(labels)), dtype=np.int64), labels)
    for fold in range(k):
        test_ids = [s for s in sorted(assignment) if assignment[s] == fold]
        train_ids = [s for s in sorted(assignment) if assignment[s] != fold]
        model = MixtureModel.build(dataset.subset(train_ids), hidden_marker, smoothing)
        seen = set()
        for s in train_ids:
            seen.update(int(i) for i in dataset.subjects[s][hidden_marker].states)
        truth_all, pred_all = [], []
        for s in test_ids:
            trails = dataset.subjects[s]
            decoded = predict_state_sequence(model, Query(hidden_marker, {m: trails[m].states for m in observed}))
            truth = trails[hidden_marker].states
            keep = np.array([int(t) in seen for t in truth])
            if not keep.all():
                missing = sorted({labels[int(t)] for t in truth[~keep]})
                skipped.append(
                    Issue("unseen-label", s, f"fold {fold}: {int((~keep).sum())} steps with labels {missing} absent from training")
                )
            truth_all.append(truth[keep])
            pred_all.append(decoded.indices[keep])
        cm = ConfusionMatrix.from_predictions(np.concatenate(truth_all), np.concatenate(pred_all), labels)
        pooled = pooled + cm
        scores.append(score_fbeta(cm, beta, averaging))
    mean = math.fsum(scores) / k
    std = math.sqrt(math.fsum((s - mean) ** 2 for s in scores) / k)
    return CvReport(scores, mean, std, assignment, skipped, pooled)
