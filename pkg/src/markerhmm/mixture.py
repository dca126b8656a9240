"""Query engine over a mixture of per-marker channel HMMs.

Every channel shares the hidden chain (A, pi) of the hidden marker and differs
only in its emission matrix. Channels are always visited in sorted marker
order so results do not depend on how a query lists its trails.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import hmm as hmm_core
from .config import PipelineConfig, parse_config
from .errors import EvaluationError, InvalidInputError, UnknownMarkerError
from .estimation import build_all
from .hmm import EMISSION_FLOOR, CategoricalHmm

MODEL_FORMAT = "markerhmm-model"
PARAMS_FORMAT = "markerhmm-parameters"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Query:
    """A prediction request.

    ``observation`` maps observed marker names to equal-length symbol-index
    sequences. ``layers`` restricts the query to a subset of layers; the weight
    overrides replace the configured values before re-balancing.
    """

    hidden_marker: str
    observation: dict
    layers: Optional[tuple] = None
    layer_weights: dict = field(default_factory=dict)
    marker_weights: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(next(iter(self.observation.values())))


class Posteriors(NamedTuple):
    matrix: np.ndarray
    labels: tuple


class DecodedSequence(NamedTuple):
    states: list
    indices: np.ndarray
    log_score: float


@dataclass(frozen=True, eq=False)
class MixtureModel:
    hidden_marker: str
    hidden_alphabet: tuple
    channels: dict
    config: PipelineConfig
    config_text: Optional[str] = None
    smoothing: float = 0.0

    def __post_init__(self):
        ref = None
        for marker, ch in self.channels.items():
            if tuple(ch.hidden_labels) != tuple(self.hidden_alphabet):
                raise InvalidInputError(f"channel {marker!r} has a different hidden alphabet")
            if ref is None:
                ref = ch
            elif not (np.array_equal(ch.transition, ref.transition) and np.array_equal(ch.initial, ref.initial)):
                raise InvalidInputError(f"channel {marker!r} does not share the hidden chain")

    @classmethod
    def build(cls, dataset, hidden_marker: str, smoothing: float = 0.0, config_text=None) -> "MixtureModel":
        channels = build_all(dataset, dataset.config, hidden_marker, smoothing)
        return cls(
            hidden_marker,
            tuple(dataset.alphabets[hidden_marker]),
            channels,
            dataset.config,
            config_text,
            smoothing,
        )

    @property
    def transition(self) -> np.ndarray:
        return next(iter(self.channels.values())).transition

    @property
    def initial(self) -> np.ndarray:
        return next(iter(self.channels.values())).initial

    def alphabets(self) -> dict:
        out = {m: ch.symbol_labels for m, ch in self.channels.items()}
        out[self.hidden_marker] = self.hidden_alphabet
        return out

    def channel(self, marker: str) -> CategoricalHmm:
        try:
            return self.channels[marker]
        except KeyError:
            raise UnknownMarkerError(f"no channel for marker {marker!r}") from None

    def query(self, observation: dict, **kwargs) -> Query:
        return Query(self.hidden_marker, observation, **kwargs)

    # persistence ---------------------------------------------------------

    def to_document(self) -> dict:
        if self.config_text is None:
            raise InvalidInputError("model was built without its configuration text")
        return {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "config_sha256": hashlib.sha256(self.config_text.encode("utf-8")).hexdigest(),
            "config_text": self.config_text,
            "hidden_marker": self.hidden_marker,
            "hidden_alphabet": list(self.hidden_alphabet),
            "smoothing": self.smoothing,
            "channels": {m: channel_document(m, self.channels[m]) for m in sorted(self.channels)},
        }

    @classmethod
    def from_document(cls, doc: dict) -> "MixtureModel":
        if doc.get("format") != MODEL_FORMAT:
            raise InvalidInputError("not a model document")
        text = doc["config_text"]
        if hashlib.sha256(text.encode("utf-8")).hexdigest() != doc["config_sha256"]:
            raise InvalidInputError("model document config hash mismatch")
        channels = {m: channel_from_document(d) for m, d in doc["channels"].items()}
        return cls(
            doc["hidden_marker"],
            tuple(doc["hidden_alphabet"]),
            channels,
            parse_config(text),
            text,
            float(doc.get("smoothing", 0.0)),
        )


def channel_document(marker: str, ch: CategoricalHmm) -> dict:
    return {
        "marker": marker,
        "hidden_labels": list(ch.hidden_labels),
        "symbol_labels": list(ch.symbol_labels),
        "transition": ch.transition.tolist(),
        "emission": ch.emission.tolist(),
        "initial": ch.initial.tolist(),
    }


def channel_from_document(doc: dict) -> CategoricalHmm:
    return CategoricalHmm(
        doc["transition"], doc["emission"], doc["initial"], doc["hidden_labels"], doc["symbol_labels"]
    )


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# weights -----------------------------------------------------------------


def _validate(model: MixtureModel, query: Query) -> dict:
    if query.hidden_marker != model.hidden_marker:
        raise InvalidInputError(
            f"query asks for {query.hidden_marker!r} but the model predicts {model.hidden_marker!r}"
        )
    if not query.observation:
        raise InvalidInputError("query has no observation trails")
    obs = {}
    for marker in sorted(query.observation):
        if marker == model.hidden_marker:
            raise InvalidInputError("the hidden marker cannot also be observed")
        ch = model.channel(marker)
        obs[marker] = hmm_core.check_observation(query.observation[marker], ch.num_symbols)
    lengths = {len(v) for v in obs.values()}
    if len(lengths) != 1:
        raise InvalidInputError(f"observation trails differ in length: {sorted(lengths)}")
    return obs


def _override(value, name):
    value = float(value)
    if not value >= 0 or math.isinf(value):
        raise InvalidInputError(f"weight for {name!r} must be a finite value >= 0")
    return value


def query_weights(model: MixtureModel, query: Query) -> dict:
    """Effective trail weight of every marker in the query.

    Marker weights are re-balanced inside each layer over the markers actually
    present; layers whose present markers carry no weight drop out and the
    remaining layer weights are re-balanced. Raises :class:`EvaluationError`
    when nothing carries weight.
    """
    config = model.config
    allowed = None
    if query.layers is not None:
        allowed = set(query.layers)
        unknown = allowed - set(config.layers)
        if unknown:
            raise UnknownMarkerError(f"unknown layers {sorted(unknown)}")
    by_layer: dict = {}
    for marker in sorted(query.observation):
        spec = config.marker(marker)
        if allowed is not None and spec.layer not in allowed:
            continue
        w = query.marker_weights.get(marker, spec.weight)
        by_layer.setdefault(spec.layer, []).append((marker, _override(w, marker)))

    shares: dict = {}
    layer_mass: dict = {}
    for layer in sorted(by_layer):
        members = by_layer[layer]
        total = math.fsum(w for _, w in members)
        lw = _override(query.layer_weights.get(layer, config.layers[layer].weight), layer)
        if total <= 0.0 or lw <= 0.0:
            continue
        layer_mass[layer] = lw
        shares[layer] = [(m, w / total) for m, w in members]
    grand = math.fsum(layer_mass.values())
    if grand <= 0.0:
        raise EvaluationError("every trail in the query has zero weight")
    weights = {m: 0.0 for m in query.observation}
    for layer, members in shares.items():
        lw = layer_mass[layer] / grand
        for m, s in members:
            weights[m] = s * lw
    return weights


# capabilities ------------------------------------------------------------


def trail_evaluation(model: MixtureModel, query: Query, marker: str) -> np.ndarray:
    """Weighted smoothed posterior of one trail."""
    obs = _validate(model, query)
    if marker not in obs:
        raise UnknownMarkerError(f"marker {marker!r} is not part of the query")
    w = query_weights(model, query)[marker]
    return w * hmm_core.posteriors(model.channel(marker), obs[marker]).gammas


def observation_evaluation(model: MixtureModel, query: Query) -> np.ndarray:
    """Sum of the weighted trail posteriors, renormalised row-wise."""
    obs = _validate(model, query)
    weights = query_weights(model, query)
    total = None
    for marker in sorted(obs):
        w = weights[marker]
        if w == 0.0:
            continue
        phi = w * hmm_core.posteriors(model.channel(marker), obs[marker]).gammas
        total = phi if total is None else total + phi
    return total / total.sum(axis=1, keepdims=True)


def predict_posteriors(model: MixtureModel, query: Query) -> Posteriors:
    return Posteriors(observation_evaluation(model, query), tuple(model.hidden_alphabet))


def predict_future(model: MixtureModel, query: Query, steps: int) -> Posteriors:
    """Extrapolate the last smoothed posterior ``steps`` transitions ahead."""
    if steps < 1:
        raise InvalidInputError("steps must be >= 1")
    current = observation_evaluation(model, query)[-1]
    return Posteriors(hmm_core.extrapolate(model.transition, current, steps), tuple(model.hidden_alphabet))


def pooled_log_emissions(model: MixtureModel, query: Query, floor: float = EMISSION_FLOOR) -> np.ndarray:
    """Weighted log-linear pooling of the channel emission likelihoods (T x N)."""
    obs = _validate(model, query)
    weights = query_weights(model, query)
    pooled = None
    for marker in sorted(obs):
        w = weights[marker]
        if w == 0.0:
            continue
        with np.errstate(divide="ignore"):
            term = w * np.log(model.channel(marker).emission_matrix(obs[marker], floor))
        pooled = term if pooled is None else pooled + term
    return pooled


def predict_state_sequence(model: MixtureModel, query: Query, floor: float = EMISSION_FLOOR) -> DecodedSequence:
    """Viterbi over the shared hidden chain with pooled emission scores."""
    log_emis = pooled_log_emissions(model, query, floor)
    with np.errstate(divide="ignore"):
        res = hmm_core.viterbi_from_log_emissions(np.log(model.initial), np.log(model.transition), log_emis)
    labels = [model.hidden_alphabet[i] for i in res.path]
    return DecodedSequence(labels, res.path, res.log_prob)


def export_parameters(model: MixtureModel, marker: str):
    """Copies of ``(A, B, pi, (hidden_labels, symbol_labels))`` for one channel."""
    ch = model.channel(marker)
    return (
        np.array(ch.transition),
        np.array(ch.emission),
        np.array(ch.initial),
        (tuple(ch.hidden_labels), tuple(ch.symbol_labels)),
    )


def export_document(model: MixtureModel, marker: str) -> dict:
    doc = channel_document(marker, model.channel(marker))
    doc.update(format=PARAMS_FORMAT, version=FORMAT_VERSION, hidden_marker=model.hidden_marker)
    return doc


def posterior_table(matrix: np.ndarray, labels, start: int = 0) -> str:
    """CSV with one row per time step and one column per hidden label."""
    lines = [",".join(["t", *labels])]
    for t, row in enumerate(matrix, start=start):
        lines.append(",".join([str(t), *(repr(float(v)) for v in row)]))
    return "\n".join(lines) + "\n"


def decode_table(decoded: DecodedSequence) -> str:
    lines = ["t,state"]
    lines += [f"{t},{s}" for t, s in enumerate(decoded.states)]
    return "\n".join(lines) + "\n"
