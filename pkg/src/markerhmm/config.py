"""INI model configuration: markers, layers, datatypes and weights.

File layout::

    [general]
    id_column = id
    time_column = time

    [layer:SARA]          ; optional, carries the layer weight
    weight = 0.5

    [sara_total]          ; every other section is a marker
    datatype = continuous-binned
    bins = 5
    range = 0:40
    layer = SARA
    weight = 1
    related = sara_gait, sara_stance

Weights may be missing or malformed; they are re-balanced so that marker
weights sum to one inside each layer and layer weights sum to one overall.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import SchemaError, UnknownMarkerError

GENERAL_SECTION = "general"
LAYER_PREFIX = "layer:"
CATEGORICAL = "categorical"
BINNED = "continuous-binned"
DATATYPES = (CATEGORICAL, BINNED)

_MARKER_KEYS = {"datatype", "layer", "weight", "bins", "range", "related"}
_NORMALISED_TOL = 1e-12


@dataclass(frozen=True)
class ConfigWarning:
    section: str
    key: Optional[str]
    message: str


@dataclass(frozen=True)
class BinSpec:
    bins: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.bins < 2:
            raise SchemaError(f"bin count must be >= 2, got {self.bins}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise SchemaError(f"bin range needs lo < hi, got {self.lo}:{self.hi}")

    def labels(self) -> tuple:
        width = (self.hi - self.lo) / self.bins
        edges = [self.lo + k * width for k in range(self.bins)] + [self.hi]
        out = [f"[{edges[k]:g},{edges[k + 1]:g})" for k in range(self.bins - 1)]
        out.append(f"[{edges[-2]:g},{edges[-1]:g}]")
        return tuple(out)


@dataclass(frozen=True)
class MarkerSpec:
    name: str
    datatype: str
    layer: str
    weight: Optional[float] = None
    bins: Optional[BinSpec] = None
    related_markers: tuple = ()
    extra: tuple = ()  # unknown (key, value) pairs, kept verbatim

    @property
    def is_binned(self) -> bool:
        return self.datatype == BINNED


@dataclass(frozen=True)
class LayerSpec:
    name: str
    marker_names: tuple
    weight: Optional[float] = None


@dataclass(frozen=True)
class PipelineConfig:
    markers: dict
    layers: dict
    id_column: str
    time_column: str
    warnings: tuple = field(default=(), compare=False)

    def layer_of(self, marker: str) -> LayerSpec:
        return self.layers[self.marker(marker).layer]

    def marker(self, name: str) -> MarkerSpec:
        try:
            return self.markers[name]
        except KeyError:
            raise UnknownMarkerError(f"unknown marker {name!r}") from None


def _parse_weight(raw, section, warnings):
    if raw is None:
        return None
    try:
        value = float(raw)
    except ValueError:
        warnings.append(ConfigWarning(section, "weight", f"unparsable weight {raw!r} treated as missing"))
        return None
    if math.isnan(value):
        warnings.append(ConfigWarning(section, "weight", "NaN weight treated as missing"))
        return None
    if value < 0:
        raise SchemaError(f"[{section}] weight must be >= 0, got {value}", section, "weight")
    if math.isinf(value):
        raise SchemaError(f"[{section}] weight must be finite", section, "weight")
    return value


def _parse_bins(section, items):
    if "bins" not in items or "range" not in items:
        missing = "bins" if "bins" not in items else "range"
        raise SchemaError(
            f"[{section}] continuous-binned marker needs '{missing}'", section, missing
        )
    try:
        bins = int(items["bins"])
    except ValueError:
        raise SchemaError(f"[{section}] bins must be an integer", section, "bins") from None
    parts = items["range"].split(":")
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        raise SchemaError(
            f"[{section}] range must look like lo:hi, got {items['range']!r}", section, "range"
        ) from None
    try:
        return BinSpec(bins, lo, hi)
    except SchemaError as exc:
        raise SchemaError(f"[{section}] {exc}", section, "bins") from None


def parse_config(text: str) -> PipelineConfig:
    """Parse an INI document into a re-balanced :class:`PipelineConfig`."""
    parser = configparser.ConfigParser(
        interpolation=None, strict=True, inline_comment_prefixes=(";", "#")
    )
    try:
        parser.read_string(text)
    except configparser.DuplicateSectionError as exc:
        raise SchemaError(f"duplicate section [{exc.section}]", exc.section) from None
    except configparser.DuplicateOptionError as exc:
        raise SchemaError(
            f"duplicate key {exc.option!r} in [{exc.section}]", exc.section, exc.option
        ) from None
    except configparser.Error as exc:
        raise SchemaError(f"malformed INI: {exc}") from None

    warnings: list = []
    if not parser.has_section(GENERAL_SECTION):
        raise SchemaError("missing [general] section", GENERAL_SECTION)
    general = dict(parser.items(GENERAL_SECTION))
    for key in ("id_column", "time_column"):
        if not general.get(key):
            raise SchemaError(f"[general] is missing '{key}'", GENERAL_SECTION, key)
    for key in sorted(set(general) - {"id_column", "time_column"}):
        warnings.append(ConfigWarning(GENERAL_SECTION, key, "unknown key ignored"))

    layer_weights: dict = {}
    markers: dict = {}
    for section in parser.sections():
        if section == GENERAL_SECTION:
            continue
        items = dict(parser.items(section))
        if section.startswith(LAYER_PREFIX):
            name = section[len(LAYER_PREFIX):].strip()
            if not name:
                raise SchemaError(f"[{section}] has an empty layer name", section)
            layer_weights[name] = _parse_weight(items.get("weight"), section, warnings)
            for key in sorted(set(items) - {"weight"}):
                warnings.append(ConfigWarning(section, key, "unknown key ignored"))
            continue
        for key in ("datatype", "layer"):
            if not items.get(key):
                raise SchemaError(f"[{section}] is missing '{key}'", section, key)
        datatype = items["datatype"].strip().lower()
        if datatype not in DATATYPES:
            raise SchemaError(
                f"[{section}] datatype must be one of {DATATYPES}, got {datatype!r}",
                section,
                "datatype",
            )
        bins = _parse_bins(section, items) if datatype == BINNED else None
        related = tuple(r.strip() for r in items.get("related", "").split(",") if r.strip())
        extra = tuple(sorted((k, v) for k, v in items.items() if k not in _MARKER_KEYS))
        for key, _ in extra:
            warnings.append(ConfigWarning(section, key, "unknown key ignored"))
        markers[section] = MarkerSpec(
            name=section,
            datatype=datatype,
            layer=items["layer"].strip(),
            weight=_parse_weight(items.get("weight"), section, warnings),
            bins=bins,
            related_markers=related,
            extra=extra,
        )

    if not markers:
        raise SchemaError("configuration declares no markers")
    for name, spec in markers.items():
        for rel in spec.related_markers:
            if rel not in markers:
                warnings.append(ConfigWarning(name, "related", f"related marker {rel!r} is not declared"))

    grouped: dict = {}
    for name, spec in markers.items():
        grouped.setdefault(spec.layer, []).append(name)
    for name in layer_weights:
        if name not in grouped:
            warnings.append(ConfigWarning(LAYER_PREFIX + name, None, "layer has no markers; ignored"))
    layers = {
        name: LayerSpec(name, tuple(members), layer_weights.get(name))
        for name, members in grouped.items()
    }
    config = PipelineConfig(
        markers=markers,
        layers=layers,
        id_column=general["id_column"].strip(),
        time_column=general["time_column"].strip(),
        warnings=tuple(warnings),
    )
    return rebalance_weights(config)


def normalise(weights: list) -> list:
    """Scale non-negative weights (``None`` = missing) to sum to one.

    Missing entries take the mean of the given ones; an all-missing or
    all-zero group becomes uniform. Input already summing to one to within
    1e-12 is returned unchanged, which makes the operation idempotent.
    """
    if any(w is not None and w < 0 for w in weights):
        raise SchemaError("weights must be >= 0")
    given = [w for w in weights if w is not None]
    if given and len(given) < len(weights):
        fill = math.fsum(given) / len(given)
        weights = [fill if w is None else w for w in weights]
    total = math.fsum(w for w in weights if w is not None)
    if not given or total <= 0.0:
        return [1.0 / len(weights)] * len(weights)
    if abs(total - 1.0) <= _NORMALISED_TOL:
        return [float(w) for w in weights]
    return [w / total for w in weights]


def rebalance_weights(config: PipelineConfig) -> PipelineConfig:
    """Return a copy whose marker and layer weights satisfy the stochastic constraints."""
    markers = dict(config.markers)
    for layer in config.layers.values():
        names = layer.marker_names
        new = normalise([config.markers[n].weight for n in names])
        for n, w in zip(names, new):
            markers[n] = replace(config.markers[n], weight=w)
    names = list(config.layers)
    new = normalise([config.layers[n].weight for n in names])
    layers = {n: replace(config.layers[n], weight=w) for n, w in zip(names, new)}
    return replace(config, markers=markers, layers=layers)


def trail_weight(config: PipelineConfig, marker: str) -> float:
    """Weight of a marker's trail: its in-layer weight times its layer's weight."""
    spec = config.marker(marker)
    return spec.weight * config.layers[spec.layer].weight


def config_to_ini(config: PipelineConfig) -> str:
    """Serialise a configuration back to INI text (weights as stored)."""
    lines = ["[general]", f"id_column = {config.id_column}", f"time_column = {config.time_column}", ""]
    for layer in config.layers.values():
        lines += [f"[{LAYER_PREFIX}{layer.name}]", f"weight = {layer.weight!r}", ""]
    for spec in config.markers.values():
        lines += [f"[{spec.name}]", f"datatype = {spec.datatype}"]
        if spec.bins is not None:
            lines += [f"bins = {spec.bins.bins}", f"range = {spec.bins.lo!r}:{spec.bins.hi!r}"]
        lines += [f"layer = {spec.layer}", f"weight = {spec.weight!r}"]
        if spec.related_markers:
            lines.append("related = " + ", ".join(spec.related_markers))
        for key, value in spec.extra:
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
