"""CSV ingestion: grouping into per-subject trails, discretisation, encoding."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from typing import Optional

import numpy as np

from .config import BinSpec, PipelineConfig
from .errors import EncodingError, IngestError, MissingDataError, UnknownMarkerError

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


@dataclass(frozen=True)
class Issue:
    """A non-fatal event recorded while processing data."""

    kind: str
    subject: Optional[str]
    message: str


@dataclass(frozen=True, eq=False)
class Trail:
    subject_id: str
    marker: str
    states: np.ndarray

    def __post_init__(self):
        arr = np.array(self.states, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise IngestError(f"trail for {self.subject_id}/{self.marker} must be non-empty")
        if np.any(arr < 0):
            raise IngestError("state indices must be >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __len__(self):
        return self.states.size


@dataclass(frozen=True, eq=False)
class Dataset:
    subjects: dict  # subject id -> {marker -> Trail}
    alphabets: dict  # marker -> tuple of state labels
    config: PipelineConfig
    times: dict = field(default_factory=dict)  # subject id -> float array
    issues: tuple = ()

    def __len__(self):
        return len(self.subjects)

    def subject_ids(self) -> list:
        return sorted(self.subjects)

    def subset(self, ids) -> "Dataset":
        ids = list(ids)
        return replace(
            self,
            subjects={s: self.subjects[s] for s in ids},
            times={s: self.times[s] for s in ids if s in self.times},
        )

    def decode(self, marker: str, states) -> list:
        try:
            alphabet = self.alphabets[marker]
        except KeyError:
            raise UnknownMarkerError(f"unknown marker {marker!r}") from None
        return [alphabet[int(i)] for i in states]

    def num_rows(self) -> int:
        return sum(len(next(iter(trails.values()))) for trails in self.subjects.values() if trails)


def discretize(value: float, spec: BinSpec) -> int:
    """Equal-width bin index of ``value``, clamped to the edge bins."""
    if value is None or math.isnan(value):
        raise MissingDataError("cannot discretise a missing (NaN) value")
    k = math.floor((value - spec.lo) * spec.bins / (spec.hi - spec.lo))
    return min(max(k, 0), spec.bins - 1)


def parse_time(raw: str) -> float:
    """Numeric timestamps pass through; ISO-8601 dates become day ordinals."""
    try:
        value = float(raw)
    except ValueError:
        pass
    else:
        if math.isfinite(value):
            return value
        raise ValueError(f"non-finite time {raw!r}")
    try:
        return float(date.fromisoformat(raw).toordinal())
    except ValueError:
        stamp = datetime.fromisoformat(raw)
        seconds = stamp.hour * 3600 + stamp.minute * 60 + stamp.second
        return stamp.toordinal() + seconds / 86400.0


def _open_text(source):
    if hasattr(source, "read"):
        return source, False
    return open(os.fspath(source), newline="", encoding="utf-8"), True


def _is_missing(raw) -> bool:
    return raw is None or raw.strip().lower() in MISSING_TOKENS


def read_rows(source):
    handle, close = _open_text(source)
    try:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise IngestError("CSV has no header row")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        rows = [row for row in reader]
    finally:
        if close:
            handle.close()
    return header, rows


def _convert(marker, spec, raw, issues, subject):
    if spec.is_binned:
        try:
            value = float(raw)
        except ValueError:
            raise IngestError(f"column {marker!r}: non-numeric value {raw!r} for subject {subject}") from None
        if value < spec.bins.lo or value > spec.bins.hi:
            msg = f"{marker}={value:g} outside [{spec.bins.lo:g}, {spec.bins.hi:g}], clamped"
            log.warning(msg)
            issues.append(Issue("clamped", subject, msg))
        return discretize(value, spec.bins)
    return raw.strip()


def load_dataset(source, config: PipelineConfig, alphabets: Optional[dict] = None) -> Dataset:
    """Read a CSV into a :class:`Dataset`.

    With ``alphabets`` given (e.g. from a trained model), categorical labels are
    encoded against them and unknown labels raise :class:`EncodingError`;
    otherwise alphabets are built from the data, sorted lexicographically.
    A row missing any configured marker value is dropped and reported.
    """
    header, rows = read_rows(source)
    required = [config.id_column, config.time_column, *config.markers]
    for col in required:
        if col not in header:
            raise IngestError(f"CSV is missing required column {col!r}")

    issues: list = []
    grouped: dict = {}
    for lineno, row in enumerate(rows, start=2):
        subject = (row.get(config.id_column) or "").strip()
        if not subject:
            issues.append(Issue("dropped-row", None, f"line {lineno}: empty subject id"))
            continue
        missing = [m for m in config.markers if _is_missing(row.get(m))]
        if missing:
            issues.append(Issue("dropped-row", subject, f"line {lineno}: missing {', '.join(missing)}"))
            continue
        raw_time = (row.get(config.time_column) or "").strip()
        try:
            t = parse_time(raw_time)
        except ValueError:
            raise IngestError(f"subject {subject}: unsortable time value {raw_time!r}") from None
        values = {m: _convert(m, spec, row[m], issues, subject) for m, spec in config.markers.items()}
        grouped.setdefault(subject, []).append((t, values))

    if alphabets is None:
        alphabets = {}
        for m, spec in config.markers.items():
            if spec.is_binned:
                alphabets[m] = spec.bins.labels()
            else:
                alphabets[m] = tuple(sorted({v[m] for visits in grouped.values() for _, v in visits}))
    else:
        alphabets = {m: tuple(alphabets[m]) for m in config.markers}
    index = {m: {label: k for k, label in enumerate(alphabets[m])} for m in config.markers}

    subjects: dict = {}
    times: dict = {}
    for subject in sorted(grouped):
        visits = sorted(grouped[subject], key=lambda tv: tv[0])
        stamps = [t for t, _ in visits]
        if len(set(stamps)) != len(stamps):
            raise IngestError(f"subject {subject}: duplicate time values")
        trails = {}
        for m, spec in config.markers.items():
            if spec.is_binned:
                states = [v[m] for _, v in visits]
            else:
                states = []
                for pos, (_, v) in enumerate(visits):
                    try:
                        states.append(index[m][v[m]])
                    except KeyError:
                        raise EncodingError(
                            f"subject {subject}: label {v[m]!r} of marker {m!r} is not in the alphabet",
                            position=pos,
                        ) from None
            trails[m] = Trail(subject, m, states)
        subjects[subject] = trails
        times[subject] = np.array(stamps)
    return Dataset(subjects, alphabets, config, times, tuple(issues))


def load_observation(source, config: PipelineConfig, alphabets: dict, exclude=()) -> dict:
    """Encode a single-subject observation CSV into ``{marker: indices}``.

    Only configured marker columns present in the file are used. If the time
    column is present rows are sorted by it; rows with a missing value in any
    used column are dropped.
    """
    header, rows = read_rows(source)
    markers = [m for m in config.markers if m in header and m not in exclude]
    if not markers:
        raise IngestError("observation CSV contains no configured marker column")
    if config.time_column in header:
        try:
            rows = sorted(rows, key=lambda r: parse_time(r[config.time_column].strip()))
        except (ValueError, AttributeError):
            raise IngestError("observation CSV has unsortable time values") from None
    obs = {m: [] for m in markers}
    issues: list = []
    for row in rows:
        if any(_is_missing(row.get(m)) for m in markers):
            continue
        for m in markers:
            spec = config.markers[m]
            value = _convert(m, spec, row[m], issues, None)
            if spec.is_binned:
                obs[m].append(value)
                continue
            try:
                obs[m].append(alphabets[m].index(value))
            except ValueError:
                raise EncodingError(
                    f"label {value!r} of marker {m!r} is not in the trained alphabet",
                    position=len(obs[m]),
                ) from None
    if not obs[markers[0]]:
        raise IngestError("observation CSV has no complete rows")
    return {m: np.array(v, dtype=np.int64) for m, v in obs.items()}


def enforce_intervals(dataset: Dataset, mode: str = "unit-step", delta: Optional[float] = None) -> Dataset:
    """Apply a measurement-interval policy.

    ``unit-step`` keeps every subject and treats consecutive visits as
    consecutive chain steps. ``strict`` drops subjects with any inter-visit gap
    more than 50% away from ``delta``; drops are recorded as issues.
    """
    if mode == "unit-step":
        return dataset
    if mode != "strict":
        raise ValueError(f"unknown interval mode {mode!r}")
    if delta is None or not delta > 0:
        raise ValueError("strict mode needs a positive delta")
    keep = []
    issues = list(dataset.issues)
    for subject in dataset.subject_ids():
        gaps = np.diff(dataset.times[subject])
        bad = gaps[np.abs(gaps - delta) > 0.5 * delta]
        if bad.size:
            issues.append(Issue("dropped-subject", subject, f"gap {bad[0]:g} deviates from {delta:g} by more than 50%"))
        else:
            keep.append(subject)
    return replace(dataset.subset(keep), issues=tuple(issues))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()
