"""Command-line controller binding ingestion, estimation, query and evaluation.

Exit status: 0 on success, 1 on validation or usage errors, 2 on other
failures. Every invocation writes a run manifest (JSON) next to its outputs,
or to ``--manifest``. ``MARKERHMM_OUTPUT_DIR`` sets the default output
directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import parse_config
from .errors import MarkerHmmError, ValidationError
from .evaluation import k_fold_cv
from .ingest import enforce_intervals, load_dataset, load_observation
from .mixture import (
    MixtureModel,
    Query,
    decode_table,
    dumps,
    export_document,
    posterior_table,
    predict_future,
    predict_posteriors,
    predict_state_sequence,
)
from .synthgen import default_spec, generate

OUTPUT_DIR_ENV = "MARKERHMM_OUTPUT_DIR"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _out(path, default_name) -> Path:
    return Path(path) if path else _output_dir() / default_name


def _write(path: Path, text: str, outputs: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    outputs.append(str(path))


def _load(args, warnings):
    text = Path(args.config).read_text(encoding="utf-8")
    config = parse_config(text)
    warnings.extend(f"[{w.section}] {w.key or ''}: {w.message}" for w in config.warnings)
    dataset = load_dataset(args.data, config)
    if getattr(args, "interval", None) is not None:
        dataset = enforce_intervals(dataset, "strict", args.interval)
    warnings.extend(f"{i.kind} {i.subject or ''}: {i.message}" for i in dataset.issues)
    return text, config, dataset


def cmd_check(args, outputs, warnings):
    _, config, dataset = _load(args, warnings)
    report = {
        "markers": sorted(config.markers),
        "layers": {n: {"weight": l.weight, "markers": list(l.marker_names)} for n, l in sorted(config.layers.items())},
        "subjects": len(dataset),
        "rows": dataset.num_rows(),
        "alphabets": {m: list(a) for m, a in sorted(dataset.alphabets.items())},
        "warnings": list(warnings),
    }
    print(json.dumps(report, indent=2, sort_keys=True))


def cmd_build(args, outputs, warnings):
    text, config, dataset = _load(args, warnings)
    model = MixtureModel.build(dataset, args.hidden, args.smoothing, config_text=text)
    _write(_out(args.out, "model.json"), dumps(model.to_document()), outputs)


def _read_model(path) -> MixtureModel:
    return MixtureModel.from_document(json.loads(Path(path).read_text(encoding="utf-8")))


def cmd_predict(args, outputs, warnings):
    model = _read_model(args.model)
    if args.hidden and args.hidden != model.hidden_marker:
        raise UsageError(f"model predicts {model.hidden_marker!r}, not {args.hidden!r}")
    if (args.subject is None) == (args.obs is None):
        raise UsageError("give exactly one of --subject or --obs")
    alphabets = model.alphabets()
    if args.subject is not None:
        if not args.data:
            raise UsageError("--subject needs --data")
        dataset = load_dataset(args.data, model.config, alphabets)
        if args.subject not in dataset.subjects:
            raise UsageError(f"subject {args.subject!r} not found in {args.data}")
        trails = dataset.subjects[args.subject]
        observation = {m: trails[m].states for m in model.channels}
    else:
        observation = load_observation(args.obs, model.config, alphabets, exclude=(model.hidden_marker,))
    layers = tuple(args.layers.split(",")) if args.layers else None
    query = Query(model.hidden_marker, observation, layers=layers)
    if args.mode == "posteriors":
        post = predict_posteriors(model, query)
        text = posterior_table(post.matrix, post.labels)
    elif args.mode == "future":
        post = predict_future(model, query, args.steps)
        text = posterior_table(post.matrix, post.labels, start=query.length)
    else:
        decoded = predict_state_sequence(model, query)
        text = decode_table(decoded)
        print(json.dumps({"states": decoded.states, "log_score": decoded.log_score}))
    _write(_out(args.out, f"prediction-{args.mode}.csv"), text, outputs)


def cmd_evaluate(args, outputs, warnings):
    _, config, dataset = _load(args, warnings)
    report = k_fold_cv(dataset, config, args.hidden, args.k, args.seed, args.smoothing, averaging=args.averaging)
    doc = report.to_document()
    doc.update(hidden_marker=args.hidden, k=args.k, seed=args.seed, averaging=args.averaging)
    _write(_out(args.out, "cv_report.json"), dumps(doc), outputs)
    print(f"mean F1 {report.mean:.4f} +/- {report.std:.4f}")


def cmd_generate(args, outputs, warnings):
    spec = default_spec(args.seed)
    if args.subjects is not None:
        spec = replace(spec, num_subjects=args.subjects)
    data, ini = generate(spec)
    _write(_out(args.out_data, "synthetic.csv"), data, outputs)
    _write(_out(args.out_config, "synthetic.ini"), ini, outputs)


def cmd_export(args, outputs, warnings):
    model = _read_model(args.model)
    doc = export_document(model, args.marker)
    _write(_out(args.out, f"parameters-{args.marker}.json"), dumps(doc), outputs)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="markerhmm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--manifest", help="path of the run manifest (default: <output dir>/<command>.manifest.json)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def data_args(p):
        p.add_argument("--config", required=True, help="INI model configuration")
        p.add_argument("--data", required=True, help="observation CSV")
        p.add_argument("--interval", type=float, help="drop subjects whose visit gaps deviate >50%% from this")

    p = sub.add_parser("check", help="validate configuration and data")
    data_args(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("build", help="estimate the model and persist it")
    data_args(p)
    p.add_argument("--hidden", required=True)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("predict", help="query a built model")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("posteriors", "future", "decode"), default="posteriors")
    p.add_argument("--hidden")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--subject")
    p.add_argument("--data")
    p.add_argument("--obs")
    p.add_argument("--layers", help="comma-separated layer subset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="k-fold cross-validation")
    data_args(p)
    p.add_argument("--hidden", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--averaging", choices=("weighted", "macro"), default="weighted")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="write the synthetic cohort")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int)
    p.add_argument("--out-data")
    p.add_argument("--out-config")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("export", help="write one channel's parameters")
    p.add_argument("--model", required=True)
    p.add_argument("--marker", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)
    return parser


def _error_chain(exc):
    chain = []
    while exc is not None:
        chain.append(f"{type(exc).__name__}: {exc}")
        exc = exc.__cause__ or exc.__context__
    return chain


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    outputs: list = []
    warnings: list = []
    args = None
    manifest = {"argv": argv}
    status = 0
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("markerhmm: a subcommand is required")
        args.func(args, outputs, warnings)
    except ValidationError as exc:
        status = 1
        manifest["error"] = _error_chain(exc)
    except (MarkerHmmError, OSError, ValueError, KeyError) as exc:
        status = 2
        manifest["error"] = _error_chain(exc)
    if status:
        print(f"error: {manifest['error'][0]}", file=sys.stderr)

    command = getattr(args, "command", None)
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")} if args else {}
    manifest.update(
        command=command,
        config=str(Path(flags["config"]).resolve()) if flags.get("config") else None,
        data=str(Path(flags["data"]).resolve()) if flags.get("data") else None,
        seed=flags.get("seed"),
        flags=flags,
        outputs=outputs,
        warnings=warnings,
        exit_status=status,
        elapsed_seconds=time.perf_counter() - started,
    )
    path = Path(args.manifest) if args is not None and args.manifest else _output_dir() / f"{command or 'markerhmm'}.manifest.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"warning: could not write manifest {path}: {exc}", file=sys.stderr)
    return status


def main():
    sys.exit(run())
