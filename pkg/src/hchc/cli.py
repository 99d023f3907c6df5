"""Command-line entry point: ``hchc {run,pretrain,train,layout,render,evaluate}``.

Exit codes: 0 success, 2 usage or input error, 3 training divergence,
4 degenerate layout input.
"""

import argparse
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import io
from .exceptions import (
    ConfigError,
    DegenerateDistanceError,
    HCHCError,
    InvalidInputError,
    ParseError,
    TrainingDivergenceError,
)
from .gldc import assign_labels, pretrain, train
from .layout import HamiltonianLayout
from .metrics import acc, nmi
from .nn import GldcModel
from .svg import render_svg

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_DEGENERATE = 0, 2, 3, 4

logger = logging.getLogger("hchc")


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"[{stage}] {exc}")


class _Stage:
    """Context manager tagging any package error with the pipeline stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (HCHCError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


def _load_configs(args):
    if args.config:
        training, layout = io.parse_config(args.config)
    else:
        training, layout = io.TrainingConfig(), io.LayoutConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "clusters", None) is not None:
        overrides["clusters"] = args.clusters
    if overrides:
        training = replace(training, **overrides)
    return training, layout


def _sniff_header(path):
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise ParseError("cannot open file", path=path) from exc
    cells = [c.strip() for c in first.strip().split(",")]
    return any(c and not io._is_number(c) for c in cells)


def _load_data(args):
    path = Path(args.data)
    if not path.exists():
        raise ParseError("input file not found", path=path)
    has_header = _sniff_header(path) if args.header is None else args.header
    return io.load_csv(path, has_header=has_header, label_column=args.label_column), has_header


def _resolve_clusters(training, data):
    if training.clusters is None:
        if data.labels is None:
            raise ConfigError("clusters", "not set and the data has no label column to infer it from")
        training = replace(training, clusters=int(data.labels.max()) + 1)
    return training


def _echo(args, training, layout, has_header=None):
    echo = {"training": training.to_dict(), "layout": layout.to_dict()}
    if has_header is not None:
        echo["data"] = {"path": str(args.data), "header": has_header, "label_column": args.label_column}
    return echo


def _metrics(labels, truth):
    return {"acc": acc(labels, truth), "nmi": nmi(labels, truth)}


def _layout_artifacts(P, layout_cfg):
    est = HamiltonianLayout(
        gamma_exponent=layout_cfg.gamma_exponent,
        radius=layout_cfg.radius,
        exact_cycle_max=layout_cfg.exact_cycle_max,
        outlier_threshold=layout_cfg.outlier_threshold,
    ).fit(P)
    return est.layout(P)


def cmd_run(args):
    with _Stage("load"):
        training, layout_cfg = _load_configs(args)
        data, has_header = _load_data(args)
        training = _resolve_clusters(training, data)
    with _Stage("train"):
        _, P_raw = train(data.features, training)
    with _Stage("write"):
        # lay out the matrix as written so a later `layout` call reproduces it
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_probabilities(P_raw, out / "probabilities.csv")
        P = io.read_probabilities(out / "probabilities.csv")
        labels = assign_labels(P)
    with _Stage("layout"):
        layout = _layout_artifacts(P, layout_cfg)
    with _Stage("write"):
        metrics = _metrics(labels, data.labels) if data.labels is not None else None
        artifacts = io.RunArtifacts(P_raw, layout, labels, metrics, _echo(args, training, layout_cfg, has_header))
        io.write_outputs(artifacts, args.out)
        render_svg(layout, labels, Path(args.out) / "layout.svg")
    if metrics:
        print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_pretrain(args):
    with _Stage("load"):
        training, layout_cfg = _load_configs(args)
        data, has_header = _load_data(args)
        training = _resolve_clusters(training, data)
    with _Stage("pretrain"):
        model = pretrain(data.features, training)
    with _Stage("write"):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savez(out / "pretrained.npz", **model.state_dict())
        io.write_json(_echo(args, training, layout_cfg, has_header), out / "config_echo.json")
    return EXIT_OK


def cmd_train(args):
    with _Stage("load"):
        training, layout_cfg = _load_configs(args)
        data, has_header = _load_data(args)
        training = _resolve_clusters(training, data)
        model = None
        if args.model:
            with np.load(args.model) as state:
                model = GldcModel.from_state_dict(dict(state))
    with _Stage("train"):
        model, P = train(data.features, training, model=model)
        labels = assign_labels(P)
    with _Stage("write"):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savez(out / "model.npz", **model.state_dict())
        io.write_probabilities(P, out / "probabilities.csv")
        io.write_labels(labels, out / "labels.csv")
        io.write_json(_echo(args, training, layout_cfg, has_header), out / "config_echo.json")
        if data.labels is not None:
            io.write_json(_metrics(labels, data.labels), out / "metrics.json")
    return EXIT_OK


def cmd_layout(args):
    with _Stage("load"):
        _, layout_cfg = _load_configs(args)
        P = io.read_probabilities(args.probabilities)
    with _Stage("layout"):
        layout = _layout_artifacts(P, layout_cfg)
        labels = np.argmax(P, axis=1)
    with _Stage("write"):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(io.cycle_record(layout), out / "cycle.json")
        io.write_layout_csv(layout, labels, out / "layout.csv")
        render_svg(layout, labels, out / "layout.svg")
    return EXIT_OK


def cmd_render(args):
    with _Stage("load"):
        layout, labels = io.read_layout(args.layout, args.cycle)
    with _Stage("render"):
        render_svg(layout, labels, args.out, width_px=args.width)
    return EXIT_OK


def cmd_evaluate(args):
    with _Stage("load"):
        pred = io.read_labels(args.pred)
        truth = io.read_labels(args.truth)
        if pred.size != truth.size:
            raise StageError("load", InvalidInputError(
                f"length mismatch: {pred.size} predictions vs {truth.size} labels"))
    with _Stage("evaluate"):
        metrics = _metrics(pred, truth)
    if args.out:
        with _Stage("write"):
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            io.write_json(metrics, args.out)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def _data_args(p):
    p.add_argument("data", help="CSV file with one sample per row")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--clusters", type=int, help="number of clusters (default: from config or labels)")
    header = p.add_mutually_exclusive_group()
    header.add_argument("--header", dest="header", action="store_true", default=None,
                        help="first row is a header (default: detected)")
    header.add_argument("--no-header", dest="header", action="store_false")
    p.add_argument("--label-column", help="name or index of a ground-truth label column")


def build_parser():
    parser = argparse.ArgumentParser(prog="hchc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train, lay out and render in one go")
    _data_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pretrain", help="pretrain the autoencoder only")
    _data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="clustering fine-tuning (pretrains unless --model is given)")
    _data_args(p)
    p.add_argument("--model", help="pretrained.npz from the pretrain command")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("layout", help="circular layout of an existing probability matrix")
    p.add_argument("probabilities", help="n x c probability CSV")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("render", help="draw layout.csv + cycle.json as SVG")
    p.add_argument("layout", help="layout.csv")
    p.add_argument("cycle", help="cycle.json")
    p.add_argument("--out", required=True, help="SVG file to write")
    p.add_argument("--width", type=int, default=900)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="ACC and NMI of predicted against true labels")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--out", help="write metrics.json here")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except StageError as err:
        exc = err.exc
        print(f"hchc {args.command} [{err.stage}]: {exc}", file=sys.stderr)
        if isinstance(exc, TrainingDivergenceError):
            return EXIT_DIVERGED
        if isinstance(exc, DegenerateDistanceError):
            return EXIT_DEGENERATE
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
