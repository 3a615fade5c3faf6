"""Command-line front end.

Every stage reads and writes the documented TSV formats inside ``--out`` and
leaves a ``manifest_<stage>.json`` recording config, seed, input digests and
toolkit version. Exit status 1 signals a data or module error, 2 a config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .dataset import (
    Dataset,
    DatasetError,
    load_genre_map,
    load_ratings,
    load_supplier_map,
    write_ratings,
)
from .metrics import MetricDomainError, MetricsReport
from .pipeline import (
    RERANK_METHODS,
    ConfigError,
    ExperimentConfig,
    gridsearch,
    leaderboard_tsv,
    load_config,
    load_transformed,
    manifest,
    reindex,
    require_file,
    run_eval,
    run_recommend,
    run_rerank,
    run_split,
)
from .recommend import read_recbatch, write_recbatch
from .simulate import SimulationError, log_to_tsv, run_feedback_loop
from .transform import apply_transform

log = logging.getLogger("fairexposure")

TRAIN, TEST, TRAIN_T = "train.tsv", "test.tsv", "train_transformed.tsv"
RECS, RERANKED = "recs.tsv", "reranked.tsv"


class Stage:
    """Per-invocation context: parsed config, output directory and file bookkeeping."""

    def __init__(self, config: ExperimentConfig, out: Path, workers: int):
        self.config = config
        self.out = out
        self.workers = workers
        self.inputs: dict[str, Path] = {}
        self.outputs: dict[str, Path] = {}

    def path(self, name: str) -> Path:
        return self.out / name

    def need(self, name: str) -> Path:
        p = self.path(name)
        if not p.is_file():
            raise DatasetError(f"missing stage input {p}; run the producing subcommand first")
        self.inputs[name] = p
        return p

    def wrote(self, name: str) -> Path:
        self.outputs[name] = self.path(name)
        return self.path(name)

    def source(self) -> Dataset:
        path = require_file(self.config, "ratings")
        self.inputs["ratings"] = path
        return load_ratings(path, self.config.split.rating_scale)

    def suppliers(self, source: Dataset, required: bool = False):
        if not self.config.paths.suppliers:
            if required:
                raise ConfigError("paths.suppliers", "missing")
            return None
        path = require_file(self.config, "suppliers")
        self.inputs["suppliers"] = path
        return load_supplier_map(path, source)

    def split(self, source: Dataset) -> tuple[Dataset, Dataset]:
        scale = self.config.split.rating_scale
        train = reindex(load_ratings(self.need(TRAIN), scale), source)
        test = reindex(load_ratings(self.need(TEST), scale), source)
        return train, test

    def finish(self, stage: str) -> None:
        text = manifest(self.config, stage, self.inputs, self.outputs)
        (self.out / f"manifest_{stage}.json").write_text(text, encoding="utf-8")


# -- subcommands ----------------------------------------------------------------------


def cmd_split(st: Stage, args) -> None:
    source = st.source()
    pair = run_split(source, st.config)
    write_ratings(pair.train, st.wrote(TRAIN))
    write_ratings(pair.test, st.wrote(TEST))


def cmd_transform(st: Stage, args) -> None:
    source = st.source()
    train, _ = st.split(source)
    write_ratings(apply_transform(train, st.config.transform), st.wrote(TRAIN_T))


def _model_train(st: Stage, source: Dataset) -> tuple[Dataset, Dataset]:
    train, test = st.split(source)
    if st.config.transform.kind == "identity":
        return train, train
    return load_transformed(st.need(TRAIN_T), source, st.config), train


def cmd_recommend(st: Stage, args) -> None:
    source = st.source()
    model_train, _ = _model_train(st, source)
    batch = run_recommend(model_train, st.config, st.workers)
    write_recbatch(batch, st.wrote(RECS))


def cmd_rerank(st: Stage, args) -> None:
    source = st.source()
    batch = read_recbatch(st.need(RECS))
    suppliers = st.suppliers(source, required=st.config.rerank.method == "fairmatch-sup")
    write_recbatch(run_rerank(batch, st.config, suppliers), st.wrote(RERANKED))


def cmd_eval(st: Stage, args) -> None:
    source = st.source()
    train, test = st.split(source)
    if args.batch:
        path = Path(args.batch)
        if not path.is_file():
            raise DatasetError(f"batch file not found: {path}")
        st.inputs["batch"] = path
        final = read_recbatch(path)
        long_lists = None
    else:
        final = read_recbatch(st.need(RERANKED))
        long_lists = read_recbatch(st.need(RECS))
    suppliers = st.suppliers(source)
    report = run_eval(final, train, test, st.config, suppliers, long_lists)
    _write_report(st, report)


def _write_report(st: Stage, report: MetricsReport) -> None:
    st.wrote("metrics.tsv").write_text(report.to_tsv(), encoding="utf-8")
    st.wrote("metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")


def cmd_pipeline(st: Stage, args) -> None:
    for name, fn in (
        ("split", cmd_split),
        ("transform", cmd_transform),
        ("recommend", cmd_recommend),
        ("rerank", cmd_rerank),
        ("eval", cmd_eval),
    ):
        if name == "transform" and st.config.transform.kind == "identity":
            continue
        sub = Stage(st.config, st.out, st.workers)
        fn(sub, args)
        sub.finish(name)


def _read_groups(path: Path) -> dict[str, str]:
    groups = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected user<TAB>group")
            groups[parts[0]] = parts[1]
    return groups


def cmd_simulate(st: Stage, args) -> None:
    source = st.source()
    genres_path = require_file(st.config, "genres")
    st.inputs["genres"] = genres_path
    genres = load_genre_map(genres_path)
    groups = {}
    if st.config.paths.groups:
        groups_path = require_file(st.config, "groups")
        st.inputs["groups"] = groups_path
        groups = _read_groups(groups_path)
    sim_log = run_feedback_loop(source, genres, groups, st.config.simulate)
    st.wrote("simulation.tsv").write_text(log_to_tsv(sim_log), encoding="utf-8")


def cmd_gridsearch(st: Stage, args) -> None:
    source = st.source()
    suppliers = st.suppliers(source)
    rows = gridsearch(source, st.config, suppliers, st.workers)
    st.wrote("leaderboard.tsv").write_text(leaderboard_tsv(rows), encoding="utf-8")


COMMANDS = {
    "split": cmd_split,
    "transform": cmd_transform,
    "recommend": cmd_recommend,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "gridsearch": cmd_gridsearch,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="output directory (overrides paths.out)")
    common.add_argument("--workers", type=int, default=1, help="threads for list generation")

    parser = argparse.ArgumentParser(prog="fairexposure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("rerank", "pipeline", "gridsearch"):
            p.add_argument("--method", choices=RERANK_METHODS)
            p.add_argument("--lambda", dest="lam", type=float)
            p.add_argument("--beta", type=float)
        if name == "eval":
            p.add_argument("--batch", help="evaluate this RecBatch file instead of reranked.tsv")
        if name == "pipeline":
            p.set_defaults(batch=None)
    return parser


def _apply_flags(config: ExperimentConfig, args) -> ExperimentConfig:
    rerank = config.rerank
    for attr in ("method", "lam", "beta"):
        value = getattr(args, attr, None)
        if value is not None:
            rerank = dataclasses.replace(rerank, **{attr: value})
    paths = config.paths if args.out is None else dataclasses.replace(config.paths, out=args.out)
    return dataclasses.replace(config, rerank=rerank, paths=paths)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _apply_flags(load_config(args.config, args.seed), args)
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        out = Path(config.paths.out)
        out.mkdir(parents=True, exist_ok=True)
        st = Stage(config, out, args.workers)
        COMMANDS[args.command](st, args)
        if args.command != "pipeline":
            st.finish(args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, MetricDomainError, SimulationError, ValueError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
