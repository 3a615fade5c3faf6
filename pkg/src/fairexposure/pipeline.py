"""Experiment configuration and the in-memory stage functions shared by the CLI
and the grid search."""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .baselines import rerank_random, rerank_reverse, rerank_topn
from .dataset import Dataset, SplitPair, SupplierMap, load_ratings, split_holdout
from .fairmatch import FairMatchConfig, fairmatch
from .metrics import MetricsReport, evaluate
from .recommend import RecBatch, RecommendConfig, recommend_batch, train_model
from .simulate import SimConfig
from .transform import TransformConfig, apply_transform

RERANK_METHODS = ("fairmatch-item", "fairmatch-sup", "random", "reverse", "topn")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Paths:
    ratings: str | None = None
    suppliers: str | None = None
    genres: str | None = None
    groups: str | None = None
    out: str = "out"


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    rating_scale: tuple[float, float] = (1.0, 5.0)


@dataclass(frozen=True)
class RerankConfig:
    method: str = "fairmatch-item"
    lam: float = 0.5
    beta: float = 1.0
    n: int = 10


@dataclass(frozen=True)
class EvalConfig:
    alphas: tuple[int, ...] = (1, 2)


@dataclass(frozen=True)
class ExperimentConfig:
    paths: Paths = field(default_factory=Paths)
    seed: int = 0
    split: SplitConfig = field(default_factory=SplitConfig)
    transform: TransformConfig = field(default_factory=lambda: TransformConfig(kind="identity"))
    recommend: RecommendConfig = field(default_factory=RecommendConfig)
    rerank: RerankConfig = field(default_factory=RerankConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    simulate: SimConfig = field(default_factory=SimConfig)
    grid: Mapping[str, tuple] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# -- parsing ---------------------------------------------------------------------


_SECTIONS = {
    "paths": Paths,
    "split": SplitConfig,
    "transform": TransformConfig,
    "recommend": RecommendConfig,
    "rerank": RerankConfig,
    "eval": EvalConfig,
}

# JSON arrays that map onto tuple-typed fields
_TUPLE_FIELDS = {("split", "rating_scale"), ("eval", "alphas"), ("simulate", "rating_scale")}


def _coerce(section: str, name: str, value, default):
    where = f"{section}.{name}"
    if (section, name) in _TUPLE_FIELDS:
        if not isinstance(value, list):
            raise ConfigError(where, "expected a list")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(where, "expected true or false")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, "expected an integer")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, "expected a number")
        value = float(value)
    elif isinstance(default, str) or default is None:
        if value is not None and not isinstance(value, str):
            raise ConfigError(where, "expected a string")
    return value


def _build(section: str, cls, raw, **extra):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(section, "expected an object")
    defaults = cls(**extra) if extra else cls()
    names = {f.name for f in dataclasses.fields(cls)} - set(extra)
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown key")
    kwargs = {k: _coerce(section, k, v, getattr(defaults, k)) for k, v in raw.items()}
    try:
        return cls(**extra, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(section, str(exc)) from None


def parse_config(raw: Mapping[str, Any], seed: int | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a JSON object")
    known = set(_SECTIONS) | {"seed", "simulate", "grid"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    parts = {name: _build(name, cls, raw.get(name)) for name, cls in _SECTIONS.items()}
    if parts["rerank"].method not in RERANK_METHODS:
        raise ConfigError("rerank.method", f"expected one of {', '.join(RERANK_METHODS)}")
    master = raw.get("seed", 0) if seed is None else seed
    if isinstance(master, bool) or not isinstance(master, int):
        raise ConfigError("seed", "expected an integer")

    sim_raw = dict(raw.get("simulate") or {})
    if not isinstance(raw.get("simulate", {}), dict):
        raise ConfigError("simulate", "expected an object")
    rec_raw = sim_raw.pop("recommender", {"algorithm": "mostpopular"})
    sim_rec = _build("simulate.recommender", RecommendConfig, rec_raw)
    simulate = _build("simulate", SimConfig, sim_raw, recommender=sim_rec, seed=master)

    grid_raw = raw.get("grid") or {}
    if not isinstance(grid_raw, dict):
        raise ConfigError("grid", "expected an object")
    grid = {}
    for key, values in grid_raw.items():
        if "." not in key or key.split(".", 1)[0] not in ("transform", "recommend", "rerank", "split"):
            raise ConfigError(f"grid.{key}", "expected <section>.<field>")
        if not isinstance(values, list):
            raise ConfigError(f"grid.{key}", "expected a list of values")
        sec, name = key.split(".", 1)
        if name not in {f.name for f in dataclasses.fields(_SECTIONS[sec])}:
            raise ConfigError(f"grid.{key}", "unknown field")
        grid[key] = tuple(values)

    return ExperimentConfig(seed=master, simulate=simulate, grid=grid, **parts)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return parse_config(raw, seed)


def require_file(config: ExperimentConfig, name: str) -> Path:
    value = getattr(config.paths, name)
    if not value:
        raise ConfigError(f"paths.{name}", "missing")
    path = Path(value)
    if not path.is_file():
        raise ConfigError(f"paths.{name}", f"file not found: {value}")
    return path


def with_overrides(config: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Replace ``section.field`` values, re-validating the touched sections."""
    sections: dict[str, dict] = {}
    for key, value in overrides.items():
        sec, name = key.split(".", 1)
        sections.setdefault(sec, {})[name] = value
    changes = {}
    for sec, values in sections.items():
        current = getattr(config, sec)
        coerced = {k: _coerce(sec, k, list(v) if isinstance(v, tuple) else v, getattr(current, k)) for k, v in values.items()}
        try:
            changes[sec] = dataclasses.replace(current, **coerced)
        except (TypeError, ValueError) as exc:
            raise ConfigError(sec, str(exc)) from None
    return dataclasses.replace(config, **changes)


# -- stages -----------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(config: ExperimentConfig, stage: str, inputs: Mapping[str, Path], outputs: Mapping[str, Path]) -> str:
    doc = {
        "toolkit": "fairexposure",
        "version": __version__,
        "stage": stage,
        "seed": config.seed,
        "config": config.to_dict(),
        "inputs": {k: sha256_file(p) for k, p in sorted(inputs.items())},
        "outputs": {k: sha256_file(p) for k, p in sorted(outputs.items())},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def reindex(dataset: Dataset, like: Dataset) -> Dataset:
    """Re-express ``dataset`` over the user and item indices of ``like``."""
    return Dataset(dataset.interactions, like.user_index, like.item_index, dataset.rating_scale)


def transformed_scale(dataset: Dataset, config: TransformConfig, raw_scale) -> tuple[float, float]:
    if config.kind == "percentile":
        return (0.0, 100.0)
    if config.kind == "zscore":
        values = [x.rating for x in dataset.interactions]
        return (min(values), max(values)) if values else (0.0, 0.0)
    return tuple(raw_scale)


def load_transformed(path, source: Dataset, config: ExperimentConfig) -> Dataset:
    loaded = load_ratings(path, (-math.inf, math.inf))
    scale = transformed_scale(loaded, config.transform, config.split.rating_scale)
    return Dataset(loaded.interactions, source.user_index, source.item_index, scale)


def run_split(source: Dataset, config: ExperimentConfig) -> SplitPair:
    return split_holdout(source, config.split.test_fraction, config.seed)


def run_recommend(train: Dataset, config: ExperimentConfig, workers: int = 1) -> RecBatch:
    model = train_model(train, config.recommend, config.seed)
    return recommend_batch(model, train, config.recommend.t, workers)


def run_rerank(batch: RecBatch, config: ExperimentConfig, suppliers: SupplierMap | None) -> RecBatch:
    rc = config.rerank
    if rc.method in ("fairmatch-item", "fairmatch-sup"):
        variant = "item" if rc.method == "fairmatch-item" else "supplier"
        if variant == "supplier" and suppliers is None:
            raise ConfigError("paths.suppliers", "fairmatch-sup needs a supplier map")
        try:
            fm = FairMatchConfig(variant, rc.lam, rc.beta, batch.list_size, rc.n)
        except ValueError as exc:
            raise ConfigError("rerank", str(exc)) from None
        return fairmatch(batch, fm, suppliers)
    if rc.method == "random":
        return rerank_random(batch, rc.n, config.seed)
    if rc.method == "reverse":
        return rerank_reverse(batch, rc.n)
    return rerank_topn(batch, rc.n)


def run_eval(
    final: RecBatch,
    train: Dataset,
    test: Dataset,
    config: ExperimentConfig,
    suppliers: SupplierMap | None = None,
    long_lists: RecBatch | None = None,
) -> MetricsReport:
    report = MetricsReport()
    base = long_lists.truncate(final.list_size) if long_lists is not None else None
    if base is not None:
        evaluate(base, train, test, scope="base", suppliers=suppliers, alphas=config.eval.alphas, report=report)
    evaluate(final, train, test, scope="final", suppliers=suppliers, base=base, alphas=config.eval.alphas, report=report)
    return report


# -- grid search ---------------------------------------------------------------------


def grid_points(grid: Mapping[str, tuple]) -> list[dict[str, Any]]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid", "empty grid")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass(frozen=True)
class LeaderboardRow:
    params: Mapping[str, Any]
    report: MetricsReport

    @property
    def precision(self) -> float:
        return self.report.get("final", "precision") or 0.0

    @property
    def item_gini(self) -> float:
        g = self.report.get("final", "IG")
        return math.inf if g is None else g


def run_grid_point(
    source: Dataset,
    config: ExperimentConfig,
    suppliers: SupplierMap | None,
    workers: int = 1,
    cache: dict | None = None,
) -> MetricsReport:
    """Full split -> transform -> recommend -> rerank -> eval chain for one config.

    ``cache`` may hold long lists keyed by the upstream configuration so that
    rerank-only grids train each model once.
    """
    upstream = (config.seed, config.split, config.transform, config.recommend)
    if cache is not None and upstream in cache:
        split, batch = cache[upstream]
    else:
        split = run_split(source, config)
        train_t = apply_transform(split.train, config.transform)
        batch = run_recommend(train_t, config, workers)
        if cache is not None:
            cache[upstream] = (split, batch)
    final = run_rerank(batch, config, suppliers)
    return run_eval(final, split.train, split.test, config, suppliers, batch)


def gridsearch(
    source: Dataset, config: ExperimentConfig, suppliers: SupplierMap | None, workers: int = 1
) -> list[LeaderboardRow]:
    points = grid_points(config.grid)
    cache: dict = {}
    rows = []
    for params in points:
        cfg = with_overrides(config, params)
        rows.append(LeaderboardRow(params, run_grid_point(source, cfg, suppliers, workers, cache)))
    # stable sort keeps grid order for exact ties
    return sorted(rows, key=lambda r: (-r.precision, r.item_gini))


LEADERBOARD_METRICS = ("precision", "recall", "ndcg", "1-IA", "IG", "IE", "SG", "SE")


def leaderboard_tsv(rows: list[LeaderboardRow]) -> str:
    if not rows:
        return ""
    keys = list(rows[0].params)
    lines = ["\t".join(["rank", *keys, *LEADERBOARD_METRICS])]
    for k, row in enumerate(rows, start=1):
        cells = [str(k)] + [json.dumps(row.params[key]) for key in keys]
        for metric in LEADERBOARD_METRICS:
            v = row.report.get("final", metric)
            cells.append("NA" if v is None else f"{v:.6f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
