"""Active-learning simulation: seed, train, encode, select, label, evaluate, repeat."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import learner as lrn
from .errors import ConfigError, FormatError, PoolError, TaskalError
from .metrics import accuracy, coverage_radius, rmse
from .pca import pca_fit, pca_project
from .pool import (EmbeddingMatrix, LabelStore, PoolState, commit_selection,
                   load_embeddings, load_labels)
from .samplers import NEEDS_SCORES, StrategySpec, bvsb_scores, select

log = logging.getLogger(__name__)

TASK_KINDS = ("toy_classification", "toy_dense_regression", "external_embeddings")
RECORD_HEADER = ("seed", "strategy", "round", "labelled_count", "metric", "value")
PROJECTION_HEADER = ("id", "x", "y", "status")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Desk-scale stand-in dataset.

    ``blobs``: ``classes`` classes, each a mixture of ``clusters_per_class``
    isotropic Gaussians of std ``noise`` with centres drawn from
    N(0, ``spread``^2). ``linear_teacher``: Gaussian inputs mapped through a
    fixed random linear map to an ``outputs``-vector, plus ``noise``.
    """

    kind: str = "blobs"
    n: int = 2000
    input_dim: int = 8
    classes: int = 4
    outputs: int = 16
    noise: float = 1.0
    spread: float = 2.0
    clusters_per_class: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("blobs", "linear_teacher"):
            raise ConfigError(f"unknown synthetic kind {self.kind!r}")
        if self.n < 1 or self.input_dim < 1:
            raise ConfigError("synthetic n and input_dim must be positive")
        if self.kind == "blobs" and (self.classes < 2 or self.clusters_per_class < 1):
            raise ConfigError("blobs need >= 2 classes and >= 1 cluster per class")
        if self.kind == "linear_teacher" and self.outputs < 1:
            raise ConfigError("linear_teacher needs outputs >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")


def make_synthetic(spec: SyntheticTaskSpec) -> tuple[EmbeddingMatrix, LabelStore]:
    rng = np.random.default_rng(spec.seed)
    ids = np.arange(spec.n, dtype=np.int64)
    if spec.kind == "blobs":
        k = spec.classes * spec.clusters_per_class
        centres = rng.normal(0.0, spec.spread, size=(k, spec.input_dim))
        cluster = rng.integers(0, k, size=spec.n)
        X = centres[cluster] + rng.normal(0.0, spec.noise, size=(spec.n, spec.input_dim))
        y = cluster % spec.classes
        return EmbeddingMatrix(X, ids), LabelStore("class", ids, y, spec.classes)
    A = rng.normal(0.0, 1.0 / np.sqrt(spec.input_dim), size=(spec.input_dim, spec.outputs))
    X = rng.normal(0.0, 1.0, size=(spec.n, spec.input_dim))
    Y = X @ A + rng.normal(0.0, spec.noise, size=(spec.n, spec.outputs))
    return EmbeddingMatrix(X, ids), LabelStore("dense", ids, Y)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    strategy: StrategySpec
    initial_size: int
    rounds: int
    seeds: tuple[int, ...] = (0,)
    learner: lrn.TrainConfig = field(default_factory=lrn.TrainConfig)
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    hidden: int = 16
    warm_start: bool = False
    synthetic: SyntheticTaskSpec | None = None
    data: dict | None = None

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.initial_size < 1:
            raise ConfigError("initial_size must be positive")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(self.split) != 3 or min(self.split) <= 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be positive and sum to 1, got {list(self.split)}")
        if self.hidden < 1:
            raise ConfigError("hidden width must be positive")
        if self.task == "external_embeddings":
            if not self.data or "embeddings" not in self.data or "labels" not in self.data:
                raise ConfigError("external_embeddings needs data.embeddings and data.labels")
        if self.task == "toy_dense_regression" and self.strategy.kind in NEEDS_SCORES:
            raise ConfigError(f"strategy {self.strategy.kind} needs class probabilities; "
                              "the dense task has none")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        try:
            task = raw["task"]
            s = raw["strategy"]
            strategy = StrategySpec(kind=s["kind"], budget=int(s["budget"]),
                                    gamma=s.get("gamma"), pca_dims=s.get("pca_dims"))
            lr = raw.get("learner", {})
            learner = lrn.TrainConfig(epochs=int(lr.get("epochs", 200)),
                                      learning_rate=float(lr.get("learning_rate", 0.05)),
                                      batch_size=int(lr.get("batch_size", 32)))
            synthetic = None
            if task in ("toy_classification", "toy_dense_regression"):
                syn = dict(raw.get("synthetic", {}))
                syn.setdefault("kind", "blobs" if task == "toy_classification" else "linear_teacher")
                if task == "toy_dense_regression":
                    syn.setdefault("noise", 0.1)
                synthetic = SyntheticTaskSpec(**syn)
            data = raw.get("data")
            if data is not None and base_dir is not None:
                data = {k: str((base_dir / v).resolve()) if k in ("embeddings", "labels") else v
                        for k, v in data.items()}
            return cls(task=task, strategy=strategy,
                       initial_size=int(raw["initial_size"]), rounds=int(raw["rounds"]),
                       seeds=tuple(int(x) for x in raw.get("seeds", [0])),
                       learner=learner, split=tuple(float(x) for x in raw.get("split", [0.8, 0.1, 0.1])),
                       hidden=int(raw.get("hidden", 16)), warm_start=bool(raw.get("warm_start", False)),
                       synthetic=synthetic, data=data)
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


@dataclass(frozen=True)
class RunRecord:
    seed: int
    strategy: str
    round: int
    labelled_count: int
    metric: str
    value: float

    def row(self):
        return [self.seed, self.strategy, self.round, self.labelled_count, self.metric,
                repr(float(self.value))]


@dataclass(frozen=True, eq=False)
class TaskData:
    """Inputs and oracle ground truth, split into train pool / val / test ids."""

    X: EmbeddingMatrix
    labels: LabelStore
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray


def split_ids(ids: Sequence[int], ratios, seed: int):
    ids = np.asarray(ids, dtype=np.int64)
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(math.floor(ratios[0] * len(ids)))
    n_val = int(math.floor(ratios[1] * len(ids)))
    shuffled = ids[perm]
    return (np.sort(shuffled[:n_train]), np.sort(shuffled[n_train:n_train + n_val]),
            np.sort(shuffled[n_train + n_val:]))


def prepare_data(config: ExperimentConfig) -> TaskData:
    if config.task == "external_embeddings":
        X = load_embeddings(config.data["embeddings"])
        labels = load_labels(config.data["labels"])
        split_seed = int(config.data.get("split_seed", 0))
    else:
        X, labels = make_synthetic(config.synthetic)
        split_seed = config.synthetic.seed
    missing = [int(i) for i in X.ids if int(i) not in labels]
    if missing:
        raise PoolError(f"no ground truth for id {missing[0]}")
    train, val, test = split_ids(X.ids, config.split, split_seed)
    if len(test) == 0:
        raise ConfigError("test split is empty")
    need = config.initial_size + config.rounds * config.strategy.budget
    if need > len(train):
        raise ConfigError(f"initial_size + rounds * budget = {need} exceeds the "
                          f"{len(train)}-example training pool")
    return TaskData(X, labels, train, val, test)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0])


def seed_pool(train_ids: Sequence[int], initial_size: int, seed: int) -> PoolState:
    """Uniformly random initial labelled set of ``initial_size`` ids."""
    train_ids = [int(i) for i in train_ids]
    if initial_size > len(train_ids):
        raise PoolError(f"initial_size {initial_size} exceeds pool of {len(train_ids)}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(train_ids), size=initial_size, replace=False)
    return PoolState.from_ids(train_ids, [train_ids[k] for k in picks])


def reveal_labels(oracle: LabelStore, ids: Iterable[int]) -> LabelStore:
    """Ground truth for ``ids``; the oracle itself is never modified."""
    ids = list(ids)
    unknown = [i for i in ids if i not in oracle]
    if unknown:
        raise PoolError(f"oracle has no label for id {unknown[0]}")
    return oracle.subset(ids)


def _model_task(labels: LabelStore) -> tuple[str, int]:
    if labels.kind == "class":
        return "classifier", labels.num_classes
    return "dense_regressor", labels.values.shape[1]


def _evaluate(model, data: TaskData) -> tuple[str, float]:
    Xt = data.X.rows(data.test_ids)
    truth = data.labels.subset(data.test_ids).values
    out = lrn.predict(model, Xt)
    if model.task == "classifier":
        return "accuracy", accuracy(out.argmax(axis=1), truth)
    return "rmse", rmse(out, truth)


class RunError(TaskalError):
    def __init__(self, seed, round_, stage, cause):
        super().__init__(f"seed {seed} round {round_} stage {stage}: {cause}")
        self.seed, self.round, self.stage = seed, round_, stage


def run_seed(config: ExperimentConfig, data: TaskData, seed: int) -> list[RunRecord]:
    spec = config.strategy
    b = spec.budget
    task, out_dim = _model_task(data.labels)
    pool_X = EmbeddingMatrix(data.X.rows(data.train_ids), data.train_ids)
    records = []
    stage, t = "seed", 0
    try:
        state = seed_pool(data.train_ids, config.initial_size, _derive_seed(seed, 0))
        known = reveal_labels(data.labels, state.labelled)
        model = None
        for t in range(config.rounds + 1):
            stage = "train"
            if model is None or not config.warm_start:
                model = lrn.init_model(task, data.X.d, config.hidden, out_dim,
                                       seed=_derive_seed(seed, t, 1))
            lab = known.subset(state.labelled)
            cfg = lrn.TrainConfig(config.learner.epochs, config.learner.learning_rate,
                                  config.learner.batch_size, seed=_derive_seed(seed, t, 2))
            model = lrn.train(model, data.X.rows(state.labelled), lab.values, cfg)

            stage = "evaluate"
            count = len(state.labelled)
            metric, value = _evaluate(model, data)
            records.append(RunRecord(seed, spec.name, t, count, metric, value))
            stage = "encode"
            Z = lrn.encode(model, pool_X)
            records.append(RunRecord(seed, spec.name, t, count, "coverage_radius",
                                     coverage_radius(Z, state.labelled)))
            if t == config.rounds:
                break

            stage = "select"
            scores = None
            if spec.kind in NEEDS_SCORES:
                unl = list(state.unlabelled)
                scores = bvsb_scores(lrn.head(model, Z.rows(unl)), ids=unl)
            round_spec = StrategySpec(spec.kind, b, spec.gamma, spec.pca_dims,
                                      seed=_derive_seed(seed, t, 3))
            picks = select(round_spec, state, Z=Z, scores=scores, features=pool_X)
            state = state.select(picks)

            stage = "oracle"
            known = known.merge(reveal_labels(data.labels, state.selected))
            state = commit_selection(state, known)
            log.debug("seed %d round %d: picked %d, labelled %d", seed, t, len(picks),
                      len(state.labelled))
    except TaskalError as exc:
        raise RunError(seed, t, stage, exc) from exc
    return records


def run_al_loop(config: ExperimentConfig, data: TaskData | None = None) -> list[RunRecord]:
    """Every seed's rounds, in seed order."""
    data = prepare_data(config) if data is None else data
    records = []
    for seed in config.seeds:
        records.extend(run_seed(config, data, seed))
    return records


def write_records(records: Iterable[RunRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_HEADER)
        for rec in records:
            writer.writerow(rec.row())


def read_records(path) -> list[RunRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RECORD_HEADER:
            raise FormatError(f"expected header {','.join(RECORD_HEADER)}", row=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(RECORD_HEADER):
                raise FormatError(f"expected {len(RECORD_HEADER)} fields, got {len(rec)}", row=lineno)
            try:
                value = float(rec[5])
                records.append(RunRecord(int(rec[0]), rec[1], int(rec[2]), int(rec[3]), rec[4], value))
            except ValueError as exc:
                raise FormatError(str(exc), row=lineno) from None
            if not math.isfinite(value):
                raise FormatError("non-finite value", row=lineno)
    return records


@dataclass(frozen=True)
class SummaryRow:
    strategy: str
    labelled_count: int
    metric: str
    n_seeds: int
    mean: float
    std: float
    fraction: float | None = None


def report(records: Sequence[RunRecord], denominator: int | None = None) -> list[SummaryRow]:
    """Mean and population std over seeds per (strategy, metric, labelled_count)."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.strategy, r.metric, r.labelled_count), []).append(r.value)
    rows = []
    for (strategy, metric, count), vals in groups.items():
        arr = np.asarray(vals)
        frac = count / denominator if denominator else None
        rows.append(SummaryRow(strategy, count, metric, len(arr), float(arr.mean()),
                               float(arr.std()), frac))
    order = {s: k for k, s in enumerate(dict.fromkeys(r.strategy for r in records))}
    rows.sort(key=lambda r: (order[r.strategy], r.metric, r.labelled_count))
    return rows


def write_summary(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "labelled_count", "fraction", "metric", "n_seeds", "mean", "std"])
        for r in rows:
            frac = "" if r.fraction is None else repr(r.fraction)
            writer.writerow([r.strategy, r.labelled_count, frac, r.metric, r.n_seeds,
                             repr(r.mean), repr(r.std)])


def format_summary(rows: Sequence[SummaryRow]) -> str:
    lines = [f"{'strategy':<16}{'metric':<17}{'labelled':>9}{'frac':>8}{'seeds':>6}{'mean':>12}{'std':>11}"]
    for r in rows:
        frac = "" if r.fraction is None else f"{r.fraction:.3f}"
        lines.append(f"{r.strategy:<16}{r.metric:<17}{r.labelled_count:>9}{frac:>8}"
                     f"{r.n_seeds:>6}{r.mean:>12.5f}{r.std:>11.5f}")
    return "\n".join(lines)


@dataclass(frozen=True)
class ProjectionPoint:
    id: int
    x: float
    y: float
    status: str


def export_projection(Z: EmbeddingMatrix, pool: PoolState,
                      newly_selected: Iterable[int] = ()) -> list[ProjectionPoint]:
    """2-D PCA view of ``Z`` tagged unlabelled / labelled / selected.

    Ids in ``newly_selected`` (or ``pool.selected``) are tagged as selected
    even if already folded into the labelled set.
    """
    if Z.n < 2:
        raise TaskalError(f"projection needs at least 2 rows, got {Z.n}")
    r = min(2, Z.d)
    coords = pca_project(pca_fit(Z, r), Z).data
    if r == 1:
        coords = np.column_stack([coords[:, 0], np.zeros(Z.n)])
    selected = set(int(i) for i in newly_selected) | set(pool.selected)
    labelled = set(pool.labelled)
    unlabelled = set(pool.unlabelled)
    points = []
    for ident, (x, y) in zip(Z.ids, coords):
        ident = int(ident)
        if ident in selected:
            status = "selected"
        elif ident in labelled:
            status = "labelled"
        elif ident in unlabelled:
            status = "unlabelled"
        else:
            raise PoolError(f"id {ident} is not in the pool")
        points.append(ProjectionPoint(ident, float(x), float(y), status))
    return points


def write_projection(points: Sequence[ProjectionPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROJECTION_HEADER)
        for p in points:
            writer.writerow([p.id, repr(p.x), repr(p.y), p.status])
