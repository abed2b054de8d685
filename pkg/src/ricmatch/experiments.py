"""Seeded choose-vs-hoard sweeps over data fraction and training-time budget.

Every sweep point trains a fresh network.  For a given seed all plans
share the per-RU train/validation splits and the initial weights, and the
metric is always measured on the target RU's own validation split.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import accel
from .matching import InstanceSpec, MatchingPlan, validate_plan
from .netcost import ComputeModel, LinkModel, normalized_time_unit, transfer_delay
from .nn import Dataset, NetworkSpec, TrainConfig, init_network, spec_for_columns, train
from .preprocess import (RU_COLUMNS, UE_COLUMNS, FeatureMatrix, NormMode, Normalizer, TargetVector,
                         default_norm_mode, encode_features, fit_normalizer, scale_targets,
                         subsample_count, subsample_fraction, train_val_split, transform)
from .rng import derive_seed
from .trace_model import SliceKind, Trace, TraceKind, partition_by_ru


class Metric(str, Enum):
    MAPE = "mape"
    ACCURACY = "accuracy"


@dataclass
class SweepConfig:
    trace: Trace
    target_ru: str
    plans: Sequence[MatchingPlan]
    x_values: Sequence[float]
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: Sequence[int] = (0,)
    compute: ComputeModel = field(default_factory=ComputeModel)
    links: LinkModel = field(default_factory=LinkModel)
    spec: Optional[NetworkSpec] = None
    norm_mode: Optional[NormMode] = None
    jobs: int = 1

    def __post_init__(self):
        self.x_values = [float(x) for x in self.x_values]
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if any(b <= a for a, b in zip(self.x_values, self.x_values[1:])):
            raise ValueError("x_values must be strictly increasing")
        if self.target_ru not in self.trace.ru_ids:
            raise KeyError(f"target RU {self.target_ru!r} absent from trace")
        for plan in self.plans:
            problems = validate_plan(plan)
            if problems:
                raise ValueError(f"plan {plan.plan_id!r}: " + "; ".join(problems))
            plan.instance_for(self.target_ru)
        ids = [p.plan_id for p in self.plans]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate plan ids in {ids}")
        self.train = replace(self.train, compute=self.compute)

    @property
    def resolved_spec(self) -> NetworkSpec:
        if self.spec is not None:
            return self.spec
        return spec_for_columns(6 if self.trace.kind is TraceKind.PER_UE else 3)

    @property
    def resolved_norm(self) -> NormMode:
        return self.norm_mode if self.norm_mode is not None else default_norm_mode(self.trace.kind)

    def echo(self) -> dict:
        spec = self.resolved_spec
        return {
            "trace": {"kind": self.trace.kind.value, "ru_ids": list(self.trace.ru_ids),
                      "n_records": len(self.trace), "provenance": self.trace.provenance},
            "target_ru": self.target_ru,
            "plans": [p.to_dict() for p in self.plans],
            "x_values": list(self.x_values),
            "train": self.train.to_dict(),
            "seeds": list(self.seeds),
            "links": self.links.to_dict(),
            "network": {"layer_widths": list(spec.layer_widths),
                        "hidden_activation": spec.hidden_activation.value},
            "normalization": self.resolved_norm.value,
            "backend": accel.BACKEND,
        }


@dataclass
class CurvePoint:
    plan_id: str
    x: float
    seed: int
    metric: float
    bytes_moved: int
    transfer_delay_s: float
    epochs: int
    extra: dict = field(default_factory=dict)

    @property
    def key(self):
        return (self.plan_id, self.x, self.seed)


@dataclass
class EnvelopeEntry:
    x: float
    plan_id: str
    metric: float


@dataclass
class SweepResult:
    sweep: str
    metric: Metric
    config: dict
    points: list
    envelope: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def to_csv(self) -> str:
        return points_to_csv(self.points)

    def summary(self) -> dict:
        return {"sweep": self.sweep, "metric": self.metric.value, "config": self.config,
                "envelope": [{"x": e.x, "plan_id": e.plan_id, "metric": e.metric} for e in self.envelope],
                "skipped": self.skipped}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir, name: Optional[str] = None) -> tuple[str, str]:
        name = name or self.sweep
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{name}.csv")
        json_path = os.path.join(out_dir, f"{name}.json")
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())
        with open(json_path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_json())
        return csv_path, json_path


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

BASE_COLUMNS = ("plan_id", "x", "seed", "metric", "bytes_moved", "transfer_delay_s", "epochs")
CONFUSION_COLUMNS = ("tp", "tn", "fp", "fn", "threshold_bps")


def points_to_csv(points: Sequence[CurvePoint]) -> str:
    extra_cols = CONFUSION_COLUMNS if any(p.extra for p in points) else ()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BASE_COLUMNS + extra_cols)
    for p in sorted(points, key=lambda p: p.key):
        row = [p.plan_id, repr(p.x), p.seed, repr(p.metric), p.bytes_moved, repr(p.transfer_delay_s), p.epochs]
        row += [repr(p.extra[c]) if isinstance(p.extra[c], float) else p.extra[c] for c in extra_cols]
        w.writerow(row)
    return buf.getvalue()


def read_points_csv(path) -> list[CurvePoint]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in BASE_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"{path}: missing result column(s) {', '.join(missing)}")
        points = []
        for line, row in enumerate(reader, start=2):
            try:
                extra = {c: (float(row[c]) if c == "threshold_bps" else int(row[c]))
                         for c in CONFUSION_COLUMNS if c in row}
                points.append(CurvePoint(row["plan_id"], float(row["x"]), int(row["seed"]),
                                         float(row["metric"]), int(row["bytes_moved"]),
                                         float(row["transfer_delay_s"]), int(row["epochs"]), extra))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed result row at line {line}: {exc}") from None
    return points


# ---------------------------------------------------------------------------
# shared preparation
# ---------------------------------------------------------------------------

@dataclass
class RuData:
    features: np.ndarray
    targets: np.ndarray
    slices: Optional[np.ndarray]
    train_idx: np.ndarray
    val_idx: np.ndarray


def prepare(trace: Trace, seed: int) -> dict[str, RuData]:
    """Encode every RU and draw its train/validation split for ``seed``."""
    out = {}
    for ru, recs in partition_by_ru(trace).items():
        if not recs:
            continue
        x, y = encode_features(recs)
        split = train_val_split(len(recs), derive_seed(seed, "split", ru))
        slices = np.array([int(r.slice) for r in recs]) if trace.kind is TraceKind.PER_UE else None
        out[ru] = RuData(x.values, y.values, slices, split.train, split.val)
    return out


@dataclass
class InstanceRun:
    network: object
    report: object
    normalizer: Normalizer
    targets: TargetVector
    n_train: int
    metric: float
    train_targets: np.ndarray


def instance_rows(data: dict[str, RuData], inst: InstanceSpec, fraction: float, seed: int):
    """Training rows of every source of ``inst`` at ``fraction`` times its own share."""
    picked = []
    for src in inst.sources:
        if src.ru not in data:
            raise KeyError(f"RU {src.ru!r} absent from trace")
        idx = subsample_fraction(data[src.ru].train_idx, min(1.0, src.fraction * fraction),
                                 derive_seed(seed, "subsample", src.ru))
        picked.append((src.ru, idx))
    return picked


def pooled_rows(data: dict[str, RuData], picked, count: Optional[int] = None, seed: int = 0):
    x = np.vstack([data[ru].features[idx] for ru, idx in picked])
    y = np.concatenate([data[ru].targets[idx] for ru, idx in picked])
    if count is not None:
        keep = subsample_count(np.arange(y.size), count, derive_seed(seed, "pool"))
        x, y = x[keep], y[keep]
    return x, y


def train_instance(data: dict[str, RuData], x_train: np.ndarray, y_train: np.ndarray, target_ru: str,
                   cfg: TrainConfig, spec: NetworkSpec, norm_mode: NormMode, seed: int,
                   columns: Sequence[str]) -> InstanceRun:
    """Fit the normaliser on the instance's rows, train, score on the target's validation split."""
    raw = FeatureMatrix(x_train, tuple(columns))
    norm = fit_normalizer(norm_mode, raw)
    targets = scale_targets(TargetVector(y_train), np.arange(y_train.size))
    tgt = data[target_ru]
    val_x = transform(norm, FeatureMatrix(tgt.features[tgt.val_idx], tuple(columns)))
    val_y = TargetVector(tgt.targets[tgt.val_idx], targets.scale_factor)
    net0 = init_network(spec, derive_seed(seed, "init"))
    net, report = train(net0, Dataset(transform(norm, raw), targets), Dataset(val_x, val_y),
                        replace(cfg, seed=derive_seed(seed, "train")))
    metric = report.best_val_mape if report.best_val_mape is not None else report.initial_val_mape
    return InstanceRun(net, report, norm, targets, y_train.size, metric, y_train)


def _columns(trace: Trace) -> tuple[str, ...]:
    return UE_COLUMNS if trace.kind is TraceKind.PER_UE else RU_COLUMNS


def record_counts(trace: Trace) -> dict[str, int]:
    return {ru: len(recs) for ru, recs in partition_by_ru(trace).items()}


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _run_tasks(fn: Callable, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _point_task(args):
    cfg, plan, label, fraction, seed, budget = args
    data = prepare(cfg.trace, seed)
    inst = plan.instance_for(cfg.target_ru)
    xt, yt = pooled_rows(data, instance_rows(data, inst, fraction, seed))
    run = train_instance(data, xt, yt, cfg.target_ru, replace(cfg.train, time_budget=budget),
                         cfg.resolved_spec, cfg.resolved_norm, seed, _columns(cfg.trace))
    cost = transfer_delay(plan.scaled(fraction), record_counts(cfg.trace), cfg.links)
    return CurvePoint(plan.plan_id, label, seed, float(run.metric), cost.bytes_moved,
                      cost.transfer_delay_s, run.report.epochs_completed)


def sweep_data_fraction(cfg: SweepConfig) -> SweepResult:
    """Validation MAPE at the target RU versus the share of training data used."""
    if any(not 0.0 < x <= 1.0 for x in cfg.x_values):
        raise ValueError("data fractions must lie in (0, 1]")
    tasks = [(cfg, plan, x, x, seed, None) for plan in cfg.plans for x in cfg.x_values for seed in cfg.seeds]
    points = sorted(_run_tasks(_point_task, tasks, cfg.jobs), key=lambda p: p.key)
    result = SweepResult("sweep_data", Metric.MAPE, {"sweep": "data_fraction", **cfg.echo()}, points)
    result.envelope = best_instance_envelope(result)
    return result


def time_unit(cfg: SweepConfig, seed: int) -> float:
    """Modeled seconds of 100 epochs of hoarding every RU's training split."""
    data = prepare(cfg.trace, seed)
    return normalized_time_unit({ru: d.train_idx.size for ru, d in data.items()}, cfg.compute)


def sweep_time_budget(cfg: SweepConfig) -> SweepResult:
    """Best validation MAPE reached within a modeled training-time budget.

    Budgets are multiples of :func:`time_unit`; every plan trains on its
    full source data.
    """
    if any(x <= 0 for x in cfg.x_values):
        raise ValueError("time budgets must be > 0")
    units = {seed: time_unit(cfg, seed) for seed in cfg.seeds}
    tasks = [(cfg, plan, x, 1.0, seed, x * units[seed])
             for plan in cfg.plans for x in cfg.x_values for seed in cfg.seeds]
    points = sorted(_run_tasks(_point_task, tasks, cfg.jobs), key=lambda p: p.key)
    echo = {"sweep": "time_budget", "clock": cfg.train.clock,
            "time_unit_s": {str(s): u for s, u in units.items()}, **cfg.echo()}
    result = SweepResult("sweep_time", Metric.MAPE, echo, points)
    result.envelope = best_instance_envelope(result)
    return result


def best_instance_envelope(result: SweepResult) -> list[EnvelopeEntry]:
    """Per x, the plan with the best mean-over-seeds metric.

    Ties go to the plan moving fewer bytes, then to the smaller plan id.
    """
    metric = defaultdict(list)
    moved = defaultdict(list)
    for p in result.points:
        metric[(p.x, p.plan_id)].append(p.metric)
        moved[(p.x, p.plan_id)].append(p.bytes_moved)
    sign = -1.0 if result.metric is Metric.ACCURACY else 1.0
    best: dict[float, tuple] = {}
    for (x, plan_id), vals in metric.items():
        key = (sign * float(np.mean(vals)), float(np.mean(moved[(x, plan_id)])), plan_id)
        if x not in best or key < best[x]:
            best[x] = key
    return [EnvelopeEntry(x, k[2], sign * k[0]) for x, k in sorted(best.items())]


def mtc_mask(data: RuData) -> np.ndarray:
    return data.slices == int(SliceKind.MTC)
