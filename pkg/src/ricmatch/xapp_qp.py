"""Quality-predictor xApp: zero / non-zero bitrate classification of UEs.

The regression network's bitrate prediction is thresholded; a UE is
predicted ``ZERO`` when the prediction does not exceed the threshold.
Ground truth is an exact zero target.  In confusion counts the positive
class is ``ZERO``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .experiments import (CurvePoint, Metric, SweepConfig, SweepResult, _columns, _run_tasks,
                          best_instance_envelope, instance_rows, pooled_rows, prepare, record_counts,
                          train_instance)
from .netcost import transfer_delay
from .nn import Network, forward
from .preprocess import FeatureMatrix, Normalizer, TargetVector, transform
from .trace_model import SliceKind, TraceKind


class BitrateClass(str, Enum):
    ZERO = "zero-bitrate"
    NONZERO = "non-zero-bitrate"


def classify_bitrate(pred_bps: float, threshold_bps: float) -> BitrateClass:
    return BitrateClass.ZERO if pred_bps <= threshold_bps else BitrateClass.NONZERO


def default_threshold(train_targets) -> float:
    """Half the smallest strictly positive training target."""
    y = np.asarray(train_targets, dtype=float)
    pos = y[y > 0]
    if pos.size == 0:
        raise ValueError("no positive training targets to derive a threshold from")
    return float(pos.min()) / 2.0


@dataclass
class QpConfig:
    sample_counts: Sequence[int]
    threshold_bps: Optional[float] = None  # None: default_threshold per instance
    mtc_only: bool = True

    def __post_init__(self):
        self.sample_counts = [int(n) for n in self.sample_counts]
        if any(b <= a for a, b in zip(self.sample_counts, self.sample_counts[1:])):
            raise ValueError("sample_counts must be strictly increasing")
        if any(n < 1 for n in self.sample_counts):
            raise ValueError("sample_counts must be >= 1")
        if self.threshold_bps is not None and not self.threshold_bps > 0:
            raise ValueError("threshold_bps must be > 0")


@dataclass
class QpRow:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int
    threshold_bps: float = field(default=0.0)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(truth_zero: np.ndarray, pred_zero: np.ndarray) -> tuple[int, int, int, int]:
    tp = int(np.count_nonzero(truth_zero & pred_zero))
    tn = int(np.count_nonzero(~truth_zero & ~pred_zero))
    fp = int(np.count_nonzero(~truth_zero & pred_zero))
    fn = int(np.count_nonzero(truth_zero & ~pred_zero))
    return tp, tn, fp, fn


def evaluate_accuracy(net: Network, eval_features: FeatureMatrix, eval_targets: TargetVector,
                      normalizer: Optional[Normalizer], threshold_bps: float) -> QpRow:
    """Classification accuracy (%) of the thresholded bitrate predictions."""
    if eval_targets.n == 0:
        raise ValueError("empty evaluation set")
    x = transform(normalizer, eval_features) if normalizer is not None else eval_features
    pred = eval_targets.invert(forward(net, x))
    tp, tn, fp, fn = confusion(eval_targets.values == 0, pred <= threshold_bps)
    return QpRow(100.0 * (tp + tn) / eval_targets.n, tp, tn, fp, fn, float(threshold_bps))


def _xapp_task(args):
    cfg, qp, plan, seed = args
    data = prepare(cfg.trace, seed)
    inst = plan.instance_for(cfg.target_ru)
    picked = instance_rows(data, inst, 1.0, seed)
    pool = sum(idx.size for _, idx in picked)
    tgt = data[cfg.target_ru]
    rows = tgt.val_idx[tgt.slices[tgt.val_idx] == int(SliceKind.MTC)] if qp.mtc_only else tgt.val_idx
    if rows.size == 0:
        raise ValueError(f"no evaluation rows for {cfg.target_ru} (MTC only: {qp.mtc_only})")
    counts = record_counts(cfg.trace)
    points, skipped = [], []
    for n in qp.sample_counts:
        if n > pool:
            skipped.append({"plan_id": plan.plan_id, "x": n, "seed": seed,
                            "reason": f"needs {n} rows, pool has {pool}"})
            continue
        xt, yt = pooled_rows(data, picked, count=n, seed=seed)
        run = train_instance(data, xt, yt, cfg.target_ru, cfg.train, cfg.resolved_spec,
                             cfg.resolved_norm, seed, _columns(cfg.trace))
        theta = qp.threshold_bps if qp.threshold_bps is not None else default_threshold(yt)
        row = evaluate_accuracy(run.network, FeatureMatrix(tgt.features[rows], _columns(cfg.trace)),
                                TargetVector(tgt.targets[rows], run.targets.scale_factor),
                                run.normalizer, theta)
        cost = transfer_delay(plan.scaled(n / pool), counts, cfg.links)
        points.append(CurvePoint(plan.plan_id, float(n), seed, row.accuracy, cost.bytes_moved,
                                 cost.transfer_delay_s, run.report.epochs_completed,
                                 {"tp": row.tp, "tn": row.tn, "fp": row.fp, "fn": row.fn,
                                  "threshold_bps": row.threshold_bps}))
    return points, skipped


def sweep_xapp(cfg: SweepConfig, qp: QpConfig) -> SweepResult:
    """xApp accuracy at the target RU versus absolute training-sample count."""
    if cfg.trace.kind is not TraceKind.PER_UE:
        raise ValueError("the xApp sweep needs a per-UE trace with per-UE bitrates")
    tasks = [(cfg, qp, plan, seed) for plan in cfg.plans for seed in cfg.seeds]
    points, skipped = [], []
    for pts, skp in _run_tasks(_xapp_task, tasks, cfg.jobs):
        points.extend(pts)
        skipped.extend(skp)
    points.sort(key=lambda p: p.key)
    skipped.sort(key=lambda s: (s["plan_id"], s["x"], s["seed"]))
    echo = {"sweep": "xapp", **cfg.echo(), "x_values": list(qp.sample_counts),
            "threshold_bps": qp.threshold_bps, "threshold_rule": "half smallest positive training target"
            if qp.threshold_bps is None else "fixed", "mtc_only": qp.mtc_only}
    result = SweepResult("sweep_xapp", Metric.ACCURACY, echo, points, skipped=skipped)
    result.envelope = best_instance_envelope(result)
    return result
