"""Information-to-model matching plans and the scenario heterogeneity score.

A plan lists model instances.  Each instance trains on a set of
``(ru, fraction)`` sources and serves a set of locations; every location
is served by at most one instance.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import accel
from .preprocess import encode_features
from .trace_model import Trace, partition_by_ru


@dataclass(frozen=True)
class Source:
    ru: str
    fraction: float = 1.0


@dataclass(frozen=True)
class InstanceSpec:
    instance_id: str
    sources: tuple[Source, ...]
    serving: tuple[str, ...]

    def scaled(self, factor: float) -> "InstanceSpec":
        return InstanceSpec(self.instance_id,
                            tuple(Source(s.ru, s.fraction * factor) for s in self.sources),
                            self.serving)


@dataclass(frozen=True)
class MatchingPlan:
    instances: tuple[InstanceSpec, ...]
    ru_ids: tuple[str, ...]
    plan_id: str = "plan"

    def instance_for(self, ru: str) -> InstanceSpec:
        for inst in self.instances:
            if ru in inst.serving:
                return inst
        raise KeyError(f"no instance in plan {self.plan_id!r} serves {ru!r}")

    def scaled(self, factor: float) -> "MatchingPlan":
        """Every source fraction multiplied by ``factor``."""
        return MatchingPlan(tuple(i.scaled(factor) for i in self.instances), self.ru_ids, self.plan_id)

    def to_dict(self) -> dict:
        return {"id": self.plan_id,
                "instances": [{"id": i.instance_id,
                               "sources": [{"ru": s.ru, "fraction": s.fraction} for s in i.sources],
                               "serving": list(i.serving)} for i in self.instances]}


def plan_from_dict(doc: dict, ru_ids: Sequence[str], plan_id: str = None) -> MatchingPlan:
    instances = tuple(
        InstanceSpec(str(i["id"]),
                     tuple(Source(str(s["ru"]), float(s.get("fraction", 1.0))) for s in i.get("sources", ())),
                     tuple(str(r) for r in i.get("serving", ())))
        for i in doc["instances"]
    )
    return MatchingPlan(instances, tuple(ru_ids), plan_id or str(doc.get("id", "plan")))


def load_plan(path, ru_ids: Sequence[str], plan_id: str = None) -> MatchingPlan:
    with open(path, encoding="utf-8") as f:
        return plan_from_dict(json.load(f), ru_ids, plan_id)


def plan_hoard(ru_ids: Sequence[str]) -> MatchingPlan:
    ru_ids = tuple(ru_ids)
    if not ru_ids:
        raise ValueError("plan_hoard needs at least one RU")
    inst = InstanceSpec("hoard", tuple(Source(r, 1.0) for r in ru_ids), ru_ids)
    return MatchingPlan((inst,), ru_ids, "hoard")


def plan_choose_single(source_ru: str, target_ru: str, ru_ids: Sequence[str]) -> MatchingPlan:
    ru_ids = tuple(ru_ids)
    for ru in (source_ru, target_ru):
        if ru not in ru_ids:
            raise KeyError(f"unknown RU {ru!r}")
    inst = InstanceSpec(f"choose-{source_ru}", (Source(source_ru, 1.0),), (target_ru,))
    return MatchingPlan((inst,), ru_ids, f"choose-{source_ru}")


def validate_plan(plan: MatchingPlan) -> list[str]:
    """Every invariant violation in ``plan``; an empty list means valid."""
    problems = []
    known = set(plan.ru_ids)
    served_by: dict[str, str] = {}
    for inst in plan.instances:
        tag = f"instance {inst.instance_id!r}"
        if not inst.sources:
            problems.append(f"{tag} has no training sources")
        if not inst.serving:
            problems.append(f"{tag} serves no RU")
        for src in inst.sources:
            if src.ru not in known:
                problems.append(f"{tag} trains on unknown RU {src.ru}")
            if not 0.0 < src.fraction <= 1.0:
                problems.append(f"{tag} has fraction {src.fraction} for RU {src.ru} outside (0,1]")
        for ru in inst.serving:
            if ru not in known:
                problems.append(f"{tag} serves unknown RU {ru}")
            if ru in served_by:
                problems.append(f"RU {ru} served twice ({served_by[ru]!r} and {inst.instance_id!r})")
            else:
                served_by[ru] = inst.instance_id
    return problems


def wasserstein1(a: Iterable[float], b: Iterable[float]) -> float:
    """1-D Wasserstein-1 distance between two empirical samples.

    Both samples are read at ``n = max(len(a), len(b))`` mid-point
    quantiles (step inverse CDF) and the paired gaps are averaged.  This is
    exact whenever one sample size divides the other.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1 needs two non-empty samples")
    return float(accel.sorted_quantile_l1(a, b))


def heterogeneity_score(trace: Trace) -> float:
    """Mean pairwise-RU Wasserstein-1 distance per feature column and target,
    each divided by that column's global standard deviation."""
    parts = [p for p in partition_by_ru(trace).values() if p]
    if len(parts) < 2:
        raise ValueError("heterogeneity_score needs at least 2 RUs with data")
    columns = []
    for recs in parts:
        x, y = encode_features(recs)
        columns.append(np.column_stack([x.values, y.values]))
    pooled = np.vstack(columns)
    std = pooled.std(axis=0)
    total = 0.0
    count = 0
    for j in range(pooled.shape[1]):
        for ca, cb in itertools.combinations(columns, 2):
            if std[j] > 0:
                total += wasserstein1(ca[:, j], cb[:, j]) / std[j]
            count += 1
    return float(total / count)
