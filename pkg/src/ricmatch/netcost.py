"""Data-movement and training-time cost model for matching plans."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

from .trace_model import Trace

HOARD_REFERENCE_EPOCHS = 100


@dataclass(frozen=True)
class ComputeModel:
    """Modeled epoch cost: ``c_fixed_s + c_per_sample_s * n_samples`` seconds."""

    c_per_sample_s: float = 1e-6
    c_fixed_s: float = 0.0

    def __post_init__(self):
        if not self.c_per_sample_s > 0:
            raise ValueError("c_per_sample_s must be > 0")
        if self.c_fixed_s < 0:
            raise ValueError("c_fixed_s must be >= 0")

    def to_dict(self) -> dict:
        return {"c_per_sample_s": self.c_per_sample_s, "c_fixed_s": self.c_fixed_s}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ComputeModel":
        return cls(**{k: float(d[k]) for k in ("c_per_sample_s", "c_fixed_s") if k in d})


@dataclass(frozen=True)
class LinkModel:
    """RU-to-RIC links.  Per-RU overrides fall back to the defaults."""

    bandwidth_bps: Mapping[str, float] = field(default_factory=dict)
    base_latency_s: Mapping[str, float] = field(default_factory=dict)
    record_size_bytes: int = 64
    default_bandwidth_bps: float = 1e9
    default_latency_s: float = 1e-3
    aggregation: str = "parallel"

    def __post_init__(self):
        if self.record_size_bytes < 1:
            raise ValueError("record_size_bytes must be >= 1")
        if self.default_bandwidth_bps <= 0 or any(b <= 0 for b in self.bandwidth_bps.values()):
            raise ValueError("bandwidth must be > 0")
        if self.default_latency_s < 0 or any(t < 0 for t in self.base_latency_s.values()):
            raise ValueError("latency must be >= 0")
        if self.aggregation not in ("parallel", "serial"):
            raise ValueError("aggregation must be 'parallel' or 'serial'")

    def bandwidth(self, ru: str) -> float:
        return float(self.bandwidth_bps.get(ru, self.default_bandwidth_bps))

    def latency(self, ru: str) -> float:
        return float(self.base_latency_s.get(ru, self.default_latency_s))

    def to_dict(self) -> dict:
        return {"bandwidth_bps": dict(self.bandwidth_bps), "base_latency_s": dict(self.base_latency_s),
                "record_size_bytes": self.record_size_bytes,
                "default_bandwidth_bps": self.default_bandwidth_bps,
                "default_latency_s": self.default_latency_s, "aggregation": self.aggregation}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinkModel":
        return cls(
            bandwidth_bps={k: float(v) for k, v in d.get("bandwidth_bps", {}).items()},
            base_latency_s={k: float(v) for k, v in d.get("base_latency_s", {}).items()},
            record_size_bytes=int(d.get("record_size_bytes", 64)),
            default_bandwidth_bps=float(d.get("default_bandwidth_bps", 1e9)),
            default_latency_s=float(d.get("default_latency_s", 1e-3)),
            aggregation=d.get("aggregation", "parallel"),
        )


@dataclass
class CostReport:
    bytes_moved: int
    transfer_delay_s: float
    instance_delay_s: list = field(default_factory=list)
    instance_bytes: list = field(default_factory=list)
    epoch_time_s: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"bytes_moved": self.bytes_moved, "transfer_delay_s": self.transfer_delay_s,
                "instance_delay_s": list(self.instance_delay_s),
                "instance_bytes": list(self.instance_bytes), "epoch_time_s": list(self.epoch_time_s)}


def _record_counts(trace: Union[Trace, Mapping[str, int]]) -> dict[str, int]:
    if isinstance(trace, Trace):
        counts = {ru: 0 for ru in trace.ru_ids}
        for rec in trace.records:
            counts[rec.ru_id] += 1
        return counts
    return {k: int(v) for k, v in trace.items()}


def source_records(fraction: float, n_records: int) -> int:
    """Records a source contributes: rounded share, never fewer than one."""
    return max(1, int(round(fraction * n_records)))


def transfer_delay(plan, trace, links: LinkModel, compute: ComputeModel = None) -> CostReport:
    """Bytes moved and RU-to-RIC delay for every instance of ``plan``.

    ``trace`` may also be a mapping from RU id to record count.  When
    ``compute`` is given the report also carries one modeled epoch time
    per instance.
    """
    counts = _record_counts(trace)
    total_bytes = 0
    delays, volumes, epochs = [], [], []
    for inst in plan.instances:
        per_source = []
        inst_bytes = 0
        inst_rows = 0
        for src in inst.sources:
            if src.ru not in counts:
                raise KeyError(f"RU {src.ru!r} in plan is absent from the trace")
            rows = source_records(src.fraction, counts[src.ru])
            vol = rows * links.record_size_bytes
            per_source.append(links.latency(src.ru) + vol * 8.0 / links.bandwidth(src.ru))
            inst_bytes += vol
            inst_rows += rows
        delay = max(per_source) if links.aggregation == "parallel" else sum(per_source)
        delays.append(delay)
        volumes.append(inst_bytes)
        total_bytes += inst_bytes
        if compute is not None:
            epochs.append(modeled_training_time(inst_rows, 1, compute))
    return CostReport(total_bytes, max(delays) if delays else 0.0, delays, volumes, epochs)


def modeled_training_time(n_samples: int, n_epochs: int, compute: ComputeModel) -> float:
    if n_samples < 1 or n_epochs < 0:
        raise ValueError("need n_samples >= 1 and n_epochs >= 0")
    return n_epochs * (compute.c_fixed_s + compute.c_per_sample_s * n_samples)


def normalized_time_unit(trace, compute: ComputeModel) -> float:
    """Modeled duration of 100 epochs over every record in ``trace``.

    ``trace`` may also be a mapping from RU id to record count.
    """
    total = sum(_record_counts(trace).values())
    if total < 1:
        raise ValueError("trace is empty")
    return modeled_training_time(total, HOARD_REFERENCE_EPOCHS, compute)
