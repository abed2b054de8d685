"""Feature encoding, input normalisation, target scaling and index sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .rng import stream
from .trace_model import RuRecord, SliceKind, TraceKind, UeRecord

UE_COLUMNS = ("slice_embb", "slice_mtc", "slice_urllc", "mcs", "prbs", "buffer_bytes")
RU_COLUMNS = ("mcs", "prbs", "rnti_count")
VAL_SHARE = 0.2


@dataclass
class FeatureMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.column_names):
            raise ValueError(f"values shape {self.values.shape} does not match {len(self.column_names)} columns")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[np.asarray(idx, dtype=np.int64)], self.column_names)


@dataclass
class TargetVector:
    """Targets in bits per second; training space is ``values / scale_factor``."""

    values: np.ndarray
    scale_factor: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ValueError("targets must be non-negative")
        if not self.scale_factor > 0:
            raise ValueError("scale_factor must be > 0")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def scaled(self) -> np.ndarray:
        return self.values / self.scale_factor

    def invert(self, scaled) -> np.ndarray:
        """Map training-space values back to bits per second."""
        return np.asarray(scaled, dtype=float) * self.scale_factor

    def take(self, idx) -> "TargetVector":
        return TargetVector(self.values[np.asarray(idx, dtype=np.int64)], self.scale_factor)

    def with_scale(self, scale_factor: float) -> "TargetVector":
        return TargetVector(self.values, scale_factor)


def encode_features(records: Sequence) -> tuple[FeatureMatrix, TargetVector]:
    if len(records) == 0:
        raise ValueError("cannot encode an empty record list")
    rtype = type(records[0])
    if any(type(r) is not rtype for r in records):
        raise ValueError("mixed record kinds")
    if rtype is UeRecord:
        onehot = np.eye(len(SliceKind))
        x = np.empty((len(records), len(UE_COLUMNS)))
        x[:, :3] = onehot[[int(r.slice) for r in records]]
        x[:, 3] = [r.mcs for r in records]
        x[:, 4] = [r.prbs for r in records]
        x[:, 5] = [r.buffer_bytes for r in records]
        y = [r.dl_bitrate_bps for r in records]
        return FeatureMatrix(x, UE_COLUMNS), TargetVector(y)
    if rtype is RuRecord:
        x = np.array([(r.mcs, r.prbs, r.rnti_count) for r in records], dtype=float)
        y = [r.agg_dl_bitrate_bps for r in records]
        return FeatureMatrix(x, RU_COLUMNS), TargetVector(y)
    raise ValueError(f"unsupported record type {rtype.__name__}")


class NormMode(str, Enum):
    L2_ROWS = "l2_rows"
    MINMAX = "minmax"


def default_norm_mode(kind: TraceKind) -> NormMode:
    return NormMode.L2_ROWS if TraceKind(kind) is TraceKind.PER_UE else NormMode.MINMAX


@dataclass(frozen=True)
class Normalizer:
    """Input transform.  ``L2_ROWS`` is stateless; ``MINMAX`` maps each
    training column onto [-1, 1] and extrapolates linearly beyond it."""

    mode: NormMode
    n_cols: Optional[int] = None
    col_min: Optional[tuple[float, ...]] = None
    col_max: Optional[tuple[float, ...]] = None

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "n_cols": self.n_cols,
                "min": None if self.col_min is None else list(self.col_min),
                "max": None if self.col_max is None else list(self.col_max)}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        def tup(key):
            return None if d.get(key) is None else tuple(d[key])
        return cls(NormMode(d["mode"]), d.get("n_cols"), tup("min"), tup("max"))


def fit_normalizer(mode, train_rows: FeatureMatrix) -> Normalizer:
    mode = NormMode(mode)
    if mode is NormMode.L2_ROWS:
        return Normalizer(mode)
    if train_rows.n_rows < 1:
        raise ValueError("MinMax normalizer needs at least one training row")
    v = train_rows.values
    return Normalizer(mode, v.shape[1], tuple(v.min(axis=0).tolist()), tuple(v.max(axis=0).tolist()))


def transform(norm: Normalizer, rows: FeatureMatrix) -> FeatureMatrix:
    x = rows.values
    if norm.mode is NormMode.L2_ROWS:
        # divide by the row's max |x| first so tiny or huge rows neither underflow nor overflow
        peak = np.abs(x).max(axis=1, initial=0.0)
        y = x / np.where(peak > 0, peak, 1.0)[:, None]
        n = np.sqrt(np.einsum("ij,ij->i", y, y))
        return FeatureMatrix(y / np.where(n > 0, n, 1.0)[:, None], rows.column_names)
    if norm.n_cols is None:
        raise ValueError(f"{norm.mode.value} normalizer is not fitted")
    if rows.n_cols != norm.n_cols:
        raise ValueError(f"column-count mismatch: normalizer has {norm.n_cols}, rows have {rows.n_cols}")
    lo = np.asarray(norm.col_min)
    span = np.asarray(norm.col_max) - lo
    out = np.zeros_like(x)
    live = span > 0
    out[:, live] = 2.0 * (x[:, live] - lo[live]) / span[live] - 1.0
    return FeatureMatrix(out, rows.column_names)


def scale_targets(t: TargetVector, fit_rows) -> TargetVector:
    fit_rows = np.asarray(fit_rows, dtype=np.int64)
    if fit_rows.size == 0:
        raise ValueError("fit_rows must be non-empty")
    peak = float(t.values[fit_rows].max())
    return t.with_scale(peak if peak > 0 else 1.0)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    seed: int = field(default=0)


def train_val_split(n: int, seed: int) -> SplitIndices:
    if n < 5:
        raise ValueError(f"need at least 5 rows to split, got {n}")
    perm = stream(seed, "split").permutation(n)
    n_val = int(round(VAL_SHARE * n))
    return SplitIndices(train=perm[n_val:], val=perm[:n_val], seed=seed)


def subsample_fraction(idx, fraction: float, seed: int) -> np.ndarray:
    """Seeded nested subsample.  Keeps the original relative order of ``idx``."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return idx
    k = max(1, int(round(fraction * idx.size)))
    return idx[np.sort(stream(seed, "subsample").permutation(idx.size)[:k])]


def subsample_count(idx, count: int, seed: int) -> np.ndarray:
    """Like :func:`subsample_fraction` but with an absolute size."""
    idx = np.asarray(idx, dtype=np.int64)
    if not 1 <= count <= idx.size:
        raise ValueError(f"count must lie in [1, {idx.size}], got {count}")
    return idx[np.sort(stream(seed, "subsample").permutation(idx.size)[:count])]
