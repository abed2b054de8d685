"""Measurement traces: record schemas, CSV I/O and synthetic scenarios.

Two scenarios share one :class:`Trace` type.  ``PER_UE`` traces carry one
record per user-equipment sample (slice, MCS, granted PRBs, buffer, DL
bitrate); ``PER_RU`` traces carry one aggregated record per radio unit
sample (mean MCS, PRBs, RNTI count, aggregate DL bitrate).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Sequence, TextIO, Union

import numpy as np

from .rng import stream

MCS_MAX = 27
# 12 subcarriers x 14 symbols x 1000 slots/s for one PRB
RE_PER_PRB_PER_S = 168_000.0


class TraceFormatError(ValueError):
    """Raised for malformed or out-of-range trace data."""


class SliceKind(IntEnum):
    EMBB = 0
    MTC = 1
    URLLC = 2


# relative traffic demand per slice in the per-UE generator
SLICE_EFFICIENCY = {SliceKind.EMBB: 1.0, SliceKind.MTC: 0.25, SliceKind.URLLC: 0.5}


class TraceKind(str, Enum):
    PER_UE = "per_ue"
    PER_RU = "per_ru"


@dataclass(frozen=True, slots=True)
class UeRecord:
    ru_id: str
    slice: SliceKind
    mcs: int
    prbs: int
    buffer_bytes: int
    dl_bitrate_bps: float

    def __post_init__(self):
        if not 0 <= self.mcs <= MCS_MAX:
            raise TraceFormatError(f"mcs out of range [0,{MCS_MAX}]: {self.mcs}")
        if self.prbs < 0 or self.buffer_bytes < 0 or self.dl_bitrate_bps < 0:
            raise TraceFormatError(f"negative field in {self!r}")


@dataclass(frozen=True, slots=True)
class RuRecord:
    ru_id: str
    mcs: float
    prbs: float
    rnti_count: int
    agg_dl_bitrate_bps: float

    def __post_init__(self):
        if not 0 <= self.mcs <= MCS_MAX:
            raise TraceFormatError(f"mcs out of range [0,{MCS_MAX}]: {self.mcs}")
        if self.prbs < 0 or self.rnti_count < 0 or self.agg_dl_bitrate_bps < 0:
            raise TraceFormatError(f"negative field in {self!r}")


Record = Union[UeRecord, RuRecord]
_RECORD_TYPE = {TraceKind.PER_UE: UeRecord, TraceKind.PER_RU: RuRecord}

HEADERS = {
    TraceKind.PER_UE: ("ru_id", "slice", "mcs", "prbs", "buffer_bytes", "dl_bitrate_bps"),
    TraceKind.PER_RU: ("ru_id", "mcs", "prbs", "rnti_count", "agg_dl_bitrate_bps"),
}


@dataclass
class Trace:
    kind: TraceKind
    ru_ids: tuple[str, ...]
    records: list
    provenance: str = ""

    def __post_init__(self):
        self.kind = TraceKind(self.kind)
        self.ru_ids = tuple(self.ru_ids)
        rtype = _RECORD_TYPE[self.kind]
        known = set(self.ru_ids)
        for rec in self.records:
            if type(rec) is not rtype:
                raise TraceFormatError(f"{type(rec).__name__} in a {self.kind.value} trace")
            if rec.ru_id not in known:
                raise TraceFormatError(f"record for unknown RU {rec.ru_id!r}")

    def __len__(self):
        return len(self.records)

    def n_records(self, ru_id: str) -> int:
        return sum(1 for r in self.records if r.ru_id == ru_id)

    def target_values(self) -> np.ndarray:
        if self.kind is TraceKind.PER_UE:
            return np.array([r.dl_bitrate_bps for r in self.records], dtype=float)
        return np.array([r.agg_dl_bitrate_bps for r in self.records], dtype=float)


@dataclass
class GenConfig:
    """Synthetic scenario parameters.

    ``load_scale`` and ``spectral_bias`` default to all-ones of length
    ``n_rus``.  ``zero_prob`` only applies to the per-UE generator.
    """

    n_rus: int
    samples_per_ru: int
    seed: int = 0
    load_scale: Sequence[float] = ()
    spectral_bias: Sequence[float] = ()
    zero_prob: float = 0.1
    noise_sigma: float = 0.01

    def __post_init__(self):
        if self.n_rus < 1 or self.samples_per_ru < 0:
            raise ValueError("n_rus must be >= 1 and samples_per_ru >= 0")
        self.load_scale = tuple(float(x) for x in self.load_scale) or (1.0,) * self.n_rus
        self.spectral_bias = tuple(float(x) for x in self.spectral_bias) or (1.0,) * self.n_rus
        if len(self.load_scale) != self.n_rus or len(self.spectral_bias) != self.n_rus:
            raise ValueError("load_scale and spectral_bias need one entry per RU")
        if not 0.0 <= self.zero_prob <= 1.0:
            raise ValueError(f"zero_prob must lie in [0,1], got {self.zero_prob}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def ru_ids(self) -> tuple[str, ...]:
        return tuple(f"RU{i + 1}" for i in range(self.n_rus))


# ---------------------------------------------------------------------------
# bitrate kernels
# ---------------------------------------------------------------------------

def prb_rate(mcs, prbs):
    """Bits per second carried by ``prbs`` PRBs at a given MCS index."""
    return prbs * RE_PER_PRB_PER_S * (0.1 + 0.2 * mcs)


def ue_bitrate(slice_code, mcs, prbs, spectral_bias=1.0, log_noise=0.0):
    eta = np.choose(np.asarray(slice_code, dtype=np.int64),
                    [SLICE_EFFICIENCY[k] for k in SliceKind])
    return prb_rate(mcs, prbs) * spectral_bias * eta * np.exp(log_noise)


def ru_bitrate(mcs, prbs, rnti_count, log_noise=0.0):
    saturation = np.minimum(1.0, np.asarray(rnti_count, dtype=float) / (np.asarray(prbs, dtype=float) / 2.0))
    return prb_rate(mcs, prbs) * saturation * np.exp(log_noise)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_homogeneous(cfg: GenConfig) -> Trace:
    """Per-UE trace where every RU draws from one shared process."""
    if len(set(cfg.load_scale)) > 1 or len(set(cfg.spectral_bias)) > 1:
        raise ValueError("homogeneous generator requires equal load_scale and spectral_bias across RUs")
    n = cfg.samples_per_ru
    beta = cfg.spectral_bias[0]
    records = []
    for r, ru in enumerate(cfg.ru_ids):
        g = stream(cfg.seed, "homogeneous", r)
        slices = g.integers(0, 3, n)
        mcs = g.integers(0, MCS_MAX + 1, n)
        prbs = g.integers(1, 21, n)
        buf = g.geometric(1e-4, n)
        zero = g.random(n) < cfg.zero_prob
        noise = g.standard_normal(n) * cfg.noise_sigma
        rate = ue_bitrate(slices, mcs, prbs, beta, noise)
        rate[zero] = 0.0
        records.extend(
            UeRecord(ru, SliceKind(int(s)), int(m), int(p), int(b), float(y))
            for s, m, p, b, y in zip(slices, mcs, prbs, buf, rate)
        )
    return Trace(TraceKind.PER_UE, cfg.ru_ids, records, provenance=_provenance("homogeneous", cfg))


def gen_heterogeneous(cfg: GenConfig) -> Trace:
    """Per-RU trace whose load (RNTI count) and MCS level vary by RU."""
    if cfg.n_rus < 2:
        raise ValueError("heterogeneous generator needs at least 2 RUs")
    if any(lam <= 0 for lam in cfg.load_scale):
        raise ValueError("load_scale entries must be > 0")
    if any(b <= 0 for b in cfg.spectral_bias):
        raise ValueError("spectral_bias entries must be > 0")
    n = cfg.samples_per_ru
    records = []
    for r, ru in enumerate(cfg.ru_ids):
        g = stream(cfg.seed, "heterogeneous", r)
        rnti = g.poisson(10.0 * cfg.load_scale[r], n)
        centre = min(max(14.0 * cfg.spectral_bias[r], 0.0), float(MCS_MAX))
        mcs = np.clip(g.normal(centre, 3.0, n), 0.0, float(MCS_MAX))
        prbs = g.integers(10, 101, n).astype(float)
        noise = g.standard_normal(n) * cfg.noise_sigma
        rate = ru_bitrate(mcs, prbs, rnti, noise)
        records.extend(
            RuRecord(ru, float(m), float(p), int(k), float(y))
            for m, p, k, y in zip(mcs, prbs, rnti, rate)
        )
    return Trace(TraceKind.PER_RU, cfg.ru_ids, records, provenance=_provenance("heterogeneous", cfg))


def _provenance(mode: str, cfg: GenConfig) -> str:
    return (f"{mode} n_rus={cfg.n_rus} samples_per_ru={cfg.samples_per_ru} seed={cfg.seed} "
            f"load_scale={list(cfg.load_scale)} spectral_bias={list(cfg.spectral_bias)} "
            f"zero_prob={cfg.zero_prob} noise_sigma={cfg.noise_sigma}")


def partition_by_ru(trace: Trace) -> dict[str, list]:
    parts: dict[str, list] = {ru: [] for ru in trace.ru_ids}
    for rec in trace.records:
        parts[rec.ru_id].append(rec)
    return parts


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt_real(x: float) -> str:
    return format(float(x), ".9g")


def write_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADERS[trace.kind])
    if trace.kind is TraceKind.PER_UE:
        for r in trace.records:
            w.writerow((r.ru_id, r.slice.name, r.mcs, r.prbs, r.buffer_bytes, _fmt_real(r.dl_bitrate_bps)))
    else:
        for r in trace.records:
            w.writerow((r.ru_id, _fmt_real(r.mcs), _fmt_real(r.prbs), r.rnti_count,
                        _fmt_real(r.agg_dl_bitrate_bps)))
    return buf.getvalue()


def _parse_int(text: str, name: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise TraceFormatError(f"malformed {name} {text!r} at line {line}") from None


def _parse_real(text: str, name: str, line: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise TraceFormatError(f"malformed {name} {text!r} at line {line}") from None
    if not np.isfinite(x):
        raise TraceFormatError(f"non-finite {name} at line {line}")
    return x


def _parse_row(kind: TraceKind, row: list, line: int) -> Record:
    if kind is TraceKind.PER_UE:
        ru, slice_label, mcs_s, prbs_s, buf_s, rate_s = row
        try:
            sk = SliceKind[slice_label.strip().upper()]
        except KeyError:
            raise TraceFormatError(f"unknown slice label {slice_label!r} at line {line}") from None
        mcs = _parse_int(mcs_s, "mcs", line)
        prbs = _parse_int(prbs_s, "prbs", line)
        buf = _parse_int(buf_s, "buffer_bytes", line)
        rate = _parse_real(rate_s, "dl_bitrate_bps", line)
        fields = (mcs, prbs, buf, rate)
    else:
        ru, mcs_s, prbs_s, rnti_s, rate_s = row
        mcs = _parse_real(mcs_s, "mcs", line)
        prbs = _parse_real(prbs_s, "prbs", line)
        rnti = _parse_int(rnti_s, "rnti_count", line)
        rate = _parse_real(rate_s, "agg_dl_bitrate_bps", line)
        fields = (mcs, prbs, rnti, rate)
    if not 0 <= mcs <= MCS_MAX:
        raise TraceFormatError(f"mcs out of range [0,{MCS_MAX}] at line {line}")
    if any(v < 0 for v in fields):
        raise TraceFormatError(f"negative value at line {line}")
    ru = ru.strip()
    if not ru:
        raise TraceFormatError(f"empty ru_id at line {line}")
    if kind is TraceKind.PER_UE:
        return UeRecord(ru, sk, *fields)
    return RuRecord(ru, *fields)


def parse_csv(text: Union[str, TextIO, Iterable[str]], kind) -> Trace:
    """Parse a trace from CSV text (or any iterable of lines)."""
    kind = TraceKind(kind)
    if isinstance(text, str):
        text = io.StringIO(text)
    reader = csv.reader(text)
    header = next(reader, None)
    expected = HEADERS[kind]
    if header is None:
        raise TraceFormatError("missing header row")
    header = tuple(h.strip() for h in header)
    missing = [c for c in expected if c not in header]
    if missing:
        raise TraceFormatError(f"missing column(s) {', '.join(missing)} in header")
    if header != expected:
        raise TraceFormatError(f"header must be {','.join(expected)}")

    records = []
    seen: dict[str, None] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(expected):
            raise TraceFormatError(f"malformed row at line {line}: expected {len(expected)} fields, got {len(row)}")
        rec = _parse_row(kind, row, line)
        seen.setdefault(rec.ru_id, None)
        records.append(rec)
    source = getattr(text, "name", "<csv>")
    return Trace(kind, tuple(seen), records, provenance=f"csv:{source}")


def read_csv(path, kind) -> Trace:
    with open(path, newline="", encoding="utf-8") as f:
        trace = parse_csv(f, kind)
    trace.provenance = f"csv:{path}"
    return trace


def sniff_kind(path) -> TraceKind:
    """Infer the trace kind from a CSV file's header."""
    with open(path, newline="", encoding="utf-8") as f:
        header = tuple(h.strip() for h in next(csv.reader(f), ()))
    for kind, cols in HEADERS.items():
        if header == cols:
            return kind
    raise TraceFormatError(f"unrecognised trace header in {path}")
