"""Command-line front end.

Every subcommand takes ``--config FILE`` (a flat JSON object keyed by
option name); explicit flags override it, and built-in defaults fill the
rest.  Exit codes: 0 success, 1 usage error, 2 data error, 3 non-finite
training loss.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .experiments import (SweepConfig, instance_rows, pooled_rows, prepare, sweep_data_fraction,
                          sweep_time_budget, train_instance, _columns)
from .matching import (InstanceSpec, MatchingPlan, Source, heterogeneity_score, load_plan, plan_choose_single,
                       plan_hoard)
from .netcost import ComputeModel, LinkModel
from .nn import ENC_DEC_SPEC, FF_SPEC, NonFiniteLossError, TrainConfig, save_checkpoint
from .preprocess import NormMode
from .report import load_result, render_result, summary_text
from .trace_model import GenConfig, Trace, TraceFormatError, gen_heterogeneous, gen_homogeneous, read_csv, \
    sniff_kind, write_csv
from .xapp_qp import QpConfig, sweep_xapp

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# defaults per option; None means "required"
COMMON = {"seed": "ENV", "jobs": "CPUS"}
TRAINING = {"trace": None, "target": "LAST", "lr": 1e-3, "epochs": 100, "batch": 512, "norm": "auto",
            "arch": "auto", "c_per_sample": 1e-6, "c_fixed": 0.0, "bandwidth": 1e9, "latency": 1e-3,
            "record_size": 64, "aggregation": "parallel", "links": {}, "out": None}
SWEEP = {**TRAINING, "plans": "all-singles+hoard", "plan": [], "seeds": "SEED"}
DEFAULTS = {
    "gen": {"mode": "homo", "rus": 4, "samples": 10000, "load_scale": "", "spectral_bias": "",
            "zero_prob": 0.1, "noise": 0.01, "out": None},
    "train": {**TRAINING, "sources": "TARGET"},
    "sweep-data": {**SWEEP, "fractions": "0.1:1.0:10"},
    "sweep-time": {**SWEEP, "budgets": "0.25,0.5,1,2", "clock": "modeled"},
    "xapp": {**SWEEP, "samples": "100,1000,10000", "threshold": None, "all_slices": False},
    "hetero": {"trace": None, "out": "."},
    "report": {"inputs": [], "out": ""},
}
OPTIONAL_NONE = {"threshold"}


def _add_training(p):
    p.add_argument("--trace", help="trace CSV")
    p.add_argument("--target", help="target RU (default: last RU of the trace)")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--epochs", type=int, help="maximum epochs")
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--norm", choices=["auto"] + [m.value for m in NormMode])
    p.add_argument("--arch", choices=["auto", "ff", "encdec"])
    p.add_argument("--c-per-sample", dest="c_per_sample", type=float, help="modeled seconds per sample-epoch")
    p.add_argument("--c-fixed", dest="c_fixed", type=float, help="modeled fixed seconds per epoch")
    p.add_argument("--bandwidth", type=float, help="default link bandwidth (bit/s)")
    p.add_argument("--latency", type=float, help="default link base latency (s)")
    p.add_argument("--record-size", dest="record_size", type=int, help="bytes per transferred record")
    p.add_argument("--aggregation", choices=["parallel", "serial"])
    p.add_argument("--out", help="output directory")


def _add_sweep(p):
    _add_training(p)
    p.add_argument("--plans", help="'+'-joined plan names: all-singles, hoard, choose:<RU>")
    p.add_argument("--plan", action="append", help="plan JSON file (repeatable)")
    p.add_argument("--seeds", help="comma-separated seeds (default: --seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ricmatch", description="choose-vs-hoard experiments for RIC model instances")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values; flags override it")
        p.add_argument("--seed", type=int, help="global seed (default: $RICMATCH_SEED or 0)")
        p.add_argument("--jobs", type=int, help="parallel worker processes (default: CPU count)")
        return p

    p = add("gen", "generate a synthetic trace")
    p.add_argument("--mode", choices=["homo", "hetero"])
    p.add_argument("--rus", type=int)
    p.add_argument("--samples", type=int, help="records per RU")
    p.add_argument("--load-scale", dest="load_scale", help="comma-separated per-RU load scale")
    p.add_argument("--spectral-bias", dest="spectral_bias", help="comma-separated per-RU spectral bias")
    p.add_argument("--zero-prob", dest="zero_prob", type=float)
    p.add_argument("--noise", type=float, help="log-normal noise sigma")
    p.add_argument("--out", help="output CSV path")

    p = add("train", "train one network")
    _add_training(p)
    p.add_argument("--sources", help="comma-separated source RUs (default: the target)")

    p = add("sweep-data", "MAPE versus training-data fraction")
    _add_sweep(p)
    p.add_argument("--fractions", help="'start:stop:count' or comma list")

    p = add("sweep-time", "MAPE versus modeled training-time budget")
    _add_sweep(p)
    p.add_argument("--budgets", help="'start:stop:count' or comma list, in normalised time units")
    p.add_argument("--clock", choices=["modeled", "wall"])

    p = add("xapp", "zero-bitrate classification accuracy versus sample count")
    _add_sweep(p)
    p.add_argument("--samples", help="comma-separated training-sample counts")
    p.add_argument("--threshold", type=float, help="bit/s threshold (default: half the smallest positive target)")
    p.add_argument("--all-slices", dest="all_slices", action="store_true", help="evaluate every slice, not MTC only")

    p = add("hetero", "heterogeneity score of a trace")
    p.add_argument("--trace", help="trace CSV")
    p.add_argument("--out", help="directory for run.json")

    p = add("report", "render SVG charts from sweep result CSVs")
    p.add_argument("inputs", nargs="*", help="result CSV files or directories")
    p.add_argument("--out", help="output directory (default: next to each input)")
    return parser


# ---------------------------------------------------------------------------
# option resolution
# ---------------------------------------------------------------------------

def _env_seed() -> int:
    raw = os.environ.get("RICMATCH_SEED")
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"RICMATCH_SEED must be an integer, got {raw!r}") from None


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the --config file, then explicit flags."""
    defaults = {**COMMON, **DEFAULTS[command]}
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    file_opts = {}
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, encoding="utf-8") as f:
                file_opts = json.load(f)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(file_opts, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
        unknown = sorted(set(file_opts) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    opts = {**defaults, **file_opts, **given}
    if opts["seed"] == "ENV":
        opts["seed"] = _env_seed()
    if opts["jobs"] == "CPUS":
        opts["jobs"] = os.cpu_count() or 1
    missing = [k for k, v in opts.items() if v is None and k not in OPTIONAL_NONE]
    if missing:
        raise UsageError(f"{command}: missing required option(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    if int(opts["jobs"]) < 1:
        raise UsageError("--jobs must be >= 1")
    return opts


def parse_floats(text) -> list[float]:
    """'a:b:n' (inclusive, n evenly spaced values) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, n = text.split(":")
            values = np.linspace(float(a), float(b), int(n))
            # trim linspace rounding noise so labels and CSV stay readable
            return [float(f"{v:.12g}") for v in values]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def parse_ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


def load_trace(path) -> Trace:
    return read_csv(path, sniff_kind(path))


def build_plans(spec: str, files: Sequence[str], trace: Trace, target: str) -> list[MatchingPlan]:
    plans = []
    for token in [t.strip() for t in str(spec).split("+") if t.strip()]:
        if token == "all-singles":
            plans.extend(plan_choose_single(ru, target, trace.ru_ids) for ru in trace.ru_ids)
        elif token == "hoard":
            plans.append(plan_hoard(trace.ru_ids))
        elif token.startswith("choose:"):
            plans.append(plan_choose_single(token.split(":", 1)[1], target, trace.ru_ids))
        elif token != "none":
            raise UsageError(f"unknown plan name {token!r}")
    for path in files or ():
        stem = os.path.splitext(os.path.basename(path))[0]
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        plans.append(load_plan(path, trace.ru_ids, str(doc.get("id", stem))))
    if not plans:
        raise UsageError("no plans selected")
    return plans


def _target(opts, trace: Trace) -> str:
    if opts["target"] == "LAST":
        if not trace.ru_ids:
            raise ValueError("trace has no RUs")
        return trace.ru_ids[-1]
    return str(opts["target"])


def _spec(opts):
    arch = opts["arch"]
    if arch == "ff":
        return FF_SPEC
    if arch == "encdec":
        return ENC_DEC_SPEC
    return None


def _norm(opts) -> Optional[NormMode]:
    return None if opts["norm"] == "auto" else NormMode(opts["norm"])


def _compute(opts) -> ComputeModel:
    return ComputeModel(float(opts["c_per_sample"]), float(opts["c_fixed"]))


def _links(opts) -> LinkModel:
    base = dict(opts.get("links") or {})
    base.update({"default_bandwidth_bps": opts["bandwidth"], "default_latency_s": opts["latency"],
                 "record_size_bytes": opts["record_size"], "aggregation": opts["aggregation"]})
    return LinkModel.from_dict(base)


def _train_cfg(opts, clock: str = "modeled") -> TrainConfig:
    return TrainConfig(learning_rate=float(opts["lr"]), max_epochs=int(opts["epochs"]),
                       batch_size=int(opts["batch"]), seed=int(opts["seed"]), compute=_compute(opts),
                       clock=clock)


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def write_run(out_dir, command: str, opts: dict, extra: Optional[dict] = None) -> None:
    os.makedirs(out_dir or ".", exist_ok=True)
    doc = {"command": command, "version": __version__, "options": opts}
    if extra:
        doc.update(extra)
    write_json(os.path.join(out_dir or ".", "run.json"), doc)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(opts) -> int:
    cfg = GenConfig(int(opts["rus"]), int(opts["samples"]), seed=int(opts["seed"]),
                    load_scale=parse_floats(opts["load_scale"]) if opts["load_scale"] else (),
                    spectral_bias=parse_floats(opts["spectral_bias"]) if opts["spectral_bias"] else (),
                    zero_prob=float(opts["zero_prob"]), noise_sigma=float(opts["noise"]))
    if opts["mode"] == "hetero":
        trace = gen_heterogeneous(cfg)
    elif len(set(cfg.load_scale)) > 1 or len(set(cfg.spectral_bias)) > 1:
        raise ValueError("homogeneous generation needs equal load_scale and equal spectral_bias")
    else:
        trace = gen_homogeneous(cfg)
    out = opts["out"]
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as f:
        f.write(write_csv(trace))
    write_run(os.path.dirname(out), "gen", opts, {"records": len(trace), "kind": trace.kind.value})
    print(f"wrote {len(trace)} {trace.kind.value} records to {out}")
    return EXIT_OK


def cmd_train(opts) -> int:
    trace = load_trace(opts["trace"])
    target = _target(opts, trace)
    sources = [target] if opts["sources"] == "TARGET" else [s for s in str(opts["sources"]).split(",") if s]
    inst = InstanceSpec("cli", tuple(Source(s, 1.0) for s in sources), (target,))
    cfg = SweepConfig(trace, target, [MatchingPlan((inst,), trace.ru_ids, "cli")], [1.0],
                      _train_cfg(opts), [int(opts["seed"])], _compute(opts), _links(opts),
                      _spec(opts), _norm(opts), 1)
    seed = int(opts["seed"])
    data = prepare(trace, seed)
    xt, yt = pooled_rows(data, instance_rows(data, inst, 1.0, seed))
    run = train_instance(data, xt, yt, target, cfg.train, cfg.resolved_spec, cfg.resolved_norm, seed,
                         _columns(trace))
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    save_checkpoint(os.path.join(out, "model.json"), run.network, run.normalizer, run.targets.scale_factor,
                    {"sources": sources, "target": target})
    write_json(os.path.join(out, "train_report.json"), run.report.to_dict())
    write_run(out, "train", opts, {"config": cfg.echo()})
    print(f"best_val_mape={run.metric:.6g} epochs={run.report.epochs_completed} n_train={run.n_train}")
    return EXIT_OK


def _sweep_config(opts, x_values) -> SweepConfig:
    trace = load_trace(opts["trace"])
    target = _target(opts, trace)
    seeds = [int(opts["seed"])] if opts["seeds"] == "SEED" else parse_ints(opts["seeds"])
    plans = build_plans(opts["plans"], opts["plan"], trace, target)
    return SweepConfig(trace, target, plans, x_values, _train_cfg(opts, opts.get("clock", "modeled")), seeds,
                       _compute(opts), _links(opts), _spec(opts), _norm(opts), int(opts["jobs"]))


def _finish_sweep(result, opts, command: str) -> int:
    out = opts["out"]
    result.write(out)
    with open(os.path.join(out, f"{result.sweep}.svg"), "w", encoding="utf-8", newline="") as f:
        f.write(render_result(result))
    write_run(out, command, opts)
    sys.stdout.write(summary_text(result))
    return EXIT_OK


def cmd_sweep_data(opts) -> int:
    cfg = _sweep_config(opts, parse_floats(opts["fractions"]))
    return _finish_sweep(sweep_data_fraction(cfg), opts, "sweep-data")


def cmd_sweep_time(opts) -> int:
    cfg = _sweep_config(opts, parse_floats(opts["budgets"]))
    return _finish_sweep(sweep_time_budget(cfg), opts, "sweep-time")


def cmd_xapp(opts) -> int:
    counts = parse_ints(opts["samples"])
    cfg = _sweep_config(opts, counts)
    threshold = None if opts["threshold"] is None else float(opts["threshold"])
    qp = QpConfig(counts, threshold, mtc_only=not opts["all_slices"])
    return _finish_sweep(sweep_xapp(cfg, qp), opts, "xapp")


def cmd_hetero(opts) -> int:
    trace = load_trace(opts["trace"])
    score = heterogeneity_score(trace)
    print(f"heterogeneity_score={score!r}")
    doc = {"heterogeneity_score": score, "trace": opts["trace"], "kind": trace.kind.value,
           "ru_ids": list(trace.ru_ids), "n_records": len(trace)}
    print(json.dumps(doc, sort_keys=True))
    write_run(opts["out"], "hetero", opts, {"result": doc})
    return EXIT_OK


def _expand_inputs(inputs) -> list[str]:
    paths = []
    for item in inputs:
        if os.path.isdir(item):
            paths.extend(os.path.join(item, n) for n in sorted(os.listdir(item))
                         if n.endswith(".csv") and os.path.exists(os.path.join(item, n[:-4] + ".json")))
        elif os.path.exists(item):
            paths.append(item)
        else:
            raise FileNotFoundError(f"no such result file or directory: {item}")
    return paths


def cmd_report(opts) -> int:
    paths = _expand_inputs(opts["inputs"])
    if not paths:
        raise UsageError("report: no result CSV files given")
    written = []
    for path in paths:
        result = load_result(path)
        out_dir = opts["out"] or os.path.dirname(path) or "."
        os.makedirs(out_dir, exist_ok=True)
        svg = os.path.join(out_dir, os.path.splitext(os.path.basename(path))[0] + ".svg")
        with open(svg, "w", encoding="utf-8", newline="") as f:
            f.write(render_result(result))
        written.append(svg)
        sys.stdout.write(summary_text(result))
    write_run(opts["out"] or os.path.dirname(paths[0]) or ".", "report", opts, {"svg": written})
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "sweep-data": cmd_sweep_data, "sweep-time": cmd_sweep_time,
            "xapp": cmd_xapp, "hetero": cmd_hetero, "report": cmd_report}


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        opts = resolve(args.command, args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        sys.stderr.write(f"numerical abort: {exc}\n")
        return EXIT_NUMERIC
    except (TraceFormatError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"data error: {msg}\n")
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
