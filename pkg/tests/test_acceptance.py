"""Acceptance criteria A1-A10.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``;
either way one PASS/FAIL line is printed per criterion.
"""

import dataclasses
import math
import os
import shutil
import sys
import tempfile
import time

import numpy as np
import pytest

from ricmatch.cli import run as cli_run
from ricmatch.experiments import SweepConfig, sweep_data_fraction, sweep_time_budget
from ricmatch.matching import heterogeneity_score, plan_choose_single, plan_hoard
from ricmatch.netcost import ComputeModel, LinkModel, transfer_delay
from ricmatch.nn import (ENC_DEC_SPEC, FF_SPEC, AdamState, Gradients, Network, NetworkSpec, TrainConfig,
                         adam_step, forward, grad_check, init_network, mape)
from ricmatch.preprocess import (FeatureMatrix, Normalizer, NormMode, TargetVector, fit_normalizer,
                                 subsample_fraction, train_val_split, transform)
from ricmatch.trace_model import (GenConfig, Trace, TraceKind, gen_heterogeneous, gen_homogeneous, parse_csv,
                                  write_csv)
from ricmatch.xapp_qp import BitrateClass, classify_bitrate, evaluate_accuracy

# shared training setup of the two choose-vs-hoard criteria
SHARED_TRAIN = TrainConfig(learning_rate=1e-3, max_epochs=200)
A3_TARGET = "RU1"
A4_TARGET = "RU4"
SEEDS = (1, 2, 3, 4, 5)


def _timed(fn):
    t = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def check_a1():
    worst = 0.0
    for spec in (FF_SPEC, ENC_DEC_SPEC):
        for seed in range(20):
            g = np.random.default_rng(seed)
            net = init_network(spec, seed)
            batch = (g.random((8, spec.layer_widths[0])), g.random(8))
            worst = max(worst, grad_check(net, batch, 1e-5))
    return worst <= 1e-4, f"max relative error {worst:.2e} (limit 1e-4)"


def _reference_adam(theta, grad_fn, lr, steps):
    b1, b2, eps = 0.9, 0.999, 1e-8
    theta = [float(t) for t in theta]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        for i in range(len(theta)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            theta[i] -= lr * (m[i] / (1 - b1 ** t)) / (math.sqrt(v[i] / (1 - b2 ** t)) + eps)
    return theta


def check_a2():
    worst = 0.0
    for n in (1, 10):
        g = np.random.default_rng(100 + n)
        centre, curv, start = g.standard_normal(n), g.uniform(0.5, 4.0, n), g.standard_normal(n)

        def grad(theta):
            return [2.0 * curv[i] * (theta[i] - centre[i]) for i in range(n)]

        spec = NetworkSpec((n, 1))
        net = Network(spec)
        net.flat[:n] = start
        state = AdamState.fresh(net)
        for _ in range(100):
            gr = Gradients(spec)
            gr.flat[:n] = grad(net.flat[:n].tolist())
            adam_step(net, gr, state, 0.01)
        ref = _reference_adam(start, grad, 0.01, 100)
        worst = max(worst, float(np.max(np.abs(net.flat[:n] - ref))))
    return worst <= 1e-12, f"max deviation from reference {worst:.1e} (limit 1e-12)"


def _choose_vs_hoard(trace, target, seed):
    plans = [plan_choose_single(target, target, trace.ru_ids), plan_hoard(trace.ru_ids)]
    cfg = SweepConfig(trace, target, plans, [1.0], SHARED_TRAIN, seeds=[seed])
    got = {p.plan_id: p.metric for p in sweep_data_fraction(cfg).points}
    return got[f"choose-{target}"], got["hoard"]


def check_a3():
    wins, cells = 0, []
    for seed in SEEDS:
        trace = gen_heterogeneous(GenConfig(3, 10_000, seed=seed, load_scale=(1.0, 2.5, 4.0)))
        choose, hoard = _choose_vs_hoard(trace, A3_TARGET, seed)
        wins += choose < hoard
        cells.append(f"s{seed}: {choose:.2f} vs {hoard:.2f}")
    return wins >= 4, f"choose < hoard in {wins}/5 seeds ({'; '.join(cells)})"


def check_a4():
    close, cells = 0, []
    for seed in SEEDS:
        trace = gen_homogeneous(GenConfig(4, 10_000, seed=seed))
        choose, hoard = _choose_vs_hoard(trace, A4_TARGET, seed)
        close += abs(hoard - choose) <= 2.0
        cells.append(f"s{seed}: {choose:.2f} vs {hoard:.2f}")
    return close >= 4, f"|gap| <= 2pp in {close}/5 seeds ({'; '.join(cells)})"


def check_a5():
    trace = gen_homogeneous(GenConfig(4, 25, seed=0))
    cfg = SweepConfig(trace, "RU4", [plan_choose_single("RU4", "RU4", trace.ru_ids), plan_hoard(trace.ru_ids)],
                      [0.25, 1.0], TrainConfig(max_epochs=400), seeds=[0], compute=ComputeModel(1e-6, 0.0))
    epochs = {(p.plan_id, p.x): p.epochs for p in sweep_time_budget(cfg).points}
    want = {("choose-RU4", 1.0): 400, ("hoard", 1.0): 100, ("choose-RU4", 0.25): 100, ("hoard", 0.25): 25}
    return epochs == want, f"epochs {epochs}"


def _brute_force_confusion(net, x, y, norm, theta):
    tp = tn = fp = fn = 0
    for i in range(y.n):
        row = transform(norm, x.take([i])) if norm is not None else x.take([i])
        pred = float(forward(net, row)[0]) * y.scale_factor
        truth_zero = y.values[i] == 0.0
        pred_zero = classify_bitrate(pred, theta) is BitrateClass.ZERO
        if truth_zero and pred_zero:
            tp += 1
        elif truth_zero:
            fn += 1
        elif pred_zero:
            fp += 1
        else:
            tn += 1
    return tp, tn, fp, fn


def check_a6():
    mismatches = 0
    shapes = set()
    for k in range(100):
        g = np.random.default_rng(k)
        n = int(g.integers(1, 40))
        x = FeatureMatrix(g.normal(0, 2, (n, 3)), ("a", "b", "c"))
        kind = k % 4
        if kind == 0:
            y = np.zeros(n)
        elif kind == 1:
            y = g.uniform(1, 10, n)
        else:
            y = np.where(g.random(n) < 0.4, 0.0, g.uniform(1, 10, n))
        targets = TargetVector(y, float(g.uniform(0.5, 5)))
        net = init_network(NetworkSpec((3, 5, 1), "tanh"), k)
        norm = fit_normalizer(NormMode.MINMAX, x) if k % 2 else None
        theta = float(g.uniform(0.01, 3))
        row = evaluate_accuracy(net, x, targets, norm, theta)
        want = _brute_force_confusion(net, x, targets, norm, theta)
        mismatches += (row.tp, row.tn, row.fp, row.fn) != want or row.accuracy != 100.0 * (want[0] + want[1]) / n
        shapes.add("all-zero" if kind == 0 else "all-nonzero" if kind == 1 else "mixed")
    return mismatches == 0, f"{mismatches} mismatching fixtures of 100 ({', '.join(sorted(shapes))})"


def check_a7():
    wins, cells = 0, []
    for seed in SEEDS:
        het = heterogeneity_score(gen_heterogeneous(GenConfig(3, 2000, seed=seed, load_scale=(1.0, 2.5, 4.0))))
        hom = heterogeneity_score(gen_homogeneous(GenConfig(3, 2000, seed=seed)))
        wins += het > hom
        cells.append(f"{het:.3f}>{hom:.3f}")
    base = gen_homogeneous(GenConfig(1, 500, seed=9)).records
    twin = Trace(TraceKind.PER_UE, ("RU1", "RU2"), base + [dataclasses.replace(r, ru_id="RU2") for r in base])
    zero = heterogeneity_score(twin)
    return wins == 5 and zero == 0.0, f"hetero > homo in {wins}/5 ({', '.join(cells)}); identical split {zero}"


def check_a8():
    cwd = os.getcwd()
    work = tempfile.mkdtemp(prefix="ricmatch-a8-")
    saved_seed = os.environ.pop("RICMATCH_SEED", None)
    try:
        os.chdir(work)
        commands = [
            ["gen", "--mode", "homo", "--rus", "3", "--samples", "80", "--seed", "4", "--out", "data/u.csv"],
            ["gen", "--mode", "hetero", "--rus", "3", "--samples", "80", "--seed", "4", "--out", "data/r.csv"],
            ["train", "--trace", "data/r.csv", "--epochs", "3", "--out", "train"],
            ["sweep-data", "--trace", "data/r.csv", "--fractions", "0.5,1", "--seeds", "1,2", "--epochs", "3",
             "--out", "sd"],
            ["sweep-time", "--trace", "data/r.csv", "--budgets", "0.5,1", "--epochs", "6", "--out", "st"],
            ["xapp", "--trace", "data/u.csv", "--samples", "40,100", "--epochs", "3", "--out", "xa"],
            ["hetero", "--trace", "data/r.csv", "--out", "he"],
            ["report", "sd", "st", "xa", "--out", "rep"],
        ]

        def snapshot():
            files = {}
            for root, _, names in os.walk("."):
                for name in names:
                    if name.endswith((".csv", ".json", ".svg")):
                        path = os.path.join(root, name)
                        with open(path, "rb") as f:
                            files[path] = f.read()
            return files

        codes = []
        for argv in commands:
            codes.append(cli_run(argv))
        first = snapshot()
        for argv in commands:
            codes.append(cli_run(argv))
        second = snapshot()
        differing = sorted(p for p in first if first[p] != second.get(p))
        kinds = {os.path.splitext(p)[1] for p in first}
        ok = all(c == 0 for c in codes) and not differing and kinds == {".csv", ".json", ".svg"}
        return ok, f"{len(first)} output files, exit codes {sorted(set(codes))}, differing: {differing or 'none'}"
    finally:
        os.chdir(cwd)
        shutil.rmtree(work, ignore_errors=True)
        if saved_seed is not None:
            os.environ["RICMATCH_SEED"] = saved_seed


def check_a9():
    failures = []

    def expect(name, cond):
        if not cond:
            failures.append(name)

    expect("mape 100/90", mape([100], [90]).value == 10.0)
    expect("mape exact", mape([3, 4], [3, 4]).value == 0.0)
    expect("mape skips zero", mape([0, 200, 100], [5, 100, 150]).value == 50.0)
    l2 = Normalizer(NormMode.L2_ROWS)
    expect("l2 3-4-5", transform(l2, FeatureMatrix([[3.0, 4.0]], ("a", "b"))).values.tolist() == [[0.6, 0.8]])
    expect("l2 zero row", transform(l2, FeatureMatrix([[0.0, 0.0]], ("a", "b"))).values.tolist() == [[0.0, 0.0]])
    mm = fit_normalizer(NormMode.MINMAX, FeatureMatrix([[0.0], [10.0]], ("a",)))
    expect("minmax", transform(mm, FeatureMatrix([[0.0], [5.0], [10.0], [12.0]], ("a",))).values[:, 0].tolist()
           == [-1.0, 0.0, 1.0, 1.4])
    s = train_val_split(10, 0)
    expect("split 10", (len(s.val), len(s.train)) == (2, 8))
    idx = np.arange(100)
    expect("subsample 0.5", len(subsample_fraction(idx, 0.5, 0)) == 50)
    expect("subsample 1.0", set(subsample_fraction(idx, 1.0, 0)) == set(idx))
    expect("nested", all(set(subsample_fraction(idx, 0.2, k)) <= set(subsample_fraction(idx, 0.8, k))
                         for k in range(50)))
    header = "ru_id,slice,mcs,prbs,buffer_bytes,dl_bitrate_bps\n"
    t = parse_csv(header + "RU1,URLLC,10,6,1500,250000\n", TraceKind.PER_UE)
    expect("csv row", (t.records[0].mcs, t.records[0].prbs, t.records[0].buffer_bytes,
                       t.records[0].dl_bitrate_bps) == (10, 6, 1500, 250000.0))
    expect("csv empty", parse_csv(header, TraceKind.PER_UE).records == [])
    for seed in range(100):
        tr = gen_homogeneous(GenConfig(2, 5, seed=seed)) if seed % 2 else \
            gen_heterogeneous(GenConfig(2, 5, seed=seed))
        back = parse_csv(write_csv(tr), tr.kind)
        if write_csv(back) != write_csv(tr) or len(back) != len(tr):
            failures.append(f"round trip seed {seed}")
            break
    return not failures, f"failed: {failures}" if failures else "all identities hold"


def check_a10():
    worst_ratio_err, order_ok = 0, True
    for n_rus in (2, 3, 4, 8):
        rus = tuple(f"RU{i + 1}" for i in range(n_rus))
        for per_ru in (1, 37, 1000, 123457):
            counts = {r: per_ru for r in rus}
            for links in (LinkModel(), LinkModel(default_bandwidth_bps=1e6, default_latency_s=0.0),
                          LinkModel(aggregation="serial")):
                hoard = transfer_delay(plan_hoard(rus), counts, links)
                for src in rus:
                    choose = transfer_delay(plan_choose_single(src, rus[-1], rus), counts, links)
                    order_ok &= hoard.transfer_delay_s >= choose.transfer_delay_s
                    worst_ratio_err = max(worst_ratio_err, abs(hoard.bytes_moved - n_rus * choose.bytes_moved))
    return order_ok and worst_ratio_err == 0, f"delay ordering {'holds' if order_ok else 'violated'}; " \
                                               f"bytes ratio deviation {worst_ratio_err}"


CRITERIA = [
    ("A1", "gradient correctness", check_a1, 10.0),
    ("A2", "Adam reference", check_a2, 1.0),
    ("A3", "choosing wins under heterogeneity", check_a3, 300.0),
    ("A4", "bounded hoarding benefit under homogeneity", check_a4, 300.0),
    ("A5", "normalized-time algebra", check_a5, 1.0),
    ("A6", "xApp confusion oracle", check_a6, 1.0),
    ("A7", "heterogeneity metric discriminates", check_a7, 10.0),
    ("A8", "CLI determinism", check_a8, None),
    ("A9", "unit identities", check_a9, None),
    ("A10", "cost-model ordering", check_a10, None),
]


def evaluate(fn, limit):
    ok, detail, elapsed = _timed(fn)
    in_time = limit is None or elapsed < limit
    budget = f"{elapsed:.2f}s" + (f" / limit {limit:.0f}s" if limit else "")
    if not in_time:
        detail += " (over time limit)"
    return ok and in_time, f"{detail} [{budget}]"


@pytest.mark.parametrize("cid, title, fn, limit", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(cid, title, fn, limit, capsys):
    passed, detail = evaluate(fn, limit)
    with capsys.disabled():
        print(f"\n{cid} {'PASS' if passed else 'FAIL'} {title}: {detail}")
    assert passed, detail


if __name__ == "__main__":
    wanted = set(sys.argv[1:])
    failed = 0
    for cid, title, fn, limit in CRITERIA:
        if wanted and cid not in wanted:
            continue
        passed, detail = evaluate(fn, limit)
        failed += not passed
        print(f"{cid} {'PASS' if passed else 'FAIL'} {title}: {detail}", flush=True)
    sys.exit(1 if failed else 0)
