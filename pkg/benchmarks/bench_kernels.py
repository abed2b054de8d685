"""Compare the numba and numpy kernel backends.

Per-kernel timings call both implementations directly; the end-to-end
training-step timing runs once per backend in a subprocess, because the
backend is fixed when ``ricmatch.accel`` is imported.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ricmatch import _kernels as K

STEP_SNIPPET = """
import time, numpy as np
from ricmatch import accel
from ricmatch.nn import FF_SPEC, ENC_DEC_SPEC, AdamState, adam_step, init_network, loss_and_grad
for spec in (FF_SPEC, ENC_DEC_SPEC):
    for batch in (8, 512):
        g = np.random.default_rng(0)
        x = g.random((batch, spec.layer_widths[0])); y = g.random(batch)
        net = init_network(spec, 0); st = AdamState.fresh(net)
        for _ in range(20):
            adam_step(net, loss_and_grad(net, x, y)[1], st, 1e-3)
        n = {repeat}
        t = time.perf_counter()
        for _ in range(n):
            adam_step(net, loss_and_grad(net, x, y)[1], st, 1e-3)
        dt = (time.perf_counter() - t) / n
        print(f"{{accel.BACKEND}} {{spec.layer_widths}} batch={{batch}} {{dt * 1e6:.1f}}")
"""


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up (also triggers JIT compilation)
    times = []
    for _ in range(5):
        t = time.perf_counter()
        for _ in range(repeat):
            fn()
        times.append((time.perf_counter() - t) / repeat)
    return min(times)


def kernel_cases(batch: int):
    g = np.random.default_rng(1)
    W = g.standard_normal((30, 30))
    b = g.standard_normal(30)
    h = g.standard_normal((batch, 30))
    out = np.empty((batch, 30))
    a = np.tanh(g.standard_normal((batch, 30)))
    gW, gb, dp = np.empty_like(W), np.empty_like(b), np.empty((batch, 30))
    delta = g.standard_normal((batch, 30))
    theta, grad = g.standard_normal(2000), g.standard_normal(2000)
    m, v = np.zeros(2000), np.zeros(2000)
    qa, qb = np.sort(g.standard_normal(10 * batch)), np.sort(g.standard_normal(7 * batch))
    return {
        "forward tanh": lambda k: k["fwd"](W, b, h, K.TANH, out),
        "forward sigmoid": lambda k: k["fwd"](W, b, h, K.SIGMOID, out),
        "backward tanh": lambda k: k["bwd"](W, h, a, delta.copy(), K.TANH, gW, gb, dp, True),
        "adam 2000 params": lambda k: k["adam"](theta, grad, m, v, 1e-3, 0.9, 0.999, 1e-8, 10),
        "quantile L1": lambda k: k["q"](qa, qb),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if K.njit is None:
        sys.exit("numba is not importable; nothing to compare")
    backends = {
        "numpy": {"fwd": K.layer_forward_np, "bwd": K.layer_backward_np, "adam": K.adam_update_np,
                  "q": K.sorted_quantile_l1_np},
        "numba": {"fwd": K.layer_forward_nb, "bwd": K.layer_backward_nb, "adam": K.adam_update_nb,
                  "q": K.sorted_quantile_l1_nb},
    }
    print(f"{'kernel':<18} {'batch':>5} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for batch in (8, 512):
        for name, call in kernel_cases(batch).items():
            t_np = best_of(lambda: call(backends["numpy"]), args.repeat)
            t_nb = best_of(lambda: call(backends["numba"]), args.repeat)
            print(f"{name:<18} {batch:>5} {t_np * 1e6:>10.1f} {t_nb * 1e6:>10.1f} {t_np / t_nb:>7.2f}x")

    print("\nfull training step (forward + backward + Adam), microseconds")
    rows = {}
    for backend in ("numpy", "numba"):
        env = {**os.environ, "RICMATCH_BACKEND": backend}
        res = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(repeat=args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        for line in res.stdout.splitlines():
            name, rest = line.split(" ", 1)
            case, us = rest.rsplit(" ", 1)
            rows.setdefault(case, {})[name] = float(us)
    for case, r in rows.items():
        print(f"{case:<38} numpy {r['numpy']:>8.1f}  numba {r['numba']:>8.1f}  "
              f"speedup {r['numpy'] / r['numba']:.2f}x")


if __name__ == "__main__":
    main()
