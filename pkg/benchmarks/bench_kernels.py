"""Compiled versus pure-Python kernels.

Times each kernel on every feasible open set of the intact IEEE feeders,
checks that both backends return identical arrays, then times a short
training run end to end under each backend (a fresh interpreter per
backend, selected with ``GRIDMDP_PURE_PYTHON``).

    python benchmarks/bench_kernels.py [--repeat 5] [--iters 100] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from gridmdp import _pykernels
from gridmdp.grid import closed_masks, feasible_configs, load_network

try:
    from gridmdp import _ckernels
except ImportError:
    _ckernels = None

TRAIN_SNIPPET = """
import time
from gridmdp import kernels
from gridmdp.adp import ADPConfig, train
from gridmdp.events import load_scenario
from gridmdp.grid import load_network
from gridmdp.harness import RECOMMENDED
net = load_network("{name}")
sc = load_scenario("{name}_storm", net)
start = time.perf_counter()
train(net, sc, ADPConfig(iterations={iters}, **RECOMMENDED))
print(kernels.BACKEND, time.perf_counter() - start)
"""


def kernel_calls(name: str) -> dict:
    """Argument tuples for each kernel, covering every intact open set."""
    net = load_network(name)
    bi = net.bus_index
    acts = feasible_configs(net)
    masks = closed_masks(net, (), acts)
    r = np.array([l.r for l in net.lines])
    x = np.array([l.x for l in net.lines])
    p = np.array([b.p_load for b in net.buses]) * 1.3
    q = np.array([b.q_load for b in net.buses]) * 1.3
    smax = np.array([l.s_max for l in net.lines])
    vmin = np.array([b.v_min ** 2 for b in net.buses])
    vmax = np.array([b.v_max ** 2 for b in net.buses])
    base = [l for l in net.lines if not l.dispatchable and l.initially_closed]
    cands = [net.line(c) for c in net.dispatchable]
    n = len(net.buses)
    return {
        "radial_masks": [(n, net._is_sub, np.array([bi[l.from_bus] for l in base]),
                          np.array([bi[l.to_bus] for l in base]), np.array([bi[l.from_bus] for l in cands]),
                          np.array([bi[l.to_bus] for l in cands]))],
        "tree_sweep": [(n, net._lf, net._lt, row, r, x, p, q, net._is_sub, net.base_mva) for row in masks],
        "config_sweep": [(n, net._lf, net._lt, masks, r, x, p, q, net._is_sub, net.base_mva,
                          smax, vmin, vmax, 1e-9)],
        "subtree_masks": [(n, net._lf, net._lt, masks, net._is_sub, np.arange(len(net.lines), dtype=np.int64))],
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(u, v) for u, v in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def bench_kernels(names, repeat: int) -> list:
    rows = []
    for name in names:
        for kernel, calls in kernel_calls(name).items():
            row = {"network": name, "kernel": kernel, "calls": len(calls)}
            for label, mod in (("python", _pykernels), ("cython", _ckernels)):
                if mod is None:
                    continue
                fn = getattr(mod, kernel)
                row[label] = min(timeit.repeat(lambda: [fn(*a) for a in calls], number=1, repeat=repeat))
            if _ckernels is not None:
                row["identical"] = all(_same(getattr(_pykernels, kernel)(*a), getattr(_ckernels, kernel)(*a))
                                       for a in calls)
                row["speedup"] = row["python"] / row["cython"]
            rows.append(row)
    return rows


def bench_training(name: str, iters: int) -> dict:
    out = {}
    for pure in ("1", ""):
        env = dict(os.environ, GRIDMDP_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(name=name, iters=iters)],
                             env=env, capture_output=True, text=True, check=True)
        backend, seconds = res.stdout.split()
        out[backend] = float(seconds)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats; the minimum is reported")
    parser.add_argument("--iters", type=int, default=100, help="training iterations for the end-to-end run")
    parser.add_argument("--json", help="also write the results to this file")
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; timing the pure-Python backend only", file=sys.stderr)

    rows = bench_kernels(["ieee33", "ieee123"], args.repeat)
    print(f"{'network':8} {'kernel':14} {'calls':>5} {'python ms':>10} {'cython ms':>10} {'speedup':>8}  same")
    for r in rows:
        c = f"{1e3 * r['cython']:10.3f}" if "cython" in r else f"{'-':>10}"
        s = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'-':>8}"
        print(f"{r['network']:8} {r['kernel']:14} {r['calls']:5d} {1e3 * r['python']:10.3f} {c} {s}  "
              f"{r.get('identical', '-')}")

    training = bench_training("ieee33", args.iters)
    print(f"\nieee33 training, {args.iters} iterations: "
          + ", ".join(f"{k} {v:.2f} s" for k, v in sorted(training.items())))
    if "cython" in training:
        print(f"end-to-end speedup {training['python'] / training['cython']:.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": rows, "training": training, "iterations": args.iters}, fh, indent=1)
    return 0 if all(r.get("identical", True) for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
