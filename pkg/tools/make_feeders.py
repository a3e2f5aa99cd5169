"""Regenerate the bundled network, scenario and replay files.

Run from the repository root::

    python3 tools/make_feeders.py

The 33-bus feeder uses the standard Baran-Wu branch and load data. The
123-bus feeder is a balanced single-phase stand-in: the bus numbering, the
normally-open ties and the dispatchable lines follow the usual 123-bus
layout, while impedances and loads are synthesized from a fixed seed and
scaled so that the intact feeder sits inside its voltage band.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from gridmdp import kernels
from gridmdp.grid import network_from_dict

DATA = Path(__file__).resolve().parents[1] / "src" / "gridmdp" / "data"

# ---------------------------------------------------------------- 33 bus ------
BR33 = [
    (1, 2, .0922, .047), (2, 3, .493, .2511), (3, 4, .366, .1864), (4, 5, .3811, .1941),
    (5, 6, .819, .707), (6, 7, .1872, .6188), (7, 8, .7114, .2351), (8, 9, 1.03, .74),
    (9, 10, 1.044, .74), (10, 11, .1966, .065), (11, 12, .3744, .1238), (12, 13, 1.468, 1.155),
    (13, 14, .5416, .7129), (14, 15, .591, .526), (15, 16, .7463, .545), (16, 17, 1.289, 1.721),
    (17, 18, .732, .574), (2, 19, .164, .1565), (19, 20, 1.5042, 1.3554), (20, 21, .4095, .4784),
    (21, 22, .7089, .9373), (3, 23, .4512, .3083), (23, 24, .898, .7091), (24, 25, .896, .7011),
    (6, 26, .203, .1034), (26, 27, .2842, .1447), (27, 28, 1.059, .9337), (28, 29, .8042, .7006),
    (29, 30, .5075, .2585), (30, 31, .9744, .963), (31, 32, .3105, .3619), (32, 33, .341, .5302),
]
# normally-open ties; the end-of-feeder tie is attached to the substation
TIES33 = [(8, 21, 2.0, 2.0), (9, 15, 2.0, 2.0), (12, 22, 2.0, 2.0), (1, 18, .5, .5), (25, 29, .5, .5)]
LOADS33 = {
    2: (.1, .06), 3: (.09, .04), 4: (.12, .08), 5: (.06, .03), 6: (.06, .02), 7: (.2, .1),
    8: (.2, .1), 9: (.06, .02), 10: (.06, .02), 11: (.045, .03), 12: (.06, .035), 13: (.06, .035),
    14: (.12, .08), 15: (.06, .01), 16: (.06, .02), 17: (.06, .02), 18: (.09, .04), 19: (.09, .04),
    20: (.09, .04), 21: (.09, .04), 22: (.09, .04), 23: (.09, .05), 24: (.42, .2), 25: (.42, .2),
    26: (.06, .025), 27: (.06, .025), 28: (.06, .02), 29: (.12, .07), 30: (.2, .6), 31: (.15, .07),
    32: (.21, .1), 33: (.06, .04),
}
DISP33 = {(10, 11), (12, 13), (25, 29), (1, 18), (14, 15), (12, 22), (8, 21), (9, 15)}

# ---------------------------------------------------------------- 123 bus -----
PATHS123 = [
    [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 17, 18, 19, 20, 21, 22],
    [15, 16],
    [5, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34],
    [8, 35, 36, 37, 38, 39, 40, 41, 42],
    [10, 43, 44, 45, 46, 47, 48, 49, 50, 51],
    [3, 52, 53, 54, 55, 56],
    [53, 57, 58, 59],
    [57, 60, 61, 62, 63, 64, 65, 66],
    [60, 117, 67, 68, 69, 70, 71, 72, 73],
    [12, 74, 75, 76, 77, 78, 79, 80],
    [20, 81, 82, 83, 84, 85, 86, 87],
    [18, 88, 89, 90, 91, 92, 93, 94, 95, 96],
    [25, 97, 98, 99, 100, 101, 102, 103, 104, 105, 106],
    [101, 119, 107, 108, 109, 110],
    [30, 111, 112, 113, 114, 115],
    [22, 116, 118, 120, 121, 122, 123],
]
TIES123 = [(16, 96), (92, 120), (115, 116), (42, 120), (38, 43), (39, 57), (56, 76), (46, 65),
           (51, 108), (71, 85)]
DISP123 = {(16, 96), (92, 120), (56, 76), (39, 57), (38, 43), (42, 120), (46, 65), (51, 108),
           (71, 85), (52, 53), (57, 60), (60, 117), (101, 119), (63, 64), (67, 117)}


def _key(a, b):
    return (min(a, b), max(a, b))


def _intact_flows(data):
    net = network_from_dict(data)
    closed = np.array([l.initially_closed for l in net.lines], dtype=np.uint8)
    e, fp, fq, u = kernels.tree_sweep(
        len(net.buses), net._lf, net._lt, closed, np.array([l.r for l in net.lines]),
        np.array([l.x for l in net.lines]), np.array([b.p_load for b in net.buses]),
        np.array([b.q_load for b in net.buses]), net._is_sub, net.base_mva)
    return net, np.hypot(fp, fq), u


def _size_capacity(data, tie_cap):
    _, s, _ = _intact_flows(data)
    for l, flow in zip(data["lines"], s):
        if l["closed"]:
            l["smax_mva"] = max(1.0, math.ceil(16 * flow) / 10)
        else:
            l["smax_mva"] = tie_cap


def ieee33():
    zb = 12.66 ** 2 / 10.0
    buses = [{"id": 1, "p_mw": 0.0, "q_mvar": 0.0, "substation": True, "vmin": 0.9, "vmax": 1.05}]
    for b in range(2, 34):
        p, q = LOADS33[b]
        buses.append({"id": b, "p_mw": p, "q_mvar": q, "substation": False, "vmin": 0.9, "vmax": 1.05})
    lines = []
    for i, (a, b, r, x) in enumerate(BR33 + TIES33):
        lines.append({"id": i + 1, "from": a, "to": b, "r_pu": round(r / zb, 8), "x_pu": round(x / zb, 8),
                      "smax_mva": 100.0, "dispatchable": _key(a, b) in DISP33,
                      "closed": i < len(BR33), "switch_cost": 10.0})
    data = {"name": "ieee33", "base_mva": 10.0, "base_kv": 12.66, "buses": buses, "lines": lines}
    _size_capacity(data, tie_cap=1.0)
    return data


def ieee123():
    rng = np.random.default_rng(123)
    edges = []
    for path in PATHS123:
        edges += list(zip(path[:-1], path[1:]))
    covered = {b for e in edges for b in e}
    assert covered == set(range(1, 124)), sorted(set(range(1, 124)) - covered)
    assert len(edges) == 122
    buses = [{"id": 1, "p_mw": 0.0, "q_mvar": 0.0, "substation": True, "vmin": 0.9, "vmax": 1.05}]
    for b in range(2, 124):
        p = float(rng.choice([0.0, 0.02, 0.04, 0.04, 0.04, 0.075]))
        buses.append({"id": b, "p_mw": p, "q_mvar": round(0.5 * p, 4), "substation": False,
                      "vmin": 0.9, "vmax": 1.05})
    raw = [(a, b, float(rng.uniform(1.0, 3.0)) * 1e-3, float(rng.uniform(1.5, 4.0)) * 1e-3) for a, b in edges + TIES123]
    lines = []
    for i, (a, b, r, x) in enumerate(raw):
        lines.append({"id": i + 1, "from": a, "to": b, "r_pu": r, "x_pu": x, "smax_mva": 50.0,
                      "dispatchable": _key(a, b) in DISP123, "closed": i < len(edges),
                      "switch_cost": 10.0})
    data = {"name": "ieee123", "base_mva": 10.0, "base_kv": 4.16, "buses": buses, "lines": lines}
    # scale impedances so the intact minimum voltage is 0.96 p.u.
    net, _, u = _intact_flows(data)
    drop = 1.0 - u[1:].min()
    scale = (1.0 - 0.96 ** 2) / drop
    for l in data["lines"]:
        l["r_pu"] = round(l["r_pu"] * scale, 8)
        l["x_pu"] = round(l["x_pu"] * scale, 8)
    _size_capacity(data, tie_cap=1.0)
    return data


def _line(a, b, r=0.01, x=0.01, s=2.0, disp=False, closed=True):
    return {"from": a, "to": b, "r_pu": r, "x_pu": x, "smax_mva": s, "dispatchable": disp,
            "closed": closed, "switch_cost": 10.0}


def _small(name, loads, subs, lines):
    buses = []
    for b, (p, q) in loads.items():
        sub = b in subs
        buses.append({"id": b, "p_mw": 0.0 if sub else p, "q_mvar": 0.0 if sub else q,
                      "substation": sub, "vmin": 0.9, "vmax": 1.05})
    for i, l in enumerate(lines):
        l["id"] = i + 1
    return {"name": name, "base_mva": 10.0, "base_kv": 12.66, "buses": buses, "lines": lines}


def toy_networks():
    out = {}
    out["hand4"] = _small("hand4", {1: (0, 0), 2: (.3, .1), 3: (.3, .1), 4: (.3, .1)}, {1}, [
        _line(1, 2), _line(2, 3, disp=True), _line(3, 4), _line(1, 4, disp=True, closed=False)])
    out["toy_a"] = _small("toy_a", {1: (0, 0), 2: (.3, .1), 3: (.4, .1), 4: (.3, .1), 5: (.2, .1)}, {1}, [
        _line(1, 2), _line(2, 3, disp=True), _line(3, 4), _line(4, 5),
        _line(1, 5, disp=True, closed=False, s=0.8)])
    out["toy_b"] = _small("toy_b", {1: (0, 0), 2: (.3, .1), 3: (.3, .1), 4: (.4, .2), 5: (.3, .1),
                                    6: (.3, .1)}, {1}, [
        _line(1, 2), _line(2, 3), _line(3, 4, disp=True), _line(1, 5), _line(5, 6),
        _line(4, 6, disp=True, closed=False, s=0.45, r=0.02, x=0.02)])
    out["toy_c"] = _small("toy_c", {1: (0, 0), 2: (.4, .1), 3: (.3, .1), 4: (.3, .2), 5: (0, 0)}, {1, 5}, [
        _line(1, 2), _line(2, 3, disp=True), _line(3, 4), _line(4, 5, disp=True, closed=False, s=0.5)])
    return out


def scenario(name, horizon, periods, repairs, eta=1000.0, seed=0):
    return {"name": name, "horizon": horizon, "dt_hours": 1.0, "eta": eta, "seed": seed,
            "periods": [{"t": t, "at_risk": [{"line": l, "p_fail": p} for l, p in v]}
                        for t, v in sorted(periods.items())],
            "repairs": repairs}


def scenarios():
    out = {}
    risk33 = {1: ["3-23", "23-24"], 2: ["6-7", "6-26", "26-27"], 3: ["27-28", "28-29", "7-8"],
              4: ["29-30", "8-9", "30-31"], 5: ["9-10", "31-32", "10-11"], 6: ["32-33", "11-12", "14-15"]}
    lines33 = sorted({l for v in risk33.values() for l in v})
    out["ieee33_storm"] = scenario("ieee33_storm", 6, {t: [(l, 0.04) for l in v] for t, v in risk33.items()},
                                   {l: 3 for l in lines33})
    risk123 = {1: ["7-8", "8-35"], 2: ["15-17", "17-18", "14-15"], 3: ["52-53", "53-54", "53-57"],
               4: ["57-58", "58-59", "57-60"], 5: ["57-58", "60-61", "60-117"],
               6: ["60-117", "117-67", "67-68"], 7: ["97-98", "98-99", "101-102"],
               8: ["102-103", "103-104", "101-119"], 9: ["104-105", "105-106", "119-107"]}
    lines123 = sorted({l for v in risk123.values() for l in v})
    out["ieee123_storm"] = scenario("ieee123_storm", 9, {t: [(l, 0.04) for l in v] for t, v in risk123.items()},
                                    {l: 4 for l in lines123})
    out["hand4_storm"] = scenario("hand4_storm", 2, {2: [("2-3", 1.0)]}, {"2-3": 2})
    # failures are frequent but short, so the three-period cost-to-go is a
    # sum of several comparable outages rather than one rare catastrophe
    out["toy_a_storm"] = scenario("toy_a_storm", 3, {1: [("2-3", .8), ("3-4", .7)],
                                                     2: [("2-3", .85), ("4-5", .75)],
                                                     3: [("3-4", .8), ("1-2", .7)]},
                                  {"2-3": 1, "3-4": 1, "4-5": 1, "1-2": 1})
    out["toy_b_storm"] = scenario("toy_b_storm", 3, {1: [("2-3", .85), ("5-6", .8)],
                                                     2: [("3-4", .9), ("1-5", .7)],
                                                     3: [("2-3", .8), ("5-6", .85)]},
                                  {"2-3": 1, "5-6": 1, "3-4": 1, "1-5": 1})
    out["toy_c_storm"] = scenario("toy_c_storm", 3, {1: [("1-2", .8), ("3-4", .75)],
                                                     2: [("3-4", .85), ("2-3", .8)],
                                                     3: [("1-2", .75), ("4-5", .9)]},
                                  {"1-2": 1, "3-4": 1, "2-3": 1, "4-5": 1})
    return out


def replays():
    return {
        "ieee33_table4": {"name": "ieee33_table4", "network": "ieee33", "scenario": "ieee33_storm",
                          "failures": {"2": ["6-7"]}},
        "ieee33_table5": {"name": "ieee33_table5", "network": "ieee33", "scenario": "ieee33_storm",
                          "failures": {}},
        "ieee123_table6": {"name": "ieee123_table6", "network": "ieee123", "scenario": "ieee123_storm",
                           "failures": {"2": ["15-17"], "5": ["57-58"], "8": ["102-103"]}},
    }


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    files = {"ieee33": ieee33(), "ieee123": ieee123(), **toy_networks(), **scenarios(), **replays()}
    for name, data in files.items():
        (DATA / f"{name}.json").write_text(json.dumps(data, indent=1) + "\n")
        print("wrote", name)


if __name__ == "__main__":
    main()
