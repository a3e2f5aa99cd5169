"""Shared fixtures and small network builders for the test suite."""

import dataclasses

import pytest

from gridmdp.events import Scenario, load_scenario
from gridmdp.grid import Bus, Line, Network, load_network

TOYS = ("toy_a", "toy_b", "toy_c")
SMALL = TOYS + ("hand4",)
BUNDLED = SMALL + ("ieee33", "ieee123")


def make_network(n_bus, edges, subs=(1,), loads=None, dispatchable=(), open_lines=(),
                 r=0.01, x=0.01, s_max=2.0, switch_cost=10.0, base_mva=10.0, name="test"):
    """Network from ``(from, to)`` pairs; line ``i + 1`` is ``edges[i]``."""
    loads = loads or {}
    buses = tuple(
        Bus(k, *loads.get(k, (0.0, 0.0) if k in subs else (0.3, 0.1)), is_substation=k in subs)
        for k in range(1, n_bus + 1)
    )
    lines = tuple(
        Line(i + 1, a, b, r, x, s_max, dispatchable=(i + 1) in dispatchable,
             initially_closed=(i + 1) not in open_lines, switch_cost=switch_cost)
        for i, (a, b) in enumerate(edges)
    )
    return Network(buses=buses, lines=lines, base_mva=base_mva, name=name)


def two_bus(s_max=2.0, p=1.0, q=0.5, r=0.01, x=0.01, base_mva=10.0):
    return make_network(2, [(1, 2)], loads={2: (p, q)}, s_max=s_max, r=r, x=x, base_mva=base_mva,
                        name="two_bus")


def deterministic(scenario: Scenario, threshold: float = 0.75) -> Scenario:
    """Same scenario with every failure probability rounded to 0 or 1."""
    risk = {t: tuple((l, 1.0 if p >= threshold else 0.0) for l, p in v)
            for t, v in scenario.at_risk.items()}
    return dataclasses.replace(scenario, at_risk=risk)


def bundled(name):
    net = load_network(name)
    return net, load_scenario(f"{name}_storm", net)


@pytest.fixture(scope="session")
def ieee33():
    return bundled("ieee33")


@pytest.fixture(scope="session")
def ieee123():
    return bundled("ieee123")


# -- acceptance reporting -------------------------------------------------------
# Tests marked ``@pytest.mark.criterion(n, title)`` are grouped per criterion;
# the terminal summary prints one PASS or FAIL line for each, with the
# ``detail`` properties the tests recorded.

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    n, title = marker.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "details": []})
    if report.skipped:
        entry["ok"] = False
        entry["details"].append(f"{item.name} skipped")
        return
    entry["ok"] &= report.passed
    if report.when == "call":
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]
    if report.failed:
        entry["details"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        verdict = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"{verdict} {n:2d} {e['title']}: {'; '.join(e['details'])}")
