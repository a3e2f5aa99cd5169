"""Command-line front end.

Subcommands::

    gridmdp train     --network N --scenario S --out DIR   value table + trace
    gridmdp evaluate  --network N --scenario S --out DIR   Monte Carlo report
    gridmdp exact-dp  --network N --scenario S --out DIR   exact values and policy
    gridmdp strategy  --network N --scenario S --replay R  strategy table for a fixed path
    gridmdp inspect   --network N [--failed ..] [--open ..] one dispatch, printed as JSON
    gridmdp actions   --network N [--failed ..]            feasible open sets

Networks, scenarios and replay files may be paths or bundled names such as
``ieee33``. Exit status is 0 on success, 1 for bad input (including an
exact DP that would exceed its state cap) and 2 when a dispatch or LP fails
numerically. ``GRIDMDP_THREADS`` sets the number of Monte Carlo threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from gridmdp import __version__
from gridmdp.adp import ADPConfig, ValueTable, converged_value, train, write_trace
from gridmdp.dispatch import DEFAULT_ETA, DispatchCase, DispatchError, immediate_cost
from gridmdp.events import MarkovState, load_scenario
from gridmdp.grid import enumerate_actions, load_network
from gridmdp.harness import (
    RECOMMENDED,
    STATE_CAP,
    StateSpaceError,
    case_probes,
    evaluate_policy,
    exact_dp,
    load_realization,
    parse_probe,
    replay,
    write_dp_values,
    write_report,
    write_strategy,
)

log = logging.getLogger("gridmdp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _epsilon(spec: str) -> dict:
    """``"0.1"`` -> constant step; ``"harmonic"`` or ``"harmonic:20"`` -> a/(a+n)."""
    if spec.startswith("harmonic"):
        _, _, a = spec.partition(":")
        out = {"stepsize": "harmonic"}
        if a:
            out["harmonic_a"] = float(a)
        return out
    try:
        return {"stepsize": "constant", "epsilon": float(spec)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon {spec!r}; use a number or 'harmonic[:a]'") from None


def _labels(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()] if text else []


def _line_ids(net, text: str) -> frozenset:
    return frozenset(net.line_by_label(s).id for s in _labels(text))


def _fmt(net, lines) -> list:
    return [net.line(l).label for l in sorted(lines)]


def _load(args):
    net = load_network(args.network)
    scenario = load_scenario(args.scenario, net) if getattr(args, "scenario", None) else None
    return net, scenario


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> ADPConfig:
    fields = dict(RECOMMENDED)
    fields.update(args.epsilon)
    fields.update(iterations=args.iters, explore=args.explore, seed=args.seed,
                  initial_value=args.initial_value)
    if args.initial:
        fields["initial"] = args.initial
    if args.update:
        fields["update"] = args.update
    return ADPConfig(**fields)


def _train(args, net, scenario):
    config = _config(args)
    probes = case_probes(net.name, net, scenario)
    probes += [(spec, parse_probe(net, scenario, spec)) for spec in args.probe]
    vt, trace = train(net, scenario, config, probes)
    return vt, trace, probes


def cmd_train(args) -> int:
    net, scenario = _load(args)
    vt, trace, probes = _train(args, net, scenario)
    out = _outdir(args)
    vt.save(out / "values.json")
    write_trace(out / "trace.csv", trace)
    print(f"trained {len(vt)} post-decision states over {args.iters} iterations -> {out}")
    for label, _ in probes:
        print(f"  {label}: {converged_value(trace, label):.6g}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    net, scenario = _load(args)
    vt = ValueTable.load(args.values) if args.values else None
    report = evaluate_policy(net, scenario, vt, args.paths, args.seed)
    out = _outdir(args)
    write_report(out / "report.json", report)
    print(f"{report.policy} policy: mean cost {report.mean_cost:.6g} +- {report.std_error:.3g} "
          f"over {report.paths} paths -> {out / 'report.json'}")
    if report.misses:
        print(f"  {report.misses} decisions fell back to the default value", file=sys.stderr)
    return EXIT_OK


def cmd_exact_dp(args) -> int:
    net, scenario = _load(args)
    dp = exact_dp(net, scenario, cap=args.cap)
    out = _outdir(args)
    write_dp_values(out / "dp_values.json", net, dp)
    print(f"optimal expected cost {dp.root_value:.6g} ({dp.n_states} states) -> {out / 'dp_values.json'}")
    return EXIT_OK


def cmd_strategy(args) -> int:
    net, scenario = _load(args)
    if args.values:
        vt = ValueTable.load(args.values)
    else:
        vt, _, _ = _train(args, net, scenario)
    table = replay(net, scenario, vt, load_realization(args.replay, net))
    out = _outdir(args)
    write_strategy(out / "strategy.json", table)
    for row in table.rows:
        print(f"t={row.period} failed={','.join(row.failures) or '-'} "
              f"open={','.join(row.opened) or '-'} close={','.join(row.closed) or '-'} cost={row.cost:.6g}")
    return EXIT_OK


def _state(args, net) -> MarkovState:
    failed = _line_ids(net, args.failed)
    isolated = _line_ids(net, args.isolated) - failed
    return MarkovState(args.period, {l: args.period for l in failed},
                       {l: tuple(sorted(failed)) for l in isolated})


def cmd_inspect(args) -> int:
    net, scenario = _load(args)
    state = _state(args, net)
    actions = enumerate_actions(net, state)
    if args.open is None:
        action = frozenset(net.initial_open - state.unavailable)
    else:
        action = _line_ids(net, args.open)
    if action not in actions:
        raise ValueError(f"open set {_fmt(net, action)} is not a radial configuration in this state")
    eta = scenario.eta_at(args.period) if scenario else args.eta
    dt = scenario.dt if scenario else 1.0
    total, res = immediate_cost(net, state, action, DispatchCase(topology=None, period=args.period,
                                                                 eta=eta, dt=dt))
    data = {"period": args.period, "failed": _fmt(net, state.failed_lines),
            "isolated": _fmt(net, state.isolated_lines), "open": _fmt(net, action),
            "cost": total, "dispatch": res.to_dict()}
    print(json.dumps(data, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_actions(args) -> int:
    net = load_network(args.network)
    state = _state(args, net)
    actions = enumerate_actions(net, state)
    if args.json:
        print(json.dumps([_fmt(net, a) for a in actions]))
    else:
        for a in actions:
            print(",".join(_fmt(net, a)) or "-")
        print(f"{len(actions)} feasible open sets", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridmdp", description="Storm-resilient feeder reconfiguration by approximate DP.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p, scenario=True, out=True):
        p.add_argument("--network", required=True, help="network JSON file or bundled name")
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON file or bundled name")
        if out:
            p.add_argument("--out", default=".", help="output directory (default: current)")

    def training(p):
        p.add_argument("--iters", type=int, default=1500, help="training iterations (default 1500)")
        p.add_argument("--epsilon", type=_epsilon, default=_epsilon("harmonic"),
                       help="smoothing: a constant in (0, 1] or 'harmonic[:a]' (default harmonic)")
        p.add_argument("--explore", type=float, default=0.0, help="exploration probability")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--initial", choices=("zero", "rollout"), help="start value of unseen states")
        p.add_argument("--initial-value", type=float, default=0.0, dest="initial_value")
        p.add_argument("--update", choices=("sample", "expected"), help="smoothing target")
        p.add_argument("--probe", action="append", default=[], metavar="T:LINES",
                       help="extra probe, e.g. '2:10-11,25-29' (repeatable)")

    p = sub.add_parser("train", help="run forward ADP and write values.json and trace.csv")
    common(p)
    training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Monte Carlo cost of the greedy or myopic policy")
    common(p)
    p.add_argument("--values", help="value table (omit for the myopic policy)")
    p.add_argument("--paths", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("exact-dp", help="exact backward induction (small instances)")
    common(p)
    p.add_argument("--cap", type=int, default=STATE_CAP, help="state-count cap")
    p.set_defaults(func=cmd_exact_dp)

    p = sub.add_parser("strategy", help="follow the greedy policy along a fixed failure path")
    common(p)
    p.add_argument("--replay", required=True, help="replay JSON file or bundled name")
    p.add_argument("--values", help="value table (default: train first)")
    training(p)
    p.set_defaults(func=cmd_strategy)

    def state_args(p):
        p.add_argument("--failed", default="", help="failed lines, e.g. '6-7,26-27'")
        p.add_argument("--isolated", default="", help="locked-out lines")
        p.add_argument("--period", type=int, default=1)

    p = sub.add_parser("inspect", help="dispatch one state and open set")
    common(p, scenario=False, out=False)
    p.add_argument("--scenario", help="scenario for the period's shedding price")
    state_args(p)
    p.add_argument("--open", help="open dispatchable lines (default: normal open set)")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA, help="shedding price without a scenario")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("actions", help="list feasible open sets of a state")
    common(p, scenario=False, out=False)
    state_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_actions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help, --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StateSpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DispatchError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
