"""Command-line driver: abstract, compose, synthesize, check, simulate.

Exit codes: 0 ok, 2 parse or validation error, 3 incompatible composition,
4 uncontrollable start.  Every random choice is drawn from ``--seed``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__, kernels
from .abstraction import (
    AbstractionRefused, DomainError, GridSpec, affine_model, grid_abstraction, sequence_abstraction,
)
from .composition import Network, CompositionParameter, check_compatibility, compose, composed_sidecar
from .metrics import MetricError
from .models import Uncontrollable, microgrid_network, simulate_closed_loop, traffic_network
from .product import IncompatibleError
from .randnet import SUITES, load_config
from .synthesis import (
    SafeSet, UncontrollableError, bottom_up_synthesis, completeness_check, monolithic_synthesis,
)
from .ts import Controller, FiniteTransitionSystem, ValidationError, canonical_dumps

log = logging.getLogger("symcomp")

EXIT_OK, EXIT_PARSE, EXIT_INCOMPATIBLE, EXIT_UNCONTROLLABLE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _sha(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _read_json(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    log.info("input %s sha256=%s", path, _sha(path))
    return d


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(path, "w") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _floats(s, name) -> list[float]:
    try:
        return [float(t) for t in str(s).replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {s!r}") from exc


# ------------------------------------------------------------------ abstract
def _model_from_json(d, grid: GridSpec | None):
    """(model, internal values, internal radius, labels) from a model description."""
    kind = d.get("kind", "affine")
    if kind == "traffic":
        net = traffic_network(sign_convention=d.get("sign_convention", "default"))
        i = int(d["component"]) - 1
        if not 0 <= i < 4:
            raise UsageError("traffic component must be 1..4")
        nb = net.neighbors(i)
        model = net.models[i]
        w = grid.width[0] / 2 if grid is not None else 0.0
        radius = d.get("int_radius", [w] * len(nb))
        return model, _neighbor_points(grid, len(nb)), radius, nb
    if kind == "microgrid":
        net = microgrid_network(d.get("topology", "4-unit"), steps=d.get("steps"))
        i = int(d["unit"]) - 1
        if not 0 <= i < net.n:
            raise UsageError(f"unit must be 1..{net.n}")
        nb = net.neighbors(i)
        return net.models[i], _neighbor_points(grid, len(nb)), d.get("int_radius", 0.0), nb
    if kind == "affine":
        model = affine_model(d["A"], d.get("B"), d.get("E"), d.get("c"), d.get("ext_inputs"), d.get("name", ""))
        iv = np.asarray(d.get("int_values", np.zeros((1, 0))), dtype=float)
        return model, iv, d.get("int_radius", 0.0), d.get("int_labels")
    raise UsageError(f"unknown model kind {kind!r}")


def _neighbor_points(grid, k):
    if k == 0:
        return np.zeros((1, 0))
    if grid is None:
        raise UsageError("a grid is needed for the neighbour output points")
    C = grid.centers()[:, 0]
    return np.stack(np.meshgrid(*[C] * k, indexing="ij"), axis=-1).reshape(-1, k)


def cmd_abstract(args) -> int:
    d = _read_json(args.model)
    if args.sequence:
        xs, N = float(args.sequence[0]), int(args.sequence[1])
        model, _, _, _ = _model_from_json(d, None)
        domain = tuple(d.get("domain", (0.0, 30.0)))
        res = sequence_abstraction(model, xs, N, domain=domain)
    else:
        if not args.grid:
            raise UsageError("abstract needs --grid or --sequence")
        g = _read_json(args.grid)
        try:
            grid = GridSpec(g["lo"], g["hi"], g["n"])
        except KeyError as exc:
            raise UsageError(f"grid file lacks {exc}") from exc
        model, iv, radius, labels = _model_from_json(d, grid)
        res = grid_abstraction(model, grid, iv, radius, int_labels=labels,
                               eps_convention=g.get("eps_convention", "width"))
    _write(args.out, res.dumps())
    log.info("abstraction: %s eps=%.6g mu=%g", res.system, res.eps, res.mu)
    return EXIT_OK


# ------------------------------------------------------------------- compose
def _load_network(path, M_flag=None):
    try:
        net, M = Network.load(path)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed network file: {exc}") from exc
    for p in _read_json(path).get("components", []):
        if isinstance(p, str):
            log.info("component %s sha256=%s", p, _sha(os.path.join(os.path.dirname(os.path.abspath(path)), p)))
    if M_flag is not None:
        M = CompositionParameter(_floats(M_flag, "--M"))
    if M is None:
        M = CompositionParameter.zeros(net.N)
    return net, M


def cmd_compose(args) -> int:
    net, M = _load_network(args.network, args.M)
    ok, wit = check_compatibility(net, M)
    if not ok:
        print(f"incompatible: component {wit[0]} has no internal input within {M[wit[0]]} "
              f"of neighbour states {wit[1]}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    S = compose(net, M, reachable=args.reachable)
    _write(args.out, S.dumps())
    if args.out not in (None, "-"):
        _write(args.out + ".index.json", composed_sidecar(S))
    log.info("composed: %s", S)
    return EXIT_OK


def cmd_diff(args) -> int:
    """Exit 0 iff every transition of A is a transition of B."""
    A = FiniteTransitionSystem.from_json(_read_json(args.a))
    B = FiniteTransitionSystem.from_json(_read_json(args.b))
    if A.n_states != B.n_states:
        print("state counts differ", file=sys.stderr)
        return 1
    ta = {tuple(r) for r in A.transitions.tolist()}
    tb = {tuple(r) for r in B.transitions.tolist()}
    missing = sorted(ta - tb)
    print(json.dumps({"subset": not missing, "a_transitions": len(ta), "b_transitions": len(tb),
                      "first_missing": list(missing[0]) if missing else None}))
    return 0 if not missing else 1


# ---------------------------------------------------------------- synthesize
def _load_safes(path, net: Network):
    d = _read_json(path)
    items = d["components"] if isinstance(d, dict) and "components" in d else d
    if len(items) != net.N:
        raise UsageError(f"{len(items)} safe sets for {net.N} components")
    return [SafeSet.from_json(s, c).mask for s, c in zip(items, net.components)]


def _case_pipeline(case, args):
    from .pipelines import MicrogridPipeline, TrafficPipeline
    if case == "traffic":
        return TrafficPipeline(convention=args.sign_convention).abstract()
    if case in ("microgrid-4", "microgrid-5"):
        return MicrogridPipeline(case.split("-")[1] + "-unit").abstract()
    raise UsageError(f"unknown case {case!r}")


def cmd_synthesize(args) -> int:
    if args.case:
        return _synthesize_case(args)
    if not (args.network and args.safe):
        raise UsageError("synthesize needs --network and --safe (or --case)")
    net, M = _load_network(args.network, args.M)
    ok, wit = check_compatibility(net, M)
    if not ok:
        print(f"incompatible: component {wit[0]}, neighbour states {wit[1]}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    safes = _load_safes(args.safe, net)
    report = {}
    ctrl = None
    if args.mode in ("bottom-up", "both"):
        bu = bottom_up_synthesis(net, safes, M, schedule=args.schedule)
        report["bottom_up"] = bu.report()
        ctrl = bu.controller()
    if args.mode in ("monolithic", "both"):
        mono = monolithic_synthesis(net, safes, M, schedule=args.schedule)
        report["monolithic"] = {"cont_size": int(mono.alive.sum()), "iterations": mono.rounds,
                                "controller_transitions": len(mono.controller().pairs),
                                "composed_states": mono.system.n_states,
                                "composed_transitions": mono.system.n_transitions}
        ctrl = ctrl if ctrl is not None else mono.controller()
    if args.mode == "both":
        eq, x = completeness_check(net, safes, M, bottom_up=bu, monolithic=mono)
        report["complete"] = {"equal": eq, "first_difference": x}
    if not len(ctrl.pairs):
        log.warning("Cont is empty: the controller enables nothing")
    _write(args.out, ctrl.dumps())
    _write(args.report, canonical_dumps(report))
    return EXIT_OK


def _synthesize_case(args) -> int:
    p = _case_pipeline(args.case, args)
    if args.case == "traffic":
        if args.mode != "bottom-up":
            raise UsageError("the traffic case supports --mode bottom-up only (the full product has 8.6e8 states)")
        res = p.synthesize()
        report = p.report()
        x0 = np.array(_floats(args.x0 or "14,15,20,16", "--x0"))
        xa = p.abstract_state(x0)
        report["x0_enabled"] = int(len(np.flatnonzero(res.product.enabled(res.alive.astype(np.uint8), [xa])[0]))) \
            if xa >= 0 and res.alive[xa] else 0
        if args.out:
            p.save(args.out)
            log.info("wrote %s", args.out)
    else:
        report = {}
        if args.mode in ("monolithic", "both"):
            p.synthesize()
            report["monolithic"] = p.report()
            if args.out:
                _write(args.out, p.result.controller().dumps())
        if args.mode in ("bottom-up", "both"):
            bu = p.bottom_up()
            report["bottom_up"] = bu.report()
            if args.out and args.mode == "bottom-up":
                _write(args.out, bu.controller().dumps())
    if report.get("cont_size", 1) == 0:
        log.warning("Cont is empty: the controller enables nothing")
    _write(args.report, canonical_dumps(report))
    return EXIT_OK


# --------------------------------------------------------------------- check
def cmd_check(args) -> int:
    cfg = load_config(args.config)
    seeds = range(args.seed, args.seed + args.seeds)
    if args.seeds <= 0:
        log.warning("no seeds requested: vacuous pass")
    suite = SUITES[args.theorem]
    res = suite(seeds, cfg, corrupt=args.corrupt)
    for seed, ok, wit in res.log:
        log.info("seed %d: %s%s", seed, "pass" if ok else "FAIL", "" if ok else f" witness={wit}")
    print(res.summary())
    for seed, wit in res.failures[:5]:
        print(f"  seed {seed} failed: {wit}")
    return EXIT_OK if res.ok else 1


# ------------------------------------------------------------------ simulate
def cmd_simulate(args) -> int:
    if args.case:
        return _simulate_case(args)
    if not (args.system and args.controller):
        raise UsageError("simulate needs --system and --controller (or --case)")
    S = FiniteTransitionSystem.from_json(_read_json(args.system))
    C = Controller.from_json(_read_json(args.controller))
    rng = np.random.default_rng(args.seed)
    x0 = int(_floats(args.x0 or "0", "--x0")[0])
    if not 0 <= x0 < S.n_states:
        raise UsageError("--x0 is not a state")
    dom = set(C.domain().tolist())

    def fb(k, x):
        x = int(x[0])
        if x not in dom:
            raise Uncontrollable(f"state {x} outside dom(C)")
        return np.array(sorted(C.enabled(x))[0], dtype=float)

    def step(k, x, u):
        succ = S.successors(int(x[0]), int(u[0]), int(u[1]))
        return np.array([rng.choice(succ)], dtype=float)

    if x0 not in dom:
        print(f"uncontrollable start: state {x0} outside dom(C)", file=sys.stderr)
        return EXIT_UNCONTROLLABLE
    traj = simulate_closed_loop(step, fb, [x0], args.steps, lambda x: int(x[0]) in dom,
                                state_names=["x"], input_names=["u_ext", "u_int"], n_inputs=2)
    _write(args.csv, traj.to_csv())
    return EXIT_OK if traj.status == "ok" else EXIT_UNCONTROLLABLE


def _simulate_case(args) -> int:
    p = _case_pipeline(args.case, args)
    if args.case == "traffic":
        if args.controller:
            p.restore(args.controller)
        else:
            p.synthesize()
        x0 = np.array(_floats(args.x0 or "14,15,20,16", "--x0"))
        xa = p.abstract_state(x0)
        if xa < 0 or not p.result.alive[xa]:
            print(f"uncontrollable start: {x0.tolist()}", file=sys.stderr)
            return EXIT_UNCONTROLLABLE
        traj = p.simulate(x0, args.steps, rule=args.rule or "first")
    else:
        p.synthesize()
        x0 = np.array(_floats(args.x0, "--x0")) if args.x0 else None
        if x0 is not None:
            xa = p.abstract_state(x0)
            if xa < 0 or not p.alive[xa]:
                print(f"uncontrollable start: {x0.tolist()}", file=sys.stderr)
                return EXIT_UNCONTROLLABLE
        horizon = args.steps * p.params.tau if args.steps is not None else None
        traj = p.simulate(x0, horizon=horizon, seed=args.seed, plant=args.plant, rule=args.rule or "score")
        traj.times = traj.times * 1e3              # CSV in milliseconds
    _write(args.csv, traj.to_csv())
    log.info("trajectory: %d rows, status=%s, all safe=%s", len(traj.states), traj.status, traj.all_safe)
    return EXIT_OK if traj.status == "ok" else EXIT_UNCONTROLLABLE


# ---------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symcomp", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0, help="single source of randomness")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--log", help="log file (default stderr)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    a = sub.add_parser("abstract", help="build a finite abstraction of a model")
    a.add_argument("--model", required=True)
    g = a.add_mutually_exclusive_group()
    g.add_argument("--grid")
    g.add_argument("--sequence", nargs=2, metavar=("XS", "N"))
    a.add_argument("--out", default="-")
    a.set_defaults(fn=cmd_abstract)

    c = sub.add_parser("compose", help="M-approximate composition of a network")
    c.add_argument("--network", required=True)
    c.add_argument("--M", help="comma-separated composition parameters (overrides the file)")
    c.add_argument("--reachable", action="store_true")
    c.add_argument("--out", default="-")
    c.set_defaults(fn=cmd_compose)

    d = sub.add_parser("diff", help="check that A's transitions are a subset of B's")
    d.add_argument("a")
    d.add_argument("b")
    d.set_defaults(fn=cmd_diff)

    s = sub.add_parser("synthesize", help="maximal safety controller")
    s.add_argument("--mode", choices=["monolithic", "bottom-up", "both"], default="bottom-up")
    s.add_argument("--network")
    s.add_argument("--safe")
    s.add_argument("--M")
    s.add_argument("--case", choices=["traffic", "microgrid-4", "microgrid-5"])
    s.add_argument("--sign-convention", default="default", choices=["default", "literal"])
    s.add_argument("--x0")
    s.add_argument("--schedule", type=int, default=0, choices=[0, 1, 2])
    s.add_argument("--out")
    s.add_argument("--report", default="-")
    s.set_defaults(fn=cmd_synthesize)

    k = sub.add_parser("check", help="randomized property suites")
    k.add_argument("--theorem", required=True, choices=sorted(SUITES))
    k.add_argument("--seeds", type=int, default=100)
    k.add_argument("--config")
    k.add_argument("--corrupt", action="store_true", help="mutate each instance (the suite must fail)")
    k.set_defaults(fn=cmd_check)

    m = sub.add_parser("simulate", help="closed-loop trajectory as CSV")
    m.add_argument("--system")
    m.add_argument("--controller")
    m.add_argument("--case", choices=["traffic", "microgrid-4", "microgrid-5"])
    m.add_argument("--sign-convention", default="default", choices=["default", "literal"])
    m.add_argument("--x0")
    m.add_argument("--steps", type=int)
    m.add_argument("--plant", choices=["composed", "network"], default="composed")
    m.add_argument("--rule", choices=["first", "score"])
    m.add_argument("--csv", default="-")
    m.set_defaults(fn=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, filename=args.log, format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "simulate" and args.steps is None and not args.case:
        args.steps = 10
    if args.cmd == "simulate" and args.case == "traffic" and args.steps is None:
        args.steps = 100
    log.info("symcomp %s numpy %s python %s kernels=%s threads=%d seed=%d",
             __version__, np.__version__, platform.python_version(), kernels.BACKEND_NAME,
             kernels.threads(), args.seed)
    t0 = time.perf_counter()
    try:
        code = args.fn(args)
    except (UsageError, ValidationError, MetricError, DomainError, AbstractionRefused,
            KeyError, ValueError) as exc:
        if isinstance(exc, IncompatibleError):
            print(f"incompatible: {exc}", file=sys.stderr)
            return EXIT_INCOMPATIBLE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (Uncontrollable, UncontrollableError) as exc:
        print(f"uncontrollable: {exc}", file=sys.stderr)
        return EXIT_UNCONTROLLABLE
    log.info("%s finished in %.2fs with exit %d", args.cmd, time.perf_counter() - t0, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
