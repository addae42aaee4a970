"""Seeded random networks and the property suites behind ``symcomp check``.

Each suite draws one network per seed and returns a :class:`SuiteResult`.
Generator parameters live in a config dict (see ``DEFAULTS``); the test
suite reads the same keys from ``tests/randnet.json``.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .composition import CompositionParameter, Network, compose
from .metrics import linf, neighbor_max
from .product import mixed_strides
from .relations import Relation, check_alt_simulation, check_simulation, compose_relations
from .synthesis import (
    bottom_up_synthesis, completeness_check, maximal_safety_controller, monolithic_synthesis,
    project_controller_check,
)
from .ts import Controller, FiniteTransitionSystem

log = logging.getLogger(__name__)

DEFAULTS = {
    "components": [2, 3],
    "states": [3, 6],
    "ext_inputs": 2,
    "edge_density": 0.5,
    "transition_density": 0.3,
    "output_levels": 4,
    "safe_density": [0.7, 1.0],
    "merge_probability": 0.5,
}


def load_config(path=None) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        with open(path) as fh:
            cfg.update(json.load(fh))
    return cfg


# -------------------------------------------------------------- generators
def random_network(rng: np.random.Generator, cfg=None, nonblocking: bool = False, extra_int: int = 0) -> Network:
    """Random network whose internal alphabets contain every exact neighbour output tuple.

    Outputs are integers in [0, output_levels); ``extra_int`` adds symbols at
    random non-exact values, so that matching under M > 0 can be ambiguous.
    """
    cfg = cfg or DEFAULTS
    N = int(rng.integers(cfg["components"][0], cfg["components"][1] + 1))
    sizes = rng.integers(cfg["states"][0], cfg["states"][1] + 1, size=N)
    edges = [(j, i) for i in range(N) for j in range(N) if j != i and rng.random() < cfg["edge_density"]]
    outs = [rng.integers(0, cfg["output_levels"], size=n).astype(float) for n in sizes]
    n_ext = int(cfg["ext_inputs"])
    comps = []
    for i in range(N):
        nb = sorted(j for j, k in edges if k == i)
        if nb:
            grids = np.meshgrid(*[np.unique(outs[j]) for j in nb], indexing="ij")
            V = np.stack([g.ravel() for g in grids], axis=1)
            if extra_int:
                V = np.concatenate([V, rng.uniform(-0.5, cfg["output_levels"] - 0.5, size=(extra_int, len(nb)))])
            ispace = neighbor_max([linf(1)] * len(nb), nb)
        else:
            V, ispace = np.zeros((1, 0)), None
        n, ni = int(sizes[i]), len(V)
        dense = rng.random((n, n_ext, ni, n)) < cfg["transition_density"]
        if nonblocking:
            empty = ~dense.any(axis=3)
            fill = rng.integers(0, n, size=empty.shape)
            dense[empty.nonzero() + (fill[empty],)] = True
        T = np.argwhere(dense)
        init = np.flatnonzero(rng.random(n) < 0.5)
        if not len(init):
            init = np.array([int(rng.integers(n))])
        comps.append(FiniteTransitionSystem(
            n, init, T, outs[i].reshape(-1, 1), np.arange(n_ext, dtype=float).reshape(-1, 1), V,
            int_input_space=ispace))
    return Network(comps, edges)


def random_partition(rng, n, p_merge) -> np.ndarray:
    """Class label per state; state k joins an earlier class with probability ``p_merge``."""
    lab = np.zeros(n, dtype=np.int64)
    n_cls = 1
    for k in range(1, n):
        if rng.random() < p_merge:
            lab[k] = int(rng.integers(n_cls))
        else:
            lab[k] = n_cls
            n_cls += 1
    return lab


def quotient(S: FiniteTransitionSystem, labels) -> tuple[FiniteTransitionSystem, Relation]:
    """Output-preserving quotient: class output = output of its smallest member, successors unioned.

    Returns the abstraction and the membership relation R subset X x X_hat,
    with eps = the largest distance between a member's output and its class output.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_cls = int(labels.max()) + 1
    rep = np.array([np.flatnonzero(labels == c)[0] for c in range(n_cls)])
    H = S.outputs[rep]
    T = S.transitions
    Tq = np.column_stack([labels[T[:, 0]], T[:, 1], T[:, 2], labels[T[:, 3]]]) if len(T) else T
    Sq = FiniteTransitionSystem(n_cls, labels[S.initial], Tq, H, S.ext_values, S.int_values,
                                S.output_space, S.ext_input_space, S.int_input_space)
    eps = float(S.output_space.rowwise(S.outputs, H[labels]).max()) if S.n_states else 0.0
    return Sq, Relation.from_map(S.n_states, n_cls, labels, eps=eps, mu=0.0)


def random_controller(rng, S: FiniteTransitionSystem, p=0.6) -> Controller:
    adm = S.admissible_mask()
    return Controller.from_mask(adm & (rng.random(adm.shape) < p))


def random_safe_sets(rng, net: Network, density) -> list[np.ndarray]:
    """Each state safe with probability ``density`` (a number, or a [lo, hi] range drawn once)."""
    if isinstance(density, (list, tuple)):
        density = rng.uniform(*density)
    return [rng.random(c.n_states) < density for c in net.components]


# ------------------------------------------------------------------ suites
@dataclass
class SuiteResult:
    name: str
    total: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)
    seconds: float = 0.0
    log: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def record(self, seed, ok, witness=None):
        self.total += 1
        self.passed += bool(ok)
        self.log.append((seed, bool(ok), witness))
        if not ok:
            self.failures.append((seed, witness))

    def summary(self) -> str:
        return f"{self.name}: {self.passed}/{self.total} passed in {self.seconds:.2f}s"


def _abstract_network(rng, net, cfg):
    abst, rels = [], []
    for c in net.components:
        q, r = quotient(c, random_partition(rng, c.n_states, cfg["merge_probability"]))
        abst.append(q)
        rels.append(r)
    return net.with_components(abst), rels


def _theorem12_case(seed, cfg, alternating: bool, corrupt: bool):
    rng = np.random.default_rng(seed)
    net = random_network(rng, cfg, nonblocking=alternating)
    M = CompositionParameter.zeros(net.N)            # mu_i = 0, exact internal alphabets: delta_i = 0
    anet, rels = _abstract_network(rng, net, cfg)
    eps = max(r.eps for r in rels)
    M_hat = CompositionParameter([m + 0.0 + eps for m in M])
    S = compose(net, M)
    S_hat = compose(anet, M_hat)
    R = compose_relations(rels)
    check = check_alt_simulation if alternating else check_simulation
    e = eps / 2 if corrupt else eps
    return check(S, S_hat, R, eps=e, mu=0.0)


def theorem1_suite(seeds, cfg=None, corrupt=False) -> SuiteResult:
    """Composed abstractions alternatingly simulate the composed concrete network."""
    return _run("theorem1", seeds, lambda s: _theorem12_case(s, cfg or DEFAULTS, True, corrupt))


def theorem2_suite(seeds, cfg=None, corrupt=False) -> SuiteResult:
    """Dual statement with (eps, mu)-approximate simulation relations."""
    return _run("theorem2", seeds, lambda s: _theorem12_case(s, cfg or DEFAULTS, False, corrupt))


def _claim1_case(seed, cfg, corrupt):
    rng = np.random.default_rng(seed)
    net = random_network(rng, cfg, extra_int=1)
    M = rng.uniform(0, 1.5, size=net.N)
    Mb = M + rng.uniform(0, 1.5, size=net.N)
    if corrupt:
        M, Mb = Mb, M
    S, Sb = compose(net, M), compose(net, Mb)
    T, Tb = S.transitions, Sb.transitions
    sub = {tuple(r) for r in T.tolist()} <= {tuple(r) for r in Tb.tolist()}
    ok, wit = check_simulation(S, Sb, Relation.identity(S.n_states), eps=0.0, mu=0.0)
    return ok and sub, wit if not ok else (None if sub else ("transitions", None))


def claim1_suite(seeds, cfg=None, corrupt=False) -> SuiteResult:
    """Enlarging M only adds transitions: identity (0,0)-simulation from S_M to S_Mbar."""
    return _run("claim1", seeds, lambda s: _claim1_case(s, cfg or DEFAULTS, corrupt))


def _lemma1_case(seed, cfg, corrupt):
    rng = np.random.default_rng(seed)
    net = random_network(rng, cfg)
    # single component with a random valid controller
    S = net.components[0]
    C = random_controller(rng, S)
    SC = S.restrict_with_controller(C)
    R = Relation.from_pairs(S.n_states, SC.n_states, np.column_stack([SC.state_map, np.arange(SC.n_states)]))
    if corrupt:
        ok, wit = check_alt_simulation(SC, S, R.transpose(), eps=0.0, mu=0.0)
        return ok, wit
    ok, wit = check_alt_simulation(S, SC, R, eps=0.0, mu=0.0)
    if not ok:
        return ok, ("component", wit)
    # composed controlled network against the composed network (product relation)
    safes = random_safe_sets(rng, net, cfg["safe_density"])
    locs = [maximal_safety_controller(c, m) for c, m in zip(net.components, safes)]
    ctrl = [c.restrict_with_controller(k) for c, k in zip(net.components, locs)]
    if any(c.n_states == 0 for c in ctrl):
        return True, None
    M = CompositionParameter.zeros(net.N)
    Sm, Scm = compose(net, M), compose(net.with_components(ctrl), M)
    rels = [Relation.from_pairs(c.n_states, k.n_states, np.column_stack([k.state_map, np.arange(k.n_states)]))
            for c, k in zip(net.components, ctrl)]
    ok, wit = check_alt_simulation(Sm, Scm, compose_relations(rels), eps=0.0, mu=0.0)
    return ok, None if ok else ("composed", wit)


def lemma1_suite(seeds, cfg=None, corrupt=False) -> SuiteResult:
    """S|C is (0,0)-alternatingly simulated by S through the inclusion map."""
    return _run("lemma1", seeds, lambda s: _lemma1_case(s, cfg or DEFAULTS, corrupt))


def _theorem3_instance(seed, cfg):
    rng = np.random.default_rng(seed)
    net = random_network(rng, cfg)
    safes = random_safe_sets(rng, net, cfg["safe_density"])
    return rng, net, safes, CompositionParameter.zeros(net.N)


def _theorem3_case(seed, cfg, corrupt):
    rng, net, safes, M = _theorem3_instance(seed, cfg)
    locs = None
    if corrupt:
        # drop a local entry that some global maximal-controller entry projects onto
        locs = [maximal_safety_controller(c, m) for c, m in zip(net.components, safes)]
        C_star = monolithic_synthesis(net, safes, M).controller()
        if len(C_star.pairs):
            x, e, _ = C_star.pairs[int(rng.integers(len(C_star.pairs)))]
            xd = (int(x) // mixed_strides([c.n_states for c in net.components])) % [c.n_states for c in net.components]
            ed = (int(e) // mixed_strides([c.n_ext for c in net.components])) % [c.n_ext for c in net.components]
            L = locs[0]
            keep = ~((L.pairs[:, 0] == xd[0]) & (L.pairs[:, 1] == ed[0]))
            locs[0] = Controller(L.n_states, L.pairs[keep], L.n_ext, L.n_int)
    bu = bottom_up_synthesis(net, safes, M, count_full=False, local_controllers=locs)
    return completeness_check(net, safes, M, bottom_up=bu)


def theorem3_suite(seeds, cfg=None, corrupt=False) -> SuiteResult:
    """Bottom-up synthesis is complete: C_I equals C* at every product state."""
    return _run("theorem3", seeds, lambda s: _theorem3_case(s, cfg or DEFAULTS, corrupt))


def _lemma2_case(seed, cfg, corrupt):
    rng, net, safes, M = _theorem3_instance(seed, cfg)
    C_star = monolithic_synthesis(net, safes, M).controller()
    locs = [maximal_safety_controller(c, m) for c, m in zip(net.components, safes)]
    if corrupt:
        # drop a local entry that the global controller relies on, when there is one
        for x, e, _ in C_star.pairs[:1]:
            stride = mixed_strides([c.n_states for c in net.components])
            x0 = (int(x) // int(stride[0])) % net.components[0].n_states
            L = locs[0]
            keep = L.pairs[:, 0] != x0
            locs[0] = Controller(L.n_states, L.pairs[keep], L.n_ext, L.n_int)
    return project_controller_check(C_star, net, M, local_controllers=locs)


def lemma2_suite(seeds, cfg=None, corrupt=False) -> SuiteResult:
    """Entries of the global maximal controller project into the local maximal controllers."""
    return _run("lemma2", seeds, lambda s: _lemma2_case(s, cfg or DEFAULTS, corrupt))


def _run(name, seeds, case) -> SuiteResult:
    res = SuiteResult(name)
    t0 = time.perf_counter()
    for s in seeds:
        ok, wit = case(int(s))
        res.record(int(s), ok, wit)
        log.debug("%s seed=%d ok=%s witness=%s", name, s, ok, wit)
    res.seconds = time.perf_counter() - t0
    return res


SUITES = {
    "1": theorem1_suite, "2": theorem2_suite, "3": theorem3_suite,
    "claim1": claim1_suite, "lemma1": lemma1_suite, "lemma2": lemma2_suite,
}
