import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CONFIG, random_fts
from symcomp import kernels
from symcomp import _pykernels
from symcomp.composition import Network, compose
from symcomp.fixtures import example1, t3
from symcomp.metrics import linf, neighbor_max
from symcomp.randnet import load_config, random_network, random_safe_sets
from symcomp.relations import Relation
from symcomp.synthesis import (
    SafeSet, UncontrollableError, bottom_up_synthesis, completeness_check, controlled_invariant,
    is_safety_controller, maximal_controlled_invariant, maximal_safety_controller, monolithic_synthesis,
    project_controller_check, refine_controller,
)
from symcomp.ts import Controller, FiniteTransitionSystem

A, B = 0, 1


def brute_force_cont(S, safe):
    """Union of every controlled invariant subset of ``safe`` (bitmask enumeration)."""
    n = S.n_states
    succ = {}
    for x, e, v, y in S.transitions.tolist():
        succ[(x, e, v)] = succ.get((x, e, v), 0) | (1 << y)
    by_state = [[m for (x, _, _), m in succ.items() if x == s] for s in range(n)]
    safe_bits = sum(1 << x for x in range(n) if safe[x])
    union = 0
    A_ = safe_bits
    while True:
        ok = all(any(m & ~A_ == 0 for m in by_state[x]) for x in range(n) if A_ >> x & 1)
        if ok:
            union |= A_
        if A_ == 0:
            break
        A_ = (A_ - 1) & safe_bits
    return [x for x in range(n) if union >> x & 1]


def test_t3_cont_and_controller():
    S = t3()
    assert maximal_controlled_invariant(S, [True, True, False]).tolist() == [0, 1]
    C = maximal_safety_controller(S, [True, True, False])
    assert C.enabled(0) == {(A, 0), (B, 0)}
    assert C.enabled(1) == {(B, 0)}
    assert C.enabled(2) == set()


def test_closed_safe_set_is_its_own_cont():
    S = t3()
    assert maximal_controlled_invariant(S, [True, True, True]).tolist() == [0, 1, 2]
    assert maximal_controlled_invariant(S, [False, False, True]).tolist() == [2]


def test_empty_safe_set():
    S = t3()
    assert maximal_controlled_invariant(S, [False] * 3).size == 0
    assert len(maximal_safety_controller(S, [False] * 3).pairs) == 0


def test_full_safe_set_gives_full_admissibility():
    S = t3()
    C = maximal_safety_controller(S, SafeSet.full(3))
    assert C == Controller.full(S)


@pytest.mark.parametrize("seed", range(50))
def test_cont_matches_subset_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 13))
    S = random_fts(rng, n, n_ext=2, n_int=int(rng.integers(1, 3)), density=float(rng.uniform(0.1, 0.4)))
    safe = rng.random(n) < rng.uniform(0.4, 1.0)
    assert maximal_controlled_invariant(S, safe).tolist() == brute_force_cont(S, safe)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_schedules_and_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    S = random_fts(rng, n, n_ext=3, n_int=2, density=0.15)
    safe = rng.random(n) < 0.8
    ref = controlled_invariant(S, safe, 0)[0]
    for sch in (1, 2):
        assert np.array_equal(controlled_invariant(S, safe, sch)[0], ref)
    for sch in (0, 1, 2):
        alive = safe.astype(np.uint8).copy()
        _pykernels.csr_fixpoint(S.key_ptr, S.succ, alive, S.n_states, S.n_ext * S.n_int, sch)
        assert np.array_equal(alive.astype(bool), ref)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_emitted_controllers_are_safety_controllers(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 15))
    S = random_fts(rng, n, n_int=2)
    safe = rng.random(n) < 0.7
    C = maximal_safety_controller(S, safe)
    assert is_safety_controller(S, C, safe) == (True, None)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_random_safety_controllers_are_dominated(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 10))
    S = random_fts(rng, n, n_int=2, density=0.3)
    safe = rng.random(n) < 0.8
    Cstar = {tuple(p) for p in maximal_safety_controller(S, safe).pairs.tolist()}
    adm = S.admissible_mask()
    pairs = {tuple(p) for p in np.argwhere(adm & (rng.random(adm.shape) < 0.7) & safe[:, None, None]).tolist()}
    # shrink until both safety-controller conditions hold
    while True:
        dom = {p[0] for p in pairs}
        bad = {p for p in pairs if not set(S.successors(*p).tolist()) <= dom}
        if not bad:
            break
        pairs -= bad
    C = Controller(n, sorted(pairs))
    assert is_safety_controller(S, C, safe)[0]
    assert pairs <= Cstar


def test_is_safety_controller_witnesses():
    S = t3()
    assert is_safety_controller(S, Controller(3, [(2, A, 0)]), [True, True, False])[1][0] == "i"
    assert is_safety_controller(S, Controller(3, [(1, A, 0)]), [True, True, False])[1][0] == "ii"


def test_safe_set_from_box():
    S = t3()
    assert SafeSet.from_box(S, 0.5, 2.0).states.tolist() == [1, 2]
    assert SafeSet.from_json({"states": [0], "n_states": 3}).states.tolist() == [0]


def test_example1_bottom_up_is_smaller_and_complete():
    net, safes = example1()
    bu = bottom_up_synthesis(net, safes, [0, 0])
    assert bu.sizes["composed_states"] < bu.sizes["full_states"]
    assert bu.sizes["composed_transitions"] < bu.sizes["full_transitions"]
    mono = monolithic_synthesis(net, safes, [0, 0])
    assert bu.controller() == mono.controller()
    assert completeness_check(net, safes, [0, 0]) == (True, None)


def test_full_local_safe_sets_match_monolithic(rng):
    cfg = load_config(CONFIG)
    for _ in range(10):
        net = random_network(rng, cfg)
        safes = [np.ones(c.n_states, bool) for c in net.components]
        M = [0.0] * net.N
        bu = bottom_up_synthesis(net, safes, M)
        assert bu.controller() == monolithic_synthesis(net, safes, M).controller()


def test_implicit_and_explicit_monolithic_agree(rng):
    cfg = load_config(CONFIG)
    for _ in range(10):
        net = random_network(rng, cfg)
        safes = random_safe_sets(rng, net, 0.8)
        M = [0.0] * net.N
        a = monolithic_synthesis(net, safes, M)
        b = monolithic_synthesis(net, safes, M, implicit=True)
        assert np.array_equal(a.alive, b.alive)
        assert a.controller() == b.controller()


def test_non_maximal_local_controllers_lose_completeness():
    cfg = load_config(CONFIG)
    found = False
    for seed in range(200):
        rng = np.random.default_rng(seed)
        net = random_network(rng, cfg)
        safes = random_safe_sets(rng, net, 1.0)
        M = [0.0] * net.N
        locs = []
        for c, s in zip(net.components, safes):
            C = maximal_safety_controller(c, s)
            if len(C.pairs) > 1:
                C = Controller(C.n_states, C.pairs[1:], C.n_ext, C.n_int)
            locs.append(C)
        bu = bottom_up_synthesis(net, safes, M, local_controllers=locs)
        ok, x = completeness_check(net, safes, M, bottom_up=bu)
        if not ok:
            found = True
            assert x is not None
            mono = {tuple(p) for p in monolithic_synthesis(net, safes, M).controller().pairs.tolist()}
            assert {tuple(p) for p in bu.controller().pairs.tolist()} < mono
            break
    assert found


def _ambiguous_match_network():
    # S2 has two internal symbols within 0.2 of S1's only output: one keeps S2 safe, one does not
    S1 = FiniteTransitionSystem(1, [0], [(0, 0, 0, 0)], [[0.0]])
    T2 = [(0, 0, 0, 0), (0, 0, 1, 1), (1, 0, 0, 1), (1, 0, 1, 1)]
    S2 = FiniteTransitionSystem(2, [0], T2, [[0.0], [1.0]], int_values=[[0.0], [0.2]],
                                int_input_space=neighbor_max([linf(1)], [0]))
    return Network([S1, S2], [(0, 1)]), [[True], [True, False]]


def test_approximate_matching_can_make_bottom_up_larger():
    net, safes = _ambiguous_match_network()
    M = [0.0, 0.2]
    mono = monolithic_synthesis(net, safes, M).controller()
    bu = bottom_up_synthesis(net, safes, M).controller()
    assert len(mono.pairs) == 0
    assert {tuple(p) for p in mono.pairs.tolist()} < {tuple(p) for p in bu.pairs.tolist()}
    assert not completeness_check(net, safes, M)[0]
    # with exact matching only the safe symbol is used and the two coincide
    assert completeness_check(net, safes, [0.0, 0.0])[0]


def test_projection_single_component():
    S = t3()
    net = Network([S])
    safe = [[True, True, False]]
    C = monolithic_synthesis(net, safe, [0.0]).controller()
    assert project_controller_check(C, net, [0.0], safes=safe) == (True, None)


def test_projection_random_and_corrupted():
    cfg = load_config(CONFIG)
    corrupted = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        net = random_network(rng, cfg)
        safes = random_safe_sets(rng, net, cfg["safe_density"])
        M = [0.0] * net.N
        C = monolithic_synthesis(net, safes, M).controller()
        assert project_controller_check(C, net, M, safes=safes)[0]
        if not len(C.pairs):
            continue
        locs = [maximal_safety_controller(c, s) for c, s in zip(net.components, safes)]
        # drop one local entry that some global entry projects onto
        x, e, _ = C.pairs[0]
        dig = np.unravel_index(int(x), [c.n_states for c in net.components])
        edig = np.unravel_index(int(e), [c.n_ext for c in net.components])
        L = locs[0]
        rows = [p for p in L.pairs.tolist() if not (p[0] == dig[0] and p[1] == edig[0])]
        locs[0] = Controller(L.n_states, rows, L.n_ext, L.n_int)
        ok, wit = project_controller_check(C, net, M, local_controllers=locs)
        assert not ok and wit[1] == 0
        corrupted += 1
    assert corrupted > 5


def test_refinement_with_identity_is_the_controller():
    S = t3()
    C = maximal_safety_controller(S, [True, True, False])
    fb = refine_controller(C, Relation.identity(3), S, S)
    assert fb(0) in C.enabled(0) and fb(1) == (B, 0)
    with pytest.raises(UncontrollableError):
        fb(2)


def test_rounds_reported():
    S = t3()
    C = maximal_safety_controller(S, [True, True, False])
    assert C.rounds == 0
    assert controlled_invariant(S, [True, True, False])[1] == 0
    # removing 1 forces 0 to rely on a alone
    cont, rounds = controlled_invariant(compose(Network([S]), [0.0]), [True, False, True])
    assert cont.tolist() == [True, False, True] and rounds == 0


def test_kernel_backend_is_reported():
    assert kernels.BACKEND_NAME in ("cython", "numpy")
