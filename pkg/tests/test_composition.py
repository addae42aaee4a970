import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symcomp.composition import CompositionParameter, Network, check_compatibility, compose, hat_M
from symcomp.fixtures import example1
from symcomp.metrics import neighbor_max, linf
from symcomp.product import IncompatibleError
from symcomp.randnet import load_config, random_network
from symcomp.relations import Relation, check_simulation
from symcomp.ts import FiniteTransitionSystem

from conftest import CONFIG


def brute_force_product(net, M):
    """Approximate composition by direct enumeration over product states and external inputs."""
    comps = net.components
    nbm = net.neighbor_map()
    sizes = [c.n_states for c in comps]
    next_ = [c.n_ext for c in comps]
    trans = set()
    states = list(itertools.product(*[range(n) for n in sizes]))
    index = {s: k for k, s in enumerate(states)}
    ext = list(itertools.product(*[range(n) for n in next_]))
    for s in states:
        for ek, e in enumerate(ext):
            unions = []
            for i, c in enumerate(comps):
                y = [c2 for j in nbm[i] for c2 in comps[j].outputs[s[j]]]
                succ = set()
                for v in range(c.n_int):
                    if nbm[i]:
                        d = max(abs(a - b) for a, b in zip(c.int_values[v], y))
                        if d > M[i] + 1e-12:
                            continue
                    succ |= set(c.successors(s[i], e[i], v).tolist())
                unions.append(sorted(succ))
            if all(unions):
                for t in itertools.product(*unions):
                    trans.add((index[s], ek, 0, index[t]))
    return trans


def _scalar(n, outputs, int_values=None, T=(), n_ext=1, space=None):
    return FiniteTransitionSystem(n, range(n), list(T), np.asarray(outputs, float).reshape(-1, 1),
                                  ext_values=np.arange(n_ext, dtype=float).reshape(-1, 1),
                                  int_values=int_values, int_input_space=space)


def test_exact_alphabets_compatible_for_zero():
    net, _ = example1()
    assert check_compatibility(net, [0, 0]) == (True, None)


def test_single_component_always_compatible():
    net = Network([_scalar(3, [0, 1, 2])])
    assert check_compatibility(net, [0.0])[0]


def test_half_cell_matching_and_witness():
    S1 = _scalar(3, [0, 1, 2])
    S2 = _scalar(2, [0, 0], int_values=[[0.5], [1.5]], space=neighbor_max([linf(1)], [0]))
    net = Network([S1, S2], [(0, 1)])
    assert check_compatibility(net, [0.0, 0.5]) == (True, None)
    ok, wit = check_compatibility(net, [0.0, 0.4])
    assert not ok and wit == (1, (0,))
    with pytest.raises(IncompatibleError):
        compose(net, [0.0, 0.4])


def test_single_component_passthrough():
    T = [(0, 0, 0, 1), (1, 1, 0, 0), (1, 0, 0, 1)]
    S = _scalar(2, [3, 4], T=T, n_ext=2)
    C = compose(Network([S]), [0.0])
    assert C.n_int == 1 and C.n_states == 2
    assert C.transitions.tolist() == S.transitions.tolist()
    assert C.outputs.tolist() == S.outputs.tolist()


def test_example1_product_matches_brute_force():
    net, _ = example1()
    S = compose(net, [0, 0])
    assert S.n_states == 6
    assert {tuple(t) for t in S.transitions.tolist()} == brute_force_product(net, [0, 0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0, 1.5))
def test_random_product_matches_brute_force(seed, mu):
    rng = np.random.default_rng(seed)
    net = random_network(rng, load_config(CONFIG), extra_int=1)
    M = [mu] * net.N
    if not check_compatibility(net, M)[0]:
        return
    S = compose(net, M)
    assert {tuple(t) for t in S.transitions.tolist()} == brute_force_product(net, M)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0, 1.0), st.floats(0, 1.0))
def test_larger_M_adds_transitions(seed, mu, extra):
    rng = np.random.default_rng(seed)
    net = random_network(rng, load_config(CONFIG), extra_int=1)
    M = CompositionParameter([mu] * net.N)
    Mbar = CompositionParameter([mu + extra] * net.N)
    assert Mbar >= M
    if not check_compatibility(net, M)[0]:
        return
    assert check_compatibility(net, Mbar)[0]
    a, b = compose(net, M), compose(net, Mbar)
    assert {tuple(t) for t in a.transitions.tolist()} <= {tuple(t) for t in b.transitions.tolist()}
    ok, wit = check_simulation(a, b, Relation.identity(a.n_states), 0.0, 0.0)
    assert ok, wit


def test_component_index_and_outputs():
    net, _ = example1()
    S = compose(net, [0, 0])
    # component 0 is the most significant digit
    assert S.component_index.tolist() == [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]]
    assert S.outputs.tolist() == [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]]
    assert S.initial.tolist() == list(range(6))


def test_composed_output_metric_is_max():
    net, _ = example1()
    S = compose(net, [0, 0])
    assert S.output_space.distance([0, 2], [1, 2]) == 1.0


def test_reachable_subset():
    net, _ = example1()
    full = compose(net, [0, 0])
    R = compose(net, [0, 0], reachable=True)
    assert set(R.product_index.tolist()) <= set(range(full.n_states))
    sub = {(int(R.product_index[a]), e, v, int(R.product_index[b])) for a, e, v, b in R.transitions.tolist()}
    assert sub <= {tuple(t) for t in full.transitions.tolist()}


def test_hat_M():
    assert hat_M([0.0, 0.1], [0.2, 0.0], 0.05).mu == pytest.approx((0.25, 0.15))


def test_negative_M_rejected():
    with pytest.raises(ValueError):
        CompositionParameter([-0.1])
