import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_fts
from symcomp.fixtures import t3
from symcomp.relations import Relation, check_alt_simulation
from symcomp.ts import Controller, FiniteTransitionSystem, InputDomainError, ValidationError, canonical_dumps

A, B = 0, 1


def test_t3_admissible_at_zero():
    assert t3().admissible_inputs(0) == {(A, 0), (B, 0)}


def test_dead_state_has_no_admissible_inputs():
    S = FiniteTransitionSystem(2, [0], [(0, 0, 0, 1)], [[0], [1]])
    assert S.admissible_inputs(1) == set()


def test_self_loop_admits_everything():
    S = FiniteTransitionSystem(1, [0], [(0, e, 0, 0) for e in range(3)], [[0]], ext_values=[[0], [1], [2]])
    assert S.admissible_inputs(0) == {(0, 0), (1, 0), (2, 0)}


def test_admissible_out_of_range():
    with pytest.raises(InputDomainError):
        t3().admissible_inputs(3)


def test_t3_successors():
    S = t3()
    assert S.successors(0, A).tolist() == [0]
    assert S.successors(1, A).tolist() == [2]
    assert S.successors(1, B).tolist() == [0]


def test_non_admissible_input_gives_empty_set():
    S = FiniteTransitionSystem(2, [0], [(0, 0, 0, 1)], [[0], [1]], ext_values=[[0], [1]])
    assert S.successors(0, 1).size == 0


def test_successors_invalid_indices_raise():
    with pytest.raises(InputDomainError):
        t3().successors(0, 2)
    with pytest.raises(InputDomainError):
        t3().successors(-1, 0)


def test_restrict_full_controller_keeps_everything():
    S = t3()
    Sc = S.restrict_with_controller(Controller.full(S))
    assert Sc.n_states == 3
    assert Sc.transitions.tolist() == S.transitions.tolist()


def test_restrict_empty_controller():
    S = t3()
    assert S.restrict_with_controller(Controller(3)).n_states == 0


def test_restrict_t3_with_b_loop():
    S = t3()
    C = Controller(3, [(0, B, 0), (1, B, 0)])
    Sc = S.restrict_with_controller(C)
    assert Sc.n_states == 2
    assert Sc.transitions.tolist() == [[0, B, 0, 1], [1, B, 0, 0]]


def test_restrict_rejects_non_admissible():
    S = FiniteTransitionSystem(2, [0], [(0, 0, 0, 1)], [[0], [1]], ext_values=[[0], [1]])
    with pytest.raises(ValidationError):
        S.restrict_with_controller(Controller(2, [(0, 1, 0)]))


def test_determinism():
    assert t3().is_deterministic()
    assert not FiniteTransitionSystem(3, [0], [(0, 0, 0, 1), (0, 0, 0, 2)], [[0], [1], [2]]).is_deterministic()
    assert FiniteTransitionSystem(2, [0], [], [[0], [1]]).is_deterministic()


def test_validation_errors():
    with pytest.raises(ValidationError):
        FiniteTransitionSystem(2, [5], [], [[0], [1]])
    with pytest.raises(ValidationError):
        FiniteTransitionSystem(2, [0], [(0, 0, 0, 7)], [[0], [1]])
    with pytest.raises(ValidationError):
        FiniteTransitionSystem(2, [0], [], [[0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_restrict_then_admissible_equals_controller(seed):
    rng = np.random.default_rng(seed)
    S = random_fts(rng, int(rng.integers(2, 7)), n_int=2)
    adm = S.admissible_mask()
    C = Controller.from_mask(adm & (rng.random(adm.shape) < 0.5))
    Sc = S.restrict_with_controller(C)
    dom = set(C.domain().tolist())
    assert dom <= set(Sc.state_map.tolist())
    for k, x in enumerate(Sc.state_map):
        assert Sc.admissible_inputs(k) == (C.enabled(int(x)) if x in dom else set())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_controlled_system_alternatingly_simulated(seed):
    # the inclusion X_C -> X is a (0,0) alternating simulation from S|C to S;
    # states of S|C outside dom(C) have no inputs, so (iii) is vacuous there
    rng = np.random.default_rng(seed)
    S = random_fts(rng, int(rng.integers(2, 7)), n_int=2)
    adm = S.admissible_mask()
    C = Controller.from_mask(adm & (rng.random(adm.shape) < 0.6))
    Sc = S.restrict_with_controller(C)
    R = Relation.from_pairs(S.n_states, Sc.n_states, np.column_stack([Sc.state_map, np.arange(Sc.n_states)]))
    ok, wit = check_alt_simulation(S, Sc, R, 0.0, 0.0, check_initial=False)
    assert ok, wit


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_json_round_trip_is_byte_identical(seed):
    rng = np.random.default_rng(seed)
    S = random_fts(rng, int(rng.integers(1, 6)), n_int=3)
    s1 = S.dumps()
    S2 = FiniteTransitionSystem.loads(s1)
    assert S2.dumps() == s1
    assert S2.transitions.tolist() == S.transitions.tolist()


def test_json_layout():
    d = json.loads(t3().dumps())
    assert set(d) >= {"states", "initial", "ext_inputs", "int_inputs", "transitions"}
    assert d["transitions"][:2] == [[0, 0, 0, 0], [0, 1, 0, 1]]
    assert d["states"][0]["output"] == [0.0]


def test_controller_json_round_trip():
    C = Controller(3, [(1, 1, 0), (0, 0, 0), (0, 1, 0)])
    d = json.loads(C.dumps())
    assert d["entries"][0] == {"state": 0, "inputs": [[0, 0], [1, 0]]}
    assert Controller.from_json(d) == C
    assert canonical_dumps(C.to_json()) == C.dumps()
