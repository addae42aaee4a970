import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symcomp.metrics import (
    MetricError, PseudometricDescriptor, discrete, internal_input_distance, linf, neighbor_max, output_distance,
    verify_pseudometric_axioms, zero,
)

floats = st.floats(-100, 100, allow_nan=False)


def test_output_distance_identical_points():
    assert output_distance(linf(2), [1.5, -2.0], [1.5, -2.0]) == 0.0


def test_output_distance_is_max_of_coordinates():
    assert output_distance(linf(2), [1, 2], [4, 3]) == 3.0


def test_output_distance_dimension_mismatch():
    with pytest.raises(MetricError):
        output_distance(linf(2), [1, 2], [1, 2, 3])


@given(st.lists(floats, min_size=2, max_size=2), st.lists(floats, min_size=2, max_size=2))
def test_output_distance_symmetric(a, b):
    assert output_distance(linf(2), a, b) == output_distance(linf(2), b, a)


@given(floats, floats)
def test_scalar_distance_is_absolute_difference(a, b):
    assert output_distance(linf(1), [a], [b]) == pytest.approx(abs(a - b))


def test_internal_distance_without_neighbours_is_zero():
    assert internal_input_distance(zero(), [], []) == 0.0


def test_internal_distance_takes_max_over_neighbours():
    d = neighbor_max([linf(1), linf(1)], [3, 5])
    assert internal_input_distance(d, [1.0, 2.0], [1.4, 2.1]) == pytest.approx(0.4)
    assert internal_input_distance(d, [1.0, 2.0], [1.0, 2.0]) == 0.0


def test_internal_distance_structure_mismatch():
    d = neighbor_max([linf(1), linf(1)])
    with pytest.raises(MetricError):
        internal_input_distance(d, [1.0], [1.0])


def test_neighbor_max_with_vector_parts():
    d = neighbor_max([linf(2), discrete(1)])
    assert d.dim == 3
    assert d.distance([0, 0, 1], [0.5, -0.25, 1]) == 0.5
    assert d.distance([0, 0, 1], [0, 0, 2]) == 1.0


def test_linf_axioms_on_random_sample(rng):
    ok, bad = verify_pseudometric_axioms(linf(3), rng.normal(size=(100, 3)))
    assert ok and bad is None


def test_discrete_axioms():
    ok, _ = verify_pseudometric_axioms(discrete(1), np.arange(20.0).reshape(-1, 1) % 4)
    assert ok


def test_broken_distance_is_caught():
    class Broken(PseudometricDescriptor):
        def pairwise(self, A, B):
            A, B = self._rows(A), self._rows(B)
            return -np.ones((len(A), len(B)))

    ok, triple = verify_pseudometric_axioms(Broken("linf", 1), np.arange(4.0).reshape(-1, 1))
    assert not ok and triple is not None


@settings(max_examples=50)
@given(st.lists(st.tuples(floats, floats), min_size=3, max_size=8))
def test_neighbor_max_is_a_pseudometric(pts):
    d = neighbor_max([linf(1), linf(1)])
    ok, bad = verify_pseudometric_axioms(d, np.array(pts))
    assert ok, bad


@given(st.permutations([0, 1, 2]), st.lists(floats, min_size=3, max_size=3), st.lists(floats, min_size=3, max_size=3))
def test_max_composition_order_insensitive(perm, a, b):
    # composing scalar spaces in any order gives the same max
    d = neighbor_max([linf(1)] * 3)
    p = list(perm)
    assert d.distance(a, b) == d.distance(np.array(a)[p], np.array(b)[p])


def test_descriptor_json_round_trip():
    d = neighbor_max([linf(2), discrete(1)], [0, 4])
    assert PseudometricDescriptor.from_json(d.to_json()).same_space(d)


def test_pairwise_handles_empty_dimension():
    assert zero().pairwise(np.zeros((1, 0)), np.zeros((3, 0))).shape == (1, 3)
