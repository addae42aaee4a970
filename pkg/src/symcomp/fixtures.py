"""Small reference systems used by the tests and the CLI examples."""
from __future__ import annotations

from .composition import Network
from .metrics import discrete
from .ts import FiniteTransitionSystem

A, B = 0, 1


def t3() -> FiniteTransitionSystem:
    """Three states, inputs a and b, no internal input.

    (0,a)->0, (0,b)->1, (1,a)->2, (1,b)->0, (2,a)->2, (2,b)->2.
    """
    T = [(0, A, 0, 0), (0, B, 0, 1), (1, A, 0, 2), (1, B, 0, 0), (2, A, 0, 2), (2, B, 0, 2)]
    return FiniteTransitionSystem(3, [0, 1, 2], T, [[0.0], [1.0], [2.0]], ext_values=[[0.0], [1.0]],
                                  ext_labels=["a", "b"], state_labels=["0", "1", "2"])


def example1() -> tuple[Network, list]:
    """Two components in a feedback loop with identity outputs.

    S1 has states {a, b} and reads S2's state; S2 has states {alpha, beta,
    gamma} and reads S1's state.  Safe sets are all of X1 and {beta}.
    Returns the network and the two safe masks.
    """
    al, be, ga = 0, 1, 2
    d1, d2 = discrete(1), discrete(1)
    # S1: internal input = S2 output
    T1 = [(A, 0, al, A), (A, 0, be, B), (A, 0, ga, A), (A, 0, ga, B),
          (B, 0, al, B), (B, 0, be, A)]
    S1 = FiniteTransitionSystem(2, [A, B], T1, [[0.0], [1.0]], int_values=[[0.0], [1.0], [2.0]],
                                output_space=d1, int_input_space=d2,
                                state_labels=["a", "b"], int_labels=["alpha", "beta", "gamma"])
    # S2: internal input = S1 output
    T2 = [(al, 0, A, be), (al, 0, B, ga), (be, 0, A, be), (be, 0, B, be),
          (ga, 0, A, ga), (ga, 0, B, be), (ga, 0, B, al)]
    S2 = FiniteTransitionSystem(3, [al, be, ga], T2, [[0.0], [1.0], [2.0]], int_values=[[0.0], [1.0]],
                                output_space=d2, int_input_space=d1,
                                state_labels=["alpha", "beta", "gamma"], int_labels=["a", "b"])
    net = Network([S1, S2], [(0, 1), (1, 0)])
    return net, [[True, True], [False, True, False]]
