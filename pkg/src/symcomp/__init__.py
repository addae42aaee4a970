"""Compositional abstraction and bottom-up safety synthesis for networks of finite transition systems."""

__version__ = "0.1.0"

from .metrics import (  # noqa: E402
    MetricError, PseudometricDescriptor, discrete, internal_input_distance, linf, neighbor_max, output_distance,
    verify_pseudometric_axioms, zero,
)
from .ts import Controller, FiniteTransitionSystem, InputDomainError, ValidationError  # noqa: E402
from .product import IncompatibleError, ProductSystem  # noqa: E402
from .composition import CompositionParameter, Network, check_compatibility, compose, hat_M  # noqa: E402
from .relations import (  # noqa: E402
    Relation, check_alt_simulation, check_simulation, compose_relations, max_alt_simulation,
)
from .synthesis import (  # noqa: E402
    SafeSet, UncontrollableError, bottom_up_synthesis, completeness_check, maximal_controlled_invariant,
    maximal_safety_controller, monolithic_synthesis, project_controller_check, refine_controller,
)
from .abstraction import (  # noqa: E402
    AbstractionRefused, AbstractionResult, DomainError, GridSpec, grid_abstraction, interval_successor,
    sequence_abstraction,
)

__all__ = [
    "AbstractionRefused", "AbstractionResult", "CompositionParameter", "Controller", "DomainError",
    "FiniteTransitionSystem", "GridSpec", "IncompatibleError", "InputDomainError", "MetricError", "Network",
    "ProductSystem", "PseudometricDescriptor", "Relation", "SafeSet", "UncontrollableError", "ValidationError",
    "bottom_up_synthesis", "check_alt_simulation", "check_compatibility", "check_simulation", "completeness_check",
    "compose", "compose_relations", "discrete", "grid_abstraction", "hat_M", "internal_input_distance",
    "interval_successor", "linf", "max_alt_simulation", "maximal_controlled_invariant", "maximal_safety_controller",
    "monolithic_synthesis", "neighbor_max", "output_distance", "project_controller_check", "refine_controller",
    "sequence_abstraction", "verify_pseudometric_axioms", "zero",
]
