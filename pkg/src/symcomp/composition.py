"""Networks of transition systems and M-approximate composition."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import MetricError
from .product import IncompatibleError, ProductSystem, match_internal_inputs, mixed_strides
from .ts import FiniteTransitionSystem, ValidationError, canonical_dumps

__all__ = [
    "Network", "CompositionParameter", "IncompatibleError", "check_compatibility",
    "compose", "composed_sidecar", "hat_M",
]


@dataclass
class Network:
    """Components indexed 0..N-1 and a connectivity relation of (j, i) pairs: j feeds i."""

    components: list
    edges: list = field(default_factory=list)

    def __post_init__(self):
        self.components = list(self.components)
        self.edges = sorted({(int(j), int(i)) for j, i in self.edges})
        N = len(self.components)
        for j, i in self.edges:
            if not (0 <= j < N and 0 <= i < N):
                raise ValidationError(f"edge ({j},{i}) out of range")
        self.validate()

    @property
    def N(self) -> int:
        return len(self.components)

    def neighbors(self, i: int) -> list[int]:
        return sorted(j for j, k in self.edges if k == i)

    def neighbor_map(self) -> list[list[int]]:
        return [self.neighbors(i) for i in range(self.N)]

    def validate(self):
        for i, comp in enumerate(self.components):
            nb = self.neighbors(i)
            d = comp.int_input_space
            if not nb:
                if comp.int_values.shape[1] != 0 and d.kind != "zero":
                    # allowed, but the internal-input test is vacuous only for the unit alphabet
                    pass
                continue
            dims = [self.components[j].output_dim for j in nb]
            if comp.int_values.shape[1] != sum(dims):
                raise MetricError(f"component {i}: internal inputs have dim {comp.int_values.shape[1]}, "
                                  f"neighbour outputs {dims}")
            if d.kind == "neighbor_max":
                if len(d.parts) != len(nb):
                    raise MetricError(f"component {i}: descriptor has {len(d.parts)} parts for {len(nb)} neighbours")
                for part, j in zip(d.parts, nb):
                    if not part.same_space(self.components[j].output_space):
                        raise MetricError(f"component {i}: part for neighbour {j} differs from its output space")
            elif len(nb) != 1 or not d.same_space(self.components[nb[0]].output_space):
                raise MetricError(f"component {i}: internal inputs need a neighbor_max descriptor")

    def with_components(self, components) -> "Network":
        return Network(list(components), list(self.edges))

    @classmethod
    def load(cls, path: str) -> tuple["Network", "CompositionParameter | None"]:
        with open(path) as fh:
            d = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        comps = []
        for c in d["components"]:
            if isinstance(c, str):
                with open(os.path.join(base, c)) as fh:
                    comps.append(FiniteTransitionSystem.from_json(json.load(fh)))
            else:
                comps.append(FiniteTransitionSystem.from_json(c))
        net = cls(comps, [tuple(e) for e in d.get("edges", [])])
        M = CompositionParameter(d["M"]) if "M" in d else None
        return net, M


@dataclass(frozen=True)
class CompositionParameter:
    mu: tuple

    def __init__(self, mu: Sequence[float]):
        vals = tuple(float(m) for m in mu)
        if any(not (m >= 0) for m in vals):
            raise ValidationError("composition parameters must be non-negative")
        object.__setattr__(self, "mu", vals)

    def __len__(self):
        return len(self.mu)

    def __iter__(self):
        return iter(self.mu)

    def __getitem__(self, i):
        return self.mu[i]

    def __ge__(self, other: "CompositionParameter"):
        return len(self) == len(other) and all(a >= b for a, b in zip(self.mu, other.mu))

    @classmethod
    def zeros(cls, n: int) -> "CompositionParameter":
        return cls([0.0] * n)


def hat_M(mu, delta, eps: float) -> CompositionParameter:
    """M_hat = (mu_i + delta_i + eps)_i used for abstractions of a delta-composed network."""
    return CompositionParameter([m + d + eps for m, d in zip(mu, delta)])


def _as_param(net, M) -> CompositionParameter:
    M = M if isinstance(M, CompositionParameter) else CompositionParameter(M)
    if len(M) != net.N:
        raise ValidationError(f"M has length {len(M)}, network has {net.N} components")
    return M


def check_compatibility(net: Network, M) -> tuple[bool, tuple | None]:
    """(True, None), or (False, (i, neighbour state tuple)) for the first uncovered tuple."""
    M = _as_param(net, M)
    for i, comp in enumerate(net.components):
        nb = net.neighbors(i)
        if not nb:
            continue
        n_t, t_idx, _ = match_internal_inputs(comp, [net.components[j] for j in nb], M[i])
        hit = np.zeros(n_t, dtype=bool)
        hit[t_idx] = True
        if not hit.all():
            t = int(np.argmin(hit))
            sizes = [net.components[j].n_states for j in nb]
            digits = tuple(int(d) for d in (t // mixed_strides(sizes)) % np.asarray(sizes))
            return False, (i, digits)
    return True, None


def product_of(net: Network, M, components=None, counts_only=False) -> ProductSystem:
    M = _as_param(net, M)
    comps = net.components if components is None else components
    return ProductSystem(comps, net.neighbor_map(), M.mu, counts_only=counts_only)


def compose(net: Network, M, reachable: bool = False) -> FiniteTransitionSystem:
    """The M-approximate composition as an explicit system with the unit internal alphabet.

    ``component_index`` on the result gives, per composed state, the tuple of
    component state indices.  With ``reachable`` only states reachable from
    X0 are kept.
    """
    ok, wit = check_compatibility(net, M)
    if not ok:
        raise IncompatibleError(f"incompatible at component {wit[0]}, neighbour states {wit[1]}", wit)
    P = product_of(net, M)
    S = P.materialize()
    idx = P.decode(np.arange(P.n_states))
    if reachable:
        seen = np.zeros(S.n_states, dtype=bool)
        frontier = S.initial.copy()
        seen[frontier] = True
        per_state = S.n_ext * S.n_int
        while len(frontier):
            keys = (frontier[:, None] * per_state + np.arange(per_state)[None, :]).ravel()
            lo, hi = S.key_ptr[keys], S.key_ptr[keys + 1]
            nxt = np.concatenate([S.succ[a:b] for a, b in zip(lo, hi)]) if len(keys) else np.zeros(0, np.int32)
            nxt = np.unique(nxt)
            nxt = nxt[~seen[nxt]]
            seen[nxt] = True
            frontier = nxt.astype(np.int64)
        keep = np.flatnonzero(seen)
        remap = np.full(S.n_states, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        T = S.transitions
        T = T[seen[T[:, 0]]]
        T = np.column_stack([remap[T[:, 0]], T[:, 1], T[:, 2], remap[T[:, 3]]])
        R = FiniteTransitionSystem(len(keep), remap[S.initial], T, S.outputs[keep], S.ext_values, S.int_values,
                                   S.output_space, S.ext_input_space, S.int_input_space)
        R.component_index = idx[keep]
        R.product_index = keep
        return R
    S.component_index = idx
    S.product_index = np.arange(P.n_states)
    return S


def composed_sidecar(S: FiniteTransitionSystem) -> str:
    """JSON mapping composed index -> component indices."""
    return canonical_dumps({"components": S.component_index.tolist()})
