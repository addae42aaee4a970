"""Safety synthesis: maximal controlled invariants, maximal controllers, bottom-up synthesis."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .composition import CompositionParameter, Network, compose, product_of
from .metrics import SLACK
from .product import ProductSystem, mixed_strides
from .relations import Relation, _input_close
from .ts import Controller, FiniteTransitionSystem

log = logging.getLogger(__name__)


class UncontrollableError(RuntimeError):
    """The state has no related abstract state inside the controller domain."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class SafeSet:
    """A subset of X, given explicitly or as an output box [lo, hi] evaluated through H."""

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=bool)

    @classmethod
    def from_states(cls, n, states) -> "SafeSet":
        m = np.zeros(n, dtype=bool)
        m[np.asarray(list(states), dtype=np.int64)] = True
        return cls(m)

    @classmethod
    def full(cls, n) -> "SafeSet":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def from_box(cls, S: FiniteTransitionSystem, lo, hi) -> "SafeSet":
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (S.output_dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (S.output_dim,))
        H = S.outputs
        return cls(((H >= lo - SLACK) & (H <= hi + SLACK)).all(axis=1))

    @property
    def states(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self):
        return int(self.mask.sum())

    def restrict(self, state_map) -> "SafeSet":
        return SafeSet(self.mask[np.asarray(state_map)])

    def to_json(self):
        return {"states": self.states.tolist(), "n_states": len(self.mask)}

    @classmethod
    def from_json(cls, d, S: FiniteTransitionSystem | None = None) -> "SafeSet":
        if "box" in d:
            return cls.from_box(S, d["box"][0], d["box"][1])
        n = d.get("n_states", S.n_states if S is not None else None)
        return cls.from_states(n, d["states"])


def _mask(safe, n):
    m = safe.mask if isinstance(safe, SafeSet) else np.asarray(safe, dtype=bool)
    if m.shape != (n,):
        raise ValueError("safe set size differs from the state count")
    return m


# ------------------------------------------------------------ monolithic
def controlled_invariant(S: FiniteTransitionSystem, safe, schedule: int = 0) -> tuple[np.ndarray, int]:
    """(Cont mask, number of shrinking rounds)."""
    alive = _mask(safe, S.n_states).astype(np.uint8).copy()
    if not S.n_states:
        return alive.astype(bool), 0
    rounds = kernels.csr_fixpoint(S.key_ptr, S.succ, alive, S.n_states, S.n_ext * S.n_int, schedule)
    return alive.astype(bool), int(rounds)


def maximal_controlled_invariant(S: FiniteTransitionSystem, safe, schedule: int = 0) -> np.ndarray:
    """Sorted state indices of Cont(safe)."""
    return np.flatnonzero(controlled_invariant(S, safe, schedule)[0])


def controller_from_invariant(S: FiniteTransitionSystem, cont_mask) -> Controller:
    if not S.n_states:
        return Controller(0, None, S.n_ext, S.n_int)
    en = kernels.csr_enabled(S.key_ptr, S.succ, np.asarray(cont_mask, dtype=np.uint8), S.n_ext * S.n_int)
    return Controller.from_mask(en.astype(bool).reshape(S.n_states, S.n_ext, S.n_int))


def maximal_safety_controller(S: FiniteTransitionSystem, safe, schedule: int = 0) -> Controller:
    cont, rounds = controlled_invariant(S, safe, schedule)
    C = controller_from_invariant(S, cont)
    C.rounds = rounds
    return C


def is_safety_controller(S: FiniteTransitionSystem, C: Controller, safe) -> tuple[bool, tuple | None]:
    """Both safety-controller conditions: dom(C) within safe, enabled successors within dom(C)."""
    m = _mask(safe, S.n_states)
    dom = np.zeros(S.n_states, dtype=bool)
    dom[C.domain()] = True
    bad = dom & ~m
    if bad.any():
        return False, ("i", int(np.argmax(bad)))
    for x, e, v in C.pairs:
        s = S.successors(int(x), int(e), int(v))
        if not len(s) or not dom[s].all():
            return False, ("ii", (int(x), int(e), int(v)))
    return True, None


def synthesis_report(cont_mask, rounds, controller_transitions, **extra) -> dict:
    rep = {"cont_size": int(np.count_nonzero(cont_mask)), "iterations": int(rounds),
           "controller_transitions": int(controller_transitions)}
    rep.update(extra)
    return rep


# ------------------------------------------------------------- bottom up
def _local_masks(net: Network, safes):
    out = []
    for comp, s in zip(net.components, safes):
        out.append(_mask(s, comp.n_states))
    return out


@dataclass
class BottomUpResult:
    local_controllers: list
    controlled: list                         # S_i | C*_i (compact, with state_map)
    product: ProductSystem                   # composition of the controlled components
    alive: np.ndarray                        # Cont on the composed controlled system
    rounds: int
    full_radix: np.ndarray
    sizes: dict = field(default_factory=dict)

    @property
    def full_stride(self):
        return mixed_strides(self.full_radix)

    def to_full(self, x_local) -> np.ndarray:
        """Composed-controlled indices -> full-product indices."""
        dig = self.product.decode(np.asarray(x_local, dtype=np.int64))
        out = np.zeros(dig.shape[:-1], dtype=np.int64)
        for i, c in enumerate(self.controlled):
            out = out + np.asarray(c.state_map)[dig[..., i]] * self.full_stride[i]
        return out

    def from_full(self, x_full):
        """Full-product index -> composed-controlled index, or -1 when outside."""
        dig = (int(x_full) // self.full_stride) % self.full_radix
        loc = []
        for i, c in enumerate(self.controlled):
            k = np.searchsorted(c.state_map, dig[i])
            if k >= len(c.state_map) or c.state_map[k] != dig[i]:
                return -1
            loc.append(k)
        return self.product.encode(loc)

    def enabled_full(self, x_full) -> np.ndarray:
        """Global external inputs enabled by C_I at a full-product state."""
        x = self.from_full(x_full)
        if x < 0 or not self.product.n_states or not self.alive[x]:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.product.enabled(self.alive, [x])[0])

    def controller(self) -> Controller:
        """C_I as an explicit controller on the full product indexing."""
        n_full = int(np.prod(self.full_radix))
        if not self.product.n_states:
            return Controller(n_full, None, self.product.n_ext, 1)
        states = np.flatnonzero(self.alive)
        en = self.product.enabled(self.alive, states) if len(states) else np.zeros((0, self.product.n_ext), bool)
        xs, es = np.nonzero(en)
        pairs = np.column_stack([self.to_full(states[xs]), es, np.zeros_like(es)])
        return Controller(n_full, pairs, self.product.n_ext, 1)

    @property
    def cont_size(self) -> int:
        return int(np.count_nonzero(self.alive))

    def report(self) -> dict:
        return synthesis_report(self.alive, self.rounds, self.sizes.get("controller_transitions", 0),
                                stages=dict(self.sizes))


def bottom_up_synthesis(net: Network, safes, M, schedule: int = 0, count_full: bool = True,
                        local_controllers=None, alive=None) -> BottomUpResult:
    """Local maximal controllers, composition of the controlled components, then global synthesis.

    ``local_controllers`` replaces the local maximal controllers (diagnostics only:
    completeness is guaranteed only for the maximal ones).  ``alive`` restores a
    previously computed Cont mask on the composed controlled system and skips
    the global fixed point.
    """
    M = M if isinstance(M, CompositionParameter) else CompositionParameter(M)
    masks = _local_masks(net, safes)
    local, controlled = [], []
    for i, (comp, m) in enumerate(zip(net.components, masks)):
        C = maximal_safety_controller(comp, m) if local_controllers is None else local_controllers[i]
        local.append(C)
        controlled.append(comp.restrict_with_controller(C))
    P = ProductSystem(controlled, net.neighbor_map(), M.mu)
    sizes = {"composed_states": P.n_states}
    if P.n_states:
        sizes["composed_transitions"] = P.transition_count()
        if alive is None:
            alive, rounds = P.fixpoint(np.ones(P.n_states, dtype=np.uint8), schedule)
        else:
            alive = np.asarray(alive, dtype=np.uint8)
            if alive.shape != (P.n_states,):
                raise ValueError("restored Cont mask does not match the composed controlled system")
            rounds = -1
        sizes["controller_transitions"] = P.count_enabled(alive)
    else:
        sizes["composed_transitions"] = 0
        alive, rounds = np.zeros(0, dtype=np.uint8), 0
        sizes["controller_transitions"] = 0
    full_radix = np.array([c.n_states for c in net.components], dtype=np.int64)
    sizes["full_states"] = int(np.prod(full_radix))
    if count_full:
        Pf = ProductSystem(net.components, net.neighbor_map(), M.mu, counts_only=True)
        sizes["full_transitions"] = Pf.transition_count()
    sizes["local_cont_sizes"] = [int(len(C.domain())) for C in local]
    sizes["cont_size"] = int(np.count_nonzero(alive))
    log.info("bottom-up: %s", sizes)
    return BottomUpResult(local, controlled, P, alive.astype(bool), int(rounds), full_radix, sizes)


@dataclass
class MonolithicResult:
    system: FiniteTransitionSystem | None
    product: ProductSystem | None
    alive: np.ndarray
    rounds: int
    controller_: Controller | None = None

    def controller(self) -> Controller:
        if self.controller_ is None:
            P = self.product
            states = np.flatnonzero(self.alive)
            en = P.enabled(self.alive.astype(np.uint8), states)
            xs, es = np.nonzero(en)
            self.controller_ = Controller(P.n_states, np.column_stack([states[xs], es, np.zeros_like(es)]), P.n_ext, 1)
        return self.controller_


def monolithic_synthesis(net: Network, safes, M, implicit: bool = False, schedule: int = 0) -> MonolithicResult:
    """Maximal safety controller of the composed system for the product safe set."""
    masks = _local_masks(net, safes)
    if implicit:
        P = product_of(net, M)
        alive, rounds = P.fixpoint([m.astype(np.uint8) for m in masks], schedule)
        return MonolithicResult(None, P, alive.astype(bool), int(rounds))
    S = compose(net, M)
    full = np.ones(1, dtype=bool)
    for m in masks:
        full = (full[:, None] & m[None, :]).ravel()
    cont, rounds = controlled_invariant(S, full, schedule)
    return MonolithicResult(S, None, cont, rounds, controller_from_invariant(S, cont))


def completeness_check(net: Network, safes, M, bottom_up: BottomUpResult | None = None,
                       monolithic: MonolithicResult | None = None) -> tuple[bool, int | None]:
    """Pointwise equality of enabled external inputs of C* and C_I over the full product."""
    bu = bottom_up or bottom_up_synthesis(net, safes, M, count_full=False)
    mono = monolithic or monolithic_synthesis(net, safes, M)
    a = mono.controller().pairs
    b = bu.controller().pairs
    if a.shape == b.shape and np.array_equal(a, b):
        return True, None
    sa = {tuple(r) for r in a.tolist()}
    sb = {tuple(r) for r in b.tolist()}
    diff = sorted(sa ^ sb)
    return False, int(diff[0][0])


def project_controller_check(C_star: Controller, net: Network, M, safes=None, local_controllers=None):
    """Every entry of the global maximal controller projects into the local maximal controllers.

    For (u_1..u_N) in C*(x) and every internal input v_i within delta_i of the
    neighbour outputs that is admissible with u_i at x_i, (u_i, v_i) must be
    in C*_i(x_i).  Returns (ok, witness (x, i, u_i, v_i)).
    """
    M = M if isinstance(M, CompositionParameter) else CompositionParameter(M)
    if local_controllers is None:
        if safes is None:
            raise ValueError("local safe sets or local controllers are required")
        local_controllers = [maximal_safety_controller(c, s) for c, s in zip(net.components, _local_masks(net, safes))]
    local_masks = [C.mask(c.n_ext, c.n_int) for C, c in zip(local_controllers, net.components)]
    radix = np.array([c.n_states for c in net.components], dtype=np.int64)
    stride = mixed_strides(radix)
    next_ = np.array([c.n_ext for c in net.components], dtype=np.int64)
    estride = mixed_strides(next_)
    nbm = net.neighbor_map()
    # per component: internal inputs within delta_i of each neighbour output tuple
    close = []
    for i, comp in enumerate(net.components):
        nb = nbm[i]
        if not nb:
            close.append(None)
            continue
        y = np.zeros((1, 0))
        for j in nb:
            y = np.concatenate([np.repeat(y, net.components[j].n_states, axis=0),
                                np.tile(net.components[j].outputs, (len(y), 1))], axis=1)
        D = comp.int_input_space.pairwise(comp.int_values, y)
        close.append(D <= M[i] + SLACK)
    for x, e, _ in C_star.pairs:
        dig = (x // stride) % radix
        ed = (e // estride) % next_
        for i, comp in enumerate(net.components):
            adm = comp.admissible_mask()[dig[i], ed[i]]
            if close[i] is None:
                vs = np.flatnonzero(adm)
            else:
                t = int(np.dot([dig[j] for j in nbm[i]], mixed_strides([radix[j] for j in nbm[i]])))
                vs = np.flatnonzero(close[i][:, t] & adm)
            miss = ~local_masks[i][dig[i], ed[i], vs]
            if miss.any():
                return False, (int(x), i, int(ed[i]), int(vs[np.argmax(miss)]))
    return True, None


# ------------------------------------------------------------ refinement
def refine_controller(C_abs: Controller, R: Relation, S: FiniteTransitionSystem, S_hat: FiniteTransitionSystem,
                      mu: float | None = None):
    """State feedback for S from a controller for the abstraction S_hat.

    R is a subset of X x X_hat and an alternating simulation from S_hat to S.  The
    returned callable maps a concrete state to a concrete input pair (e, v)
    witnessing the alternating-simulation step for some abstract input enabled
    by C_abs; it raises UncontrollableError when no related abstract state is
    in dom(C_abs).
    """
    mu = R.mu if mu is None else mu
    close = _input_close(S, S_hat, mu)
    dom = np.zeros(S_hat.n_states, dtype=bool)
    dom[C_abs.domain()] = True

    def feedback(x: int):
        for xh in np.flatnonzero(R.mask[x] & dom):
            for (eh, vh) in sorted(C_abs.enabled(int(xh))):
                targets = S_hat.successors(int(xh), eh, vh)
                kh = eh * S_hat.n_int + vh
                for k in np.flatnonzero(close[:, kh]):
                    e, v = int(k) // S.n_int, int(k) % S.n_int
                    succ = S.successors(x, e, v)
                    if len(succ) and all(R.mask[s, targets].any() for s in succ):
                        return e, v
        raise UncontrollableError(f"state {x} has no related abstract state in dom(C)", x)

    return feedback
