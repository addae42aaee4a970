"""(eps, mu)-approximate simulation and alternating simulation relations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import SLACK, MetricError
from .ts import FiniteTransitionSystem, canonical_dumps

INF = math.inf


@dataclass
class Relation:
    """Pairs of R subset X1 x X2 as a boolean matrix."""

    mask: np.ndarray
    eps: float = 0.0
    mu: float = 0.0
    initial_ok: bool | None = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ValueError("relation mask must be 2-D")

    @classmethod
    def from_pairs(cls, n1, n2, pairs, eps=0.0, mu=0.0) -> "Relation":
        m = np.zeros((n1, n2), dtype=bool)
        P = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(P):
            if (P < 0).any() or (P[:, 0] >= n1).any() or (P[:, 1] >= n2).any():
                raise IndexError("relation pair out of range")
            m[P[:, 0], P[:, 1]] = True
        return cls(m, eps, mu)

    @classmethod
    def identity(cls, n, eps=0.0, mu=0.0) -> "Relation":
        return cls(np.eye(n, dtype=bool), eps, mu)

    @classmethod
    def from_map(cls, n1, n2, f, eps=0.0, mu=0.0) -> "Relation":
        """Graph of the map x1 -> f[x1] (entries < 0 are unrelated)."""
        f = np.asarray(f, dtype=np.int64)
        keep = f >= 0
        return cls.from_pairs(n1, n2, np.column_stack([np.flatnonzero(keep), f[keep]]), eps, mu)

    @property
    def pairs(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def shape(self):
        return self.mask.shape

    def __len__(self):
        return int(self.mask.sum())

    def transpose(self) -> "Relation":
        return Relation(self.mask.T.copy(), self.eps, self.mu)

    def __contains__(self, pair):
        return bool(self.mask[pair[0], pair[1]])

    def to_json(self) -> dict:
        mu = "inf" if math.isinf(self.mu) else self.mu
        return {"eps": self.eps, "mu": mu, "shape": list(self.mask.shape), "pairs": self.pairs.tolist()}

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())

    @classmethod
    def from_json(cls, d) -> "Relation":
        mu = INF if d.get("mu") == "inf" else float(d.get("mu", 0.0))
        P = np.asarray(d["pairs"], dtype=np.int64).reshape(-1, 2)
        shape = d.get("shape") or ([int(P[:, 0].max()) + 1, int(P[:, 1].max()) + 1] if len(P) else [0, 0])
        return cls.from_pairs(shape[0], shape[1], P, float(d.get("eps", 0.0)), mu)


# ---------------------------------------------------------------- helpers
def _check_spaces(S1: FiniteTransitionSystem, S2: FiniteTransitionSystem):
    if not S1.output_space.same_space(S2.output_space):
        raise MetricError("output spaces differ")
    if not S1.ext_input_space.same_space(S2.ext_input_space):
        raise MetricError("external input spaces differ")
    if not S1.int_input_space.same_space(S2.int_input_space):
        raise MetricError("internal input spaces differ")


def _leq(D, thr):
    if math.isinf(thr):
        return np.ones(D.shape, dtype=bool)
    return D <= thr + SLACK


def _input_close(S1, S2, mu) -> np.ndarray:
    """(n_in1, n_in2) boolean: max(d_ext, d_int) <= mu, input pair index e * n_int + v."""
    if math.isinf(mu):
        return np.ones((S1.n_ext * S1.n_int, S2.n_ext * S2.n_int), dtype=bool)
    de = S1.ext_input_space.pairwise(S1.ext_values, S2.ext_values)
    di = S1.int_input_space.pairwise(S1.int_values, S2.int_values)
    D = np.maximum(de[:, None, :, None], di[None, :, None, :])
    return _leq(D.reshape(S1.n_ext * S1.n_int, S2.n_ext * S2.n_int), mu)


def _succ_matrix(S: FiniteTransitionSystem, states) -> np.ndarray:
    """float32 (len(states) * n_in, n_states) indicator of successor lists."""
    n_in = S.n_ext * S.n_int
    states = np.asarray(states, dtype=np.int64)
    keys = (states[:, None] * n_in + np.arange(n_in)[None, :]).ravel()
    M = np.zeros((len(keys), S.n_states), dtype=np.float32)
    lo, hi = S.key_ptr[keys], S.key_ptr[keys + 1]
    cnt = hi - lo
    rows = np.repeat(np.arange(len(keys)), cnt)
    idx = np.repeat(lo - np.r_[0, np.cumsum(cnt)[:-1]], cnt) + np.arange(cnt.sum())
    M[rows, S.succ[idx]] = 1.0
    return M


def _adm(S, states) -> np.ndarray:
    n_in = S.n_ext * S.n_int
    return (np.diff(S.key_ptr) > 0).reshape(S.n_states, n_in)[np.asarray(states, dtype=np.int64)]


def _split_input(S, k):
    return (int(k) // S.n_int, int(k) % S.n_int)


def _output_ok(S1, S2, mask, eps):
    D = S1.output_space.pairwise(S1.outputs, S2.outputs)
    return _leq(D, eps)


# ------------------------------------------------------------- simulation
def _sim_violations(S1, S2, R, close):
    """Boolean (n1, n2) of related pairs with an S1 move that S2 cannot match, plus a witness finder."""
    n_in1 = S1.n_ext * S1.n_int
    bad = np.zeros(R.shape, dtype=bool)
    Rf = R.astype(np.float32)
    for x2 in np.flatnonzero(R.any(axis=0)):
        xs1 = np.flatnonzero(R[:, x2])
        Succ2 = _succ_matrix(S2, [x2])                    # (n_in2, n2)
        A = (Rf @ Succ2.T) > 0                            # A[x1', k2]: some k2-successor related to x1'
        A &= _adm(S2, [x2])[0][None, :]
        B = (A.astype(np.float32) @ close.T.astype(np.float32)) > 0   # B[x1', k1]
        Succ1 = _succ_matrix(S1, xs1).reshape(len(xs1), n_in1, S1.n_states)
        # violated if some successor x1' of (x1, k1) has B[x1', k1] false
        miss = np.einsum("akn,nk->ak", Succ1, (~B).astype(np.float32)) > 0
        bad[xs1, x2] = miss.any(axis=1)
    return bad


def check_simulation(S1, S2, R: Relation, eps=None, mu=None, check_initial: bool = True):
    """(eps, mu)-approximate simulation from S1 to S2.  Returns (ok, witness) with witness (condition, data)."""
    _check_spaces(S1, S2)
    eps = R.eps if eps is None else eps
    mu = R.mu if mu is None else mu
    M = R.mask
    if M.shape != (S1.n_states, S2.n_states):
        raise ValueError("relation shape does not match the systems")
    if check_initial:
        for x1 in S1.initial:
            if not M[x1, S2.initial].any():
                return False, ("i", int(x1))
    outs = _output_ok(S1, S2, M, eps)
    viol = M & ~outs
    if viol.any():
        a, b = np.argwhere(viol)[0]
        return False, ("ii", (int(a), int(b)))
    close = _input_close(S1, S2, mu)
    bad = _sim_violations(S1, S2, M, close)
    if bad.any():
        a, b = np.argwhere(bad)[0]
        return False, ("iii", (int(a), int(b)))
    return True, None


# --------------------------------------------------- alternating simulation
def _alt_violations(S1, S2, R, close):
    """Boolean (n1, n2) of related pairs where some S2 input has no answering S1 input."""
    n_in1 = S1.n_ext * S1.n_int
    bad = np.zeros(R.shape, dtype=bool)
    Rf = R.astype(np.float32)
    for x2 in np.flatnonzero(R.any(axis=0)):
        xs1 = np.flatnonzero(R[:, x2])
        adm2 = _adm(S2, [x2])[0]
        if not adm2.any():
            continue
        Succ2 = _succ_matrix(S2, [x2])[adm2]              # (k2, n2)
        G = (Rf @ Succ2.T) > 0                            # G[x1', k2]
        Succ1 = _succ_matrix(S1, xs1)                     # (m * n_in1, n1)
        badcnt = Succ1 @ (~G).astype(np.float32)          # (m * n_in1, k2)
        good = (badcnt == 0).reshape(len(xs1), n_in1, -1)
        good &= _adm(S1, xs1)[:, :, None]
        good &= close[:, adm2][None, :, :]
        bad[xs1, x2] = ~good.any(axis=1).all(axis=1)
    return bad


def check_alt_simulation(S1, S2, R: Relation, eps=None, mu=None, check_initial: bool = True):
    """Check that R subset X1 x X2 is an (eps, mu)-approximate alternating simulation from S2 to S1."""
    _check_spaces(S1, S2)
    eps = R.eps if eps is None else eps
    mu = R.mu if mu is None else mu
    M = R.mask
    if M.shape != (S1.n_states, S2.n_states):
        raise ValueError("relation shape does not match the systems")
    if check_initial:
        for x2 in S2.initial:
            if not M[S1.initial, x2].any():
                return False, ("i", int(x2))
    viol = M & ~_output_ok(S1, S2, M, eps)
    if viol.any():
        a, b = np.argwhere(viol)[0]
        return False, ("ii", (int(a), int(b)))
    bad = _alt_violations(S1, S2, M, _input_close(S1, S2, mu))
    if bad.any():
        a, b = np.argwhere(bad)[0]
        return False, ("iii", (int(a), int(b)))
    return True, None


def max_alt_simulation(S2, S1, eps, mu, schedule: str = "bulk") -> Relation:
    """Greatest R subset X1 x X2 satisfying the output and input-answer conditions (alternating simulation from S2 to S1).

    ``schedule='bulk'`` removes every violating pair of a round at once;
    ``'single'`` removes one pair per step.  ``initial_ok`` on the result
    reports condition (i).
    """
    _check_spaces(S1, S2)
    R = _output_ok(S1, S2, None, eps).copy()
    close = _input_close(S1, S2, mu)
    while True:
        bad = _alt_violations(S1, S2, R, close)
        if not bad.any():
            break
        if schedule == "single":
            a, b = np.argwhere(bad)[-1]
            R[a, b] = False
        else:
            R &= ~bad
    rel = Relation(R, eps, mu)
    rel.initial_ok = all(R[S1.initial, x2].any() for x2 in S2.initial)
    return rel


def compose_relations(relations, shapes=None) -> Relation:
    """Product relation {(x, x_hat) | (x_i, x_hat_i) in R_i for all i} over mixed-radix products.

    Component 0 is most significant, matching composition indexing; eps and mu
    aggregate by max.  ``shapes`` optionally lists the expected (|X_i|, |X_hat_i|).
    """
    rels = list(relations)
    if not rels:
        raise ValueError("at least one component relation is required")
    if shapes is not None:
        if len(shapes) != len(rels):
            raise ValueError("arity mismatch between relations and networks")
        for r, sh in zip(rels, shapes):
            if tuple(r.shape) != tuple(sh):
                raise ValueError(f"component relation has shape {r.shape}, expected {tuple(sh)}")
    M = np.ones((1, 1), dtype=bool)
    for r in rels:
        M = np.kron(M, r.mask).astype(bool)
    return Relation(M, max(r.eps for r in rels), max(r.mu for r in rels))
