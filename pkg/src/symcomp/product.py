"""Implicit representation of an M-approximate composition.

The product state space is never enumerated as a transition list.  For each
component i we tabulate, for every local state x_i, external input e_i and
tuple t_i of neighbour states, the union of the successor lists
Delta_i(x_i, e_i, v) over the internal inputs v that lie within mu_i of the
neighbour outputs.  A product transition exists iff every component has a
non-empty entry; its successors are the cartesian product of the entries.
Product states use a mixed-radix index with component 0 most significant.
"""
from __future__ import annotations

import string

import numpy as np

from . import kernels
from .metrics import SLACK, PseudometricDescriptor, neighbor_max, zero
from .ts import FiniteTransitionSystem


class IncompatibleError(ValueError):
    """The network is not compatible for the requested composition parameter."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


def mixed_strides(radix) -> np.ndarray:
    radix = np.asarray(radix, dtype=np.int64)
    s = np.ones(len(radix), dtype=np.int64)
    for i in range(len(radix) - 2, -1, -1):
        s[i] = s[i + 1] * radix[i + 1]
    return s


def match_internal_inputs(comp: FiniteTransitionSystem, nb_systems, mu: float):
    """For each neighbour-state tuple, the internal symbols within ``mu`` of its outputs.

    Returns (n_t, t_idx, v_idx): ``t_idx``/``v_idx`` list every matching
    (tuple, symbol) pair, sorted by tuple.  Tuples use mixed radix over
    ``nb_systems`` with the first neighbour most significant.
    """
    if not nb_systems:
        return 1, np.zeros(comp.n_int, dtype=np.int64), np.arange(comp.n_int, dtype=np.int64)
    d = comp.int_input_space
    parts = list(d.parts) if d.kind == "neighbor_max" else [d]
    if len(parts) != len(nb_systems):
        raise IncompatibleError("internal-input descriptor does not have one part per neighbour")
    thr = np.inf if np.isinf(mu) else mu + SLACK
    # per neighbour: boolean (n_int, |X_j|) of part-wise closeness
    blocks, off = [], 0
    for part, S_j in zip(parts, nb_systems):
        if part.dim != S_j.output_dim:
            raise IncompatibleError("neighbour output dimension differs from the internal-input part")
        vals = comp.int_values[:, off:off + part.dim]
        blocks.append(part.pairwise(vals, S_j.outputs) <= thr)
        off += part.dim
    sizes = [S.n_states for S in nb_systems]
    n_t = int(np.prod(sizes))
    t_all, v_all = [], []
    # candidates from the first neighbour, then filter by the others
    first = [np.flatnonzero(blocks[0][:, a]) for a in range(sizes[0])]
    rest_strides = mixed_strides(sizes)
    for t in range(n_t):
        digits = (t // rest_strides) % np.asarray(sizes)
        cand = first[digits[0]]
        for k in range(1, len(sizes)):
            if not len(cand):
                break
            cand = cand[blocks[k][cand, digits[k]]]
        if len(cand):
            t_all.append(np.full(len(cand), t, dtype=np.int64))
            v_all.append(cand.astype(np.int64))
    if t_all:
        return n_t, np.concatenate(t_all), np.concatenate(v_all)
    return n_t, np.zeros(0, np.int64), np.zeros(0, np.int64)


def _component_table(comp: FiniteTransitionSystem, n_t, t_idx, v_idx, counts_only=False):
    """CSR over keys (x, e, t) of union successor lists (or just their sizes)."""
    ne, ni = comp.n_ext, comp.n_int
    n_keys = comp.n_states * ne * n_t
    ptr_counts = np.zeros(n_keys, dtype=np.int64)
    chunks = []
    kp = comp.key_ptr
    e_ar = np.arange(ne, dtype=np.int64)
    for x in range(comp.n_states):
        # every (e, matched pair) combination
        keys = ((x * ne + e_ar[:, None]) * ni + v_idx[None, :]).ravel()
        tt = np.broadcast_to(t_idx[None, :], (ne, len(t_idx))).ravel()
        ee = np.broadcast_to(e_ar[:, None], (ne, len(t_idx))).ravel()
        lo, hi = kp[keys], kp[keys + 1]
        cnt = hi - lo
        if not cnt.sum():
            continue
        sel = cnt > 0
        lo, cnt, tt, ee = lo[sel], cnt[sel], tt[sel], ee[sel]
        idx = np.repeat(lo - np.r_[0, np.cumsum(cnt)[:-1]], cnt) + np.arange(cnt.sum())
        dst = comp.succ[idx].astype(np.int64)
        local = np.repeat(ee * n_t + tt, cnt)
        code = np.unique(local * comp.n_states + dst)
        lk = code // comp.n_states
        base = x * ne * n_t
        np.add.at(ptr_counts, base + lk, 1)
        if not counts_only:
            chunks.append((code % comp.n_states).astype(np.int32))
    if counts_only:
        return ptr_counts
    ptr = np.r_[0, np.cumsum(ptr_counts)].astype(np.int64)
    succ = np.concatenate(chunks) if chunks else np.zeros(0, np.int32)
    return ptr, succ


class ProductSystem:
    """Implicit M-approximate composition of ``components`` over ``neighbors``."""

    def __init__(self, components, neighbors, M, counts_only: bool = False, check: bool = True):
        self.components = list(components)
        self.neighbors = [list(nb) for nb in neighbors]
        self.M = tuple(float(m) for m in M)
        N = len(self.components)
        if len(self.neighbors) != N or len(self.M) != N:
            raise ValueError("one neighbour list and one mu per component")
        self.N = N
        self.radix = np.array([c.n_states for c in self.components], dtype=np.int64)
        self.stride = mixed_strides(self.radix)
        self.n_states = int(np.prod(self.radix))
        self.next = np.array([c.n_ext for c in self.components], dtype=np.int64)
        self.n_ext = int(np.prod(self.next))
        self.ext_stride = mixed_strides(self.next)
        self.matches = []
        for i, comp in enumerate(self.components):
            nb = [self.components[j] for j in self.neighbors[i]]
            n_t, t_idx, v_idx = match_internal_inputs(comp, nb, self.M[i])
            if check:
                hit = np.zeros(n_t, dtype=bool)
                hit[t_idx] = True
                if not hit.all():
                    t = int(np.argmin(hit))
                    digits = tuple(int(d) for d in (t // mixed_strides([self.radix[j] for j in self.neighbors[i]]))
                                   % np.array([self.radix[j] for j in self.neighbors[i]]))
                    raise IncompatibleError(
                        f"component {i}: no internal input within {self.M[i]} of neighbour states {digits}",
                        (i, digits))
            self.matches.append((n_t, t_idx, v_idx))
        self.counts_only = counts_only
        self._tables = [_component_table(c, *m, counts_only=counts_only)
                        for c, m in zip(self.components, self.matches)]
        self._spec = None

    # ------------------------------------------------------------ indexing
    def encode(self, digits) -> int:
        return int(np.dot(np.asarray(digits, dtype=np.int64), self.stride))

    def decode(self, x):
        x = np.asarray(x, dtype=np.int64)
        return (x[..., None] // self.stride) % self.radix

    def encode_input(self, digits) -> int:
        return int(np.dot(np.asarray(digits, dtype=np.int64), self.ext_stride))

    def decode_input(self, e):
        e = np.asarray(e, dtype=np.int64)
        return (e[..., None] // self.ext_stride) % self.next

    def neighbor_tuple(self, i, digits) -> int:
        nb = self.neighbors[i]
        if not nb:
            return 0
        sizes = [self.radix[j] for j in nb]
        return int(np.dot([digits[j] for j in nb], mixed_strides(sizes)))

    def local_successors(self, i, x_i, e_i, t) -> np.ndarray:
        ptr, succ = self._tables[i]
        k = (x_i * self.next[i] + e_i) * self.matches[i][0] + t
        return succ[ptr[k]:ptr[k + 1]]

    def successors(self, x: int, e: int) -> np.ndarray:
        dig = self.decode(x)
        ed = self.decode_input(e)
        lists = []
        for i in range(self.N):
            s = self.local_successors(i, dig[i], ed[i], self.neighbor_tuple(i, dig))
            if not len(s):
                return np.zeros(0, dtype=np.int64)
            lists.append(s.astype(np.int64) * self.stride[i])
        tot = lists[0]
        for p in lists[1:]:
            tot = (tot[:, None] + p[None, :]).ravel()
        return np.sort(tot)

    def kernel_spec(self):
        if self.counts_only:
            raise RuntimeError("product built with counts_only has no successor lists")
        if self._spec is None:
            nb_ptr = np.zeros(self.N + 1, dtype=np.int64)
            nb_idx, nb_stride = [], []
            for i, nb in enumerate(self.neighbors):
                nb_ptr[i + 1] = nb_ptr[i] + len(nb)
                nb_idx += nb
                nb_stride += list(mixed_strides([self.radix[j] for j in nb])) if nb else []
            n_t = np.array([m[0] for m in self.matches], dtype=np.int64)
            tab_off = np.zeros(self.N, dtype=np.int64)
            succ_off = np.zeros(self.N, dtype=np.int64)
            ptrs, succs = [], []
            t_off = s_off = 0
            for i, (ptr, succ) in enumerate(self._tables):
                tab_off[i] = t_off
                succ_off[i] = s_off
                ptrs.append(ptr)
                succs.append(succ)
                t_off += len(ptr)
                s_off += len(succ)
            self._spec = (
                self.radix.copy(), self.stride.copy(), self.next.copy(), nb_ptr,
                np.asarray(nb_idx, dtype=np.int64), np.asarray(nb_stride, dtype=np.int64),
                n_t, tab_off, succ_off,
                np.concatenate(ptrs).astype(np.int64),
                np.concatenate(succs).astype(np.int32) if s_off else np.zeros(1, np.int32),
            )
        return self._spec

    # -------------------------------------------------------------- counts
    def _factor_tensors(self, indicator: bool):
        ops, subs = [], []
        letters = string.ascii_letters
        for i in range(self.N):
            table = self._tables[i]
            cnt = table if self.counts_only else np.diff(table[0])
            cnt = cnt.reshape(self.radix[i], self.next[i], self.matches[i][0])
            if indicator:
                cnt = cnt > 0
            g = cnt.sum(axis=1, dtype=np.float64)
            shape = [self.radix[i]] + [self.radix[j] for j in self.neighbors[i]]
            ops.append(g.reshape(shape))
            subs.append(letters[i] + "".join(letters[j] for j in self.neighbors[i]))
        return ops, subs

    def transition_count(self) -> int:
        """Number of (x, e, x') transitions, by factor contraction."""
        ops, subs = self._factor_tensors(False)
        expr = ",".join(subs) + "->"
        return int(round(float(np.einsum(expr, *ops, optimize=True))))

    def admissible_pair_count(self) -> int:
        ops, subs = self._factor_tensors(True)
        expr = ",".join(subs) + "->"
        return int(round(float(np.einsum(expr, *ops, optimize=True))))

    # ------------------------------------------------------------ synthesis
    def product_mask(self, local_masks) -> np.ndarray:
        """uint8 flat mask of the product set prod_i local_masks[i]."""
        out = np.ones(1, dtype=np.uint8)
        for m in local_masks:
            out = (out[:, None] & np.asarray(m, dtype=np.uint8)[None, :]).ravel()
        return out

    def fixpoint(self, safe, schedule: int = 0):
        """Maximal controlled invariant inside ``safe`` (flat uint8 mask or list of local masks)."""
        if isinstance(safe, (list, tuple)):
            alive = self.product_mask(safe)
        else:
            alive = np.ascontiguousarray(safe, dtype=np.uint8).copy()
        if len(alive) != self.n_states:
            raise ValueError("safe mask has the wrong size")
        if self.n_ext > 65535:
            raise ValueError("too many product inputs for the witness cache")
        witness = np.zeros(self.n_states, dtype=np.uint16)
        rounds = kernels.product_fixpoint(self.kernel_spec(), alive, witness, schedule)
        return alive, rounds

    def enabled(self, alive, states) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states, dtype=np.int64))
        return kernels.product_enabled(self.kernel_spec(), alive, states).astype(bool)

    def count_enabled(self, alive) -> int:
        return int(kernels.product_count_enabled(self.kernel_spec(), alive))

    # ----------------------------------------------------------- explicit
    def output_space(self) -> PseudometricDescriptor:
        return neighbor_max([c.output_space for c in self.components], range(self.N))

    def ext_input_space(self) -> PseudometricDescriptor:
        return neighbor_max([c.ext_input_space for c in self.components], range(self.N))

    def outputs(self, states=None) -> np.ndarray:
        states = np.arange(self.n_states) if states is None else np.asarray(states)
        dig = self.decode(states)
        return np.concatenate([self.components[i].outputs[dig[..., i]] for i in range(self.N)], axis=-1)

    def ext_values(self) -> np.ndarray:
        dig = self.decode_input(np.arange(self.n_ext))
        return np.concatenate([self.components[i].ext_values[dig[:, i]] for i in range(self.N)], axis=1)

    def initial(self) -> np.ndarray:
        out = np.zeros(1, dtype=np.int64)
        for i, c in enumerate(self.components):
            out = (out[:, None] + c.initial[None, :].astype(np.int64) * self.stride[i]).ravel()
        return np.sort(out)

    def materialize(self) -> FiniteTransitionSystem:
        key_ptr, succ = kernels.product_materialize(self.kernel_spec(), self.n_states)
        # kernel lists are in odometer order; sort each successor list
        counts = np.diff(key_ptr)
        if len(succ):
            grp = np.repeat(np.arange(len(counts)), counts)
            succ = succ[np.lexsort((succ, grp))]
        S = FiniteTransitionSystem.from_csr(
            self.n_states, self.initial(), key_ptr, succ, self.outputs(),
            ext_values=self.ext_values(), int_values=np.zeros((1, 0)),
            output_space=self.output_space(), ext_input_space=self.ext_input_space(),
            int_input_space=zero(),
        )
        S.component_radix = self.radix.copy()
        return S
