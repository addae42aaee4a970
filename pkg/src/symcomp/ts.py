"""Finite transition systems with external and internal inputs, and memoryless controllers."""
from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .metrics import PseudometricDescriptor, linf, zero


class InputDomainError(IndexError):
    """An index does not refer to a declared state or input."""


class ValidationError(ValueError):
    pass


class FiniteTransitionSystem:
    """S = (X, X0, U_ext, U_int, Delta, Y, H) with index-identified states and inputs.

    Transitions are stored in CSR form keyed by ``(x * n_ext + e) * n_int + v``;
    successor lists are sorted and duplicate free.  ``ext_values`` and
    ``int_values`` give the coordinates of every input symbol in its metric
    space, ``outputs`` the value of H per state.
    """

    def __init__(
        self,
        n_states: int,
        initial: Iterable[int],
        transitions,
        outputs,
        ext_values=None,
        int_values=None,
        output_space: PseudometricDescriptor | None = None,
        ext_input_space: PseudometricDescriptor | None = None,
        int_input_space: PseudometricDescriptor | None = None,
        ext_labels: Sequence | None = None,
        int_labels: Sequence | None = None,
        state_labels: Sequence | None = None,
    ):
        self.n_states = int(n_states)
        outputs = np.asarray(outputs, dtype=float)
        if outputs.ndim == 1:
            outputs = outputs.reshape(-1, 1)
        if outputs.shape[0] != self.n_states:
            raise ValidationError("output map must be total on X")
        self.outputs = outputs
        if ext_values is None:
            ext_values = np.zeros((1, 0))
        if int_values is None:
            int_values = np.zeros((1, 0))
        self.ext_values = np.asarray(ext_values, dtype=float).reshape(len(ext_values), -1)
        self.int_values = np.asarray(int_values, dtype=float).reshape(len(int_values), -1)
        self.n_ext = len(self.ext_values)
        self.n_int = len(self.int_values)
        if self.n_ext < 1 or self.n_int < 1:
            raise ValidationError("input alphabets must be non-empty (use the unit symbol)")
        self.output_space = output_space or linf(outputs.shape[1])
        self.ext_input_space = ext_input_space or (linf(self.ext_values.shape[1]) if self.ext_values.shape[1] else zero())
        self.int_input_space = int_input_space or (linf(self.int_values.shape[1]) if self.int_values.shape[1] else zero())
        if self.output_space.dim != outputs.shape[1]:
            raise ValidationError("output descriptor dimension mismatch")
        if self.ext_input_space.dim != self.ext_values.shape[1]:
            raise ValidationError("external input descriptor dimension mismatch")
        if self.int_input_space.dim != self.int_values.shape[1]:
            raise ValidationError("internal input descriptor dimension mismatch")
        self.ext_labels = list(ext_labels) if ext_labels is not None else None
        self.int_labels = list(int_labels) if int_labels is not None else None
        self.state_labels = list(state_labels) if state_labels is not None else None

        init = np.unique(np.asarray(list(initial), dtype=np.int64))
        if init.size and (init.min() < 0 or init.max() >= self.n_states):
            raise ValidationError("X0 must be a subset of X")
        self.initial = init

        T = np.asarray(transitions, dtype=np.int64).reshape(-1, 4)
        if T.size:
            bounds = np.array([self.n_states, self.n_ext, self.n_int, self.n_states])
            if (T < 0).any() or (T >= bounds).any():
                raise ValidationError("transition endpoint or label out of range")
        self._set_csr(T)

    # ------------------------------------------------------------ storage
    def _set_csr(self, T: np.ndarray):
        nk = self.n_states * self.n_ext * self.n_int
        keys = (T[:, 0] * self.n_ext + T[:, 1]) * self.n_int + T[:, 2]
        order = np.lexsort((T[:, 3], keys))
        keys, dst = keys[order], T[order, 3]
        if len(keys):
            keep = np.ones(len(keys), dtype=bool)
            keep[1:] = (keys[1:] != keys[:-1]) | (dst[1:] != dst[:-1])
            keys, dst = keys[keep], dst[keep]
        self.key_ptr = np.zeros(nk + 1, dtype=np.int64)
        np.add.at(self.key_ptr, keys + 1, 1)
        np.cumsum(self.key_ptr, out=self.key_ptr)
        self.succ = dst.astype(np.int32)
        self._transitions = None

    @classmethod
    def from_csr(cls, n_states, initial, key_ptr, succ, outputs, **kw):
        """Build directly from CSR arrays (successor lists assumed sorted and unique)."""
        obj = cls.__new__(cls)
        cls.__init__(obj, n_states, initial, np.zeros((0, 4), dtype=np.int64), outputs, **kw)
        key_ptr = np.asarray(key_ptr, dtype=np.int64)
        if len(key_ptr) != obj.n_states * obj.n_ext * obj.n_int + 1:
            raise ValidationError("key_ptr length does not match the alphabets")
        obj.key_ptr = key_ptr
        obj.succ = np.asarray(succ, dtype=np.int32)
        if obj.succ.size and (obj.succ.min() < 0 or obj.succ.max() >= obj.n_states):
            raise ValidationError("successor out of range")
        return obj

    def key(self, x: int, e: int, v: int) -> int:
        self._check_state(x)
        if not (0 <= e < self.n_ext) or not (0 <= v < self.n_int):
            raise InputDomainError(f"input ({e},{v}) out of range")
        return (x * self.n_ext + e) * self.n_int + v

    def _check_state(self, x):
        if not (0 <= int(x) < self.n_states):
            raise InputDomainError(f"state {x} out of range [0,{self.n_states})")

    @property
    def transitions(self) -> np.ndarray:
        """(T,4) array of (x, e, v, x') in ascending lexicographic order."""
        if self._transitions is None:
            counts = np.diff(self.key_ptr)
            keys = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
            v = keys % self.n_int
            xe = keys // self.n_int
            self._transitions = np.stack(
                [xe // self.n_ext, xe % self.n_ext, v, self.succ.astype(np.int64)], axis=1
            )
        return self._transitions

    @property
    def n_transitions(self) -> int:
        return len(self.succ)

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]

    # --------------------------------------------------------------- queries
    def successors(self, x: int, u_ext: int, u_int: int = 0) -> np.ndarray:
        k = self.key(x, u_ext, u_int)
        return self.succ[self.key_ptr[k]:self.key_ptr[k + 1]]

    def admissible_mask(self) -> np.ndarray:
        """Boolean (n_states, n_ext, n_int) array of enabled inputs."""
        return (np.diff(self.key_ptr) > 0).reshape(self.n_states, self.n_ext, self.n_int)

    def admissible_inputs(self, x: int) -> set[tuple[int, int]]:
        self._check_state(x)
        m = self.admissible_mask()[x]
        return {(int(e), int(v)) for e, v in zip(*np.nonzero(m))}

    def is_deterministic(self) -> bool:
        return bool((np.diff(self.key_ptr) <= 1).all())

    def is_nonblocking(self) -> bool:
        return bool(self.admissible_mask().all())

    def restrict_with_controller(self, C: "Controller", compact: bool = True) -> "FiniteTransitionSystem":
        """The controlled system S|C.

        With ``compact`` the state set is dom(C) plus every successor reached
        through an enabled transition, re-indexed in ascending order;
        ``state_map`` on the result maps new indices to indices of ``self``.
        """
        C.validate(self)
        keys = (C.pairs[:, 0] * self.n_ext + C.pairs[:, 1]) * self.n_int + C.pairs[:, 2]
        lo, hi = self.key_ptr[keys], self.key_ptr[keys + 1]
        counts = hi - lo
        idx = np.repeat(lo - np.cumsum(np.r_[0, counts[:-1]]), counts) + np.arange(counts.sum())
        dst = self.succ[idx].astype(np.int64)
        src = np.repeat(C.pairs, counts, axis=0)
        dom = C.domain()
        if compact:
            keep = np.union1d(dom, dst)
            remap = np.full(self.n_states, -1, dtype=np.int64)
            remap[keep] = np.arange(len(keep))
        else:
            keep = np.arange(self.n_states)
            remap = keep
        T = np.column_stack([remap[src[:, 0]], src[:, 1], src[:, 2], remap[dst]]) if len(src) else np.zeros((0, 4), np.int64)
        init = remap[np.intersect1d(self.initial, dom)]
        out = FiniteTransitionSystem(
            len(keep), init, T, self.outputs[keep], self.ext_values, self.int_values,
            self.output_space, self.ext_input_space, self.int_input_space,
            self.ext_labels, self.int_labels,
            [self.state_labels[k] for k in keep] if self.state_labels else None,
        )
        out.state_map = keep
        return out

    # ------------------------------------------------------------------ json
    def to_json(self) -> dict:
        ext = [{"id": self.ext_labels[e] if self.ext_labels else e, "value": self.ext_values[e].tolist()}
               for e in range(self.n_ext)]
        intr = [{"id": self.int_labels[v] if self.int_labels else v, "value": self.int_values[v].tolist()}
                for v in range(self.n_int)]
        states = [{"id": self.state_labels[x] if self.state_labels else x, "output": self.outputs[x].tolist()}
                  for x in range(self.n_states)]
        return {
            "states": states,
            "initial": self.initial.tolist(),
            "ext_inputs": ext,
            "int_inputs": intr,
            "transitions": self.transitions.tolist(),
            "output_space": self.output_space.to_json(),
            "ext_input_space": self.ext_input_space.to_json(),
            "int_input_space": self.int_input_space.to_json(),
        }

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())

    @classmethod
    def from_json(cls, d: dict) -> "FiniteTransitionSystem":
        try:
            states = d["states"]
            n = len(states)

            def _inputs(key):
                items = d.get(key) or [{"id": 0, "value": []}]
                vals = [np.atleast_1d(np.asarray(it["value"], dtype=float)) if isinstance(it, dict)
                        else np.atleast_1d(np.asarray(it, dtype=float)) for it in items]
                labels = [it["id"] if isinstance(it, dict) else i for i, it in enumerate(items)]
                width = max(len(v) for v in vals)
                return np.array([v for v in vals]).reshape(len(vals), width), labels

            ev, el = _inputs("ext_inputs")
            iv, il = _inputs("int_inputs")
            H = np.array([np.atleast_1d(np.asarray(s["output"], dtype=float)) for s in states]).reshape(n, -1)
            kw = {}
            for name in ("output_space", "ext_input_space", "int_input_space"):
                if name in d:
                    kw[name] = PseudometricDescriptor.from_json(d[name])
            sl = [s.get("id", i) for i, s in enumerate(states)]
            tr = np.asarray(d.get("transitions", []), dtype=np.int64).reshape(-1, 4)
            return cls(n, d.get("initial", []), tr, H, ev, iv, ext_labels=_maybe(el), int_labels=_maybe(il),
                       state_labels=_maybe(sl), **kw)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed system JSON: {exc}") from exc

    @classmethod
    def loads(cls, s: str) -> "FiniteTransitionSystem":
        return cls.from_json(json.loads(s))

    def __repr__(self):
        return (f"FiniteTransitionSystem(|X|={self.n_states}, |U_ext|={self.n_ext}, "
                f"|U_int|={self.n_int}, |Delta|={self.n_transitions})")


def _maybe(labels):
    # identity labels 0..n-1 are not worth storing
    return None if all(isinstance(l, int) and l == i for i, l in enumerate(labels)) else labels


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Controller:
    """Memoryless controller C : X -> 2^(U_ext x U_int), stored as sorted (x, e, v) rows."""

    def __init__(self, n_states: int, pairs=None, n_ext: int | None = None, n_int: int | None = None):
        self.n_states = int(n_states)
        P = np.asarray(pairs if pairs is not None else np.zeros((0, 3)), dtype=np.int64).reshape(-1, 3)
        if len(P):
            P = np.unique(P, axis=0)
        self.pairs = P
        self.n_ext = n_ext
        self.n_int = n_int

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "Controller":
        """From a boolean (n_states, n_ext, n_int) enabling array."""
        n, ne, ni = mask.shape
        return cls(n, np.argwhere(mask), ne, ni)

    @classmethod
    def full(cls, S: FiniteTransitionSystem) -> "Controller":
        return cls.from_mask(S.admissible_mask())

    def mask(self, n_ext=None, n_int=None) -> np.ndarray:
        ne = n_ext or self.n_ext or (int(self.pairs[:, 1].max()) + 1 if len(self.pairs) else 1)
        ni = n_int or self.n_int or (int(self.pairs[:, 2].max()) + 1 if len(self.pairs) else 1)
        m = np.zeros((self.n_states, ne, ni), dtype=bool)
        if len(self.pairs):
            m[self.pairs[:, 0], self.pairs[:, 1], self.pairs[:, 2]] = True
        return m

    def enabled(self, x: int) -> set[tuple[int, int]]:
        lo, hi = np.searchsorted(self.pairs[:, 0], [x, x + 1])
        return {(int(e), int(v)) for _, e, v in self.pairs[lo:hi]}

    def domain(self) -> np.ndarray:
        return np.unique(self.pairs[:, 0])

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        return (isinstance(other, Controller) and self.n_states == other.n_states
                and np.array_equal(self.pairs, other.pairs))

    def validate(self, S: FiniteTransitionSystem):
        if self.n_states != S.n_states:
            raise ValidationError("controller and system disagree on |X|")
        if not len(self.pairs):
            return
        if (self.pairs[:, 1] >= S.n_ext).any() or (self.pairs[:, 2] >= S.n_int).any() or (self.pairs < 0).any():
            raise ValidationError("controller enables an undeclared input")
        adm = S.admissible_mask()[self.pairs[:, 0], self.pairs[:, 1], self.pairs[:, 2]]
        if not adm.all():
            x, e, v = self.pairs[np.argmin(adm)]
            raise ValidationError(f"controller enables non-admissible input ({e},{v}) at state {x}")

    def to_json(self) -> dict:
        entries = []
        if len(self.pairs):
            xs, starts = np.unique(self.pairs[:, 0], return_index=True)
            ends = np.r_[starts[1:], len(self.pairs)]
            for x, a, b in zip(xs, starts, ends):
                entries.append({"state": int(x), "inputs": self.pairs[a:b, 1:].tolist()})
        return {"n_states": self.n_states, "entries": entries}

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())

    @classmethod
    def from_json(cls, d: dict) -> "Controller":
        rows = [(e["state"], u, v) for e in d.get("entries", []) for u, v in e["inputs"]]
        n = d.get("n_states", 1 + max((r[0] for r in rows), default=-1))
        return cls(n, rows)


def unit_alphabet() -> tuple[np.ndarray, PseudometricDescriptor]:
    """The one-symbol internal alphabet of a component without neighbours."""
    return np.zeros((1, 0)), zero()
