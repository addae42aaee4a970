"""Pseudometrics for outputs and inputs of finite transition systems.

Four descriptor kinds are supported:

``linf``
    infinity norm on R^p (absolute value when p == 1)
``discrete``
    0 if the two vectors are equal, 1 otherwise
``neighbor_max``
    max over sub-blocks, each block measured with its own descriptor.  This
    is the metric on internal inputs (tuples of neighbour outputs) and on the
    stacked outputs / external inputs of a composed system.
``zero``
    the trivial pseudometric, always 0
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

#: absolute slack for every "distance <= threshold" test
SLACK = 1e-12

KINDS = ("linf", "discrete", "neighbor_max", "zero")


class MetricError(ValueError):
    """Raised on dimension or structure mismatch between vectors and a descriptor."""


@dataclass(frozen=True)
class PseudometricDescriptor:
    kind: str
    dim: int
    parts: tuple["PseudometricDescriptor", ...] = ()
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MetricError(f"unknown metric kind {self.kind!r}")
        if self.dim < 0:
            raise MetricError("negative dimension")
        if self.kind == "neighbor_max":
            if sum(p.dim for p in self.parts) != self.dim:
                raise MetricError("neighbor_max dim must equal the sum of its part dims")
            if self.labels and len(self.labels) != len(self.parts):
                raise MetricError("one label per part expected")
        elif self.parts:
            raise MetricError(f"{self.kind} descriptors take no parts")

    # ------------------------------------------------------------------ eval
    def _check(self, a: np.ndarray, what: str) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-1:] != (self.dim,) and not (self.dim == 0 and a.size == 0):
            raise MetricError(f"{what} has shape {a.shape}, expected trailing dim {self.dim}")
        return a.reshape(a.shape[:-1] + (self.dim,)) if a.ndim else a.reshape(self.dim)

    def _rows(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.ndim == 2:
            if A.shape[1] != self.dim:
                raise MetricError(f"points have dim {A.shape[1]}, expected {self.dim}")
            return A
        # zero-dimensional spaces: a 1-D input is one point
        return A.reshape(-1, self.dim) if self.dim else np.zeros((1, 0))

    def distance(self, a, b) -> float:
        a = self._check(np.atleast_1d(a) if self.dim else np.zeros(0), "first argument")
        b = self._check(np.atleast_1d(b) if self.dim else np.zeros(0), "second argument")
        return float(self.pairwise(a[None, :], b[None, :])[0, 0])

    def pairwise(self, A, B) -> np.ndarray:
        """Distance matrix between the rows of ``A`` and the rows of ``B``."""
        A, B = self._rows(A), self._rows(B)
        if self.kind == "zero" or self.dim == 0:
            return np.zeros((len(A), len(B)))
        if self.kind == "linf":
            return np.abs(A[:, None, :] - B[None, :, :]).max(axis=2)
        if self.kind == "discrete":
            return np.any(A[:, None, :] != B[None, :, :], axis=2).astype(float)
        out = np.zeros((len(A), len(B)))
        off = 0
        for part in self.parts:
            sl = slice(off, off + part.dim)
            np.maximum(out, part.pairwise(A[:, sl], B[:, sl]), out=out)
            off += part.dim
        return out

    def rowwise(self, A, B) -> np.ndarray:
        """Distances between matching rows of ``A`` and ``B``."""
        A, B = self._rows(A), self._rows(B)
        if len(A) != len(B):
            raise MetricError("rowwise needs equally many rows")
        if self.kind == "zero" or self.dim == 0:
            return np.zeros(len(A))
        if self.kind == "linf":
            return np.abs(A - B).max(axis=1)
        if self.kind == "discrete":
            return np.any(A != B, axis=1).astype(float)
        out = np.zeros(len(A))
        off = 0
        for part in self.parts:
            sl = slice(off, off + part.dim)
            np.maximum(out, part.rowwise(A[:, sl], B[:, sl]), out=out)
            off += part.dim
        return out

    # ------------------------------------------------------------- compare
    def same_space(self, other: "PseudometricDescriptor") -> bool:
        if self.kind != other.kind or self.dim != other.dim:
            return False
        return len(self.parts) == len(other.parts) and all(
            p.same_space(q) for p, q in zip(self.parts, other.parts)
        )

    # ---------------------------------------------------------------- json
    def to_json(self) -> dict:
        d = {"metric": self.kind, "dim": self.dim}
        if self.kind == "neighbor_max":
            d["parts"] = [p.to_json() for p in self.parts]
            if self.labels:
                d["neighbors"] = list(self.labels)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PseudometricDescriptor":
        parts = tuple(cls.from_json(p) for p in d.get("parts", ()))
        return cls(d["metric"], int(d["dim"]), parts, tuple(d.get("neighbors", ())))


def linf(dim: int = 1) -> PseudometricDescriptor:
    return PseudometricDescriptor("linf", dim)


def discrete(dim: int = 1) -> PseudometricDescriptor:
    return PseudometricDescriptor("discrete", dim)


def zero(dim: int = 0) -> PseudometricDescriptor:
    return PseudometricDescriptor("zero", dim)


def neighbor_max(parts: Sequence[PseudometricDescriptor], labels: Sequence[int] = ()) -> PseudometricDescriptor:
    parts = tuple(parts)
    return PseudometricDescriptor("neighbor_max", sum(p.dim for p in parts), parts, tuple(labels))


def output_distance(d: PseudometricDescriptor, y1, y2) -> float:
    """Distance between two (possibly stacked) output vectors."""
    return d.distance(y1, y2)


def internal_input_distance(d: PseudometricDescriptor, u1, u2) -> float:
    """Distance between two neighbour-output tuples; 0 when there are no neighbours."""
    if d.kind != "neighbor_max" and d.dim != 0 and d.kind != "zero":
        raise MetricError("internal inputs are measured with a neighbor_max descriptor")
    return d.distance(u1, u2)


def within(dist, threshold: float):
    """``dist <= threshold`` with the global slack; ``threshold = inf`` accepts everything."""
    if math.isinf(threshold):
        return np.ones_like(np.asarray(dist), dtype=bool) if np.ndim(dist) else True
    return np.asarray(dist) <= threshold + SLACK if np.ndim(dist) else bool(dist <= threshold + SLACK)


def verify_pseudometric_axioms(d, sample, tol: float = 1e-9):
    """Check identity, non-negativity, symmetry and the triangle inequality on ``sample``.

    ``d`` is a descriptor or any callable ``d(a, b) -> float``.  Returns
    ``(True, None)`` or ``(False, (axiom, a_index, b_index, c_index))`` for the
    first violation found.
    """
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in sample]
    n = len(pts)
    if isinstance(d, PseudometricDescriptor):
        D = d.pairwise(np.array(pts).reshape(n, d.dim), np.array(pts).reshape(n, d.dim)) if n else np.zeros((0, 0))
    else:
        fn: Callable = d
        D = np.array([[float(fn(a, b)) for b in pts] for a in pts]).reshape(n, n)
    for i in range(n):
        if abs(D[i, i]) > tol:
            return False, ("identity", i, i, i)
    neg = np.argwhere(D < -tol)
    if len(neg):
        i, j = neg[0]
        return False, ("nonnegativity", int(i), int(j), int(j))
    asym = np.argwhere(np.abs(D - D.T) > tol)
    if len(asym):
        i, j = asym[0]
        return False, ("symmetry", int(i), int(j), int(j))
    for j in range(n):
        # D[i,k] <= D[i,j] + D[j,k] for all i, k
        viol = D > D[:, j][:, None] + D[j, :][None, :] + tol
        if viol.any():
            i, k = np.argwhere(viol)[0]
            return False, ("triangle", int(i), j, int(k))
    return True, None
