"""Finite abstractions of concrete models.

Grid abstractions use sign-aware corner evaluation (exact interval images for
affine maps, sound over-approximations for monotone flows).  The sequence
abstraction enumerates the points reached from a source state by input words
of fixed length and is meant for contractive scalar systems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .metrics import SLACK, linf, neighbor_max, zero
from .ts import FiniteTransitionSystem, ValidationError, canonical_dumps

# boundary tolerance in cell units when mapping interval ends to cells
_CELL_TOL = 1e-9


class DomainError(ValueError):
    """A point lies outside the declared domain."""


class AbstractionRefused(ValueError):
    """The model does not satisfy the preconditions of the requested abstraction."""


# ------------------------------------------------------------------- grids
class GridSpec:
    """Uniform grid over a box: n[k] cells of width (hi[k] - lo[k]) / n[k] per dimension.

    Flat cell indices are mixed radix with dimension 0 most significant.
    """

    def __init__(self, lo, hi, n):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValidationError("grid bounds and cell counts differ in dimension")
        if (self.n < 1).any():
            raise ValidationError("each dimension needs at least one cell")
        if not (self.lo < self.hi).all():
            raise ValidationError("grid bounds must satisfy lo < hi")
        self.width = (self.hi - self.lo) / self.n
        self.stride = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            self.stride[k] = self.stride[k + 1] * self.n[k + 1]

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.n))

    def _digits_lower(self, X) -> np.ndarray:
        """Per-dimension cell of each point; interior boundaries go to the lower cell."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        scale = SLACK * np.maximum(1.0, np.abs(self.hi))
        if ((X < self.lo - scale) | (X > self.hi + scale) | ~np.isfinite(X)).any():
            bad = X[((X < self.lo - scale) | (X > self.hi + scale) | ~np.isfinite(X)).any(axis=1)][0]
            raise DomainError(f"point {bad.tolist()} outside the grid [{self.lo.tolist()}, {self.hi.tolist()}]")
        r = (X - self.lo) / self.width
        d = np.ceil(r - _CELL_TOL).astype(np.int64) - 1
        return np.clip(d, 0, self.n - 1)

    def quantize(self, x) -> int:
        return int(self.quantize_many(np.atleast_1d(x).reshape(1, -1))[0])

    def quantize_many(self, X) -> np.ndarray:
        return self._digits_lower(X) @ self.stride

    def digits(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        return (idx[..., None] // self.stride) % self.n

    def cell_center(self, idx) -> np.ndarray:
        return self.lo + (self.digits(idx) + 0.5) * self.width

    def centers(self) -> np.ndarray:
        return self.cell_center(np.arange(self.n_cells))

    def cell_bounds(self, idx) -> tuple[np.ndarray, np.ndarray]:
        d = self.digits(idx)
        return self.lo + d * self.width, self.lo + (d + 1) * self.width

    def cell_range(self, a, b) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension first/last cell meeting [a, b] (arrays (B, dim))."""
        ra = (np.asarray(a) - self.lo) / self.width
        rb = (np.asarray(b) - self.lo) / self.width
        k0 = np.clip(np.floor(ra + _CELL_TOL).astype(np.int64), 0, self.n - 1)
        k1 = np.clip(np.ceil(rb - _CELL_TOL).astype(np.int64) - 1, 0, self.n - 1)
        return k0, np.maximum(k0, k1)

    def cells_in_box(self, lo, hi) -> np.ndarray:
        """Cells whose centers lie in [lo, hi] (with slack)."""
        C = self.centers()
        return np.flatnonzero(((C >= np.asarray(lo) - SLACK) & (C <= np.asarray(hi) + SLACK)).all(axis=1))

    def to_json(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "n": self.n.tolist()}

    @classmethod
    def from_json(cls, d) -> "GridSpec":
        try:
            return cls(d["lo"], d["hi"], d["n"])
        except KeyError as exc:
            raise ValidationError(f"grid JSON lacks {exc}") from exc

    def __repr__(self):
        return f"GridSpec(lo={self.lo.tolist()}, hi={self.hi.tolist()}, n={self.n.tolist()})"


def input_grid(lo, hi, n) -> np.ndarray:
    """n evenly spaced input values from lo to hi inclusive, as an (n, 1) array."""
    if n < 1:
        raise ValidationError("input grid needs at least one point")
    return np.linspace(lo, hi, int(n)).reshape(-1, 1) if n > 1 else np.array([[0.5 * (lo + hi)]])


# ------------------------------------------------------------------ models
@dataclass
class DiscreteTimeModel:
    """x+ = f(x, u_ext, u_int) with vectorized f on (B, n), (B, m), (B, k) arrays.

    ``signs_x`` (n, n) and ``signs_w`` (n, k) give the sign of each partial
    derivative (+1, -1, 0).  ``None`` marks a model without a known sign
    pattern; grid abstraction refuses such models.
    """

    dim: int
    f: Callable
    ext_inputs: np.ndarray
    int_dim: int = 0
    signs_x: np.ndarray | None = None
    signs_w: np.ndarray | None = None
    contraction: float | None = None
    name: str = ""

    @property
    def monotone(self) -> bool:
        return self.signs_x is not None and (self.int_dim == 0 or self.signs_w is not None)

    def step(self, x, u, w=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float)).reshape(len(x), -1) if np.size(u) else np.zeros((len(x), 0))
        w = np.zeros((len(x), 0)) if w is None or not np.size(w) else np.atleast_2d(np.asarray(w, float)).reshape(len(x), -1)
        return np.asarray(self.f(x, u, w), dtype=float).reshape(len(x), self.dim)


def affine_model(A, B=None, E=None, c=None, ext_inputs=None, name="") -> DiscreteTimeModel:
    """x+ = A x + B u + E w + c, with the sign pattern read off the coefficients."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.zeros((n, 0)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    E = np.zeros((n, 0)) if E is None else np.asarray(E, dtype=float).reshape(n, -1)
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)

    def f(x, u, w):
        out = x @ A.T + c
        if B.shape[1]:
            out = out + u @ B.T
        if E.shape[1]:
            out = out + w @ E.T
        return out

    ext = np.zeros((1, 0)) if ext_inputs is None else np.asarray(ext_inputs, dtype=float).reshape(-1, B.shape[1])
    contraction = float(np.abs(A).sum(axis=1).max())
    m = DiscreteTimeModel(n, f, ext, E.shape[1], np.sign(A), np.sign(E), contraction, name)
    m.coefficients = {"A": A.tolist(), "B": B.tolist(), "E": E.tolist(), "c": c.tolist()}
    return m


@dataclass
class SampledContinuousModel:
    """Scalar sampled flow of dv/dt = (h(w) - g v + s(u, P) / v) / c with h linear in w.

    This is the per-unit form used for power networks: ``coupling`` holds the
    weights of the internal inputs in h, ``s_sign`` is +1 when the external
    input injects power and -1 when the disturbance P draws it.  The flow is
    increasing in v0 and in every w with positive weight, and moves against
    P when ``s_sign`` is -1.
    """

    capacitance: float
    coupling: np.ndarray
    tau: float
    ext_inputs: np.ndarray
    P_lo: float = 0.0
    P_hi: float = 0.0
    source: bool = False
    steps: int = 2000
    monotone: bool = True
    name: str = ""

    def __post_init__(self):
        self.coupling = np.asarray(self.coupling, dtype=float).reshape(-1)
        self.ext_inputs = np.asarray(self.ext_inputs, dtype=float).reshape(len(self.ext_inputs), -1)
        if self.tau <= 0:
            raise ValidationError("sampling period must be positive")
        if self.P_lo > self.P_hi:
            raise ValidationError("disturbance bounds must be ordered")
        if self.capacitance <= 0:
            raise ValidationError("capacitance must be positive")

    dim = 1

    @property
    def int_dim(self) -> int:
        return len(self.coupling)

    @property
    def g(self) -> float:
        return float(self.coupling.sum())

    def power(self, u, P) -> np.ndarray:
        """Injected power s: +u for sources, -P for loads."""
        return np.asarray(u, dtype=float) if self.source else -np.asarray(P, dtype=float)

    def field(self, v, u, w, P) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if (v <= 0).any():
            raise DomainError("voltage must stay positive")
        h = np.asarray(w, dtype=float).reshape(len(v), -1) @ self.coupling
        return (h - self.g * v + self.power(u, P) / v) / self.capacitance

    def flow(self, v0, u, w, P, steps=None) -> np.ndarray:
        """Sampled successor after tau; NaN where the voltage leaves v > 0."""
        v0 = np.atleast_1d(np.asarray(v0, dtype=float))
        B = len(v0)
        w = np.asarray(w, dtype=float).reshape(B, -1) if self.int_dim else np.zeros((B, 0))
        h = w @ self.coupling if self.int_dim else np.zeros(B)
        s = np.broadcast_to(self.power(u, P), (B,)).astype(float)
        return kernels.rk4_scalar(np.ascontiguousarray(v0), self.g, np.ascontiguousarray(h),
                                  np.ascontiguousarray(s), self.capacitance, self.tau, int(steps or self.steps))


def interval_successor(model: SampledContinuousModel, lower, upper, u, w_lo=None, w_hi=None, steps=None):
    """Successor corners of a monotone sampled model.

    The lower corner integrates from ``lower`` with the internal inputs at
    ``w_lo`` and the disturbance at the end that lowers the flow; the upper
    corner symmetrically.  Returns (lo, hi, blocked) arrays; ``blocked`` marks
    corners whose trajectory left the positive-voltage domain.
    """
    if not model.monotone:
        raise AbstractionRefused("interval successors need a monotone model")
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if (lower > upper).any():
        raise ValidationError("corners must be ordered")
    B = len(lower)
    k = model.int_dim
    w_lo = np.zeros((B, k)) if w_lo is None else np.asarray(w_lo, dtype=float).reshape(B, k)
    w_hi = w_lo if w_hi is None else np.asarray(w_hi, dtype=float).reshape(B, k)
    # coupling weights are non-negative, so h is increasing in w
    if (model.coupling < 0).any():
        raise AbstractionRefused("negative coupling breaks cooperativity")
    u = np.broadcast_to(np.asarray(u, dtype=float).reshape(-1), (B,))
    P_low_flow, P_high_flow = (model.P_lo, model.P_hi) if model.source else (model.P_hi, model.P_lo)
    lo = model.flow(lower, u, w_lo, P_low_flow, steps)
    hi = model.flow(upper, u, w_hi, P_high_flow, steps)
    blocked = ~np.isfinite(lo) | ~np.isfinite(hi)
    return lo, hi, blocked


# ------------------------------------------------------------------ results
@dataclass
class AbstractionResult:
    system: FiniteTransitionSystem
    eps: float
    mu: float = 0.0
    grid: GridSpec | None = None
    points: np.ndarray | None = None          # sequence abstractions: abstract state values
    int_radius: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def relate(self, x, strict: bool = True) -> int:
        """Abstract state of concrete point x (cell membership or nearest point).

        With ``strict`` a sequence-abstraction point farther than eps raises
        DomainError; otherwise the nearest point is returned.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.grid is not None:
            return self.grid.quantize(x)
        d = np.abs(self.points[:, 0] - x[0])
        k = int(np.argmin(d))
        if strict and d[k] > self.eps + SLACK:
            raise DomainError(f"{x[0]} is farther than eps={self.eps} from every abstract point")
        return k

    def relation_json(self) -> dict:
        if self.grid is not None:
            return {"type": "cell_membership", "grid": self.grid.to_json()}
        return {"type": "eps_ball", "points": self.points[:, 0].tolist()}

    def to_json(self) -> dict:
        out = {"system": self.system.to_json(), "relation": self.relation_json(), "eps": self.eps, "mu": self.mu}
        if self.info:
            out["info"] = self.info
        return out

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())


def _int_space(int_dim, labels):
    if not int_dim:
        return zero()
    return neighbor_max([linf(1)] * int_dim, labels if labels is not None else range(int_dim))


def _eps_of(grid: GridSpec, eps_convention: str) -> float:
    if eps_convention == "width":
        return float(grid.width.max())
    if eps_convention == "half-width":
        return float(grid.width.max() / 2)
    raise ValidationError(f"unknown eps convention {eps_convention!r}")


def _interval_to_transitions(grid, src, e, v, lo, hi, blocked):
    """Expand successor boxes into (x, e, v, x') rows; blocked rows are dropped."""
    scale = SLACK * np.maximum(1.0, np.abs(grid.hi))
    escape = ((lo < grid.lo - scale) | (hi > grid.hi + scale)).any(axis=1) | blocked
    keep = ~escape
    src, e, v, lo, hi = src[keep], e[keep], v[keep], lo[keep], hi[keep]
    k0, k1 = grid.cell_range(lo, hi)
    span = k1 - k0 + 1
    rows = []
    if grid.dim == 1:
        cnt = span[:, 0]
        rep = np.repeat(np.arange(len(src)), cnt)
        off = np.arange(cnt.sum()) - np.repeat(np.r_[0, np.cumsum(cnt)[:-1]], cnt)
        dst = k0[rep, 0] + off
        rows = np.column_stack([src[rep], e[rep], v[rep], dst])
    else:
        out = []
        for r in range(len(src)):
            axes = [np.arange(k0[r, d], k1[r, d] + 1) for d in range(grid.dim)]
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.dim)
            dst = mesh @ grid.stride
            out.append(np.column_stack([np.full(len(dst), src[r]), np.full(len(dst), e[r]),
                                        np.full(len(dst), v[r]), dst]))
        rows = np.concatenate(out) if out else np.zeros((0, 4), np.int64)
    return np.asarray(rows, dtype=np.int64).reshape(-1, 4), int(escape.sum())


def grid_abstraction(model, grid: GridSpec, int_values=None, int_radius=None, int_labels=None,
                     eps_convention: str = "width", initial=None, steps=None, chunk: int = 1 << 18) -> AbstractionResult:
    """Grid abstraction of a monotone (sign-pattern known) model.

    ``int_values`` (n_int, k) are the abstract internal symbols (neighbour
    output grid points) and ``int_radius`` (k,) the half-width of the
    internal-input ball evaluated around each symbol (0 for point inputs).
    """
    if model is None or not getattr(model, "monotone", False):
        raise AbstractionRefused("grid abstraction needs a monotone model")
    k = model.int_dim
    if k:
        if int_values is None:
            raise ValidationError("internal symbols required for a model with internal inputs")
        V = np.asarray(int_values, dtype=float).reshape(-1, k)
    else:
        V = np.zeros((1, 0))
    rad = np.zeros(k) if int_radius is None else np.broadcast_to(np.asarray(int_radius, dtype=float), (k,)).copy()
    U = np.asarray(model.ext_inputs, dtype=float)
    U = U.reshape(len(U), -1)
    nx, ne, ni = grid.n_cells, len(U), len(V)
    cl, cu = grid.cell_bounds(np.arange(nx))
    total = nx * ne * ni
    chunks, n_blocked = [], 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        v = idx % ni
        e = (idx // ni) % ne
        x = idx // (ni * ne)
        xl, xu = cl[x], cu[x]
        wl, wu = V[v] - rad, V[v] + rad
        if isinstance(model, SampledContinuousModel):
            lo, hi, blocked = interval_successor(model, xl[:, 0], xu[:, 0], U[e, 0] if U.shape[1] else 0.0,
                                                 wl, wu, steps)
            lo, hi = lo.reshape(-1, 1), hi.reshape(-1, 1)
        else:
            lo = np.empty((len(idx), model.dim))
            hi = np.empty((len(idx), model.dim))
            for i in range(model.dim):
                sx = model.signs_x[i]
                sw = model.signs_w[i] if k else np.zeros(0)
                xa = np.where(sx >= 0, xl, xu)
                xb = np.where(sx >= 0, xu, xl)
                wa = np.where(sw >= 0, wl, wu) if k else wl
                wb = np.where(sw >= 0, wu, wl) if k else wu
                lo[:, i] = model.step(xa, U[e], wa)[:, i]
                hi[:, i] = model.step(xb, U[e], wb)[:, i]
            blocked = ~(np.isfinite(lo).all(axis=1) & np.isfinite(hi).all(axis=1))
        rows, nb = _interval_to_transitions(grid, x, e, v, lo, hi, blocked)
        chunks.append(rows)
        n_blocked += nb
    T = np.concatenate(chunks) if chunks else np.zeros((0, 4), np.int64)
    init = np.arange(nx) if initial is None else np.asarray(initial, dtype=np.int64)
    S = FiniteTransitionSystem(
        nx, init, T, grid.centers(), U, V,
        output_space=linf(grid.dim),
        ext_input_space=linf(U.shape[1]) if U.shape[1] else zero(),
        int_input_space=_int_space(k, int_labels),
    )
    info = {"blocked_pairs": n_blocked, "cells": nx, "transitions": int(S.n_transitions)}
    return AbstractionResult(S, _eps_of(grid, eps_convention), 0.0, grid=grid, int_radius=rad, info=info)


def sequence_abstraction(model: DiscreteTimeModel, x_s: float, N: int, domain=None) -> AbstractionResult:
    """Discretization-free abstraction of a contractive scalar model without internal inputs.

    Abstract states are the points reached from ``x_s`` by input words of
    length N; input u maps p to the abstract point nearest to f(p, u).  eps is
    lambda^N times the largest distance from x_s to the domain bounds.
    """
    if model.dim != 1 or model.int_dim:
        raise AbstractionRefused("sequence abstraction handles scalar models without internal inputs")
    lam = model.contraction
    if lam is None or not (lam < 1):
        raise AbstractionRefused(f"model is not a contraction (factor {lam})")
    if N < 0:
        raise ValidationError("sequence length must be non-negative")
    U = np.asarray(model.ext_inputs, dtype=float).reshape(len(model.ext_inputs), -1)
    pts = np.array([float(x_s)])
    for _ in range(int(N)):
        nxt = model.step(np.repeat(pts, len(U)).reshape(-1, 1), np.tile(U, (len(pts), 1)))[:, 0]
        pts = _dedupe(nxt)
    pts = np.sort(_dedupe(pts))
    n = len(pts)
    img = model.step(np.repeat(pts, len(U)).reshape(-1, 1), np.tile(U, (n, 1)))[:, 0]
    dst = _nearest(pts, img)
    src = np.repeat(np.arange(n), len(U))
    e = np.tile(np.arange(len(U)), n)
    T = np.column_stack([src, e, np.zeros_like(src), dst])
    lo, hi = (domain if domain is not None else (x_s, x_s))
    radius = max(abs(x_s - lo), abs(hi - x_s))
    eps = float(lam ** N * radius)
    S = FiniteTransitionSystem(n, np.arange(n), T, pts.reshape(-1, 1), U, None,
                               output_space=linf(1), ext_input_space=linf(U.shape[1]) if U.shape[1] else zero())
    return AbstractionResult(S, eps, 0.0, points=pts.reshape(-1, 1),
                             info={"contraction": lam, "N": int(N), "x_s": float(x_s), "points": n})


def _dedupe(a, tol=1e-12) -> np.ndarray:
    a = np.sort(np.asarray(a, dtype=float))
    if not len(a):
        return a
    keep = np.r_[True, np.diff(a) > tol]
    return a[keep]


def _nearest(pts, vals) -> np.ndarray:
    """Index of the nearest sorted point; ties go to the lower point."""
    j = np.clip(np.searchsorted(pts, vals), 1, max(1, len(pts) - 1))
    if len(pts) == 1:
        return np.zeros(len(vals), dtype=np.int64)
    left = pts[j - 1]
    right = pts[j]
    return np.where(np.abs(vals - left) <= np.abs(right - vals), j - 1, j).astype(np.int64)


# -------------------------------------------------------------- validation
def sample_soundness(result: AbstractionResult, model, rng, n_per_cell: int = 1000,
                     int_samples: int = 1, steps=None) -> tuple[bool, tuple | None]:
    """Sampled check: concrete successors of points in each cell land in an abstract successor cell.

    Internal inputs are drawn from the ball around each symbol.  Also checks
    output closeness |x - center| <= eps.  Returns (ok, witness).
    """
    S, grid = result.system, result.grid
    rad = result.int_radius if result.int_radius is not None else np.zeros(S.int_values.shape[1])
    cl, cu = grid.cell_bounds(np.arange(grid.n_cells))
    adm = S.admissible_mask()
    for x in range(S.n_states):
        pts = rng.uniform(cl[x], cu[x], size=(n_per_cell, grid.dim))
        if (np.abs(pts - grid.cell_center(x)).max(axis=1) > result.eps + SLACK).any():
            return False, ("output", x)
        for e in range(S.n_ext):
            for v in range(S.n_int):
                if not adm[x, e, v]:
                    continue
                w = S.int_values[v] + rng.uniform(-1, 1, size=(n_per_cell, len(rad))) * rad
                u = np.broadcast_to(S.ext_values[e], (n_per_cell, S.ext_values.shape[1]))
                if isinstance(model, SampledContinuousModel):
                    P = rng.uniform(model.P_lo, model.P_hi, size=n_per_cell)
                    nxt = model.flow(pts[:, 0], u[:, 0] if u.shape[1] else 0.0, w, P, steps).reshape(-1, 1)
                else:
                    nxt = model.step(pts, u, w)
                try:
                    cells = grid.quantize_many(nxt)
                except DomainError:
                    return False, ("escape", x, e, v)
                succ = S.successors(x, e, v)
                miss = ~np.isin(cells, succ)
                if miss.any():
                    return False, ("successor", x, e, v, nxt[np.argmax(miss)].tolist())
    return True, None


def corner_rule_check(f, lo, hi, signs, rng, n: int = 1000) -> tuple[bool, np.ndarray | None]:
    """Sampled monotone corner rule: f at interior points lies between the corner images.

    ``f`` maps (B, d) points to (B, m); ``signs`` (m, d) is the sign pattern.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    signs = np.atleast_2d(signs)
    P = rng.uniform(lo, hi, size=(n, len(lo)))
    Y = np.asarray(f(P))
    for i in range(signs.shape[0]):
        a = np.where(signs[i] >= 0, lo, hi)[None, :]
        b = np.where(signs[i] >= 0, hi, lo)[None, :]
        ya, yb = np.asarray(f(a))[0, i], np.asarray(f(b))[0, i]
        bad = (Y[:, i] < ya - 1e-9 * max(1, abs(ya))) | (Y[:, i] > yb + 1e-9 * max(1, abs(yb)))
        if bad.any():
            return False, P[np.argmax(bad)]
    return True, None
