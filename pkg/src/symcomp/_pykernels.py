"""NumPy implementations of the compiled kernels (same signatures and results)."""
from __future__ import annotations

import itertools

import numpy as np


def _bad_counts(key_ptr, succ, alive):
    dead = np.r_[0, np.cumsum(np.asarray(alive)[np.asarray(succ)] == 0)]
    return dead[key_ptr[1:]] - dead[key_ptr[:-1]]


def csr_fixpoint(key_ptr, succ, alive, n_states, n_inputs, schedule=0):
    # every schedule converges to the same greatest fixed point; rounds are bulk here
    key_ptr = np.asarray(key_ptr)
    nonempty = np.diff(key_ptr) > 0
    rounds = 0
    while True:
        good = (nonempty & (_bad_counts(key_ptr, succ, alive) == 0)).reshape(n_states, n_inputs).any(axis=1)
        remove = (alive != 0) & ~good
        if not remove.any():
            return rounds
        alive[remove] = 0
        rounds += 1


def csr_enabled(key_ptr, succ, alive, n_inputs):
    key_ptr = np.asarray(key_ptr)
    a = np.asarray(alive) != 0
    ok = (np.diff(key_ptr) > 0) & (_bad_counts(key_ptr, succ, alive) == 0)
    src = np.arange(len(ok)) // n_inputs
    return (ok & a[src]).astype(np.uint8)


def _unpack(spec):
    radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ = spec
    return radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ


def _ranges(spec, states, e):
    radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ = _unpack(spec)
    N = len(radix)
    dig = (states[:, None] // stride[None, :]) % radix[None, :]
    eis = []
    for i in range(N - 1, -1, -1):
        eis.append(e % next_[i])
        e //= next_[i]
    eis = eis[::-1]
    lo = np.empty((len(states), N), dtype=np.int64)
    hi = np.empty_like(lo)
    for i in range(N):
        t = np.zeros(len(states), dtype=np.int64)
        for k in range(nb_ptr[i], nb_ptr[i + 1]):
            t += dig[:, nb_idx[k]] * nb_stride[k]
        key = tab_off[i] + (dig[:, i] * next_[i] + eis[i]) * n_t[i] + t
        lo[:, i] = tab_ptr[key]
        hi[:, i] = tab_ptr[key + 1]
    return lo, hi


def _all_alive(spec, lo, hi, alive):
    stride, succ_off, succ = spec[1], spec[8], spec[10]
    N = lo.shape[1]
    cnt = hi - lo
    ok = (cnt > 0).all(axis=1)
    if not ok.any():
        return ok
    maxlen = cnt[ok].max(axis=0)
    for offs in itertools.product(*[range(int(m)) for m in maxlen]):
        offs = np.asarray(offs)
        valid = ok & (offs[None, :] < cnt).all(axis=1)
        if not valid.any():
            continue
        pos = lo[valid] + offs[None, :]
        x = np.zeros(int(valid.sum()), dtype=np.int64)
        for i in range(N):
            x += succ[succ_off[i] + pos[:, i]].astype(np.int64) * stride[i]
        dead = alive[x] == 0
        idx = np.flatnonzero(valid)[dead]
        ok[idx] = False
    return ok


def _n_inputs(spec):
    return int(np.prod(spec[2]))


def product_enabled(spec, alive, states):
    states = np.asarray(states, dtype=np.int64)
    n_in = _n_inputs(spec)
    alive = np.asarray(alive)
    out = np.zeros((len(states), n_in), dtype=np.uint8)
    for e in range(n_in):
        lo, hi = _ranges(spec, states, e)
        out[:, e] = _all_alive(spec, lo, hi, alive)
    return out


def product_fixpoint(spec, alive, witness, schedule=0):
    rounds = 0
    n_in = _n_inputs(spec)
    while True:
        cand = np.flatnonzero(alive == 1)
        if not len(cand):
            break
        en = product_enabled(spec, alive, cand)
        keep = en.any(axis=1)
        witness[cand[keep]] = np.argmax(en[keep], axis=1).astype(witness.dtype) if n_in else 0
        if keep.all():
            break
        alive[cand[~keep]] = 0
        rounds += 1
    return rounds


def product_count_enabled(spec, alive):
    cand = np.flatnonzero(np.asarray(alive) != 0)
    total = 0
    for chunk in np.array_split(cand, max(1, len(cand) // 200000 + 1)):
        if len(chunk):
            total += int(product_enabled(spec, alive, chunk).sum())
    return total


def product_materialize(spec, n):
    stride, succ_off, succ = spec[1], spec[8], spec[10]
    n_in = _n_inputs(spec)
    states = np.arange(n, dtype=np.int64)
    lists = [[None] * n_in for _ in range(n)]
    for e in range(n_in):
        lo, hi = _ranges(spec, states, e)
        for x in range(n):
            if (hi[x] > lo[x]).all():
                parts = [succ[succ_off[i] + np.arange(lo[x, i], hi[x, i])].astype(np.int64) * stride[i]
                         for i in range(len(stride))]
                tot = parts[0]
                for p in parts[1:]:
                    tot = (tot[:, None] + p[None, :]).ravel()
                lists[x][e] = tot
    flat = [l for row in lists for l in row]
    counts = np.array([0 if l is None else len(l) for l in flat], dtype=np.int64)
    key_ptr = np.r_[0, np.cumsum(counts)].astype(np.int64)
    out = np.concatenate([l for l in flat if l is not None]).astype(np.int32) if counts.sum() else np.zeros(0, np.int32)
    return key_ptr, out


def rk4_scalar(v0, g, h, s, c, tau, steps):
    v = np.array(v0, dtype=float)
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    dt = tau / steps
    bad = v <= 0

    def f(w):
        return (h - g * w + s / w) / c

    with np.errstate(all="ignore"):
        for _ in range(steps):
            bad |= v <= 0
            k1 = f(v)
            k2 = f(v + 0.5 * dt * k1)
            k3 = f(v + 0.5 * dt * k2)
            k4 = f(v + dt * k3)
            v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    bad |= ~(v > 0)
    v[bad] = np.nan
    return v


def rk4_network(v0, A, s, c, tau, steps):
    v = np.array(v0, dtype=float)
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    dt = tau / steps
    bad = (v <= 0).any(axis=1)

    def f(w):
        return (-(w @ A.T) + s / w) / c

    with np.errstate(all="ignore"):
        for _ in range(steps):
            bad |= (v <= 0).any(axis=1)
            k1 = f(v)
            k2 = f(v + 0.5 * dt * k1)
            k3 = f(v + 0.5 * dt * k2)
            k4 = f(v + dt * k3)
            v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    bad |= ~(v > 0).all(axis=1)
    v[bad] = np.nan
    return v
