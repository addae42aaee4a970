# Hot loops: safety fixed points (explicit CSR and implicit product), product
# materialization and fixed-step RK4 integrators for the microgrid model.
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport NAN

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32
ctypedef cnp.uint8_t u8
ctypedef cnp.uint16_t u16


def csr_fixpoint(const i64[:] key_ptr, const i32[:] succ, u8[:] alive,
                 Py_ssize_t n_states, Py_ssize_t n_inputs, int schedule=0):
    """Shrink ``alive`` (1 = candidate) to the maximal controlled invariant in place.

    schedule 0: bulk-synchronous rounds in ascending state order,
    schedule 1: same rounds in descending state order with inputs scanned backwards,
    schedule 2: in-place (Gauss-Seidel) sweeps.
    Returns the number of rounds that removed at least one state.
    """
    cdef Py_ssize_t x, k, kk, j, base
    cdef int rounds = 0, changed = 1, ok, found
    cdef Py_ssize_t step, start, stop
    cdef u8 dying = 2 if schedule != 2 else 0
    while changed:
        changed = 0
        if schedule == 1:
            start = n_states - 1; stop = -1; step = -1
        else:
            start = 0; stop = n_states; step = 1
        x = start
        while x != stop:
            if alive[x] == 1:
                found = 0
                base = x * n_inputs
                for kk in range(n_inputs):
                    k = base + (n_inputs - 1 - kk if schedule == 1 else kk)
                    if key_ptr[k] == key_ptr[k + 1]:
                        continue
                    ok = 1
                    for j in range(key_ptr[k], key_ptr[k + 1]):
                        if alive[succ[j]] == 0:
                            ok = 0
                            break
                    if ok:
                        found = 1
                        break
                if not found:
                    alive[x] = dying
                    changed = 1
            x += step
        if schedule != 2:
            for x in range(n_states):
                if alive[x] == 2:
                    alive[x] = 0
        if changed:
            rounds += 1
    return rounds


def csr_enabled(const i64[:] key_ptr, const i32[:] succ, const u8[:] alive,
                Py_ssize_t n_inputs):
    """uint8 flag per key: source alive, key admissible, every successor alive."""
    cdef Py_ssize_t nk = key_ptr.shape[0] - 1
    out = np.zeros(nk, dtype=np.uint8)
    cdef u8[:] o = out
    cdef Py_ssize_t k, j
    cdef int ok
    for k in range(nk):
        if alive[k // n_inputs] == 0 or key_ptr[k] == key_ptr[k + 1]:
            continue
        ok = 1
        for j in range(key_ptr[k], key_ptr[k + 1]):
            if alive[succ[j]] == 0:
                ok = 0
                break
        o[k] = ok
    return out


# ---------------------------------------------------------------- implicit product
cdef struct Net:
    int N
    i64 *radix        # local state counts
    i64 *stride       # product strides (component 0 most significant)
    i64 *next_        # external input counts
    i64 *nb_ptr       # neighbour list offsets
    i64 *nb_idx       # neighbour component ids
    i64 *nb_stride    # stride of each neighbour digit inside t_i
    i64 *n_t          # number of neighbour tuples per component
    i64 *tab_off      # offset of component i inside tab_ptr
    i64 *succ_off     # offset of component i inside succ
    const i64 *tab_ptr
    const i32 *succ


cdef inline void _decode(Net *net, i64 x, i64 *dig) nogil:
    cdef int i
    for i in range(net.N):
        dig[i] = (x // net.stride[i]) % net.radix[i]


cdef inline int _ranges(Net *net, i64 *dig, i64 e, i64 *lo, i64 *hi) nogil:
    # fills successor ranges for global external input e; 0 if some component blocks
    cdef int i, k
    cdef i64 t, ei, key
    for i in range(net.N - 1, -1, -1):
        ei = e % net.next_[i]
        e = e // net.next_[i]
        t = 0
        for k in range(net.nb_ptr[i], net.nb_ptr[i + 1]):
            t += dig[net.nb_idx[k]] * net.nb_stride[k]
        key = net.tab_off[i] + (dig[i] * net.next_[i] + ei) * net.n_t[i] + t
        lo[i] = net.tab_ptr[key]
        hi[i] = net.tab_ptr[key + 1]
        if lo[i] == hi[i]:
            return 0
    return 1


cdef inline int _all_alive(Net *net, i64 *lo, i64 *hi, i64 *cur, const u8 *alive) nogil:
    cdef int i
    cdef i64 x
    for i in range(net.N):
        cur[i] = lo[i]
    while True:
        x = 0
        for i in range(net.N):
            x += (<i64>net.succ[net.succ_off[i] + cur[i]]) * net.stride[i]
        if alive[x] == 0:
            return 0
        i = net.N - 1
        while i >= 0:
            cur[i] += 1
            if cur[i] < hi[i]:
                break
            cur[i] = lo[i]
            i -= 1
        if i < 0:
            return 1
    return 1


cdef Net _net(object spec, i64[:] radix, i64[:] stride, i64[:] next_, i64[:] nb_ptr,
              i64[:] nb_idx, i64[:] nb_stride, i64[:] n_t, i64[:] tab_off, i64[:] succ_off,
              const i64[:] tab_ptr, const i32[:] succ):
    cdef Net net
    net.N = radix.shape[0]
    net.radix = &radix[0]
    net.stride = &stride[0]
    net.next_ = &next_[0]
    net.nb_ptr = &nb_ptr[0]
    net.nb_idx = &nb_idx[0] if nb_idx.shape[0] else NULL
    net.nb_stride = &nb_stride[0] if nb_stride.shape[0] else NULL
    net.n_t = &n_t[0]
    net.tab_off = &tab_off[0]
    net.succ_off = &succ_off[0]
    net.tab_ptr = &tab_ptr[0]
    net.succ = &succ[0] if succ.shape[0] else NULL
    return net


def product_fixpoint(spec, u8[:] alive, u16[:] witness, int schedule=0):
    """Maximal controlled invariant of an implicitly represented product.

    ``spec`` is the tuple produced by ``ProductSystem.kernel_spec``.  ``alive``
    holds 1 for candidate states; on return it marks Cont.  ``witness`` caches,
    per state, the last external input found to keep all successors alive.
    schedule 0 is bulk-synchronous, 2 is in place.  Returns the number of
    rounds that removed states.
    """
    cdef i64[:] radix = spec[0], stride = spec[1], next_ = spec[2], nb_ptr = spec[3]
    cdef i64[:] nb_idx = spec[4], nb_stride = spec[5], n_t = spec[6], tab_off = spec[7], succ_off = spec[8]
    cdef const i64[:] tab_ptr = spec[9]
    cdef const i32[:] succ = spec[10]
    cdef Net net = _net(spec, radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ)
    cdef i64 n = alive.shape[0]
    cdef i64 n_in = 1
    cdef int i
    for i in range(net.N):
        n_in *= net.next_[i]
    cdef i64 *buf = <i64 *> malloc(4 * net.N * sizeof(i64))
    cdef i64 *dig = buf
    cdef i64 *lo = buf + net.N
    cdef i64 *hi = buf + 2 * net.N
    cdef i64 *cur = buf + 3 * net.N
    cdef i64 x, e, w, cnt
    cdef int rounds = 0, changed = 1, found
    cdef u8 dying = 2 if schedule != 2 else 0
    cdef u8 *al = &alive[0]
    try:
        with nogil:
            while changed:
                changed = 0
                for x in range(n):
                    if al[x] != 1:
                        continue
                    _decode(&net, x, dig)
                    w = witness[x]
                    found = 0
                    for cnt in range(n_in):
                        e = (w + cnt) % n_in
                        if _ranges(&net, dig, e, lo, hi) and _all_alive(&net, lo, hi, cur, al):
                            witness[x] = <u16> e
                            found = 1
                            break
                    if not found:
                        al[x] = dying
                        changed = 1
                if schedule != 2:
                    for x in range(n):
                        if al[x] == 2:
                            al[x] = 0
                if changed:
                    rounds += 1
    finally:
        free(buf)
    return rounds


def product_enabled(spec, const u8[:] alive, i64[:] states):
    """(len(states), n_inputs) uint8: 1 where the product input keeps every successor alive."""
    cdef i64[:] radix = spec[0], stride = spec[1], next_ = spec[2], nb_ptr = spec[3]
    cdef i64[:] nb_idx = spec[4], nb_stride = spec[5], n_t = spec[6], tab_off = spec[7], succ_off = spec[8]
    cdef const i64[:] tab_ptr = spec[9]
    cdef const i32[:] succ = spec[10]
    cdef Net net = _net(spec, radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ)
    cdef i64 n_in = 1
    cdef int i
    for i in range(net.N):
        n_in *= net.next_[i]
    out = np.zeros((states.shape[0], n_in), dtype=np.uint8)
    cdef u8[:, :] o = out
    cdef i64 *buf = <i64 *> malloc(4 * net.N * sizeof(i64))
    cdef i64 s, x, e
    try:
        for s in range(states.shape[0]):
            x = states[s]
            _decode(&net, x, buf)
            for e in range(n_in):
                if _ranges(&net, buf, e, buf + net.N, buf + 2 * net.N) and \
                        _all_alive(&net, buf + net.N, buf + 2 * net.N, buf + 3 * net.N, &alive[0]):
                    o[s, e] = 1
    finally:
        free(buf)
    return out


def product_count_enabled(spec, const u8[:] alive):
    """Number of (state, input) pairs enabled by the maximal controller for ``alive``."""
    cdef i64[:] radix = spec[0], stride = spec[1], next_ = spec[2], nb_ptr = spec[3]
    cdef i64[:] nb_idx = spec[4], nb_stride = spec[5], n_t = spec[6], tab_off = spec[7], succ_off = spec[8]
    cdef const i64[:] tab_ptr = spec[9]
    cdef const i32[:] succ = spec[10]
    cdef Net net = _net(spec, radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ)
    cdef i64 n_in = 1
    cdef int i
    for i in range(net.N):
        n_in *= net.next_[i]
    cdef i64 *buf = <i64 *> malloc(4 * net.N * sizeof(i64))
    cdef i64 x, e, total = 0
    cdef const u8 *al = &alive[0]
    try:
        with nogil:
            for x in range(alive.shape[0]):
                if al[x] == 0:
                    continue
                _decode(&net, x, buf)
                for e in range(n_in):
                    if _ranges(&net, buf, e, buf + net.N, buf + 2 * net.N) and \
                            _all_alive(&net, buf + net.N, buf + 2 * net.N, buf + 3 * net.N, al):
                        total += 1
    finally:
        free(buf)
    return total


def product_materialize(spec, i64 n):
    """Explicit CSR (key_ptr over n * n_inputs keys, successors) of the product."""
    cdef i64[:] radix = spec[0], stride = spec[1], next_ = spec[2], nb_ptr = spec[3]
    cdef i64[:] nb_idx = spec[4], nb_stride = spec[5], n_t = spec[6], tab_off = spec[7], succ_off = spec[8]
    cdef const i64[:] tab_ptr = spec[9]
    cdef const i32[:] succ = spec[10]
    cdef Net net = _net(spec, radix, stride, next_, nb_ptr, nb_idx, nb_stride, n_t, tab_off, succ_off, tab_ptr, succ)
    cdef i64 n_in = 1
    cdef int i
    for i in range(net.N):
        n_in *= net.next_[i]
    key_ptr = np.zeros(n * n_in + 1, dtype=np.int64)
    cdef i64[:] kp = key_ptr
    cdef i64 *buf = <i64 *> malloc(4 * net.N * sizeof(i64))
    cdef i64 *dig = buf
    cdef i64 *lo = buf + net.N
    cdef i64 *hi = buf + 2 * net.N
    cdef i64 *cur = buf + 3 * net.N
    cdef i64 x, e, c, pos, xs
    cdef i32[:] o
    try:
        for x in range(n):
            _decode(&net, x, dig)
            for e in range(n_in):
                c = 0
                if _ranges(&net, dig, e, lo, hi):
                    c = 1
                    for i in range(net.N):
                        c *= hi[i] - lo[i]
                kp[x * n_in + e + 1] = kp[x * n_in + e] + c
        out = np.empty(kp[n * n_in], dtype=np.int32)
        o = out
        for x in range(n):
            _decode(&net, x, dig)
            for e in range(n_in):
                if not _ranges(&net, dig, e, lo, hi):
                    continue
                pos = kp[x * n_in + e]
                for i in range(net.N):
                    cur[i] = lo[i]
                while True:
                    xs = 0
                    for i in range(net.N):
                        xs += (<i64>net.succ[net.succ_off[i] + cur[i]]) * net.stride[i]
                    o[pos] = xs
                    pos += 1
                    i = net.N - 1
                    while i >= 0:
                        cur[i] += 1
                        if cur[i] < hi[i]:
                            break
                        cur[i] = lo[i]
                        i -= 1
                    if i < 0:
                        break
    finally:
        free(buf)
    return key_ptr, out


# ---------------------------------------------------------------- integrators
def rk4_scalar(double[:] v0, double g, double[:] h, double[:] s, double c, double tau, int steps):
    """Batch RK4 of dv/dt = (h - g v + s / v) / c over [0, tau]; NaN marks v <= 0."""
    cdef Py_ssize_t b, n = v0.shape[0]
    out = np.array(v0, dtype=np.float64, copy=True)
    bad_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:] v = out
    cdef u8[:] bad = bad_arr
    cdef double k1, k2, k3, k4, x, dt = tau / steps, ic = 1.0 / c
    cdef int k
    # steps outer, batch inner: independent lanes keep the divider pipelined
    with nogil:
        for k in range(steps):
            for b in range(n):
                x = v[b]
                bad[b] |= x <= 0
                k1 = (h[b] - g * x + s[b] / x) * ic
                k2 = (h[b] - g * (x + 0.5 * dt * k1) + s[b] / (x + 0.5 * dt * k1)) * ic
                k3 = (h[b] - g * (x + 0.5 * dt * k2) + s[b] / (x + 0.5 * dt * k2)) * ic
                k4 = (h[b] - g * (x + dt * k3) + s[b] / (x + dt * k3)) * ic
                v[b] = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        for b in range(n):
            if bad[b] or not (v[b] > 0):
                v[b] = NAN
    return out


cdef void _net_f(double *v, const double[:, :] A, const double *s, const double[:] c,
                 int n, double *out) nogil:
    cdef int i, j
    cdef double acc
    for i in range(n):
        acc = 0
        for j in range(n):
            acc -= A[i, j] * v[j]
        out[i] = (acc + s[i] / v[i]) / c[i]


def rk4_network(double[:, :] v0, const double[:, :] A, double[:, :] s, const double[:] c,
                double tau, int steps):
    """Batch RK4 of C dV/dt = -A V + s / V over [0, tau]; rows hitting V <= 0 become NaN."""
    cdef int n = v0.shape[1]
    cdef Py_ssize_t b, nb = v0.shape[0]
    out = np.empty((nb, n), dtype=np.float64)
    cdef double[:, :] o = out
    cdef double *w = <double *> malloc(6 * n * sizeof(double))
    cdef double *v = w
    cdef double *tmp = w + n
    cdef double *k1 = w + 2 * n
    cdef double *k2 = w + 3 * n
    cdef double *k3 = w + 4 * n
    cdef double *k4 = w + 5 * n
    cdef double dt = tau / steps
    cdef int i, k, bad
    try:
        with nogil:
            for b in range(nb):
                for i in range(n):
                    v[i] = v0[b, i]
                bad = 0
                for k in range(steps):
                    for i in range(n):
                        if v[i] <= 0:
                            bad = 1
                    if bad:
                        break
                    _net_f(v, A, &s[b, 0], c, n, k1)
                    for i in range(n):
                        tmp[i] = v[i] + 0.5 * dt * k1[i]
                    _net_f(tmp, A, &s[b, 0], c, n, k2)
                    for i in range(n):
                        tmp[i] = v[i] + 0.5 * dt * k2[i]
                    _net_f(tmp, A, &s[b, 0], c, n, k3)
                    for i in range(n):
                        tmp[i] = v[i] + dt * k3[i]
                    _net_f(tmp, A, &s[b, 0], c, n, k4)
                    for i in range(n):
                        v[i] = v[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
                for i in range(n):
                    o[b, i] = NAN if (bad or v[i] <= 0) else v[i]
    finally:
        free(w)
    return out
