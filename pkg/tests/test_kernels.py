import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CONFIG, random_fts
from symcomp import _pykernels as pure
from symcomp import kernels
from symcomp.product import ProductSystem
from symcomp.randnet import load_config, random_network, random_safe_sets

compiled = kernels.compiled
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _product(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, load_config(CONFIG))
    safes = random_safe_sets(rng, net, 0.8)
    P = ProductSystem(net.components, net.neighbor_map(), [0.0] * net.N)
    return P, P.product_mask(safes)


def test_backend_selection():
    assert kernels.BACKEND_NAME == ("cython" if compiled is not None else "numpy")
    assert kernels.threads() >= 1


@needs_ext
@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([0, 1, 2]))
def test_csr_fixpoint_backends_agree(seed, schedule):
    rng = np.random.default_rng(seed)
    S = random_fts(rng, int(rng.integers(1, 40)), n_ext=3, n_int=2, density=0.1)
    safe = (rng.random(S.n_states) < 0.8).astype(np.uint8)
    a, b = safe.copy(), safe.copy()
    pure.csr_fixpoint(S.key_ptr, S.succ, a, S.n_states, S.n_ext * S.n_int, schedule)
    compiled.csr_fixpoint(S.key_ptr, S.succ, b, S.n_states, S.n_ext * S.n_int, schedule)
    assert np.array_equal(a, b)
    ea = np.asarray(pure.csr_enabled(S.key_ptr, S.succ, a, S.n_ext * S.n_int))
    eb = np.asarray(compiled.csr_enabled(S.key_ptr, S.succ, b, S.n_ext * S.n_int))
    assert np.array_equal(ea.astype(bool), eb.astype(bool))


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([0, 1, 2]))
def test_product_kernels_agree(seed, schedule):
    P, safe = _product(seed)
    spec = P.kernel_spec()
    a, b = safe.copy(), safe.copy()
    wa = np.zeros(P.n_states, np.uint16)
    wb = np.zeros(P.n_states, np.uint16)
    pure.product_fixpoint(spec, a, wa, schedule)
    compiled.product_fixpoint(spec, b, wb, schedule)
    assert np.array_equal(a, b)
    states = np.arange(P.n_states, dtype=np.int64)
    assert np.array_equal(np.asarray(pure.product_enabled(spec, a, states)).astype(bool),
                          np.asarray(compiled.product_enabled(spec, b, states)).astype(bool))
    assert int(pure.product_count_enabled(spec, a)) == int(compiled.product_count_enabled(spec, b))
    ka, sa = pure.product_materialize(spec, P.n_states)
    kb, sb = compiled.product_materialize(spec, P.n_states)
    assert np.array_equal(np.asarray(ka), np.asarray(kb))
    # successor order inside a key may differ; compare per key
    for k in range(len(ka) - 1):
        assert sorted(np.asarray(sa)[ka[k]:ka[k + 1]]) == sorted(np.asarray(sb)[kb[k]:kb[k + 1]])


@needs_ext
def test_rk4_backends_agree(rng):
    # 2000 steps per sampling period keeps RK4 inside its stability region (g/C ~ 7e6)
    v0 = rng.uniform(430, 470, size=50)
    h = rng.uniform(6000, 7000, size=50)
    s = rng.uniform(-1000, 8000, size=50)
    a = pure.rk4_scalar(v0.copy(), 14.3, h, s, 2e-6, 1e-4, 2000)
    b = compiled.rk4_scalar(v0.copy(), 14.3, h, s, 2e-6, 1e-4, 2000)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9, equal_nan=False)
    from symcomp.models import MicrogridParams, laplacian
    L = laplacian()
    V = rng.uniform(440, 460, size=(3, 5))
    S = rng.uniform(-1000, 8000, size=(3, 5))
    C = np.array(MicrogridParams().C)
    assert np.allclose(pure.rk4_network(V.copy(), L, S, C, 1e-4, 2000),
                       compiled.rk4_network(V.copy(), L, S, C, 1e-4, 2000), rtol=1e-12, atol=1e-9, equal_nan=False)


def test_rk4_flags_nonpositive_voltage():
    out = kernels.rk4_scalar(np.array([1.0, 450.0]), 1.0, np.zeros(2), np.array([-1e6, 0.0]), 1e-6, 1e-4, 100)
    assert np.isnan(out[0]) and np.isfinite(out[1])


def test_product_fixpoint_matches_materialized(rng):
    from symcomp.synthesis import controlled_invariant
    for seed in range(20):
        P, safe = _product(seed)
        alive, _ = P.fixpoint(safe)
        ref, _ = controlled_invariant(P.materialize(), safe.astype(bool))
        assert np.array_equal(alive.astype(bool), ref)
