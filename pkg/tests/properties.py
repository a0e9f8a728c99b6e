"""Randomized invariants of the model, sampler and exact solvers.

Each property increments ``CASES[name]`` once per generated example so the
acceptance suite can confirm how many cases actually ran.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from nhsse.exact.freefermion import renyi2
from nhsse.exact.toy import partition_reality_check, toy_argmax, toy_weight
from nhsse.model import (
    Boundary,
    ChainParams,
    build_vertex_table,
    fermion_boundary,
    jordan_wigner_hamiltonian,
    params_from_text,
    params_to_text,
    sign_free,
)
from nhsse.sse import binning_error, check_invariants, init_config, run_sweeps
from nhsse.sse.engine import magnetization, measure_winding
from nhsse.sse.kernels import exit_probabilities
from nhsse.sse.record import ChainTally, MeasurementRecord
from nhsse.winding import WindingHistogram

CASES: Counter = Counter()
PURE_EXAMPLES = 1000
SSE_EXAMPLES = 60

pure = settings(max_examples=PURE_EXAMPLES, deadline=None, derandomize=True,
                suppress_health_check=[HealthCheck.too_slow])
sse = settings(max_examples=SSE_EXAMPLES, deadline=None, derandomize=True,
               suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])

unit = st.floats(-1.0, 1.0, allow_nan=False)
small = st.floats(-0.6, 0.6, allow_nan=False)
sizes = st.sampled_from([2, 4, 6, 8, 10, 12])
bcs = st.sampled_from(["OBC", "PBC"])


@st.composite
def chain_params(draw, n=sizes, boundary=bcs):
    return ChainParams(draw(n), jz=draw(st.floats(-1.0, 2.0)), dj=draw(small), delta=draw(small),
                       eps=draw(st.floats(0.0, 1.5)), mu=draw(st.floats(-0.5, 0.5)),
                       beta=draw(st.floats(0.1, 50.0)), boundary=draw(boundary))


@pure
@given(chain_params())
def prop_vertex_weights_nonnegative_iff_sign_free(p):
    CASES["vertex_weights"] += 1
    if sign_free(p):
        vt = build_vertex_table(p)
        assert np.all(vt.leg_weights() >= 0)
    else:
        try:
            build_vertex_table(p)
        except ValueError:
            return
        raise AssertionError("table built for a sign-problem configuration")


@pure
@given(chain_params())
def prop_hopping_sum_independent_of_delta(p):
    q = p.replace(delta=0.0, jz=0.0, mu=0.0, eps=1.0)
    p = p.replace(jz=0.0, mu=0.0, eps=1.0)
    assume(sign_free(p))
    CASES["hopping_sum"] += 1
    a, b = build_vertex_table(p), build_vertex_table(q)
    np.testing.assert_allclose(a.w2 + a.w3, b.w2 + b.w3, atol=1e-14)
    np.testing.assert_allclose(a.w3 - a.w2, p.delta, atol=1e-14)


@pure
@given(chain_params(n=st.sampled_from([2, 4, 6])))
def prop_heat_bath_normalized_and_balanced(p):
    assume(sign_free(p))
    CASES["heat_bath"] += 1
    leg_w = build_vertex_table(p).leg_weights()
    cum = exit_probabilities(leg_w)
    prob = np.diff(cum, axis=-1, prepend=0.0)
    for b in range(leg_w.shape[0]):
        for code in np.nonzero(leg_w[b] > 0)[0]:
            np.testing.assert_allclose(cum[b, code, :, 3], 1.0, atol=1e-12)
            for lin in range(4):
                for lout in range(4):
                    nc = code if lin == lout else code ^ (1 << lin) ^ (1 << lout)
                    if leg_w[b, nc] > 0:
                        # detailed balance of the reversed move
                        lhs = leg_w[b, code] * prob[b, code, lin, lout]
                        rhs = leg_w[b, nc] * prob[b, nc, lout, lin]
                        assert abs(lhs - rhs) <= 1e-12 * max(1.0, lhs)


@pure
@given(chain_params(n=st.sampled_from([2, 4, 6, 8, 16, 32]), boundary=st.sampled_from(["OBC", "PBC", "APBC"])))
def prop_jordan_wigner_hermitian_at_zero_delta(p):
    CASES["jw_hermitian"] += 1
    h0 = jordan_wigner_hamiltonian(p.replace(jz=0.0, delta=0.0)).matrix
    np.testing.assert_allclose(h0, h0.conj().T, atol=1e-14)
    hp = jordan_wigner_hamiltonian(p.replace(jz=0.0)).matrix
    hm = jordan_wigner_hamiltonian(p.replace(jz=0.0, delta=-p.delta)).matrix
    np.testing.assert_allclose(hp, hm.conj().T, atol=1e-14)


@pure
@given(st.integers(1, 40).map(lambda k: 2 * k), st.integers(0, 80), st.sampled_from(list(Boundary)))
def prop_fermion_boundary_parity(n, nf, bc):
    CASES["fermion_boundary"] += 1
    got = fermion_boundary(n, nf, bc)
    if bc is Boundary.OBC:
        assert got is Boundary.OBC
        return
    other = Boundary.APBC if bc is Boundary.PBC else Boundary.PBC
    assert got is not fermion_boundary(n, nf, other)
    assert got is not fermion_boundary(n, nf + 1, bc)


@pure
@given(st.floats(-3, 3), st.floats(0.5, 200), st.integers(-40, 40))
def prop_toy_weight_mirror(alpha, beta, w):
    CASES["toy_mirror"] += 1
    assert toy_weight(alpha, beta, w) == toy_weight(-alpha, beta, -w)
    assert 0.0 <= toy_weight(alpha, beta, w) <= 1.0
    best = toy_argmax(alpha, beta)
    assert abs(best - alpha * beta / (2 * np.pi)) <= 0.5 + 1e-9
    assert toy_weight(alpha, beta, best) >= toy_weight(alpha, beta, w)


@pure
@given(chain_params(boundary=st.sampled_from(["OBC", "PBC", "APBC"])), st.integers(0, 2 ** 31))
def prop_params_text_roundtrip(p, seed):
    CASES["params_roundtrip"] += 1
    p = p.replace(seed=seed)
    assert params_from_text(params_to_text(p)) == p


def _tally(rng, nb):
    n = int(rng.integers(10, 40))
    w = rng.integers(-3, 4, n)
    return ChainTally(n_series=rng.integers(0, 50, n).astype(float), w_series=w,
                      op_counts=rng.integers(0, 9, (3, nb)).astype(float), zz_sum=rng.normal(size=nb),
                      loops=int(rng.integers(0, 100)), bounces=int(rng.integers(0, 100)),
                      exits=int(rng.integers(100, 200)), trans_up={1: int(rng.integers(0, 5))})


@pure
@given(st.integers(0, 2 ** 32 - 1), st.permutations(range(3)))
def prop_record_merge_order_free(seed, order):
    CASES["record_merge"] += 1
    rng = np.random.default_rng(seed)
    p = ChainParams(4)
    parts = [MeasurementRecord(p, {int(k): _tally(rng, 4)}) for k in rng.choice(1000, 3, replace=False)]
    a = parts[0].merge(parts[1]).merge(parts[2])
    b = parts[order[0]].merge(parts[order[1]].merge(parts[order[2]]))
    assert sorted(a.chains) == sorted(b.chains)
    assert a.sum_n == b.sum_n and a.loops == b.loops and a.bounces == b.bounces
    np.testing.assert_array_equal(a.mean_op_counts(), b.mean_op_counts())
    assert a.winding_counts() == b.winding_counts()
    assert WindingHistogram.from_record(a) == WindingHistogram.from_record(b)


@pure
@given(st.dictionaries(st.integers(-20, 20), st.integers(0, 1000), max_size=10),
       st.dictionaries(st.integers(-20, 20), st.integers(0, 1000), max_size=10))
def prop_histogram_merge(ca, cb):
    CASES["histogram_merge"] += 1
    a, b = WindingHistogram(ca), WindingHistogram(cb)
    ab, ba = a.merge(b), b.merge(a)
    assert ab == ba and ab.total == a.total + b.total
    if ab.total:
        assert abs(sum(ab.ratios().values()) - 1.0) < 1e-12


@pure
@given(st.integers(0, 2 ** 32 - 1), st.integers(10, 400), st.floats(-100, 100).filter(lambda s: s != 0))
def prop_binning_error_scales(seed, n, scale):
    CASES["binning_scale"] += 1
    x = np.random.default_rng(seed).normal(size=n)
    e1, k1 = binning_error(x)
    e2, k2 = binning_error(scale * x + 3.0)
    assert k1 == k2 and e1 >= 0
    assert abs(e2 - abs(scale) * e1) <= 1e-9 * abs(scale) * max(e1, 1e-300) + 1e-12
    assert binning_error(np.full(n, 2.5))[0] < 1e-12


@pure
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 12), st.data())
def prop_renyi2_pure_state_complement(seed, n, data):
    CASES["renyi_complement"] += 1
    rng = np.random.default_rng(seed)
    nf = data.draw(st.integers(0, n))
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    c = q[:, :nf] @ q[:, :nf].conj().T
    region = sorted(data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n - 1)))
    comp = [i for i in range(n) if i not in region]
    a, b = renyi2(c, region), renyi2(c, comp)
    assert abs(a.s2.real - b.s2.real) < 1e-8
    assert -1e-10 <= a.s2.real <= len(region) * np.log(2) + 1e-10


@pure
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 5)), min_size=1, max_size=20), st.floats(0.01, 20))
def prop_conjugate_pairs_give_real_partition_function(pairs, beta):
    CASES["partition_real"] += 1
    e = np.array([complex(a, b) for a, b in pairs] + [complex(a, -b) for a, b in pairs])
    assert partition_reality_check(e, beta)["imag_ratio"] < 1e-10


# -- sampler ----------------------------------------------------------------------------------

@st.composite
def sse_params(draw):
    p = ChainParams(draw(st.sampled_from([2, 4, 6, 8])), jz=draw(st.floats(-0.2, 1.5)),
                    dj=draw(st.floats(-0.4, 0.4)), delta=draw(st.floats(-0.5, 0.5)),
                    eps=draw(st.floats(0.3, 1.0)), mu=draw(st.floats(-0.2, 0.2)),
                    beta=draw(st.floats(0.5, 20.0)), boundary=draw(bcs))
    return p


@sse
@given(sse_params(), st.integers(0, 2 ** 31), st.integers(0, 1))
def prop_sse_sweeps_preserve_invariants(p, seed, shift):
    assume(sign_free(p))
    CASES["sse_sweeps"] += 1
    sector = -shift if p.n_sites > 2 else 0
    cfg = init_config(p, m_initial=16, seed=seed, sector=sector)
    for _ in range(5):
        run_sweeps(cfg, 4)
        check_invariants(cfg)
        assert magnetization(cfg) == sector
        assert cfg.n <= cfg.m
        if not p.periodic:
            assert measure_winding(cfg) == 0


PURE_PROPERTIES = [
    prop_vertex_weights_nonnegative_iff_sign_free,
    prop_hopping_sum_independent_of_delta,
    prop_heat_bath_normalized_and_balanced,
    prop_jordan_wigner_hermitian_at_zero_delta,
    prop_fermion_boundary_parity,
    prop_toy_weight_mirror,
    prop_params_text_roundtrip,
    prop_record_merge_order_free,
    prop_histogram_merge,
    prop_binning_error_scales,
    prop_renyi2_pure_state_complement,
    prop_conjugate_pairs_give_real_partition_function,
]
SSE_PROPERTIES = [prop_sse_sweeps_preserve_invariants]
