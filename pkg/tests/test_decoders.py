import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from cqpolar import qmath
from cqpolar.channels import ChannelFamilySpec, bob_channel, build_channel
from cqpolar.polarize import ClassicalTable, bec, bsc, classical_channel, classical_reduce, evolve_table
from cqpolar.qmath import DimensionError, DomainError, ResourceError
from cqpolar.qpolar.decoders import (
    HelstromCascade,
    _f,
    sc_decode_classical,
    sc_decode_llr,
    sc_decode_quantum,
    sequential_outcome_probabilities,
    simulate_classical_sc,
    simulate_quantum_sc,
)
from cqpolar.qpolar.encoder import all_words, encode, encode_batch
from cqpolar.wiretap import make_partition, reliability_bound

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def erasure_table():
    # outputs 0, 1, erasure; identity basis
    return ClassicalTable(np.eye(3), np.array([0.75, 0.0, 0.25]), np.array([0.0, 0.75, 0.25]))


def brute_sc(y, p0, p1, frozen):
    """SC by direct posterior enumeration: decide u_i from P(y, u_1^i) summed over later bits."""
    N = len(y)
    P = (np.asarray(p0), np.asarray(p1))
    u = []
    for i in range(N):
        if frozen[i] >= 0:
            u.append(int(frozen[i]))
            continue
        score = [0.0, 0.0]
        rest = all_words(N - i - 1)
        for b in (0, 1):
            words = np.concatenate([np.tile(np.array(u + [b], dtype=np.uint8), (rest.shape[0], 1)), rest], axis=1)
            xs = encode_batch(words)
            score[b] = float(sum(np.prod([P[x[k]][y[k]] for k in range(N)]) for x in xs))
        # ties (equal up to rounding) go to 0
        u.append(int(score[1] > score[0] * (1 + 1e-9)))
    return np.array(u, dtype=np.uint8)


# --- LLR arithmetic -----------------------------------------------------------------------------


@given(st.floats(-30, 30), st.floats(-30, 30))
@settings(max_examples=200, deadline=None)
def test_check_node_matches_tanh_rule(a, b):
    expected = 2 * math.atanh(math.tanh(a / 2) * math.tanh(b / 2)) if abs(a) < 15 and abs(b) < 15 else None
    got = float(_f(np.array(a), np.array(b)))
    if expected is not None:
        assert got == pytest.approx(expected, abs=1e-9)
    assert abs(got) <= min(abs(a), abs(b)) + 1e-12


def test_check_node_infinities():
    inf = np.inf
    assert float(_f(np.array(inf), np.array(inf))) == inf
    assert float(_f(np.array(inf), np.array(-inf))) == -inf
    assert float(_f(np.array(inf), np.array(2.0))) == pytest.approx(2.0)
    assert float(_f(np.array(0.0), np.array(inf))) == 0.0


# --- classical SC -------------------------------------------------------------------------------


def test_noiseless_recovers_everything():
    table = classical_reduce(bec(0.0))
    rng = np.random.default_rng(0)
    free = np.full(16, -1)
    for _ in range(20):
        u = rng.integers(0, 2, 16).astype(np.uint8)
        x = encode(u)
        y = np.array([int(np.flatnonzero(table.p1 if b else table.p0)[0]) for b in x])
        assert_array_equal(sc_decode_classical(y, table, free), u)


def test_full_erasure_returns_frozen_pattern():
    table = classical_reduce(bec(1.0))
    e = int(np.argmax(table.p0))
    frozen = np.array([1, -1, 0, -1, 1, -1, -1, -1])
    out = sc_decode_classical(np.full(8, e), table, frozen)
    assert_array_equal(out, np.where(frozen >= 0, frozen, 0))


@pytest.mark.parametrize("p0,p1", [([0.75, 0.0, 0.25], [0.0, 0.75, 0.25]), ([0.89, 0.11], [0.11, 0.89]), ([0.6, 0.3, 0.1], [0.1, 0.2, 0.7])])
def test_sc_matches_posterior_enumeration(p0, p1):
    rng = np.random.default_rng(1)
    table = ClassicalTable(np.eye(len(p0)), np.array(p0), np.array(p1))
    for _ in range(25):
        frozen = np.where(rng.random(8) < 0.4, rng.integers(0, 2, 8), -1)
        # outputs of an actual transmission, so zero-probability tables stay consistent
        u = np.where(frozen >= 0, frozen, rng.integers(0, 2, 8)).astype(np.uint8)
        x = encode(u)
        y = np.array([rng.choice(len(p0), p=p1 if b else p0) for b in x])
        got = sc_decode_classical(y, table, frozen)
        want = brute_sc(y, p0, p1, frozen)
        # past a wrong decision an erasure path has probability zero and later bits are arbitrary
        wrong = np.flatnonzero(want != u)
        stop = wrong[0] + 1 if wrong.size else 8
        assert_array_equal(got[:stop], want[:stop])


def test_sc_batch_and_validation():
    table = classical_reduce(bsc(0.1))
    y = np.random.default_rng(2).integers(0, 2, (5, 4))
    batch = sc_decode_classical(y, table, [-1, -1, 0, -1])
    for r in range(5):
        assert_array_equal(batch[r], sc_decode_classical(y[r], table, [-1, -1, 0, -1]))
    with pytest.raises(DimensionError):
        sc_decode_llr(np.zeros(4), [-1, -1])
    with pytest.raises(DomainError):
        sc_decode_llr(np.zeros(2), [-1, 2])


def test_classical_monte_carlo_bec():
    frozen = -np.ones(8, dtype=int)
    frozen[:4] = 0
    a = simulate_classical_sc(bec(0.25), frozen, 400, seed=3, bound=1.0)
    b = simulate_classical_sc(bec(0.25), frozen, 400, seed=3, bound=1.0)
    assert_array_equal(a.errors, b.errors)
    assert a.trials == 400 and 0 <= a.block_error <= 1
    lo, hi = a.wilson_interval()
    assert lo <= a.block_error <= hi
    s = a.summary()
    assert s["seed"] == 3 and s["within_bound"] == a.within_bound
    assert simulate_classical_sc(bec(0.0), frozen, 50).failures == 0
    assert simulate_classical_sc(bec(1.0), -np.ones(4, dtype=int), 50).block_error > 0.5


def test_classical_block_error_under_reliability_bound():
    from cqpolar.wiretap import partition_channels

    p = partition_channels(bec(0.25), bec(0.75), 6)
    frozen = -np.ones(p.N, dtype=int)
    frozen[np.array(p.B) - 1] = 0
    frozen[np.array(p.X, dtype=int) - 1] = 0
    bound = reliability_bound(p, p.bob_table)
    res = simulate_classical_sc(bec(0.25), frozen, 2000, seed=4, bound=bound)
    assert res.within_bound


# --- Helstrom cascade ---------------------------------------------------------------------------


def test_cascade_caps():
    with pytest.raises(ResourceError):
        HelstromCascade(bsc(0.1), 16)
    with pytest.raises(ResourceError):
        HelstromCascade(bec(0.1), 8)  # 3^8 > 4096


def test_conditional_pair_is_averaged_state():
    W = bob_channel(build_channel(ChannelFamilySpec("amplitude_damping", parameter=0.2)))
    c = HelstromCascade(W, 2)
    r0, r1 = c.conditional_pair(())
    # step 1: x = (u1 xor u2, u2) averaged over u2
    k = lambda a, b: np.kron(W.output(a), W.output(b))  # noqa: E731
    assert_allclose(r0, 0.5 * (k(0, 0) + k(1, 1)), atol=1e-14)
    assert_allclose(r1, 0.5 * (k(1, 0) + k(0, 1)), atol=1e-14)
    s0, s1 = c.conditional_pair((1,))
    assert_allclose(s0, k(1, 0), atol=1e-14)
    with pytest.raises(DomainError):
        c.conditional_pair((0, 0))


@pytest.mark.parametrize("N", [2, 4])
def test_povm_complete_and_matches_sequential(N):
    W = bob_channel(build_channel(ChannelFamilySpec("amplitude_damping", parameter=0.3)))
    c = HelstromCascade(W, N)
    frozen = np.full(N, -1)
    frozen[0] = 0
    povm = c.povm(frozen)
    assert len(povm) == 2 ** (N - 1)
    assert_allclose(sum(povm.values()), np.eye(c.dim), atol=1e-12)
    rho = qmath.random_density(c.dim, np.random.default_rng(5))
    seq = sequential_outcome_probabilities(c, rho, frozen)
    for word, lam in povm.items():
        assert seq[word] == pytest.approx(float(np.real(np.trace(lam @ rho))), abs=1e-12)


def test_coherent_decoder_is_isometry():
    W = bob_channel(build_channel(ChannelFamilySpec("amplitude_damping", parameter=0.3)))
    c = HelstromCascade(W, 2)
    roots = [qmath.psd_sqrt(lam) for lam in c.povm([-1, -1]).values()]
    rng = np.random.default_rng(6)
    for _ in range(20):
        psi = qmath.random_pure(c.dim, rng)
        norm2 = sum(np.linalg.norm(r @ psi) ** 2 for r in roots)
        assert norm2 == pytest.approx(1.0, abs=1e-8)


def test_orthogonal_outputs_never_err():
    W = classical_channel([1, 0], [0, 1])
    c = HelstromCascade(W, 4)
    for u in all_words(4):
        psi = np.zeros(16, dtype=complex)
        psi[int("".join(map(str, encode(u))), 2)] = 1
        res = sc_decode_quantum(psi, W, [-1] * 4, cascade=c)
        assert_array_equal(res.decisions, u)
        assert res.probability == pytest.approx(1.0)
        assert_allclose(np.abs(res.state), np.abs(psi))


def test_quantum_decoder_density_input_and_validation():
    W = bob_channel(build_channel(ChannelFamilySpec("amplitude_damping", parameter=0.1)))
    rho = np.kron(W.rho1, W.rho1)  # codeword for u = (0, 1)
    res = sc_decode_quantum(rho, W, [0, -1], rng=np.random.default_rng(0))
    assert res.decisions[0] == 0
    assert abs(np.trace(res.state) - 1) < 1e-12
    with pytest.raises(DimensionError):
        sc_decode_quantum(np.ones(3), W, [0, -1])


def test_erasure_quantum_equals_classical():
    e = 0.25
    table = erasure_table()
    W = classical_channel(table.p0, table.p1)
    c = HelstromCascade(W, 4)
    frozen = np.array([0, -1, -1, -1])
    rng = np.random.default_rng(7)
    for _ in range(100):
        u = np.where(frozen >= 0, frozen, rng.integers(0, 2, 4)).astype(np.uint8)
        x = encode(u)
        y = np.where(rng.random(4) < e, 2, x)
        psi = np.zeros(81, dtype=complex)
        psi[int(np.ravel_multi_index(tuple(y), (3,) * 4))] = 1
        q = sc_decode_quantum(psi, W, frozen, rng=rng, cascade=c).decisions
        assert_array_equal(q, sc_decode_classical(y, table, frozen))


def test_quantum_monte_carlo_under_bound_small():
    W = bob_channel(build_channel(ChannelFamilySpec("amplitude_damping", parameter=0.1)))
    p = make_partition(2, A=(2, 3, 4))
    frozen = np.array([0, -1, -1, -1])
    bound = reliability_bound(p, evolve_table(W, 2))
    a = simulate_quantum_sc(W, frozen, 300, seed=8, bound=bound)
    b = simulate_quantum_sc(W, frozen, 300, seed=8, bound=bound)
    assert_array_equal(a.errors, b.errors)
    assert a.within_bound
