import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal, assert_allclose

from cqpolar.qmath import DimensionError, ResourceError
from cqpolar.qpolar.encoder import (
    all_words,
    bit_reversal,
    bits_to_int,
    coherent_encode,
    encode,
    encode_batch,
    encode_dense,
    encoding_permutation,
    generator_matrix,
    int_to_bits,
    level_of,
)


def test_small_examples():
    assert_array_equal(encode([1, 1]), [0, 1])
    assert_array_equal(encode([1, 0]), [1, 0])
    assert_array_equal(encode([0, 1, 0, 0]), [1, 0, 1, 0])


def test_generator_matrix_n2():
    # B_4 F^{(x)2}, written out by hand
    expected = np.array([[1, 0, 0, 0], [1, 0, 1, 0], [1, 1, 0, 0], [1, 1, 1, 1]])
    assert_array_equal(generator_matrix(2), expected)


def test_level_and_errors():
    assert level_of(1) == 0 and level_of(1024) == 10
    for bad in (0, 3, 6, 12):
        with pytest.raises(DimensionError):
            level_of(bad)
    with pytest.raises(DimensionError):
        encode([1, 0, 1])
    with pytest.raises(DimensionError):
        encode(np.zeros((2, 4)))


def test_bit_reversal():
    assert_array_equal(bit_reversal(3), [0, 4, 2, 6, 1, 5, 3, 7])
    assert_array_equal(bit_reversal(0), [0])


def test_bits_int_roundtrip():
    for v in (0, 5, 255):
        assert bits_to_int(int_to_bits(v, 8)) == v
    assert_array_equal(all_words(2), [[0, 0], [0, 1], [1, 0], [1, 1]])


@given(st.integers(min_value=0, max_value=4), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_butterfly_matches_dense(n, seed):
    u = np.random.default_rng(seed).integers(0, 2, 2**n).astype(np.uint8)
    assert_array_equal(encode(u), encode_dense(u))


@given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_encode_self_inverse(n, seed):
    # F^{(x)n} is an involution over GF(2) and commutes with B_N, so G_N^2 = I
    u = np.random.default_rng(seed).integers(0, 2, 2**n).astype(np.uint8)
    assert_array_equal(encode(encode(u)), u)


def test_batch_matches_rows():
    rng = np.random.default_rng(0)
    u = rng.integers(0, 2, (7, 16)).astype(np.uint8)
    x = encode_batch(u)
    for row in range(7):
        assert_array_equal(x[row], encode(u[row]))


def test_large_encode_speed():
    u = np.random.default_rng(1).integers(0, 2, 2**20).astype(np.uint8)
    encode(u[:1024])  # warm-up
    t0 = time.perf_counter()
    x = encode(u)
    assert time.perf_counter() - t0 < 1.0
    assert x.shape == (2**20,)


# --- coherent encoding --------------------------------------------------------------------------


def test_coherent_basis_states():
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = rng.integers(0, 2, 8).astype(np.uint8)
        state = np.zeros(256, dtype=complex)
        state[bits_to_int(u)] = 1
        out = coherent_encode(state)
        assert np.flatnonzero(out).tolist() == [bits_to_int(encode(u))]


def test_coherent_uniform_superposition_fixed():
    plus = np.full(16, 0.25, dtype=complex)
    assert_allclose(coherent_encode(plus), plus)


def test_coherent_bell_example():
    bell = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    assert_allclose(coherent_encode(bell), np.array([1, 1, 0, 0]) / np.sqrt(2))


def test_coherent_unitary_and_caps():
    rng = np.random.default_rng(3)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    assert np.linalg.norm(coherent_encode(psi)) == pytest.approx(1.0, abs=1e-12)
    perm = encoding_permutation(2)
    assert sorted(perm) == list(range(16))
    with pytest.raises(DimensionError):
        coherent_encode(np.ones(6))
    with pytest.raises(ResourceError):
        encoding_permutation(4)
