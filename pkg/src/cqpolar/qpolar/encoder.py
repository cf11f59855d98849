"""Arikan transform ``x = u G_N`` with ``G_N = B_N F^{(x) n}`` over GF(2).

Bit vectors are ``uint8`` arrays with index 0 holding ``u_1``. Because the
bit-reversal ``B_N`` commutes with ``F^{(x) n}``, the butterfly is applied in
natural order and the result is bit-reversed once at the end.
"""

from __future__ import annotations

import numpy as np

from ..qmath import DimensionError, ResourceError

F2 = np.array([[1, 0], [1, 1]], dtype=np.uint8)

MAX_COHERENT_QUBITS = 12


def level_of(N: int) -> int:
    n = int(N).bit_length() - 1
    if N < 1 or 2**n != N:
        raise DimensionError(f"block length {N} is not a power of two")
    return n


def bit_reversal(n: int) -> np.ndarray:
    """Permutation ``perm`` with ``perm[j]`` the ``n``-bit reversal of ``j``."""
    idx = np.arange(2**n)
    out = np.zeros_like(idx)
    for k in range(n):
        out |= ((idx >> k) & 1) << (n - 1 - k)
    return out


def _butterfly(x: np.ndarray) -> np.ndarray:
    """In-place ``x F^{(x) n}`` along the last axis (natural order)."""
    N = x.shape[-1]
    lead = x.shape[:-1]
    h = N // 2
    while h >= 1:
        v = x.reshape(*lead, N // (2 * h), 2, h)
        v[..., 0, :] ^= v[..., 1, :]
        h //= 2
    return x


def encode_batch(u: np.ndarray) -> np.ndarray:
    """Encode every row of ``u`` (shape ``(..., N)``)."""
    u = np.asarray(u)
    n = level_of(u.shape[-1])
    x = (u & 1).astype(np.uint8, copy=True)
    _butterfly(x)
    return x[..., bit_reversal(n)]


def encode(u) -> np.ndarray:
    u = np.asarray(u)
    if u.ndim != 1:
        raise DimensionError("encode expects a single bit vector")
    return encode_batch(u)


def generator_matrix(n: int) -> np.ndarray:
    """Dense ``B_N F^{(x) n}`` (oracle for small ``n``)."""
    g = np.ones((1, 1), dtype=np.uint8)
    for _ in range(n):
        g = np.kron(g, F2)
    return g[bit_reversal(n)]


def encode_dense(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.int64)
    n = level_of(u.shape[-1])
    return ((u @ generator_matrix(n).astype(np.int64)) % 2).astype(np.uint8)


def bits_to_int(bits) -> int:
    """Big-endian: ``bits[0]`` is the most significant bit."""
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - k)) & 1 for k in range(width)], dtype=np.uint8)


def all_words(N: int) -> np.ndarray:
    """All ``2**N`` bit vectors in lexicographic order, shape ``(2**N, N)``."""
    idx = np.arange(2**N)
    return ((idx[:, None] >> (N - 1 - np.arange(N))) & 1).astype(np.uint8)


def encoding_permutation(n: int) -> np.ndarray:
    """``perm[u] = x`` as basis-state indices, qubit 1 most significant."""
    N = 2**n
    if N > MAX_COHERENT_QUBITS:
        raise ResourceError(f"coherent encoding limited to {MAX_COHERENT_QUBITS} qubits, got {N}")
    xs = encode_batch(all_words(N))
    weights = 1 << (N - 1 - np.arange(N))
    return xs.astype(np.int64) @ weights


def coherent_encode(state: np.ndarray) -> np.ndarray:
    """Apply the CNOT network to an ``N``-qubit state vector: ``|u> -> |u G_N>``."""
    state = np.asarray(state, dtype=complex).reshape(-1)
    N = state.size.bit_length() - 1
    if 2**N != state.size:
        raise DimensionError("state length must be 2**N")
    perm = encoding_permutation(level_of(N))
    out = np.zeros_like(state)
    out[perm] = state
    return out
