"""Successive-cancellation decoders and Monte Carlo block-error harnesses.

``frozen`` vectors have length ``N`` and hold the known bit value at frozen
and key positions and ``-1`` at positions the decoder must decide. Ties are
always broken towards 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .. import qmath
from ..channels import CqChannel
from ..polarize import ClassicalTable, classical_reduce, trial_rng
from ..qmath import DEFAULT_TOL, DimensionError, DomainError, ResourceError, Tolerances
from .encoder import all_words, bit_reversal, encode, encode_batch, generator_matrix, level_of

MAX_QUANTUM_N = 8

# Helstrom eigenvalues below this fraction of the largest magnitude count as zero
TIE_REL = 1e-12


def _frozen_array(frozen, N: int | None = None) -> np.ndarray:
    if hasattr(frozen, "frozen_vector"):
        frozen = frozen.frozen_vector()
    f = np.asarray(frozen, dtype=np.int8)
    if N is not None and f.shape[-1] != N:
        raise DimensionError(f"frozen vector has length {f.shape[-1]}, expected {N}")
    if np.any((f < -1) | (f > 1)):
        raise DomainError("frozen entries must be -1, 0 or 1")
    return f


# --- classical SC -------------------------------------------------------------------------------


def _f(a, b):
    """Exact check-node update ``2 atanh(tanh(a/2) tanh(b/2))``, stable for large and infinite LLRs."""
    with np.errstate(invalid="ignore", over="ignore"):
        m = np.minimum(np.abs(a), np.abs(b))
        corr = np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))
        corr = np.nan_to_num(corr, nan=0.0)
        # the correction terms sit outside the sign product
        out = np.sign(a) * np.sign(b) * m + np.where(np.isfinite(m), corr, 0.0)
    return np.nan_to_num(out, nan=0.0, posinf=np.inf, neginf=-np.inf)


def _g(a, b, s):
    with np.errstate(invalid="ignore"):
        out = b + np.where(s.astype(bool), -a, a)
    # contradictory certainties after an earlier wrong decision
    return np.where(np.isnan(out), 0.0, out)


def _sc(L: np.ndarray, frozen: np.ndarray):
    """Decode ``v = u F^(x)n`` from natural-order LLRs; returns ``(u_hat, v_hat)``."""
    N = L.shape[-1]
    if N == 1:
        f = frozen[..., 0]
        u = np.where(f >= 0, f, (L[..., 0] < 0).astype(np.int8)).astype(np.uint8)
        u = np.broadcast_to(u, L.shape[:-1]).copy()
        return u[..., None], u[..., None]
    h = N // 2
    l1, l2 = L[..., :h], L[..., h:]
    ua, va = _sc(_f(l1, l2), frozen[..., :h])
    ub, vb = _sc(_g(l1, l2, va), frozen[..., h:])
    return np.concatenate([ua, ub], axis=-1), np.concatenate([va ^ vb, vb], axis=-1)


def sc_decode_llr(llr, frozen) -> np.ndarray:
    """Successive cancellation from per-position LLRs ``log P(y|0)/P(y|1)``.

    ``llr`` has shape ``(N,)`` or ``(T, N)`` in transmission order; ``frozen``
    broadcasts against it. Known positions are substituted, not decided.
    """
    L = np.asarray(llr, dtype=float)
    N = L.shape[-1]
    n = level_of(N)
    f = _frozen_array(frozen, N)
    perm = bit_reversal(n)
    u, _ = _sc(L[..., perm], np.broadcast_to(f, L.shape).astype(np.int8))
    return u


def table_llr(table: ClassicalTable) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.log(table.p0) - np.log(table.p1)
    return np.nan_to_num(llr, nan=0.0, posinf=np.inf, neginf=-np.inf)


def sc_decode_classical(y, table: ClassicalTable, frozen) -> np.ndarray:
    """Decode received symbols ``y`` (indices into ``table``) of shape ``(N,)`` or ``(T, N)``."""
    y = np.asarray(y, dtype=np.int64)
    return sc_decode_llr(table_llr(table)[y], frozen)


# --- Helstrom cascade ---------------------------------------------------------------------------


def _product_sum(xs: np.ndarray, rhos) -> np.ndarray:
    """``sum_rows (x)_j rho_{x_j}``, sharing Kronecker factors along common prefixes."""
    if xs.shape[1] == 0:
        return np.array([[float(xs.shape[0])]], dtype=complex)
    acc = None
    for b in (0, 1):
        rows = xs[xs[:, 0] == b]
        if rows.shape[0]:
            term = np.kron(rhos[b], _product_sum(rows[:, 1:], rhos))
            acc = term if acc is None else acc + term
    return acc


class HelstromCascade:
    """Helstrom projectors of the successive-cancellation measurement for ``N`` uses of ``W``.

    The projector for step ``i`` given the decided prefix ``u_1..u_{i-1}`` is the
    positive eigenspace of ``rho1_bar - rho0_bar``, where ``rho_b_bar`` averages
    the output over uniform ``u_{i+1}..u_N``. It is cached per prefix.
    """

    def __init__(self, W: CqChannel, N: int, tol: Tolerances = DEFAULT_TOL):
        n = level_of(N)
        if N > MAX_QUANTUM_N:
            raise ResourceError(f"quantum SC decoding limited to N <= {MAX_QUANTUM_N}")
        qmath.check_dim(W.dim**N, tol)
        self.W = W
        self.N = N
        self.dim = W.dim**N
        self._rhos = (W.rho0, W.rho1)
        self._G = generator_matrix(n).astype(np.int64)
        self._cache: dict[tuple, np.ndarray] = {}

    def conditional_pair(self, prefix) -> tuple[np.ndarray, np.ndarray]:
        """Unit-trace ``(rho0_bar, rho1_bar)`` for step ``len(prefix) + 1``."""
        prefix = tuple(int(b) for b in prefix)
        i = len(prefix) + 1
        if i > self.N:
            raise DomainError("prefix covers every position")
        rest = all_words(self.N - i)
        out = []
        for b in (0, 1):
            head = np.array(prefix + (b,), dtype=np.int64)
            xs = (head @ self._G[:i] + rest.astype(np.int64) @ self._G[i:]) % 2
            out.append(_product_sum(xs, self._rhos) / rest.shape[0])
        return out[0], out[1]

    def projector(self, prefix) -> np.ndarray:
        """Orthonormal columns spanning the outcome-1 subspace."""
        key = tuple(int(b) for b in prefix)
        q = self._cache.get(key)
        if q is None:
            r0, r1 = self.conditional_pair(key)
            w, v = np.linalg.eigh(qmath.hermitize(r1 - r0))
            scale = float(np.max(np.abs(w))) if w.size else 0.0
            q = v[:, w > TIE_REL * scale] if scale > 0 else v[:, :0]
            self._cache[key] = q
        return q

    def projector_matrix(self, prefix, outcome: int) -> np.ndarray:
        q = self.projector(prefix)
        p1 = q @ q.conj().T
        return p1 if outcome else np.eye(self.dim) - p1

    def cascade_operator(self, u_full, decided) -> np.ndarray:
        """``K = P_{i_k} ... P_{i_1}`` over decided positions, with all others substituted."""
        K = np.eye(self.dim, dtype=complex)
        for i in range(self.N):
            if decided[i]:
                K = self.projector_matrix(u_full[:i], int(u_full[i])) @ K
        return K

    def povm(self, frozen) -> dict[tuple, np.ndarray]:
        """``Lambda_u = K_u^dagger K_u`` keyed by the decided bits (in index order)."""
        f = _frozen_array(frozen, self.N)
        decided = f < 0
        k = int(decided.sum())
        out = {}
        for word in all_words(k):
            u = f.astype(np.int64).copy()
            u[decided] = word
            K = self.cascade_operator(u, decided)
            out[tuple(int(b) for b in word)] = K.conj().T @ K
        return out


@dataclass
class QuantumDecodeResult:
    decisions: np.ndarray
    state: np.ndarray
    probability: float


def sc_decode_quantum(
    output_state,
    W: CqChannel,
    frozen,
    rng: np.random.Generator | None = None,
    cascade: HelstromCascade | None = None,
) -> QuantumDecodeResult:
    """Sequential Helstrom measurements with the projection postulate.

    ``output_state`` is a state vector or density operator on ``B^N`` with
    position 1 as the most significant factor. Returns every bit (known values
    substituted) and the post-measurement state.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    state = np.asarray(output_state, dtype=complex)
    f = _frozen_array(frozen)
    N = f.shape[-1]
    cascade = HelstromCascade(W, N) if cascade is None else cascade
    if state.shape[0] != cascade.dim:
        raise DimensionError(f"state dimension {state.shape[0]} != {cascade.dim}")
    vector = state.ndim == 1
    u = np.zeros(N, dtype=np.uint8)
    prob = 1.0
    for i in range(N):
        if f[i] >= 0:
            u[i] = f[i]
            continue
        q = cascade.projector(u[:i])
        if vector:
            proj1 = q @ (q.conj().T @ state)
            p1 = float(np.real(np.vdot(proj1, proj1)))
        else:
            qa = q.conj().T @ state
            p1 = float(np.real(np.trace(qa @ q)))
        p1 = min(max(p1, 0.0), 1.0)
        bit = int(rng.random() < p1)
        p = p1 if bit else 1.0 - p1
        if p <= 0:
            raise DomainError("measurement outcome of zero probability")
        if vector:
            state = (proj1 if bit else state - proj1) / math.sqrt(p)
        else:
            P = q @ q.conj().T
            if not bit:
                P = np.eye(cascade.dim) - P
            state = P @ state @ P / p
        u[i] = bit
        prob *= p
    return QuantumDecodeResult(u, state, prob)


# --- Monte Carlo --------------------------------------------------------------------------------


@dataclass
class MonteCarloResult:
    errors: np.ndarray
    seed: int
    bound: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return int(self.errors.size)

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(self.errors))

    @property
    def block_error(self) -> float:
        return self.failures / self.trials

    def wilson_interval(self, level: float = 0.95) -> tuple[float, float]:
        ci = stats.binomtest(self.failures, self.trials).proportion_ci(level, method="wilson")
        return float(ci.low), float(ci.high)

    @property
    def within_bound(self) -> bool | None:
        return None if self.bound is None else self.block_error <= self.bound

    def summary(self) -> dict:
        lo, hi = self.wilson_interval()
        return {
            "trials": self.trials,
            "failures": self.failures,
            "block_error": self.block_error,
            "ci_low": lo,
            "ci_high": hi,
            "bound": self.bound,
            "within_bound": self.within_bound,
            "seed": self.seed,
            **self.extra,
        }


def _draw_word(rng: np.random.Generator, f: np.ndarray) -> np.ndarray:
    free = f < 0
    u = np.where(free, 0, f).astype(np.uint8)
    u[free] = rng.integers(0, 2, int(free.sum()))
    return u


def simulate_classical_sc(W: CqChannel | ClassicalTable, frozen, trials: int, seed: int = 0, bound=None):
    """Block error of classical SC on a classical-reducible channel.

    Trial ``t`` draws its free bits and channel outputs from ``trial_rng(seed, t)``.
    A block fails when any decided bit differs from the transmitted one.
    """
    table = W if isinstance(W, ClassicalTable) else classical_reduce(W)
    f = _frozen_array(frozen)
    N = f.shape[-1]
    level_of(N)
    cum = (np.cumsum(table.p0), np.cumsum(table.p1))
    U = np.empty((trials, N), dtype=np.uint8)
    R = np.empty((trials, N))
    for t in range(trials):
        rng = trial_rng(seed, t)
        U[t] = _draw_word(rng, f)
        R[t] = rng.random(N)
    X = encode_batch(U)
    last = table.p0.size - 1
    y0 = np.minimum(np.searchsorted(cum[0], R, side="right"), last)
    y1 = np.minimum(np.searchsorted(cum[1], R, side="right"), last)
    Y = np.where(X == 1, y1, y0)
    dec = sc_decode_classical(Y, table, f)
    errors = np.any(dec != U, axis=1)
    return MonteCarloResult(errors, seed, bound)


def _unravel(W: CqChannel):
    """Per letter: probabilities and pure components of the output eigen-decomposition."""
    out = []
    for rho in (W.rho0, W.rho1):
        w, v = np.linalg.eigh(qmath.hermitize(rho))
        w = np.clip(w, 0.0, None)
        keep = w > 1e-14
        out.append((w[keep] / w[keep].sum(), v[:, keep]))
    return out


def simulate_quantum_sc(W: CqChannel, frozen, trials: int, seed: int = 0, bound=None, cascade=None):
    """Block error of the quantum SC decoder.

    Each mixed letter output is unravelled into its eigenvectors, so every trial
    feeds a pure product state to the decoder; outcome statistics are those of
    the mixed codeword state.
    """
    f = _frozen_array(frozen)
    N = f.shape[-1]
    cascade = HelstromCascade(W, N) if cascade is None else cascade
    parts = _unravel(W)
    errors = np.zeros(trials, dtype=bool)
    for t in range(trials):
        rng = trial_rng(seed, t)
        u = _draw_word(rng, f)
        x = encode(u)
        psi = np.ones(1, dtype=complex)
        for xj in x:
            w, v = parts[int(xj)]
            k = int(rng.choice(w.size, p=w)) if w.size > 1 else 0
            psi = np.kron(psi, v[:, k])
        res = sc_decode_quantum(psi, W, f, rng=rng, cascade=cascade)
        errors[t] = bool(np.any(res.decisions != u))
    return MonteCarloResult(errors, seed, bound)


def sequential_outcome_probabilities(cascade: HelstromCascade, rho: np.ndarray, frozen) -> dict[tuple, float]:
    """Outcome distribution of the projective cascade applied step by step to ``rho``."""
    f = _frozen_array(frozen, cascade.N)
    out: dict[tuple, float] = {}

    def rec(i, u, state, word):
        if i == cascade.N:
            out[tuple(word)] = float(np.real(np.trace(state)))
            return
        if f[i] >= 0:
            rec(i + 1, u + [int(f[i])], state, word)
            return
        for b in (0, 1):
            P = cascade.projector_matrix(u, b)
            rec(i + 1, u + [b], P @ state @ P, word + [b])

    rec(0, [], np.asarray(rho, dtype=complex), [])
    return out


__all__ = [
    "HelstromCascade",
    "MonteCarloResult",
    "QuantumDecodeResult",
    "sc_decode_classical",
    "sc_decode_llr",
    "sc_decode_quantum",
    "sequential_outcome_probabilities",
    "simulate_classical_sc",
    "simulate_quantum_sc",
    "table_llr",
]
