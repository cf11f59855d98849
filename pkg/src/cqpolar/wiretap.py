"""Four-way index partition for degraded wiretap pairs and its security figures.

Index sets are 1-based and sorted. With ``G`` the indices that are good for
Bob and ``P`` those that are poor for Eve,

* ``A = P & G`` carries information,
* ``B = P & ~G`` is frozen,
* ``X = ~P & ~G`` carries secret key bits shared in advance,
* ``Y = ~P & G`` carries uniformly random bits.

When only bound intervals are available an index may be undecidable; such
indices are frozen (placed in ``B``) and counted in ``undecided``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qmath
from .channels import CqChannel, IsometricChannel, eve_channel
from .polarize import TrackerTable, auto_table
from .qmath import DEFAULT_TOL, DomainError, Tolerances

SET_NAMES = ("A", "B", "X", "Y")


class DegradednessWarning(UserWarning):
    """Eve's good set is not contained in Bob's; the pair is not degraded."""


@dataclass(frozen=True, eq=False)
class PolarPartition:
    n: int
    beta: float
    A: tuple
    B: tuple
    X: tuple
    Y: tuple
    good: tuple = ()  # G_N(W, beta)
    poor: tuple = ()  # P(W*, beta)
    eve_good: tuple = ()
    undecided: int = 0
    warnings: tuple = ()
    bob_table: TrackerTable | None = field(default=None, repr=False)
    eve_table: TrackerTable | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.beta < 0.5:
            raise DomainError("beta must lie in (0, 1/2)")
        sets = [set(getattr(self, s)) for s in SET_NAMES]
        total = sum(len(s) for s in sets)
        union = set().union(*sets)
        if total != len(union) or union != set(range(1, self.N + 1)):
            raise DomainError("A, B, X, Y must partition [N]")

    @property
    def N(self) -> int:
        return 2**self.n

    def label(self, i: int) -> str:
        for s in SET_NAMES:
            if i in getattr(self, s):
                return s
        raise DomainError(f"index {i} not in [1, {self.N}]")

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(1, self.N + 1)]


def make_partition(n: int, A=(), B=None, X=(), Y=(), beta: float = 0.2) -> PolarPartition:
    """Hand-built layout; ``B`` defaults to the indices not listed elsewhere."""
    N = 2**n
    used = set(A) | set(X) | set(Y)
    if B is None:
        B = [i for i in range(1, N + 1) if i not in used]
    return PolarPartition(n, beta, tuple(sorted(A)), tuple(sorted(B)), tuple(sorted(X)), tuple(sorted(Y)))


def _indices(mask: np.ndarray) -> tuple:
    return tuple(int(k) + 1 for k in np.flatnonzero(mask))


def partition_from_tables(bob: TrackerTable, eve: TrackerTable, beta: float) -> PolarPartition:
    if bob.n != eve.n:
        raise DomainError("Bob and Eve tables must share the level n")
    good = bob.good_mask(beta)
    poor = eve.poor_mask(beta)
    bob_und = ~(good | bob.not_good_mask(beta))
    eve_und = ~(poor | eve.not_poor_mask(beta))
    und = bob_und | eve_und
    A = poor & good & ~und
    Y = ~poor & good & ~und
    X = ~poor & ~good & ~und
    B = ~(A | X | Y)
    eve_good = eve.good_mask(beta)
    notes = []
    if bob.exact.all() and eve.exact.all() and np.any(eve_good & ~good):
        msg = "G_N(W*) is not contained in G_N(W); the pair does not look degraded"
        warnings.warn(msg, DegradednessWarning, stacklevel=3)
        notes.append(msg)
    return PolarPartition(
        bob.n,
        beta,
        _indices(A),
        _indices(B),
        _indices(X),
        _indices(Y),
        good=_indices(good),
        poor=_indices(poor),
        eve_good=_indices(eve_good),
        undecided=int(np.count_nonzero(und)),
        warnings=tuple(notes),
        bob_table=bob,
        eve_table=eve,
    )


def partition_channels(W: CqChannel, Wstar: CqChannel, n: int, beta: float = 0.2, cap: int = 128) -> PolarPartition:
    """Partition ``[N]`` from scalar tracking of Bob's and Eve's channels."""
    if not 0 < beta < 0.5:
        raise DomainError("beta must lie in (0, 1/2)")
    return partition_from_tables(auto_table(W, n, cap), auto_table(Wstar, n, cap), beta)


def code_rates(p: PolarPartition) -> tuple[float, float, float, float]:
    """``(|A|, |X|, |B|, |Y|) / N``: rate, key rate, frozen rate, random rate."""
    N = p.N
    return len(p.A) / N, len(p.X) / N, len(p.B) / N, len(p.Y) / N


def set_identity_rate(p: PolarPartition) -> float:
    """``|P|/N + |G|/N - 1 + |X|/N``; equals the rate when nothing is undecided."""
    N = p.N
    return len(p.poor) / N + len(p.good) / N - 1 + len(p.X) / N


def _table_arrays(trackers, N: int, attr: str) -> np.ndarray:
    if isinstance(trackers, TrackerTable):
        if trackers.N != N:
            raise DomainError(f"tracker table covers {trackers.N} indices, partition has {N}")
        return getattr(trackers, attr)
    seq = list(trackers)
    if len(seq) != N:
        raise DomainError(f"expected {N} trackers, got {len(seq)}")
    return np.array([getattr(t, attr) for t in seq])


def security_bound(p: PolarPartition, eve_trackers) -> float:
    """``sum_{i in A} sqrt(1 - lower_i^2)`` from Eve's lower bounds on ``sqrt(F)``."""
    if not p.A:
        return 0.0
    lower = _table_arrays(eve_trackers, p.N, "lower_log2")
    gap = _table_arrays(eve_trackers, p.N, "gap_log2")
    idx = np.array(p.A) - 1
    # 1 - l^2 = (1 - l)(1 + l), formed from log(1 - l) to keep precision near l = 1
    one_minus_sq = np.exp2(gap[idx]) * (1.0 + np.exp2(lower[idx]))
    return float(np.sum(np.sqrt(np.clip(one_minus_sq, 0.0, 1.0))))


def reliability_bound(p: PolarPartition, bob_trackers) -> float:
    """``2 sqrt(sum_{i in A u Y} upper_i / 2)`` clamped to ``[0, 2]``."""
    idx = np.array(sorted(p.A + p.Y), dtype=int) - 1
    if idx.size == 0:
        return 0.0
    upper = _table_arrays(bob_trackers, p.N, "upper_log2")
    s = float(np.sum(0.5 * np.exp2(upper[idx])))
    return float(min(2.0, max(0.0, 2.0 * math.sqrt(s))))


@dataclass(frozen=True, eq=False)
class WiretapCode:
    partition: PolarPartition
    frozen_bits: np.ndarray
    key_bits: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        fb = np.asarray(self.frozen_bits, dtype=np.uint8).reshape(-1)
        kb = np.asarray(self.key_bits, dtype=np.uint8).reshape(-1)
        if fb.size != len(self.partition.B) or kb.size != len(self.partition.X):
            raise DomainError("frozen/key bit vectors must match |B| and |X|")
        object.__setattr__(self, "frozen_bits", fb)
        object.__setattr__(self, "key_bits", kb)

    @classmethod
    def with_seed(cls, partition: PolarPartition, seed: int = 0, frozen_bits=None) -> "WiretapCode":
        rng = np.random.default_rng(seed)
        key = rng.integers(0, 2, len(partition.X)).astype(np.uint8)
        fb = np.zeros(len(partition.B), dtype=np.uint8) if frozen_bits is None else frozen_bits
        return cls(partition, fb, key, seed)

    def frozen_vector(self, include_key: bool = True) -> np.ndarray:
        """Length-``N`` vector: known bit values, ``-1`` where the decoder must decide."""
        v = np.full(self.partition.N, -1, dtype=np.int8)
        v[np.array(self.partition.B, dtype=int) - 1] = self.frozen_bits
        if include_key:
            v[np.array(self.partition.X, dtype=int) - 1] = self.key_bits
        return v


def exact_leakage(
    code: WiretapCode, ch: IsometricChannel, frozen: str = "fixed", tol: Tolerances = DEFAULT_TOL
) -> float:
    """Holevo information ``I(U_A; E^N)`` by full enumeration.

    ``U_A``, ``U_Y`` and the key ``U_X`` are uniform and Eve's view is averaged
    over the key. With ``frozen='fixed'`` the frozen positions carry the code's
    bits ``u_B``; with ``frozen='hidden'`` they are uniform and unknown to Eve,
    which is the setting in which the per-index chain-rule bound holds for any
    layout. For asymmetric Eve channels a fixed ``u_B`` on positions after an
    information index can leak more than that bound.
    """
    # deferred: the qpolar package imports this module
    from .qpolar.encoder import all_words, encode_batch

    if frozen not in ("fixed", "hidden"):
        raise DomainError("frozen must be 'fixed' or 'hidden'")
    p = code.partition
    N = p.N
    we = eve_channel(ch)
    qmath.check_dim(we.dim**N, tol)
    hidden = p.B if frozen == "hidden" else ()
    free = sorted(p.A + p.X + p.Y + hidden)
    a_pos = [free.index(i) for i in p.A]
    words = all_words(len(free))
    u = np.zeros((words.shape[0], N), dtype=np.uint8)
    u[:, np.array(free, dtype=int) - 1] = words
    if p.B and not hidden:
        u[:, np.array(p.B, dtype=int) - 1] = code.frozen_bits
    xs = encode_batch(u)
    sig = (we.rho0, we.rho1)
    cache: dict[bytes, np.ndarray] = {}
    dim = we.dim**N
    groups: dict[tuple, np.ndarray] = {}
    counts: dict[tuple, int] = {}
    for row, x in enumerate(xs):
        key = x.tobytes()
        if key not in cache:
            cache[key] = qmath.tensor(*(sig[int(b)] for b in x), tol=tol)
        ua = tuple(int(words[row, k]) for k in a_pos)
        groups[ua] = groups.get(ua, np.zeros((dim, dim), dtype=complex)) + cache[key]
        counts[ua] = counts.get(ua, 0) + 1
    states = [groups[k] / counts[k] for k in sorted(groups)]
    avg = sum(states) / len(states)
    h = qmath.von_neumann_entropy(avg) - sum(qmath.von_neumann_entropy(s) for s in states) / len(states)
    return float(max(0.0, h))


@dataclass(frozen=True)
class SecurityReport:
    rate: float
    key_rate: float
    frozen_rate: float
    random_rate: float
    security_bound: float
    reliability_bound: float
    leakage_exact: float | None = None
    undecided: int = 0

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "key_rate": self.key_rate,
            "frozen_rate": self.frozen_rate,
            "random_rate": self.random_rate,
            "security_bound": self.security_bound,
            "reliability_bound": self.reliability_bound,
            "leakage_exact": self.leakage_exact,
            "undecided": self.undecided,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def security_report(p: PolarPartition, leakage_exact: float | None = None) -> SecurityReport:
    if p.bob_table is None or p.eve_table is None:
        raise DomainError("partition carries no tracker tables")
    rate, key, frozen, rand = code_rates(p)
    return SecurityReport(
        rate,
        key,
        frozen,
        rand,
        security_bound(p, p.eve_table),
        reliability_bound(p, p.bob_table),
        leakage_exact,
        p.undecided,
    )


def partition_rows(p: PolarPartition) -> list[tuple]:
    """``(index, set, bob_upper_log2, eve_lower_log2)`` in index order."""
    if p.bob_table is None or p.eve_table is None:
        raise DomainError("partition carries no tracker tables")
    labels = p.labels()
    return [
        (i, labels[i - 1], float(p.bob_table.upper_log2[i - 1]), float(p.eve_table.lower_log2[i - 1]))
        for i in range(1, p.N + 1)
    ]
