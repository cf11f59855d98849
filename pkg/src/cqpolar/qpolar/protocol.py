"""Coherent entanglement-generation protocol simulated end to end at small N.

Register conventions
--------------------
* ``R``: Alice's kept halves of the Bell pairs fed into the ``A`` positions.
* ``B_X``: Bob's halves of the pre-shared ebits consumed on ``X``.
* ``Bhat``: Bob's decoder output, one bit per position of ``A u Y`` in index order.
* ``B^N`` and ``E^N``: channel outputs, position 1 most significant.

Frozen positions carry fixed bits (zero by default). The ``Y`` positions start
in ``|+>`` and carry the phases ``gamma``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import qmath
from ..channels import ChannelFamilySpec, IsometricChannel, bob_channel, build_channel, eve_channel
from ..polarize import LN2
from ..qmath import DomainError, ResourceError
from ..wiretap import PolarPartition, WiretapCode, code_rates, exact_leakage, partition_channels
from .decoders import HelstromCascade
from .encoder import all_words, encode

MAX_PROTOCOL_N = 4
MAX_PHASE_N = 6
MAX_STATE_ENTRIES = 1 << 24

TWO_PI = 2.0 * math.pi


def _key(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def _sig(v: float) -> float:
    return float(f"{v:.12g}")


@dataclass(frozen=True)
class PhaseAssignment:
    """Phases keyed by the ``u_Y`` bit string (``Y`` in index order)."""

    gamma: dict
    delta: dict

    def __post_init__(self):
        if set(self.gamma) != set(self.delta):
            raise DomainError("gamma and delta must share their keys")
        keys = sorted(self.gamma)
        y = len(keys[0]) if keys else 0
        if keys != [_key(w) for w in all_words(y)]:
            raise DomainError("phase tables must cover every u_Y value")

    @property
    def size(self) -> int:
        return len(self.gamma)

    @classmethod
    def zeros(cls, y: int) -> "PhaseAssignment":
        keys = [_key(w) for w in all_words(y)]
        return cls({k: 0.0 for k in keys}, {k: 0.0 for k in keys})

    @classmethod
    def from_arrays(cls, gamma, delta) -> "PhaseAssignment":
        gamma = np.mod(np.asarray(gamma, dtype=float), TWO_PI)
        delta = np.mod(np.asarray(delta, dtype=float), TWO_PI)
        y = int(gamma.size).bit_length() - 1
        keys = [_key(w) for w in all_words(y)]
        return cls(
            {k: float(g) for k, g in zip(keys, gamma)},
            {k: float(d) for k, d in zip(keys, delta)},
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        keys = sorted(self.gamma)
        return np.array([self.gamma[k] for k in keys]), np.array([self.delta[k] for k in keys])

    def to_dict(self) -> dict:
        return {
            "gamma": {k: _sig(v) for k, v in sorted(self.gamma.items())},
            "delta": {k: _sig(v) for k, v in sorted(self.delta.items())},
        }


def _as_layout(layout) -> tuple[PolarPartition, np.ndarray]:
    if isinstance(layout, WiretapCode):
        return layout.partition, layout.frozen_bits
    if isinstance(layout, PolarPartition):
        return layout, np.zeros(len(layout.B), dtype=np.uint8)
    raise DomainError("layout must be a PolarPartition or WiretapCode")


class _Setup:
    """Codeword states and coherent-decoder operators shared by phase selection and the run."""

    def __init__(self, channel: IsometricChannel, layout, max_n: int):
        if not isinstance(channel, IsometricChannel):
            raise DomainError("channel must be an IsometricChannel")
        self.partition, self.u_B = _as_layout(layout)
        p = self.partition
        if p.N > max_n:
            raise ResourceError(f"block length {p.N} exceeds the cap {max_n}")
        self.channel = channel
        self.N = p.N
        self.dB, self.dE = channel.dim_B, channel.dim_E
        self.dBN, self.dEN = self.dB**self.N, self.dE**self.N
        qmath.check_dim(self.dBN)
        self.iA = [i - 1 for i in p.A]
        self.iX = [i - 1 for i in p.X]
        self.iY = [i - 1 for i in p.Y]
        self.iB = [i - 1 for i in p.B]
        self.decoded = sorted(self.iA + self.iY)
        self.a, self.x, self.y = len(self.iA), len(self.iX), len(self.iY)
        v = channel.letter_isometry()
        self._letters = [v[:, b].reshape(self.dB, self.dE) for b in (0, 1)]
        self._psi: dict[bytes, np.ndarray] = {}
        self.cascade = HelstromCascade(bob_channel(channel), self.N)
        self._roots: dict[int, dict[tuple, np.ndarray]] = {}

    def word(self, uA, uX, uY) -> np.ndarray:
        u = np.zeros(self.N, dtype=np.uint8)
        u[self.iB] = self.u_B
        u[self.iA] = uA
        u[self.iX] = uX
        u[self.iY] = uY
        return u

    def codeword_state(self, u) -> np.ndarray:
        """``V'^{(x)N} |u G_N>`` as a ``(dB^N, dE^N)`` matrix."""
        x = encode(u)
        key = x.tobytes()
        out = self._psi.get(key)
        if out is None:
            t = np.ones((1, 1), dtype=complex)
            for b in x:
                t = np.einsum("ij,kl->ikjl", t, self._letters[int(b)]).reshape(
                    t.shape[0] * self.dB, t.shape[1] * self.dE
                )
            out = t
            self._psi[key] = out
        return out

    def roots(self, uX) -> dict[tuple, np.ndarray]:
        """``sqrt(Lambda_w)`` for every decided word ``w`` given the key value ``uX``."""
        k = int(_key(uX) or "0", 2)
        out = self._roots.get(k)
        if out is None:
            f = np.full(self.N, -1, dtype=np.int8)
            f[self.iB] = self.u_B
            f[self.iX] = uX
            out = {w: qmath.psd_sqrt(lam) for w, lam in self.cascade.povm(f).items()}
            self._roots[k] = out
        return out

    def decided_word(self, uA, uY) -> tuple:
        bits = dict(zip(self.iA, (int(b) for b in uA)))
        bits.update(zip(self.iY, (int(b) for b in uY)))
        return tuple(bits[i] for i in self.decoded)

    def gram(self) -> np.ndarray:
        """``G[u, u'] = <varphi_u | chi_u'>`` over ``u_Y`` values."""
        ny = 2**self.y
        G = np.zeros((ny, ny), dtype=complex)
        A, X, Y = all_words(self.a), all_words(self.x), all_words(self.y)
        for uX in X:
            roots = self.roots(uX)
            for uA in A:
                states = [self.codeword_state(self.word(uA, uX, uY)) for uY in Y]
                for r, uY in enumerate(Y):
                    lifted = roots[self.decided_word(uA, uY)]
                    left = lifted @ states[r]  # sqrt(Lambda) is Hermitian
                    for c in range(ny):
                        G[r, c] += np.vdot(left, states[c])
        return G / 2 ** (self.a + self.x)


def _overlap(G: np.ndarray, gamma: np.ndarray, delta: np.ndarray) -> float:
    return float(np.real(np.exp(-1j * delta) @ G @ np.exp(1j * gamma))) / G.shape[0]


def _ascend(G, gamma, iters: int = 500):
    """Alternate the optimal ``delta`` for fixed ``gamma`` and vice versa."""
    best = -np.inf
    delta = np.zeros_like(gamma)
    for _ in range(iters):
        delta = np.angle(G @ np.exp(1j * gamma))
        gamma = -np.angle(np.exp(-1j * delta) @ G)
        val = _overlap(G, gamma, delta)
        if val <= best + 1e-15:
            break
        best = val
    return gamma, delta, _overlap(G, gamma, delta)


def _derandomized_start(G) -> np.ndarray:
    """Equal phases fixed one at a time so the expected overlap never drops below ``tr G``."""
    m = G.shape[0]
    z = np.zeros(m, dtype=complex)
    for k in range(m):
        a = G[k, :k] @ z[:k]
        b = z[:k].conj() @ G[:k, k]
        c = a + np.conj(b)
        z[k] = c / abs(c) if abs(c) > 0 else 1.0
    return np.angle(z)


def align_phases(G: np.ndarray) -> tuple[PhaseAssignment, float]:
    """Phases maximising ``2^-y Re sum e^{-i delta_u} G[u,u'] e^{i gamma_u'}``."""
    m = G.shape[0]
    runs = [_ascend(G, np.zeros(m)), _ascend(G, _derandomized_start(G))]
    gamma, delta, val = max(runs, key=lambda r: r[2])
    return PhaseAssignment.from_arrays(gamma, delta), val


def phase_overlaps(G: np.ndarray, phases: PhaseAssignment) -> dict:
    g, d = phases.arrays()
    m = G.shape[0]
    return {
        "aligned": _overlap(G, g, d),
        "unaligned": _overlap(G, np.zeros(m), np.zeros(m)),
        "diagonal_moduli": float(np.sum(np.abs(np.diag(G)))) / m,
    }


def select_phases(channel: IsometricChannel, layout) -> PhaseAssignment:
    """Phase tables for the ``Y`` branches (empty tables when ``Y`` is empty)."""
    setup = _Setup(channel, layout, MAX_PHASE_N)
    if setup.y == 0:
        return PhaseAssignment.zeros(0)
    phases, _ = align_phases(setup.gram())
    return phases


@dataclass
class ProtocolTrace:
    partition: PolarPartition
    channel: IsometricChannel = field(repr=False)
    phases: PhaseAssignment
    overlap: float
    unaligned_overlap: float
    leakage: float
    final_fidelity: float
    ebit_count: int
    frozen_bits: tuple = ()

    @property
    def fidelity_bound(self) -> float:
        """``1 - 2(1 - overlap) - 2 sqrt(2 ln2 leakage)``."""
        return 1.0 - 2.0 * (1.0 - self.overlap) - 2.0 * math.sqrt(2.0 * LN2 * max(self.leakage, 0.0))

    @property
    def satisfies_bound(self) -> bool:
        return self.final_fidelity >= self.fidelity_bound - 1e-6

    def to_dict(self) -> dict:
        p = self.partition
        spec = self.channel.spec
        return {
            "n": p.n,
            "A": list(p.A),
            "B": list(p.B),
            "X": list(p.X),
            "Y": list(p.Y),
            "frozen_bits": list(self.frozen_bits),
            "channel": spec.to_dict() if isinstance(spec, ChannelFamilySpec) else None,
            "phases": self.phases.to_dict(),
            "overlap": _sig(self.overlap),
            "unaligned_overlap": _sig(self.unaligned_overlap),
            "leakage": _sig(self.leakage),
            "final_fidelity": _sig(self.final_fidelity),
            "fidelity_bound": _sig(self.fidelity_bound),
            "ebit_count": self.ebit_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _decoded_state(setup: _Setup, gamma: np.ndarray) -> np.ndarray:
    """State after the coherent decoder, axes ``(R, B_X, Bhat, B^N, E^N)``."""
    a, x, y = setup.a, setup.x, setup.y
    shape = (2**a, 2**x, 2 ** (a + y), setup.dBN, setup.dEN)
    if math.prod(shape) > MAX_STATE_ENTRIES:
        raise ResourceError(f"protocol state would hold {math.prod(shape)} amplitudes")
    out = np.zeros(shape, dtype=complex)
    words = all_words(a + y)
    widx = {tuple(int(b) for b in w): k for k, w in enumerate(words)}
    for ix, uX in enumerate(all_words(x)):
        roots = setup.roots(uX)
        for ia, uA in enumerate(all_words(a)):
            for iy, uY in enumerate(all_words(y)):
                psi = np.exp(1j * gamma[iy]) * setup.codeword_state(setup.word(uA, uX, uY))
                for w, r in roots.items():
                    out[ia, ix, widx[w]] += r @ psi
    return out / math.sqrt(2 ** (a + x + y))


def _split_bhat(setup: _Setup, state: np.ndarray) -> np.ndarray:
    """Reindex ``Bhat`` into ``(Bhat_A, Bhat_Y)``."""
    a, y = setup.a, setup.y
    pos = {i: k for k, i in enumerate(setup.decoded)}
    out = np.zeros(state.shape[:2] + (2**a, 2**y) + state.shape[3:], dtype=complex)
    for k, w in enumerate(all_words(a + y)):
        wa = [int(w[pos[i]]) for i in setup.iA]
        wy = [int(w[pos[i]]) for i in setup.iY]
        out[:, :, int(_key(wa) or "0", 2), int(_key(wy) or "0", 2)] = state[:, :, k]
    return out


def _final_fidelity(setup: _Setup, state: np.ndarray) -> float:
    """Fidelity of the ``(R, Bhat_A)`` marginal with the maximally entangled state after decoupling."""
    s = _split_bhat(setup, state)
    na = 2**setup.a
    bob = s.shape[1] * s.shape[3] * setup.dBN
    # Psi[r, b] as (Bob', E) matrices with Bob' = (B_X, Bhat_Y, B^N)
    psi = np.transpose(s, (0, 2, 1, 3, 4, 5)).reshape(na, na, bob, setup.dEN)
    diag = [psi[b, b] for b in range(na)]
    cond = []
    for m in diag:
        nrm = np.linalg.norm(m)
        cond.append(m / nrm if nrm > 0 else m)
    rho_e = sum(c.T @ c.conj() for c in cond if np.linalg.norm(c) > 0)
    rho_e = rho_e / np.real(np.trace(rho_e))
    w, e = np.linalg.eigh(qmath.hermitize(rho_e))
    order = np.argsort(w)[::-1]
    w, e = np.clip(w[order], 0.0, None), e[:, order]
    rank = int(np.sum(w > 1e-14))
    if rank > bob:
        raise ResourceError("Bob's register is too small to purify Eve's average state")
    target = np.zeros((bob, setup.dEN), dtype=complex)
    k = min(bob, setup.dEN)
    target[:k] = (e[:, :k] * np.sqrt(w[:k])).T
    total = np.zeros((bob, setup.dEN), dtype=complex)
    for b in range(na):
        U = qmath.uhlmann_isometry(cond[b], target, (bob, setup.dEN), acting_side=0)
        total += U @ psi[b, b]
    return float(min(1.0, max(0.0, np.real(np.vdot(total, total)) / na)))


def run_coherent_protocol(channel: IsometricChannel, layout, phases: PhaseAssignment | None = None) -> ProtocolTrace:
    """Simulate encoding, transmission, coherent decoding and decoupling.

    ``phases`` defaults to :func:`select_phases`. The trace carries the
    aligned overlap, the exact leakage with the layout's frozen bits and the
    fidelity of the ``A`` pairs with the maximally entangled state.
    """
    setup = _Setup(channel, layout, MAX_PROTOCOL_N)
    G = setup.gram()
    if phases is None:
        phases = align_phases(G)[0] if setup.y else PhaseAssignment.zeros(0)
    elif phases.size != 2**setup.y:
        raise DomainError(f"phase tables have {phases.size} entries, expected {2**setup.y}")
    ov = phase_overlaps(G, phases)
    gamma, _ = phases.arrays()
    state = _decoded_state(setup, gamma)
    fid = _final_fidelity(setup, state)
    code = WiretapCode(setup.partition, setup.u_B, np.zeros(setup.x, dtype=np.uint8))
    leak = exact_leakage(code, channel) if setup.a else 0.0
    return ProtocolTrace(
        setup.partition,
        channel,
        phases,
        ov["aligned"],
        ov["unaligned"],
        leak,
        fid,
        setup.x,
        tuple(int(b) for b in setup.u_B),
    )


def ebit_rate_trend(spec: ChannelFamilySpec, beta: float, n_list, cap: int = 128) -> list[tuple[int, float]]:
    """``(n, |X|/N)`` from the scalar-tracker partition at each level."""
    ch = build_channel(spec)
    W, Wstar = bob_channel(ch), eve_channel(ch)
    rows = []
    for n in n_list:
        p = partition_channels(W, Wstar, int(n), beta, cap)
        rows.append((int(n), code_rates(p)[1]))
    return rows


__all__ = [
    "MAX_PROTOCOL_N",
    "PhaseAssignment",
    "ProtocolTrace",
    "align_phases",
    "ebit_rate_trend",
    "phase_overlaps",
    "run_coherent_protocol",
    "select_phases",
]
