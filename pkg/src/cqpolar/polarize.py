"""Channel combining and splitting for binary-input cq channels.

Two complementary views are provided:

* exact operators -- :func:`combine_minus`, :func:`combine_plus` and the
  brute-force :func:`synthesize`, which enumerates every input pattern of the
  length-``N`` transform;
* scalar tracking -- :func:`evolve_table` follows ``sqrt(F)`` (the
  Bhattacharyya parameter for commuting channels) down every branch, either
  exactly on a reduced classical table or as a certified ``[lower, upper]``
  interval.

Synthesized index ``i`` (1-based) corresponds to the path spelled by the
binary digits of ``i - 1``, most significant first, with ``0 -> '-'`` and
``1 -> '+'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import qmath
from .channels import CqChannel
from .qmath import DEFAULT_TOL, DimensionError, DomainError, ResourceError, Tolerances

LN2 = math.log(2.0)

EXACT_CLASSICAL = "exact_classical"
FIDELITY_BOUNDS = "fidelity_bounds"
MODES = (EXACT_CLASSICAL, FIDELITY_BOUNDS)


class NotClassicalError(DomainError):
    """Raised when a channel's outputs do not commute; carries the commutator norm."""

    def __init__(self, commutator_norm: float):
        super().__init__(f"channel outputs do not commute (||[rho0, rho1]||_1 = {commutator_norm:.3e})")
        self.commutator_norm = commutator_norm


# --- exact operators -------------------------------------------------------------------


def _check_cap(dim: int, tol: Tolerances) -> None:
    if dim > tol.max_dim:
        raise ResourceError(f"synthesized operator dimension {dim} exceeds cap {tol.max_dim}")


def combine_minus(W: CqChannel, tol: Tolerances = DEFAULT_TOL) -> CqChannel:
    """``rho^-_{u1} = 1/2 sum_{u2} rho_{u1 xor u2} (x) rho_{u2}`` on ``B1 B2``."""
    _check_cap(W.dim**2, tol)
    r0, r1 = W.rho0, W.rho1
    m0 = 0.5 * (np.kron(r0, r0) + np.kron(r1, r1))
    m1 = 0.5 * (np.kron(r1, r0) + np.kron(r0, r1))
    return CqChannel(m0, m1)


def combine_plus(W: CqChannel, tol: Tolerances = DEFAULT_TOL) -> CqChannel:
    """``rho^+_{u2} = 1/2 sum_{u1} |u1><u1| (x) rho_{u1 xor u2} (x) rho_{u2}`` on ``U1 B1 B2``."""
    _check_cap(2 * W.dim**2, tol)
    r = (W.rho0, W.rho1)
    outs = []
    for u2 in (0, 1):
        blocks = [0.5 * np.kron(r[u1 ^ u2], r[u2]) for u1 in (0, 1)]
        outs.append(np.kron(np.diag([1.0, 0.0]), blocks[0]) + np.kron(np.diag([0.0, 1.0]), blocks[1]))
    return CqChannel(outs[0], outs[1])


def path_of(i: int, n: int) -> str:
    """Branch string for 1-based index ``i`` at level ``n``."""
    if not 1 <= i <= 2**n:
        raise DomainError(f"index {i} outside [1, {2**n}]")
    return "".join("+" if b == "1" else "-" for b in format(i - 1, f"0{n}b")) if n else ""


def index_of(path: str) -> int:
    return int("".join("1" if c == "+" else "0" for c in path) or "0", 2) + 1


def _transform_rows(n: int) -> np.ndarray:
    """All ``x = u G_N`` for ``u`` enumerated in lexicographic order (u_1 most significant)."""
    from .qpolar.encoder import encode_batch

    N = 2**n
    u = ((np.arange(2**N)[:, None] >> (N - 1 - np.arange(N))) & 1).astype(np.uint8)
    return encode_batch(u)


def synthesize(W: CqChannel, n: int, i: int, tol: Tolerances = DEFAULT_TOL) -> "SynthesizedChannelExact":
    """Synthesized channel ``W_N^{(i)}`` by direct summation over all input patterns.

    Output registers are ordered ``U_1 ... U_{i-1}`` (qubit each) followed by
    ``B_1 ... B_N``.
    """
    N = 2**n
    if not 1 <= i <= N:
        raise DomainError(f"index {i} outside [1, {N}]")
    d = W.dim
    dimB = d**N
    _check_cap(2 ** (i - 1) * dimB, tol)
    xs = _transform_rows(n)
    r = (W.rho0, W.rho1)
    # cache product states by codeword
    prod_cache: dict[bytes, np.ndarray] = {}

    def product(x: np.ndarray) -> np.ndarray:
        key = x.tobytes()
        if key not in prod_cache:
            prod_cache[key] = qmath.tensor(*(r[int(b)] for b in x), tol=tol)
        return prod_cache[key]

    prefix_len = i - 1
    outs = []
    for ui in (0, 1):
        blocks = []
        for pre in range(2**prefix_len):
            acc = np.zeros((dimB, dimB), dtype=complex)
            count = 0
            for row in range(2**N):
                bits = row
                top = bits >> (N - i)
                if top != (pre << 1 | ui):
                    continue
                acc += product(xs[row])
                count += 1
            blocks.append(acc / count)
        out = np.zeros((2**prefix_len * dimB,) * 2, dtype=complex)
        for pre, blk in enumerate(blocks):
            s = pre * dimB
            out[s : s + dimB, s : s + dimB] = blk / 2**prefix_len
        outs.append(out)
    return SynthesizedChannelExact(W, n, i, CqChannel(outs[0], outs[1]))


@dataclass(frozen=True, eq=False)
class SynthesizedChannelExact:
    base: CqChannel
    n: int
    index: int
    channel: CqChannel

    @property
    def path(self) -> str:
        return path_of(self.index, self.n)


def _recursive_layout(path: str):
    """Register layout of the recursively built channel for ``path``.

    Returns a list of factors; ``('u', mask)`` is a classical bit whose value
    is the GF(2) inner product of ``mask`` with the exact prefix ``u_1^{i-1}``
    and ``('b', k)`` is channel output ``k`` (0-based).
    """
    layout = [("b", 0)]
    uses = 1
    j = 1  # index of the current synthesized channel at this level
    for step in path:
        prefix = j - 1
        new_prefix = 2 * j - 2 if step == "-" else 2 * j - 1

        def remap(mask: int, copy: int) -> int:
            # copy 1 sees u_{2k-1} xor u_{2k}; copy 2 sees u_{2k}
            out = 0
            for k in range(prefix):
                if mask >> k & 1:
                    out |= 1 << (2 * k + 1)
                    if copy == 1:
                        out |= 1 << (2 * k)
            return out

        left = [(t, remap(v, 1)) if t == "u" else (t, v) for t, v in layout]
        right = [(t, remap(v, 2)) if t == "u" else (t, v + uses) for t, v in layout]
        layout = left + right
        if step == "+":
            layout = [("u", 1 << (2 * j - 2))] + layout
        uses *= 2
        j = 2 * j - 1 if step == "-" else 2 * j
        assert sum(1 for t, _ in layout if t == "u") == new_prefix
    return layout


def recursive_synthesize(W: CqChannel, path: str, tol: Tolerances = DEFAULT_TOL) -> CqChannel:
    """Apply ``combine_minus``/``combine_plus`` along ``path`` and reorder registers.

    The result uses the same register order as :func:`synthesize`.
    """
    ch = W
    for step in path:
        ch = combine_minus(ch, tol) if step == "-" else combine_plus(ch, tol)
    layout = _recursive_layout(path)
    d = W.dim
    dims = [2 if t == "u" else d for t, _ in layout]
    n_u = sum(1 for t, _ in layout if t == "u")
    N = len(layout) - n_u
    # exact index = (prefix bits u_1..u_{i-1}, b_1..b_N)
    perm = np.empty(int(np.prod(dims)), dtype=np.int64)
    b_all = np.indices((d,) * N).reshape(N, -1).T if N else np.zeros((1, 0), dtype=int)
    pos = 0
    for pre in range(2**n_u):
        pre_bits = [(pre >> (n_u - 1 - k)) & 1 for k in range(n_u)]  # u_1 first
        pre_int = sum(b << k for k, b in enumerate(pre_bits))  # bit k holds u_{k+1}
        for b in b_all:
            digits = []
            for t, v in layout:
                if t == "u":
                    digits.append(bin(v & pre_int).count("1") & 1)
                else:
                    digits.append(int(b[v]))
            perm[pos] = np.ravel_multi_index(digits, dims)
            pos += 1
    return CqChannel(ch.rho0[np.ix_(perm, perm)], ch.rho1[np.ix_(perm, perm)])


# --- classical reduction -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClassicalTable:
    """Transition table ``P[x, y]`` together with the joint eigenbasis (columns)."""

    basis: np.ndarray
    p0: np.ndarray
    p1: np.ndarray

    def bsc_classes(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetrized view as a mixture of BSCs: (masses, crossovers in [0, 1/2])."""
        s = self.p0 + self.p1
        keep = s > 0
        m = 0.5 * s[keep]
        d = np.minimum(self.p0[keep], self.p1[keep]) / s[keep]
        return _normalize_classes(m, d)


def classical_reduce(W: CqChannel, tol: float = 1e-12) -> ClassicalTable:
    """Jointly diagonalize commuting outputs; raises :class:`NotClassicalError` otherwise."""
    norm = qmath.commutator_norm(W.rho0, W.rho1)
    if norm > tol:
        raise NotClassicalError(norm)
    w0, v0 = np.linalg.eigh(qmath.hermitize(W.rho0))
    cols = []
    start = 0
    # split rho1 inside each degenerate eigenspace of rho0
    while start < len(w0):
        stop = start + 1
        while stop < len(w0) and abs(w0[stop] - w0[start]) <= 1e-9:
            stop += 1
        block = v0[:, start:stop]
        sub = block.conj().T @ W.rho1 @ block
        _, u = np.linalg.eigh(qmath.hermitize(sub))
        cols.append(block @ u)
        start = stop
    basis = np.concatenate(cols, axis=1)
    p0 = np.clip(np.real(np.einsum("ik,ij,jk->k", basis.conj(), W.rho0, basis)), 0.0, None)
    p1 = np.clip(np.real(np.einsum("ik,ij,jk->k", basis.conj(), W.rho1, basis)), 0.0, None)
    return ClassicalTable(basis, p0 / p0.sum(), p1 / p1.sum())


def classical_channel(p0: Sequence[float], p1: Sequence[float]) -> CqChannel:
    """Embed a classical transition table as diagonal density operators."""
    return CqChannel(np.diag(np.asarray(p0, dtype=complex)), np.diag(np.asarray(p1, dtype=complex)))


def bec(eps: float) -> CqChannel:
    """Binary erasure channel with outputs {0, 1, e}."""
    return classical_channel([1 - eps, 0.0, eps], [0.0, 1 - eps, eps])


def bsc(delta: float) -> CqChannel:
    return classical_channel([1 - delta, delta], [delta, 1 - delta])


def pure_channel(psi0: np.ndarray, psi1: np.ndarray) -> CqChannel:
    return CqChannel(qmath.proj(psi0), qmath.proj(psi1))


# --- BSC-class evolution ---------------------------------------------------------------------


def _normalize_classes(m: np.ndarray, d: np.ndarray, rel: float = 1e-12):
    keep = m > 0
    m, d = m[keep], np.clip(d[keep], 0.0, 0.5)
    order = np.argsort(d, kind="stable")
    m, d = m[order], d[order]
    if d.size > 1:
        # merge crossovers equal up to rounding noise; treated as exact
        new = np.empty(d.size, dtype=bool)
        new[0] = True
        new[1:] = np.diff(d) > rel * np.maximum(d[1:], 1e-300)
        gid = np.cumsum(new) - 1
        mm = np.bincount(gid, weights=m)
        dd = np.bincount(gid, weights=m * d) / mm
        m, d = mm, dd
    return m / m.sum(), d


def _bhatt(d):
    return 2.0 * np.sqrt(d * (1 - d))


def _rows_minus(M, D):
    B = M.shape[0]
    d1, d2 = D[:, :, None], D[:, None, :]
    m = (M[:, :, None] * M[:, None, :]).reshape(B, -1)
    d = (d1 * (1 - d2) + d2 * (1 - d1)).reshape(B, -1)
    return m, d


def _rows_plus(M, D):
    B = M.shape[0]
    mm = M[:, :, None] * M[:, None, :]
    d1, d2 = D[:, :, None], D[:, None, :]
    pa = (1 - d1) * (1 - d2) + d1 * d2
    pd = d1 * (1 - d2) + d2 * (1 - d1)
    with np.errstate(divide="ignore", invalid="ignore"):
        da = np.where(pa > 0, d1 * d2 / pa, 0.0)
        dd = np.where(pd > 0, np.minimum(d1 * (1 - d2), d2 * (1 - d1)) / pd, 0.0)
    m = np.concatenate([(mm * pa).reshape(B, -1), (mm * pd).reshape(B, -1)], axis=1)
    d = np.concatenate([da.reshape(B, -1), dd.reshape(B, -1)], axis=1)
    return m, d


# grid crossovers are uniform in log(Z / (1 - Z)) over this span; beyond it
# every decision against a 2^(-N^beta) threshold is already settled
_LOGODDS_SPAN = 16.0


def _crossover_grid(K: int) -> np.ndarray:
    """``K`` crossovers: 0, ``K - 2`` log-odds points, 1/2."""
    c = np.linspace(-_LOGODDS_SPAN, _LOGODDS_SPAN, K - 2)
    z = 1.0 / (1.0 + np.exp(-c))
    inner = z**2 / (2.0 * (1.0 + np.sqrt(1.0 - z**2)))
    return np.concatenate([[0.0], inner, [0.5]])


def _exact_merge(M, D, rel: float = 1e-12):
    """Sort each row and merge crossovers equal up to rounding; returns (M, D, counts)."""
    B, W = M.shape
    Ds = np.where(M > 0, np.clip(D, 0.0, 0.5), 2.0)
    order = np.argsort(Ds, axis=1, kind="stable")
    Ds = np.take_along_axis(Ds, order, 1)
    Ms = np.take_along_axis(M, order, 1)
    live = Ds <= 0.5
    new = np.ones_like(live)
    new[:, 1:] = np.diff(Ds, axis=1) > rel * np.maximum(Ds[:, 1:], 1e-300)
    gid = np.cumsum(new, axis=1) - 1
    count = np.where(live, gid + 1, 0).max(axis=1)
    width = max(int(count.max()), 1)
    key = (np.arange(B)[:, None] * width + gid)[live]
    mass = np.bincount(key, weights=Ms[live], minlength=B * width).reshape(B, width)
    wd = np.bincount(key, weights=(Ms * Ds)[live], minlength=B * width).reshape(B, width)
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = np.where(mass > 0, wd / mass, 0.0)
    return mass, dd, count


def _grid_merge(M, D, grid: np.ndarray, side: str):
    """Quantize every row onto the crossover grid.

    ``degrade`` merges the classes between adjacent grid points into their
    mass-weighted mean (the merged channel is degraded, so Z can only grow).
    ``upgrade`` splits each class over the two enclosing grid points keeping
    its mean crossover; the split channel degrades to the original, so it is
    an upgrade and Z can only shrink.
    """
    B, _ = M.shape
    K = grid.size
    d = np.clip(D, 0.0, 0.5)
    k = np.clip(np.searchsorted(grid, d, side="right") - 1, 0, K - 2)
    rows = np.arange(B)[:, None] * K
    live = M > 0
    if side == "degrade":
        key = (rows + k)[live]
        mass = np.bincount(key, weights=M[live], minlength=B * K).reshape(B, K)
        wd = np.bincount(key, weights=(M * d)[live], minlength=B * K).reshape(B, K)
        with np.errstate(divide="ignore", invalid="ignore"):
            dd = np.where(mass > 0, wd / mass, 0.0)
        return mass, dd
    lo, hi = grid[k], grid[k + 1]
    alpha = np.clip((hi - d) / (hi - lo), 0.0, 1.0)
    key_lo = (rows + k)[live]
    mass = np.bincount(key_lo, weights=(M * alpha)[live], minlength=B * K)
    mass += np.bincount(key_lo + 1, weights=(M * (1 - alpha))[live], minlength=B * K)
    return mass.reshape(B, K), np.broadcast_to(grid, (B, K)).copy()


def _reduce_rows(M, D, K: int, side: str):
    """Exact merge when at most ``K`` classes remain, grid quantization otherwise.

    Returns ``(M, D, lossy_rows)``; masses are renormalized per row.
    """
    B, W = M.shape
    lossy = np.ones(B, dtype=bool)
    if W <= 4 * K:
        Me, De, count = _exact_merge(M, D)
        lossy = count > K
        if not lossy.any():
            return Me / Me.sum(axis=1, keepdims=True), De, lossy
    Mg, Dg = _grid_merge(M, D, _crossover_grid(K), side)
    if not lossy.all():
        # keep exact rows exact; pad them to the grid width
        keep = ~lossy
        Mg[keep] = 0.0
        Dg[keep] = 0.0
        w = min(Me.shape[1], K)
        Mg[keep, :w] = Me[keep, :w]
        Dg[keep, :w] = De[keep, :w]
    return Mg / Mg.sum(axis=1, keepdims=True), Dg, lossy


def _interleave(a, b):
    """Rows of ``a`` at even positions, rows of ``b`` at odd ones (zero padded)."""
    (Ma, Da), (Mb, Db) = a, b
    w = max(Ma.shape[1], Mb.shape[1])
    M = np.zeros((2 * Ma.shape[0], w))
    D = np.zeros_like(M)
    M[0::2, : Ma.shape[1]], D[0::2, : Ma.shape[1]] = Ma, Da
    M[1::2, : Mb.shape[1]], D[1::2, : Mb.shape[1]] = Mb, Db
    return M, D


def _level_step(M, D, K, side, chunk_entries=1 << 22):
    """Children of every branch, reduced; returns (M, D, any_lossy)."""
    B, C = M.shape
    step = max(1, chunk_entries // max(1, 2 * C * C))
    outs_m, outs_p, lossy = [], [], False
    for s in range(0, B, step):
        mm, dm, l1 = _reduce_rows(*_rows_minus(M[s : s + step], D[s : s + step]), K, side)
        mp, dp, l2 = _reduce_rows(*_rows_plus(M[s : s + step], D[s : s + step]), K, side)
        outs_m.append((mm, dm))
        outs_p.append((mp, dp))
        lossy |= bool(l1.any() or l2.any())
    parts = [_interleave(a, b) for a, b in zip(outs_m, outs_p)]
    w = max(p[0].shape[1] for p in parts)
    M2 = np.concatenate([np.pad(p[0], ((0, 0), (0, w - p[0].shape[1]))) for p in parts])
    D2 = np.concatenate([np.pad(p[1], ((0, 0), (0, w - p[1].shape[1]))) for p in parts])
    return M2, D2, lossy


def _row_stats(M, D):
    """log2 Z and log2 (1 - Z) per row of a BSC mixture."""
    z = np.sum(M * _bhatt(D), axis=1)
    gap = np.sum(M * (np.sqrt(1 - D) - np.sqrt(D)) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        return np.log2(z), np.log2(gap)


# --- tracker tables -----------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarTracker:
    kind: str
    path: str
    lower: float
    upper: float
    lower_log2: float
    upper_log2: float
    gap_log2: float  # log2(1 - lower)

    @property
    def value(self) -> float | None:
        return self.lower if self.lower_log2 == self.upper_log2 else None


@dataclass(frozen=True, eq=False)
class TrackerTable:
    """Per-index ``sqrt(F)`` intervals in index order, stored on the log2 scale."""

    kind: str
    n: int
    lower_log2: np.ndarray
    upper_log2: np.ndarray
    gap_log2: np.ndarray

    @property
    def N(self) -> int:
        return 2**self.n

    @property
    def lower(self) -> np.ndarray:
        return np.exp2(self.lower_log2)

    @property
    def upper(self) -> np.ndarray:
        return np.exp2(self.upper_log2)

    @property
    def exact(self) -> np.ndarray:
        return self.lower_log2 == self.upper_log2

    def tracker(self, i: int) -> ScalarTracker:
        k = i - 1
        return ScalarTracker(
            self.kind,
            path_of(i, self.n),
            float(np.exp2(self.lower_log2[k])),
            float(np.exp2(self.upper_log2[k])),
            float(self.lower_log2[k]),
            float(self.upper_log2[k]),
            float(self.gap_log2[k]),
        )

    def trackers(self) -> list[ScalarTracker]:
        return [self.tracker(i) for i in range(1, self.N + 1)]

    def threshold_log2(self, beta: float) -> float:
        return -(self.N**beta)

    def good_mask(self, beta: float) -> np.ndarray:
        return self.upper_log2 < self.threshold_log2(beta)

    def poor_mask(self, beta: float) -> np.ndarray:
        return self.gap_log2 < self.threshold_log2(beta)

    def not_good_mask(self, beta: float) -> np.ndarray:
        return self.lower_log2 >= self.threshold_log2(beta)

    def not_poor_mask(self, beta: float) -> np.ndarray:
        # gap_log2 bounds 1 - lower; 1 - upper is the matching bound for "not poor"
        with np.errstate(divide="ignore"):
            one_minus_upper = np.log2(-np.expm1(np.minimum(self.upper_log2, 0.0) * LN2))
        return one_minus_upper >= self.threshold_log2(beta)

    def undecided_mask(self, beta: float) -> np.ndarray:
        g = self.good_mask(beta) | self.not_good_mask(beta)
        p = self.poor_mask(beta) | self.not_poor_mask(beta)
        return ~(g & p)


def _bec_fast(z: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Natural-log (Z, 1 - Z) for every BEC branch; index order."""
    a = np.array([math.log(z) if z > 0 else -math.inf])
    b = np.array([math.log1p(-z) if z < 1 else -math.inf])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(n):
            na = np.empty(2 * a.size)
            nb = np.empty(2 * a.size)
            # minus: Z(2 - Z), (1 - Z)^2 ; plus: Z^2, (1 - Z)(1 + Z)
            na[0::2] = a + np.log1p(np.exp(b))
            nb[0::2] = 2 * b
            na[1::2] = 2 * a
            nb[1::2] = b + np.log1p(np.exp(a))
            a, b = na, nb
    return a, b


def _is_bec(m, d) -> bool:
    return bool(np.all((d == 0.0) | (d == 0.5)))


def evolve_table(
    W: CqChannel,
    n: int,
    mode: str = EXACT_CLASSICAL,
    cap: int = 128,
    commuting: bool | None = None,
) -> TrackerTable:
    """Track ``sqrt(F)`` of every synthesized channel at level ``n``.

    ``exact_classical`` requires commuting outputs and follows the symmetrized
    BSC-mixture representation; values are exact unless more than ``cap``
    classes arise, in which case certified upgrade/degrade merges produce an
    interval. ``fidelity_bounds`` works for any channel and only uses the
    scalar recursions.
    """
    if n < 0:
        raise DomainError("level n must be non-negative")
    if mode == EXACT_CLASSICAL:
        table = classical_reduce(W)
        m, d = table.bsc_classes()
        if _is_bec(m, d):
            z = float(np.sum(m[d == 0.5]))
            a, b = _bec_fast(z, n)
            lz = a / LN2
            lg = b / LN2
            return TrackerTable(EXACT_CLASSICAL, n, lz, lz.copy(), lg)
        return _evolve_classes(m, d, n, cap)
    if mode == FIDELITY_BOUNDS:
        if commuting is None:
            commuting = qmath.commutator_norm(W.rho0, W.rho1) <= 1e-12
        return _evolve_bounds(math.sqrt(qmath.fidelity(W.rho0, W.rho1)), n, commuting)
    raise DomainError(f"unknown mode {mode!r}; expected one of {MODES}")


def _evolve_classes(m, d, n, cap) -> TrackerTable:
    deg = (m[None, :], d[None, :])
    upg = None  # shares ``deg`` until the first lossy merge
    for _ in range(n):
        if upg is None:
            Md, Dd, lossy = _level_step(*deg, cap, "degrade")
            if lossy:
                upg = _level_step(*deg, cap, "upgrade")[:2]
            deg = (Md, Dd)
        else:
            deg = _level_step(*deg, cap, "degrade")[:2]
            upg = _level_step(*upg, cap, "upgrade")[:2]
    up, _ = _row_stats(*deg)
    lo, gap = _row_stats(*(upg if upg is not None else deg))
    return TrackerTable(EXACT_CLASSICAL, n, np.minimum(lo, up), up, gap)


def _evolve_bounds(z: float, n: int, commuting: bool) -> TrackerTable:
    # natural logs of lower, upper and 1 - lower
    ll = np.array([math.log(z) if z > 0 else -math.inf])
    lu = ll.copy()
    lc = np.array([math.log1p(-z) if z < 1 else -math.inf])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(n):
            size = ll.size
            nl, nu, nc = (np.empty(2 * size) for _ in range(3))
            # plus: squares, 1 - l^2 = (1 - l)(1 + l)
            nl[1::2] = 2 * ll
            nu[1::2] = 2 * lu
            nc[1::2] = lc + np.log1p(np.exp(ll))
            # minus upper: min(1, 2u - l^2)
            ratio = np.exp(2 * ll - lu)
            mu = lu + np.log(2 - ratio)
            mu = np.where(np.isneginf(lu), -np.inf, mu)
            nu[0::2] = np.minimum(0.0, mu)
            if commuting:
                l2 = np.exp(2 * ll)
                nl[0::2] = ll + 0.5 * np.log(2 - l2)
                one_minus_l2 = lc + np.log1p(np.exp(ll))
                nc[0::2] = 2 * one_minus_l2 - np.log1p(np.exp(ll) * np.sqrt(2 - l2))
            else:
                nl[0::2] = ll
                nc[0::2] = lc
            ll, lu, lc = nl, nu, nc
    ll = np.minimum(ll, lu)
    return TrackerTable(FIDELITY_BOUNDS, n, ll / LN2, lu / LN2, lc / LN2)


def evolve_scalar(W: CqChannel, n: int, mode: str = EXACT_CLASSICAL, cap: int = 128) -> list[ScalarTracker]:
    return evolve_table(W, n, mode, cap).trackers()


def auto_table(W: CqChannel, n: int, cap: int = 128) -> TrackerTable:
    """Exact classical tracking when the outputs commute, bounds otherwise."""
    try:
        return evolve_table(W, n, EXACT_CLASSICAL, cap)
    except NotClassicalError:
        return evolve_table(W, n, FIDELITY_BOUNDS)


def polarization_fractions(W: CqChannel, n: int, beta: float, threshold_mode: str = "auto", cap: int = 128):
    """(good, poor, undecided) fractions of the ``2**n`` synthesized channels."""
    if threshold_mode == "auto":
        table = auto_table(W, n, cap)
    else:
        table = evolve_table(W, n, threshold_mode, cap)
    return fractions_from_table(table, beta)


def fractions_from_table(table: TrackerTable, beta: float) -> tuple[float, float, float]:
    N = table.N
    good = np.count_nonzero(table.good_mask(beta)) / N
    poor = np.count_nonzero(table.poor_mask(beta)) / N
    und = np.count_nonzero(table.undecided_mask(beta)) / N
    return good, poor, und


def trajectory_rows(table: TrackerTable) -> list[tuple]:
    """Rows ``(n, index, path, lower_log2, upper_log2, exact_value_or_None)``."""
    rows = []
    exact = table.exact
    for k in range(table.N):
        val = float(np.exp2(table.lower_log2[k])) if exact[k] else None
        rows.append((table.n, k + 1, path_of(k + 1, table.n), float(table.lower_log2[k]), float(table.upper_log2[k]), val))
    return rows


# --- convergence process -------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceProcessConfig:
    q: float = 2.0
    beta: float = 0.3
    n_max: int = 18
    trials: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise DomainError("beta must lie in (0, 1)")
        if self.q <= 0:
            raise DomainError("q must be positive")
        if self.n_max < 0 or self.trials <= 0:
            raise DomainError("n_max must be >= 0 and trials > 0")


@dataclass(frozen=True)
class ConvergenceEstimate:
    n: int
    successes: int
    trials: int
    probability: float
    ci_low: float
    ci_high: float


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Per-trial generator depending only on ``(seed, trial)``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def _trial_paths(cfg: ConvergenceProcessConfig) -> np.ndarray:
    paths = np.empty((cfg.trials, cfg.n_max), dtype=bool)
    for t in range(cfg.trials):
        paths[t] = trial_rng(cfg.seed, t).integers(0, 2, cfg.n_max).astype(bool)
    return paths


def simulate_convergence_theorem(cfg: ConvergenceProcessConfig, process_source) -> ConvergenceEstimate:
    """Estimate ``Pr{X_n < 2^(-2^(n beta))}`` at ``n = cfg.n_max``.

    ``process_source`` is either a float ``X_0`` for the extremal process
    ``X -> min(1, q X)`` / ``X -> X^2`` or a commuting :class:`CqChannel`
    with BEC-type reduction, for which ``X_n = 1 - Z_n^2`` is tracked exactly
    along each sampled path.
    """
    paths = _trial_paths(cfg)  # True = plus branch
    n = cfg.n_max
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if isinstance(process_source, CqChannel):
            m, d = classical_reduce(process_source).bsc_classes()
            if not _is_bec(m, d):
                raise DomainError("channel-driven process needs an erasure-type channel")
            z = float(np.sum(m[d == 0.5]))
            a = np.full(cfg.trials, math.log(z) if z > 0 else -math.inf)
            b = np.full(cfg.trials, math.log1p(-z) if z < 1 else -math.inf)
            for k in range(n):
                plus = paths[:, k]
                na = np.where(plus, 2 * a, a + np.log1p(np.exp(b)))
                nb = np.where(plus, b + np.log1p(np.exp(a)), 2 * b)
                a, b = na, nb
            lnx = b + np.log1p(np.exp(a))
        else:
            x0 = float(process_source)
            if not 0 <= x0 <= 1:
                raise DomainError("X_0 must lie in [0, 1]")
            lnx = np.full(cfg.trials, math.log(x0) if x0 > 0 else -math.inf)
            lq = math.log(cfg.q)
            for k in range(n):
                plus = paths[:, k]
                lnx = np.where(plus, np.minimum(0.0, lnx + lq), 2 * lnx)
    threshold = -(2.0 ** (n * cfg.beta)) * LN2
    k = int(np.count_nonzero(lnx < threshold))
    ci = stats.binomtest(k, cfg.trials).proportion_ci(0.95, method="wilson")
    return ConvergenceEstimate(n, k, cfg.trials, k / cfg.trials, float(ci.low), float(ci.high))


# --- pure-state invariance -----------------------------------------------------------------------


def verify_pure_state_invariance(psi0: np.ndarray, psi1: np.ndarray) -> tuple[float, float, float]:
    """Compare ``F(W)`` and ``F(W^-)`` for the pure-state channel ``x -> |psi_x>``.

    ``F(W^-)`` is obtained by Uhlmann maximization over purifications of the
    rank-2 outputs of the minus channel, with the purifying register holding
    ``u_2``.
    """
    psi0 = qmath.check_pure(psi0)
    psi1 = qmath.check_pure(psi1)
    if psi0.shape != psi1.shape:
        raise DimensionError("pure states must have equal dimension")
    f_w = abs(np.vdot(psi0, psi1)) ** 2
    psi = (psi0, psi1)
    purif = []
    for u1 in (0, 1):
        branches = [np.kron(np.kron(psi[u1 ^ u2], psi[u2]), qmath.ket(u2, 2)) for u2 in (0, 1)]
        purif.append((branches[0] + branches[1]) / math.sqrt(2))
    d = psi0.size**2
    v = qmath.uhlmann_isometry(purif[0], purif[1], (d, 2), acting_side=1)
    moved = qmath.apply_local(v, purif[0], (d, 2), 1)
    f_minus = float(min(1.0, abs(np.vdot(purif[1], moved)) ** 2))
    return float(f_w), f_minus, abs(f_w - f_minus)
