"""Dense linear algebra and quantum-information primitives.

Operators are plain complex ``numpy`` arrays. Validation helpers check the
density-operator and pure-state invariants against the tolerances collected in
:class:`Tolerances`; every other module passes arrays around directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes or subsystem dimensions are inconsistent."""


class DomainError(ValueError):
    """An input violates a mathematical precondition (PSD, trace, range)."""


class ResourceError(RuntimeError):
    """A construction would exceed the configured dimension cap."""


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    trace: float = 1e-10
    psd: float = 1e-10
    norm: float = 1e-10
    # eigenvalues in [-eig_clamp, 0) are set to zero before sqrt/log
    eig_clamp: float = 1e-10
    max_dim: int = 4096

    @property
    def max_entries(self) -> int:
        return self.max_dim * self.max_dim


DEFAULT_TOL = Tolerances()


def check_dim(dim: int, tol: Tolerances = DEFAULT_TOL) -> None:
    if dim > tol.max_dim:
        raise ResourceError(f"operator dimension {dim} exceeds cap {tol.max_dim}")


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def proj(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def is_density(rho: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if not np.all(np.isfinite(rho)):
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol.hermitian:
        return False
    if abs(np.trace(rho) - 1.0) > tol.trace:
        return False
    return np.linalg.eigvalsh(hermitize(rho))[0] >= -tol.psd


def check_density(rho: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Return ``rho`` as a complex array, raising :class:`DomainError` if invalid."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density operator must be square, got {rho.shape}")
    if not is_density(rho, tol):
        raise DomainError("not a density operator (hermitian, unit trace, PSD)")
    return rho


def check_pure(psi: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(psi)):
        raise DomainError("state vector has non-finite entries")
    if abs(np.linalg.norm(psi) - 1.0) > tol.norm:
        raise DomainError("state vector is not normalised")
    return psi


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


_NOISE_FLOOR = 8 * np.finfo(float).eps


def _clamped_eigh(rho: np.ndarray, tol: Tolerances) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(hermitize(rho))
    if w.size and w[0] < -tol.psd:
        raise DomainError(f"operator is not PSD (smallest eigenvalue {w[0]:.3e})")
    return np.clip(w, 0.0, None), v


def psd_sqrt(rho: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Square root of a PSD matrix via its Hermitian eigendecomposition."""
    w, v = _clamped_eigh(np.asarray(rho, dtype=complex), tol)
    # eigh resolves eigenvalues only to ~eps * ||rho||; sqrt would inflate that noise to ~1e-8
    if w.size:
        w = np.where(w > _NOISE_FLOOR * w.size * w[-1], w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def tensor(*ops: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Kronecker product of matrices or vectors, refusing results beyond the cap."""
    if not ops:
        raise ValueError("tensor() needs at least one operand")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        op = np.asarray(op, dtype=complex)
        if op.ndim != out.ndim:
            raise DimensionError("cannot tensor a vector with a matrix")
        if out.size * op.size > tol.max_entries:
            raise ResourceError(
                f"tensor product would hold {out.size * op.size} entries "
                f"(cap {tol.max_entries})"
            )
        out = np.kron(out, op)
    return out


def partial_trace(
    rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]
) -> np.ndarray:
    """Reduced operator on the subsystems listed in ``keep`` (in the given order)."""
    rho = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise DimensionError(f"operator shape {rho.shape} does not match dims {dims}")
    keep = list(keep)
    if not keep or len(set(keep)) != len(keep) or any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionError(f"invalid subsystem selection {keep} for {len(dims)} systems")
    n = len(dims)
    traced = [k for k in range(n) if k not in keep]
    t = rho.reshape(dims + dims)
    # bring kept row axes, then kept column axes, then traced pairs to the end
    order = keep + [k + n for k in keep] + traced + [k + n for k in traced]
    t = t.transpose(order)
    dk = int(np.prod([dims[k] for k in keep]))
    dt = int(np.prod([dims[k] for k in traced])) if traced else 1
    t = t.reshape(dk, dk, dt, dt)
    return np.trace(t, axis1=2, axis2=3)


def pure_partial_trace(psi: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced operator of a pure state without forming the full projector."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    dims = [int(d) for d in dims]
    if psi.size != int(np.prod(dims)):
        raise DimensionError(f"state length {psi.size} does not match dims {dims}")
    keep = list(keep)
    traced = [k for k in range(len(dims)) if k not in keep]
    t = psi.reshape(dims).transpose(keep + traced)
    dk = int(np.prod([dims[k] for k in keep]))
    m = t.reshape(dk, -1)
    return m @ m.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> float:
    """Squared trace norm ``||sqrt(rho) sqrt(sigma)||_1 ** 2``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    s = np.linalg.svd(psd_sqrt(rho, tol) @ psd_sqrt(sigma, tol), compute_uv=False)
    return float(min(1.0, max(0.0, np.sum(s) ** 2)))


def von_neumann_entropy(rho: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> float:
    """Entropy in bits, with ``0 log 0 = 0``."""
    w, _ = _clamped_eigh(np.asarray(rho, dtype=complex), tol)
    return shannon_entropy(w)


def shannon_entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def binary_entropy(p):
    """h2 in bits; works elementwise on arrays."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.where((p <= 0) | (p >= 1), 0.0, h)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Trace norm of the difference (range [0, 2], no factor 1/2)."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(rho - sigma)))))


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(m), compute_uv=False)))


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return trace_norm(a @ b - b @ a)


def _complete_basis(vectors: np.ndarray, dim: int, tol: float = 1e-10) -> np.ndarray:
    """Extend orthonormal columns to a full basis by Gram-Schmidt on e_0, e_1, ..."""
    q = np.zeros((dim, dim), dtype=complex)
    m = vectors.shape[1]
    q[:, :m] = vectors
    for k in range(dim):
        if m == dim:
            break
        v = np.zeros(dim, dtype=complex)
        v[k] = 1.0
        # two passes of classical Gram-Schmidt against the columns so far
        for _ in range(2):
            v = v - q[:, :m] @ (q[:, :m].conj().T @ v)
        nv = np.linalg.norm(v)
        if nv > tol:
            q[:, m] = v / nv
            m += 1
    return q[:, :m]


def uhlmann_isometry(
    psi: np.ndarray,
    phi: np.ndarray,
    dims: Sequence[int],
    acting_side: int = 0,
    tol: Tolerances = DEFAULT_TOL,
) -> np.ndarray:
    """Unitary ``V`` on one side of a bipartition maximising ``|<phi|(V x I)|psi>|``.

    With ``M = Tr_other |psi><phi|`` written as ``U S W^dagger``, the optimum is
    ``V = W U^dagger`` on the support of ``M``. The null space is completed
    deterministically: the remaining domain and range vectors are obtained by
    Gram-Schmidt against the standard basis and paired in order.
    """
    d0, d1 = (int(d) for d in dims)
    psi = np.asarray(psi, dtype=complex).reshape(d0, d1)
    phi = np.asarray(phi, dtype=complex).reshape(d0, d1)
    if acting_side == 1:
        psi, phi = psi.T, phi.T
    elif acting_side != 0:
        raise DimensionError("acting_side must be 0 or 1")
    d = psi.shape[0]
    m = psi @ phi.conj().T
    u, s, wh = np.linalg.svd(m)
    r = int(np.sum(s > tol.norm * max(1.0, s[0] if s.size else 0.0)))
    w = wh.conj().T
    dom = _complete_basis(u[:, :r], d)
    rng = _complete_basis(w[:, :r], d)
    return rng @ dom.conj().T


def apply_local(op: np.ndarray, psi: np.ndarray, dims: Sequence[int], side: int) -> np.ndarray:
    """Apply ``op`` to subsystem ``side`` of a bipartite vector."""
    d0, d1 = (int(d) for d in dims)
    m = np.asarray(psi, dtype=complex).reshape(d0, d1)
    out = op @ m if side == 0 else m @ op.T
    return out.reshape(-1)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pure(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed density operator of the given rank (full by default)."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
