"""Channel families with classical environment, their complements and capacities.

Every family is built as an isometry ``V : A -> B (x) E`` (Bob factor first).
The classical-quantum channels seen by Bob and Eve are obtained by feeding the
two vectors of the channel's ``input_basis`` through ``V`` and tracing out the
other party.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from . import qmath
from .qmath import DEFAULT_TOL, DimensionError, DomainError, Tolerances

FAMILIES = ("amplitude_damping", "photon_detected_jump", "erasure", "dephasing", "cloning")
AXES = ("X", "Y", "Z")

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class CqChannel:
    """Binary-input classical-quantum channel ``x -> rho_x``."""

    rho0: np.ndarray
    rho1: np.ndarray

    def __post_init__(self):
        r0 = np.asarray(self.rho0, dtype=complex)
        r1 = np.asarray(self.rho1, dtype=complex)
        if r0.shape != r1.shape:
            raise DimensionError(f"output shapes differ: {r0.shape} vs {r1.shape}")
        object.__setattr__(self, "rho0", r0)
        object.__setattr__(self, "rho1", r1)

    @property
    def dim(self) -> int:
        return self.rho0.shape[0]

    def output(self, x: int) -> np.ndarray:
        return self.rho1 if x else self.rho0

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "CqChannel":
        qmath.check_density(self.rho0, tol)
        qmath.check_density(self.rho1, tol)
        return self


@dataclass(frozen=True)
class ChannelFamilySpec:
    family: str
    parameter: float | None = None
    clones: int | None = None
    dephasing_axis: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown channel family {self.family!r}")
        if self.family == "cloning":
            if self.clones is None or int(self.clones) != self.clones or self.clones < 2:
                raise DomainError("cloning channel needs an integer clone count >= 2")
        else:
            if self.parameter is None or not (0.0 <= float(self.parameter) <= 1.0):
                raise DomainError(
                    f"{self.family} parameter must lie in [0, 1], got {self.parameter}"
                )
        if self.dephasing_axis is not None and self.dephasing_axis not in AXES:
            raise DomainError(f"dephasing axis must be one of {AXES}")

    @property
    def axis(self) -> str:
        return self.dephasing_axis or "Z"

    def to_dict(self) -> dict:
        d: dict = {"family": self.family}
        if self.parameter is not None:
            d["parameter"] = self.parameter
        if self.clones is not None:
            d["clones"] = self.clones
        if self.dephasing_axis is not None:
            d["dephasing_axis"] = self.dephasing_axis
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelFamilySpec":
        unknown = set(d) - {"family", "parameter", "clones", "dephasing_axis"}
        if unknown:
            raise DomainError(f"unknown channel spec fields {sorted(unknown)}")
        if "family" not in d:
            raise DomainError("channel spec needs a 'family' field")
        param = d.get("parameter")
        clones = d.get("clones")
        return cls(
            family=d["family"],
            parameter=None if param is None else float(param),
            clones=None if clones is None else int(clones),
            dephasing_axis=d.get("dephasing_axis"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ChannelFamilySpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"malformed channel spec JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise DomainError("channel spec JSON must be an object")
        return cls.from_dict(d)


@dataclass(frozen=True, eq=False)
class IsometricChannel:
    """Isometric extension ``V`` with columns indexed by the computational input.

    ``isometry`` has shape ``(dim_B * dim_E, dim_in)`` in ``B (x) E`` order and
    ``input_basis`` holds the two orthonormal input vectors that play the role
    of the classical letters 0 and 1.
    """

    isometry: np.ndarray
    dim_B: int
    dim_E: int
    input_basis: tuple = field(default=None)
    spec: ChannelFamilySpec | None = None

    def __post_init__(self):
        v = np.asarray(self.isometry, dtype=complex)
        if v.shape[0] != self.dim_B * self.dim_E:
            raise DimensionError(
                f"isometry has {v.shape[0]} rows, expected {self.dim_B}*{self.dim_E}"
            )
        object.__setattr__(self, "isometry", v)
        basis = self.input_basis
        if basis is None:
            basis = tuple(qmath.ket(k, v.shape[1]) for k in range(2))
        basis = tuple(np.asarray(b, dtype=complex).reshape(-1) for b in basis)
        object.__setattr__(self, "input_basis", basis)
        gram = v.conj().T @ v
        if np.max(np.abs(gram - np.eye(v.shape[1]))) > 1e-10:
            raise DomainError("channel matrix is not an isometry (V^dagger V != I)")
        b = np.stack(basis, axis=1)
        if np.max(np.abs(b.conj().T @ b - np.eye(len(basis)))) > 1e-10:
            raise DomainError("input basis is not orthonormal")

    @property
    def dim_in(self) -> int:
        return self.isometry.shape[1]

    def letter_isometry(self) -> np.ndarray:
        """Isometry restricted to the classical letters: ``V [b0 b1]``."""
        return self.isometry @ np.stack(self.input_basis, axis=1)

    def joint_output(self, x: int) -> np.ndarray:
        """Pure ``B (x) E`` vector for classical letter ``x``."""
        return self.isometry @ self.input_basis[x]

    def bob_map(self, rho: np.ndarray) -> np.ndarray:
        out = self.isometry @ rho @ self.isometry.conj().T
        return qmath.partial_trace(out, [self.dim_B, self.dim_E], [0])

    def eve_map(self, rho: np.ndarray) -> np.ndarray:
        out = self.isometry @ rho @ self.isometry.conj().T
        return qmath.partial_trace(out, [self.dim_B, self.dim_E], [1])


@dataclass(frozen=True, eq=False)
class DegradingMap:
    kraus_operators: tuple

    def __post_init__(self):
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus_operators)
        object.__setattr__(self, "kraus_operators", ks)

    def completeness_error(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus_operators)
        return float(np.max(np.abs(s - np.eye(s.shape[0]))))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_operators)


# --- construction ---------------------------------------------------------------


def _from_columns(col0: np.ndarray, col1: np.ndarray) -> np.ndarray:
    return np.stack([col0, col1], axis=1)


def build_channel(spec: ChannelFamilySpec) -> IsometricChannel:
    """Isometric extension of a family member, with the commuting-environment basis."""
    fam = spec.family
    k = qmath.ket
    if fam == "amplitude_damping":
        g = spec.parameter
        v0 = np.kron(k(0, 2), k(0, 2))
        v1 = math.sqrt(1 - g) * np.kron(k(1, 2), k(0, 2)) + math.sqrt(g) * np.kron(k(0, 2), k(1, 2))
        return IsometricChannel(_from_columns(v0, v1), 2, 2, spec=spec)
    if fam == "photon_detected_jump":
        # jump events land on an orthogonal Bob level |2> and leave a record in E
        g = spec.parameter
        v0 = np.kron(k(0, 3), k(0, 2))
        v1 = math.sqrt(1 - g) * np.kron(k(1, 3), k(0, 2)) + math.sqrt(g) * np.kron(k(2, 3), k(1, 2))
        return IsometricChannel(_from_columns(v0, v1), 3, 2, spec=spec)
    if fam == "erasure":
        e = spec.parameter
        cols = [
            math.sqrt(1 - e) * np.kron(k(x, 3), k(2, 3)) + math.sqrt(e) * np.kron(k(2, 3), k(x, 3))
            for x in (0, 1)
        ]
        return IsometricChannel(_from_columns(*cols), 3, 3, spec=spec)
    if fam == "dephasing":
        p = spec.parameter
        sigma = PAULI[spec.axis]
        v = np.zeros((4, 2), dtype=complex)
        for x in (0, 1):
            v[:, x] = math.sqrt(1 - p) * np.kron(k(x, 2), k(0, 2)) + math.sqrt(p) * np.kron(
                sigma @ k(x, 2), k(1, 2)
            )
        return IsometricChannel(v, 2, 2, input_basis=flip_basis(spec.axis), spec=spec)
    if fam == "cloning":
        return _cloning_channel(spec)
    raise DomainError(f"unknown family {fam!r}")  # pragma: no cover


def flip_basis(axis: str) -> tuple:
    """Input basis on which the Pauli ``axis`` acts as a bit flip."""
    if axis == "Z":
        s = 1 / math.sqrt(2)
        return (np.array([s, s], dtype=complex), np.array([s, -s], dtype=complex))
    return (qmath.ket(0, 2), qmath.ket(1, 2))


def _cloning_channel(spec: ChannelFamilySpec) -> IsometricChannel:
    # Bob holds the symmetric subspace of N qubits (Dicke basis |N,k>), Eve the
    # symmetric subspace of N-1 qubits; Eve's label i corresponds to Dicke j = N-1-i.
    n = int(spec.clones)
    db, de = n + 1, n
    v = np.zeros((db * de, 2), dtype=complex)
    for a in (0, 1):
        for j in range(n):
            amp = math.sqrt(2 / (n + 1) * math.comb(n - 1, j) / math.comb(n, j + a))
            i = n - 1 - j
            v[(j + a) * de + i, a] = amp
    return IsometricChannel(v, db, de, spec=spec)


def identity_channel() -> IsometricChannel:
    """Noiseless qubit channel with a trivial one-dimensional environment."""
    return IsometricChannel(np.eye(2, dtype=complex), 2, 1)


def from_isometry(v: np.ndarray, dim_B: int, dim_E: int, input_basis=None) -> IsometricChannel:
    return IsometricChannel(np.asarray(v, dtype=complex), dim_B, dim_E, input_basis=input_basis)


# --- induced cq channels ----------------------------------------------------------


def _marginal(ch: IsometricChannel, x: int, side: int) -> np.ndarray:
    psi = ch.joint_output(x)
    return qmath.pure_partial_trace(psi, [ch.dim_B, ch.dim_E], [side])


def bob_channel(ch: IsometricChannel) -> CqChannel:
    return CqChannel(_marginal(ch, 0, 0), _marginal(ch, 1, 0))


def eve_channel(ch: IsometricChannel) -> CqChannel:
    return CqChannel(_marginal(ch, 0, 1), _marginal(ch, 1, 1))


def check_classical_environment(ch: IsometricChannel) -> float:
    """Trace norm of ``[rho_0^E, rho_1^E]``; zero certifies a classical environment."""
    w = eve_channel(ch)
    return qmath.commutator_norm(w.rho0, w.rho1)


def verify_degrading_map(W: CqChannel, Wstar: CqChannel, D: DegradingMap) -> float:
    """Largest trace distance between ``D(rho_x^B)`` and ``rho_x^E``."""
    if D.completeness_error() > 1e-10:
        raise DomainError("degrading map Kraus operators are not trace preserving")
    errs = []
    for x in (0, 1):
        out = D(W.output(x))
        if out.shape != Wstar.output(x).shape:
            raise DimensionError("degrading map output dimension does not match Eve's")
        errs.append(qmath.trace_distance(out, Wstar.output(x)))
    return max(errs)


def standard_degrading_map(spec: ChannelFamilySpec) -> DegradingMap:
    """Bob-to-Eve degrading map for the classical letters of a family member."""
    k = qmath.ket
    fam = spec.family
    if not is_degradable(spec):
        raise DomainError(f"{fam} is not degradable at {spec.parameter}; valid range {degradable_range(spec)}")
    if fam == "amplitude_damping":
        g = spec.parameter
        gp = (1 - 2 * g) / (1 - g) if g < 1 else 0.0
        return DegradingMap((
            np.array([[1, 0], [0, math.sqrt(1 - gp)]], dtype=complex),
            np.array([[0, math.sqrt(gp)], [0, 0]], dtype=complex),
        ))
    if fam == "photon_detected_jump":
        return DegradingMap((np.outer(k(0, 2), k(0, 3)), np.outer(k(0, 2), k(1, 3)), np.outer(k(1, 2), k(2, 3))))
    if fam == "erasure":
        e = spec.parameter
        q = (1 - 2 * e) / (1 - e) if e < 1 else 0.0
        keep = math.sqrt(1 - q) * (np.outer(k(0, 3), k(0, 3)) + np.outer(k(1, 3), k(1, 3))) + np.outer(k(2, 3), k(2, 3))
        return DegradingMap((keep, math.sqrt(q) * np.outer(k(2, 3), k(0, 3)), math.sqrt(q) * np.outer(k(2, 3), k(1, 3))))
    if fam == "dephasing":
        ch = build_channel(spec)
        # in the flip basis Eve's letters coincide, so a replace channel suffices
        target = eve_channel(ch).rho0
        w, vecs = np.linalg.eigh(target)
        ops = []
        for lam, vec in zip(w, vecs.T):
            if lam > 1e-15:
                for j in range(2):
                    ops.append(math.sqrt(lam) * np.outer(vec, k(j, 2)))
        return DegradingMap(tuple(ops))
    if fam == "cloning":
        n = int(spec.clones)
        ops = [np.outer(k(n - 1 - j, n), k(j, n + 1)) for j in range(n)]
        ops += [np.outer(k(i, n), k(n, n + 1)) / math.sqrt(n) for i in range(n)]
        return DegradingMap(tuple(ops))
    raise DomainError(fam)  # pragma: no cover


# --- information quantities -----------------------------------------------------------


def symmetric_holevo(W: CqChannel) -> float:
    rho = 0.5 * (W.rho0 + W.rho1)
    h = qmath.von_neumann_entropy(rho) - 0.5 * (
        qmath.von_neumann_entropy(W.rho0) + qmath.von_neumann_entropy(W.rho1)
    )
    return float(max(0.0, h))


def channel_fidelity(W: CqChannel) -> float:
    return qmath.fidelity(W.rho0, W.rho1)


def symmetric_coherent_info(ch: IsometricChannel) -> float:
    """``I(W) - I(W*)`` for the letter basis."""
    return symmetric_holevo(bob_channel(ch)) - symmetric_holevo(eve_channel(ch))


def coherent_info_bell(ch: IsometricChannel) -> float:
    """``H(B) - H(AB)`` with half of a Bell pair (in the letter basis) sent through."""
    phi = np.zeros((2, ch.dim_in), dtype=complex)
    phi[0] = ch.input_basis[0]
    phi[1] = ch.input_basis[1]
    phi /= math.sqrt(2)
    out = phi @ ch.isometry.T  # reference x (B E)
    dims = [2, ch.dim_B, ch.dim_E]
    rho_b = qmath.pure_partial_trace(out.reshape(-1), dims, [1])
    rho_ab = qmath.pure_partial_trace(out.reshape(-1), dims, [0, 1])
    return qmath.von_neumann_entropy(rho_b) - qmath.von_neumann_entropy(rho_ab)


def _batched_entropy(mats: np.ndarray) -> np.ndarray:
    w = np.clip(np.linalg.eigvalsh(mats), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(w > 0, -w * np.log2(w), 0.0)
    return t.sum(axis=-1)


def coherent_info_prior(ch: IsometricChannel, p) -> np.ndarray:
    """Coherent information for the input ``(1-p)|b0><b0| + p|b1><b1|``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    wb, we = bob_channel(ch), eve_channel(ch)
    pb = p[:, None, None]
    rb = (1 - pb) * wb.rho0 + pb * wb.rho1
    re = (1 - pb) * we.rho0 + pb * we.rho1
    return _batched_entropy(rb) - _batched_entropy(re)


def degradable_range(spec: ChannelFamilySpec) -> str:
    return {
        "amplitude_damping": "[0, 0.5]",
        "erasure": "[0, 0.5]",
    }.get(spec.family, "all parameters")


def is_degradable(spec: ChannelFamilySpec) -> bool:
    if spec.family in ("amplitude_damping", "erasure"):
        return spec.parameter <= 0.5
    return True


def maximize_prior(f, grid_points: int = 10_000, xtol: float = 1e-9) -> tuple[float, float]:
    """Maximise a scalar function of ``p in [0, 1]``: dense grid, then bounded refinement.

    The refinement runs Brent's golden-section/parabolic search on the grid cell
    around the best grid point; a plain golden bracket fails on ties (flat or
    symmetric objectives such as erasure).
    """
    grid = np.linspace(0.0, 1.0, grid_points)
    vals = np.asarray(f(grid), dtype=float)
    k = int(np.argmax(vals))
    best_p, best_v = float(grid[k]), float(vals[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda t: -float(np.asarray(f(np.array([t])))[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": xtol},
        )
        if -res.fun >= best_v:
            best_p, best_v = float(res.x), float(-res.fun)
    return best_p, best_v


def quantum_capacity_degradable(spec: ChannelFamilySpec) -> float:
    """Single-letter coherent information maximised over diagonal input priors."""
    return quantum_capacity_with_prior(spec)[1]


def quantum_capacity_with_prior(spec: ChannelFamilySpec) -> tuple[float, float]:
    if not is_degradable(spec):
        raise DomainError(
            f"{spec.family} is not degradable at parameter {spec.parameter}; "
            f"valid range {degradable_range(spec)}"
        )
    ch = build_channel(spec)
    p, q = maximize_prior(lambda t: coherent_info_prior(ch, t))
    return p, max(0.0, q)


@dataclass(frozen=True)
class CapacityRow:
    parameter: float
    q_true: float | None
    ic_sym: float | None
    ratio: float | None
    flag: str = ""


def capacity_ratio_curve(family: str, parameter_grid: Iterable[float], **spec_kw) -> list[CapacityRow]:
    rows = []
    for t in parameter_grid:
        t = float(t)
        if family == "cloning":
            spec = ChannelFamilySpec(family, clones=int(t), **spec_kw)
        else:
            spec = ChannelFamilySpec(family, parameter=t, **spec_kw)
        if not is_degradable(spec):
            rows.append(CapacityRow(t, None, None, None, "non-degradable"))
            continue
        ic = symmetric_coherent_info(build_channel(spec))
        q = quantum_capacity_degradable(spec)
        if ic <= 0:
            rows.append(CapacityRow(t, q, ic, None, "non-positive coherent information"))
            continue
        rows.append(CapacityRow(t, q, ic, q / ic))
    return rows
