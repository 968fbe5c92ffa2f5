"""Dense statevector quantum mechanics for small qubit registers.

Qubits are ordered big-endian: qubit 0 is the most significant bit of the
amplitude index. Measurement functions never draw randomness themselves;
the caller passes a uniform real ``u`` in [0, 1) that selects the Born
outcome, so that sampling paths and exhaustive enumeration share one code
path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

NORM_TOL = 1e-10
SYNTH_TOL = 1e-9
ZERO_BRANCH = 1e-12
MAX_QUBITS = 12

_SQRT_HALF = 1.0 / np.sqrt(2.0)


class QuantumFault(RuntimeError):
    """A numerically impossible branch was selected."""


class PartitionError(ValueError):
    """Subsystem indices are inconsistent with the state dimension."""


class SteeringInfeasible(ValueError):
    """The target ensemble cannot be realized exactly from the given state."""


class Basis(str, enum.Enum):
    RECTILINEAR = "+"
    DIAGONAL = "x"

    @classmethod
    def parse(cls, label: "str | Basis") -> "Basis":
        if isinstance(label, Basis):
            return label
        if label in ("+", "rectilinear", "0"):
            return cls.RECTILINEAR
        if label in ("x", "×", "diagonal", "1"):
            return cls.DIAGONAL
        raise ValueError(f"unknown basis label {label!r}")

    def vectors(self) -> np.ndarray:
        """Columns are the basis states for outcome 0 and outcome 1."""
        return _BASIS_VECTORS[self]


_BASIS_VECTORS = {
    Basis.RECTILINEAR: np.eye(2, dtype=complex),
    Basis.DIAGONAL: np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT_HALF,
}
for _v in _BASIS_VECTORS.values():
    _v.setflags(write=False)


def parse_bases(labels: "str | Sequence[str | Basis]") -> tuple[Basis, ...]:
    return tuple(Basis.parse(c) for c in labels)


def format_bases(bases: Sequence[Basis]) -> str:
    return "".join(b.value for b in bases)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state of ``num_qubits`` qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        dim = amps.size
        if dim < 2 or dim & (dim - 1):
            raise PartitionError(f"amplitude count {dim} is not a power of two >= 2")
        if dim > 2**MAX_QUBITS:
            raise PartitionError(f"{dim.bit_length() - 1} qubits exceeds the {MAX_QUBITS}-qubit cap")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def _trusted(cls, amplitudes: np.ndarray) -> "StateVector":
        """Wrap amplitudes that are normalized by construction, skipping validation."""
        obj = object.__new__(cls)
        amplitudes.setflags(write=False)
        object.__setattr__(obj, "amplitudes", amplitudes)
        return obj

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @property
    def dimension(self) -> int:
        return self.amplitudes.size

    @classmethod
    def from_unnormalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(amps / np.linalg.norm(amps))

    @classmethod
    def basis_state(cls, bits: Sequence[int]) -> "StateVector":
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int("".join(str(int(b)) for b in bits), 2)] = 1.0
        return cls(amps)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def allclose(self, other: "StateVector", atol: float = NORM_TOL) -> bool:
        return np.allclose(self.amplitudes, other.amplitudes, atol=atol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator."""

    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise PartitionError(f"density matrix must be square, got shape {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=NORM_TOL):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace is {np.trace(rho).real!r}")
        if np.linalg.eigvalsh(rho).min() < -NORM_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted collection of pure states of equal dimension."""

    probabilities: np.ndarray
    states: tuple[StateVector, ...]

    def __post_init__(self):
        probs = np.array(self.probabilities, dtype=float).reshape(-1)
        states = tuple(self.states)
        if len(states) != probs.size or not states:
            raise ValueError("ensemble needs one probability per state")
        if np.any(probs < -NORM_TOL) or np.any(probs > 1 + NORM_TOL):
            raise ValueError("ensemble probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"ensemble probabilities sum to {probs.sum()!r}")
        if len({s.dimension for s in states}) != 1:
            raise ValueError("ensemble members differ in dimension")
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dimension(self) -> int:
        return self.states[0].dimension

    def mixture(self) -> DensityMatrix:
        rho = sum(p * np.outer(s.amplitudes, s.amplitudes.conj())
                  for p, s in zip(self.probabilities, self.states))
        return DensityMatrix(rho)


@dataclass(frozen=True, eq=False)
class SteeringBasis:
    """Orthonormal measurement basis on the local factor.

    ``vectors[:, j]`` is the j-th basis vector. ``mixing`` is the unitary
    relating the Schmidt terms of the source state to the target ensemble
    members (rows indexed by ensemble member, padded to the local dimension).
    """

    vectors: np.ndarray
    mixing: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        g = np.array(self.vectors, dtype=complex)
        gram = g.conj().T @ g
        if not np.allclose(gram, np.eye(g.shape[1]), atol=SYNTH_TOL):
            raise QuantumFault("steering basis is not orthonormal")
        g.setflags(write=False)
        object.__setattr__(self, "vectors", g)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]


# -- preparation -------------------------------------------------------------

_BB84_STATES = {(bit, basis): StateVector(vecs[:, bit])
                for basis, vecs in _BASIS_VECTORS.items() for bit in (0, 1)}



def prepare_bb84(bit: int, basis: "Basis | str") -> StateVector:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    return _BB84_STATES[bit, Basis.parse(basis)]


def tensor(*states: StateVector) -> StateVector:
    amps = states[0].amplitudes
    for s in states[1:]:
        amps = np.multiply.outer(amps, s.amplitudes).reshape(-1)
    if amps.size > 2**MAX_QUBITS:
        raise PartitionError(f"tensor product exceeds the {MAX_QUBITS}-qubit cap")
    return StateVector._trusted(amps)


def product_state(bits: Sequence[int], bases: Sequence["Basis | str"]) -> StateVector:
    """Tensor product of BB84 preparations, one per qubit."""
    if len(bits) != len(bases):
        raise ValueError("bits and bases differ in length")
    bits, bases = tuple(int(b) for b in bits), tuple(Basis.parse(e) for e in bases)
    # blocks of four photons are cached, which keeps BB84 rounds cheap
    blocks = [_product_block(bits[i:i + 4], bases[i:i + 4]) for i in range(0, len(bits), 4)]
    return tensor(*blocks)


@lru_cache(maxsize=1024)
def _product_block(bits: tuple, bases: tuple) -> StateVector:
    return tensor(*(prepare_bb84(b, e) for b, e in zip(bits, bases)))


def random_state(rng: np.random.Generator, num_qubits: int) -> StateVector:
    """Haar-random pure state."""
    dim = 2**num_qubits
    return StateVector.from_unnormalized(rng.normal(size=dim) + 1j * rng.normal(size=dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    from scipy.stats import unitary_group

    return unitary_group.rvs(dim, random_state=rng)


# -- qubit bookkeeping -------------------------------------------------------

def _check_qubits(num_qubits: int, qubits: Sequence[int]) -> list[int]:
    qubits = [int(q) for q in qubits]
    if len(set(qubits)) != len(qubits) or any(q < 0 or q >= num_qubits for q in qubits):
        raise PartitionError(f"invalid qubit indices {qubits} for {num_qubits} qubits")
    return qubits


def permute_qubits(state: StateVector, order: Sequence[int]) -> StateVector:
    """Reorder qubits so that new qubit k is old qubit ``order[k]``."""
    n = state.num_qubits
    order = _check_qubits(n, order)
    if len(order) != n:
        raise PartitionError("permutation must mention every qubit")
    amps = state.amplitudes.reshape((2,) * n).transpose(order).reshape(-1)
    return StateVector(amps)


def _split(state: StateVector, local: Sequence[int]) -> tuple[np.ndarray, list[int], list[int]]:
    """Return the amplitude matrix with rows indexed by ``local`` qubits."""
    n = state.num_qubits
    local = _check_qubits(n, local)
    remote = [q for q in range(n) if q not in local]
    tensor_ = state.amplitudes.reshape((2,) * n).transpose(local + remote)
    return tensor_.reshape(2 ** len(local), 2 ** len(remote)), local, remote


def _join(matrix: np.ndarray, local: list[int], remote: list[int]) -> np.ndarray:
    n = len(local) + len(remote)
    inverse = np.argsort(local + remote)
    return matrix.reshape((2,) * n).transpose(inverse).reshape(-1)


def contract_out(state: StateVector, qubits: Sequence[int], factor: StateVector) -> StateVector:
    """Project ``qubits`` onto ``factor`` and return the remaining register.

    Exact when the state is a product with ``factor`` on those qubits.
    """
    if factor.num_qubits != len(qubits):
        raise PartitionError("factor size does not match the contracted qubits")
    m, _, _ = _split(state, qubits)
    return StateVector.from_unnormalized(factor.amplitudes.conj() @ m)


# -- measurement -------------------------------------------------------------

def measure_qubit(state: StateVector, qubit: int, basis: "Basis | str",
                  u: float) -> tuple[int, StateVector]:
    """Projective measurement of one qubit; ``u`` selects the Born outcome."""
    n = state.num_qubits
    if not 0 <= qubit < n:
        raise PartitionError(f"qubit {qubit} out of range for {n} qubits")
    basis = Basis.parse(basis)
    amps = state.amplitudes.reshape(2**qubit, 2, 2 ** (n - qubit - 1))
    a0, a1 = amps[:, 0, :], amps[:, 1, :]
    if basis is Basis.RECTILINEAR:
        c0, c1 = a0, a1
    else:
        c0, c1 = (a0 + a1) * _SQRT_HALF, (a0 - a1) * _SQRT_HALF
    p0 = np.vdot(c0, c0).real
    outcome = 0 if u < p0 else 1
    prob = p0 if outcome == 0 else 1.0 - p0
    if prob < ZERO_BRANCH:
        raise QuantumFault(f"selected measurement branch has probability {prob:.3e}")
    kept = (c0 if outcome == 0 else c1) * (1.0 / np.sqrt(prob))
    post = np.zeros_like(amps)
    if basis is Basis.RECTILINEAR:
        post[:, outcome, :] = kept
    else:
        post[:, 0, :] = kept * _SQRT_HALF
        post[:, 1, :] = kept * (_SQRT_HALF if outcome == 0 else -_SQRT_HALF)
    return outcome, StateVector._trusted(post.reshape(-1))


def outcome_branches(state: StateVector, local: Sequence[int],
                     basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Born probabilities and unnormalized remote states for every outcome.

    ``basis`` holds orthonormal columns over the local factor. Row j of the
    returned matrix is the remote-factor vector left after outcome j.
    """
    m, _, _ = _split(state, local)
    if basis.shape[0] != m.shape[0]:
        raise PartitionError("basis dimension does not match the local factor")
    remote = basis.conj().T @ m
    probs = np.einsum("jr,jr->j", remote.conj(), remote).real
    return probs, remote


def measure_in_basis(state: StateVector, local: Sequence[int], basis: "SteeringBasis | np.ndarray",
                     u: float) -> tuple[int, StateVector]:
    """Measure the ``local`` qubits in an orthonormal basis and collapse."""
    vectors = basis.vectors if isinstance(basis, SteeringBasis) else np.asarray(basis)
    probs, remote = outcome_branches(state, local, vectors)
    cumulative = np.cumsum(probs)
    j = int(np.searchsorted(cumulative, u, side="right"))
    j = min(j, len(probs) - 1)
    if probs[j] < ZERO_BRANCH:
        raise QuantumFault(f"selected outcome {j} has probability {probs[j]:.3e}")
    _, local_q, remote_q = _split(state, local)
    post = np.outer(vectors[:, j], remote[j] / np.sqrt(probs[j]))
    return j, StateVector(_join(post, local_q, remote_q))


# -- reduced states and distances -------------------------------------------

def partial_trace(state: "StateVector | DensityMatrix", keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on the ``keep`` qubits, in the order given."""
    if isinstance(state, StateVector):
        m, _, _ = _split(state, keep)
        return DensityMatrix(m @ m.conj().T)
    rho = np.asarray(state.entries)
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    if 2**n != dim:
        raise PartitionError(f"dimension {dim} is not a qubit register")
    keep = _check_qubits(n, keep)
    drop = [q for q in range(n) if q not in keep]
    t = rho.reshape((2,) * (2 * n)).transpose(keep + drop + [n + q for q in keep + drop])
    dk, dd = 2 ** len(keep), 2 ** len(drop)
    return DensityMatrix(np.einsum("adbd->ab", t.reshape(dk, dd, dk, dd)))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.dimension != sigma.dimension:
        raise PartitionError(f"dimension mismatch: {rho.dimension} vs {sigma.dimension}")
    eig = np.linalg.eigvalsh(rho.entries - sigma.entries)
    return float(min(1.0, 0.5 * np.abs(eig).sum()))


def fidelity(a: StateVector, b: StateVector) -> float:
    """Pure-state fidelity |<a|b>|^2."""
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


# -- ensemble steering -------------------------------------------------------

def schmidt_decomposition(state: StateVector, local: Sequence[int]):
    """Return (coefficients, local vectors as columns, remote vectors as columns)."""
    m, _, _ = _split(state, local)
    u, s, vh = np.linalg.svd(m)
    return s, u, vh.T


def _complete_columns(columns: np.ndarray, dim: int) -> np.ndarray:
    """Extend orthonormal columns to a full ``dim``-dimensional unitary."""
    k = columns.shape[1]
    if k == dim:
        return columns
    # orthogonal complement via SVD of the projector's complement
    proj = np.eye(dim, dtype=complex) - columns @ columns.conj().T
    u, s, _ = np.linalg.svd(proj)
    return np.hstack([columns, u[:, : dim - k]])


def steering_basis(global_state: StateVector, local: Sequence[int], target: Ensemble) -> SteeringBasis:
    """Local measurement basis that steers the remote factor into ``target``.

    Outcome j (for j < len(target)) occurs with probability p_j and leaves the
    remote qubits in target state j. Outcomes beyond the ensemble size span the
    complement of the local support and never occur.
    """
    s, u_local, w_remote = schmidt_decomposition(global_state, local)
    d_local, d_remote = u_local.shape[0], w_remote.shape[0]
    if target.dimension != d_remote:
        raise PartitionError(f"target dimension {target.dimension} != remote dimension {d_remote}")
    rho_remote = partial_trace(global_state, [q for q in range(global_state.num_qubits)
                                              if q not in set(local)])
    mismatch = np.abs(target.mixture().entries - rho_remote.entries).max()
    if mismatch > SYNTH_TOL:
        raise SteeringInfeasible(f"target mixture differs from the reduced state by {mismatch:.3e}")
    m = len(target)
    if m > d_local:
        raise SteeringInfeasible(f"{m} ensemble members exceed local dimension {d_local}")

    rank = int(np.sum(s**2 > ZERO_BRANCH))
    w = w_remote[:, :rank]
    targets = np.array([np.sqrt(p) * st.amplitudes for p, st in zip(target.probabilities, target.states)])
    iso = (targets @ w.conj()) / s[:rank]  # iso[j, k] = sqrt(p_j) <w_k|psi_j> / s_k
    if not np.allclose(iso.conj().T @ iso, np.eye(rank), atol=SYNTH_TOL):
        raise SteeringInfeasible("mixing coefficients do not form an isometry")

    mixing = _complete_columns(iso, m)
    if m < d_local:
        mixing = np.block([[mixing, np.zeros((m, d_local - m))],
                           [np.zeros((d_local - m, m)), np.eye(d_local - m)]])
    # local vectors beyond the Schmidt rank fill the completed columns
    g = u_local @ mixing.conj().T
    probs = np.zeros(d_local)
    probs[:m] = target.probabilities
    return SteeringBasis(vectors=g, mixing=mixing, probabilities=probs)
