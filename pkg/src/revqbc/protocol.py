"""Commit/unveil state machine for bit commitment with a reverse quantum channel.

Bob prepares BB84 photons and sends them to Alice; Alice measures, fixes her
bit by publicly excluding one position, and later unveils her outcomes and
bases for Bob to check. All positions are 0-based.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Sequence

import numpy as np

from .quantum import (ZERO_BRANCH, Basis, QuantumFault, StateVector, format_bases, measure_qubit, parse_bases,
                      product_state)

_SQRT_HALF = np.sqrt(0.5)

Bits = tuple[int, ...]


class ProtocolAbort(Exception):
    """A party cannot continue the round.

    ``phase`` is ``"commit"`` for aborts before the evidence announcement and
    ``"unveil"`` for aborts after it.
    """

    def __init__(self, reason: str, phase: str = "commit"):
        super().__init__(reason)
        self.reason = reason
        self.phase = phase


class InvariantViolation(AssertionError):
    """A property that must hold in every simulated round was broken."""


def as_bits(s: "str | Sequence[int]") -> Bits:
    bits = tuple(int(c) for c in s)
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"not a bitstring: {s!r}")
    return bits


def bits_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def parity(r: Sequence[int], bits: Sequence[int]) -> int:
    """Scalar product modulo 2."""
    if len(r) != len(bits):
        raise ValueError(f"length mismatch: {len(r)} vs {len(bits)}")
    return sum(a & b for a, b in zip(r, bits)) & 1


def exclude(s, x: int):
    """Remove position ``x``, keeping order and the sequence type."""
    if not 0 <= x < len(s):
        raise IndexError(f"position {x} out of range for length {len(s)}")
    return s[:x] + s[x + 1:]


# -- codes -------------------------------------------------------------------

@dataclass(frozen=True)
class Code:
    """Membership test over bitstrings.

    The default accepts everything. ``parity_check`` holds the rows of a
    binary parity-check matrix; a string is a codeword when every row has
    even overlap with it.
    """

    name: str = "all"
    parity_check: tuple[Bits, ...] = ()

    def __contains__(self, bits: Sequence[int]) -> bool:
        for row in self.parity_check:
            if len(row) != len(bits):
                raise ValueError(f"code length {len(row)} does not match string length {len(bits)}")
            if parity(row, bits):
                return False
        return True

    def to_dict(self) -> dict:
        return {"name": self.name, "parity_check": [bits_str(r) for r in self.parity_check]}

    @classmethod
    def from_dict(cls, d: dict) -> "Code":
        return cls(d["name"], tuple(as_bits(r) for r in d.get("parity_check", ())))


ALL_STRINGS = Code()


def parity_check_code(rows: Sequence["str | Sequence[int]"], name: str = "parity-check") -> Code:
    return Code(name, tuple(as_bits(r) for r in rows))


# -- messages ----------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolParams:
    n: int
    r: Bits
    code: Code = ALL_STRINGS
    rounds: int = 1
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "r", as_bits(self.r))
        if self.n < 2:
            raise ValueError("need at least two photons")
        if len(self.r) != self.n:
            raise ValueError(f"r has length {len(self.r)}, expected {self.n}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    def to_dict(self) -> dict:
        return {"n": self.n, "r": bits_str(self.r), "code": self.code.to_dict(),
                "rounds": self.rounds, "master_seed": self.master_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolParams":
        return cls(d["n"], as_bits(d["r"]), Code.from_dict(d["code"]), d["rounds"], d["master_seed"])


@dataclass(frozen=True)
class BobSecret:
    R_B: Bits
    eta: tuple[Basis, ...]

    def __post_init__(self):
        object.__setattr__(self, "R_B", as_bits(self.R_B))
        object.__setattr__(self, "eta", parse_bases(self.eta))
        if len(self.R_B) != len(self.eta):
            raise ValueError("R_B and eta differ in length")

    def to_dict(self) -> dict:
        return {"R_B": bits_str(self.R_B), "eta": format_bases(self.eta)}

    @classmethod
    def from_dict(cls, d: dict) -> "BobSecret":
        return cls(d["R_B"], d["eta"])


@dataclass(frozen=True)
class AliceRecord:
    theta: tuple[Basis, ...]
    R_A: Bits
    b: Optional[int]
    x: int

    def __post_init__(self):
        if not 0 <= self.x < len(self.theta):
            raise ValueError(f"exclusion position {self.x} out of range")


@dataclass(frozen=True)
class EvidenceAnnouncement:
    x: int

    def to_dict(self) -> dict:
        return {"x": self.x}


@dataclass(frozen=True)
class UnveilAnnouncement:
    b: int
    claimed_outcomes: Bits
    theta: tuple[Basis, ...]

    def __post_init__(self):
        object.__setattr__(self, "claimed_outcomes", as_bits(self.claimed_outcomes))
        object.__setattr__(self, "theta", parse_bases(self.theta))
        if len(self.claimed_outcomes) != len(self.theta):
            raise ValueError("claimed outcomes and theta differ in length")

    def to_dict(self) -> dict:
        return {"b": self.b, "claimed_outcomes": bits_str(self.claimed_outcomes),
                "theta": format_bases(self.theta)}

    @classmethod
    def from_dict(cls, d: dict) -> "UnveilAnnouncement":
        return cls(d["b"], d["claimed_outcomes"], d["theta"])


class VerdictKind(str, enum.Enum):
    ACCEPT = "Accept"
    REJECT_PARITY = "RejectParity"
    REJECT_CONSISTENCY = "RejectConsistency"
    ABORT = "Abort"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    reason: Optional[str] = None
    phase: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.kind is VerdictKind.ACCEPT

    @property
    def aborted(self) -> bool:
        return self.kind is VerdictKind.ABORT

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "reason": self.reason, "phase": self.phase}

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(VerdictKind(d["kind"]), d.get("reason"), d.get("phase"))


ACCEPT = Verdict(VerdictKind.ACCEPT)


@dataclass(frozen=True, eq=False)
class QuantumMessage:
    """Joint state of everything on the quantum channel.

    ``alice_qubits[i]`` and ``bob_qubits[i]`` are the qubit indices of photon
    position i held by each party; ``bob_qubits`` is empty when Bob keeps
    nothing entangled with the photons.
    """

    state: StateVector
    alice_qubits: tuple[int, ...]
    bob_qubits: tuple[int, ...] = ()
    description: str = ""


@dataclass(frozen=True, eq=False)
class Transcript:
    params: ProtocolParams
    round_seed: int
    verdict: Verdict
    bob_secret: Optional[BobSecret] = None
    message: str = ""
    evidence: Optional[EvidenceAnnouncement] = None
    unveil: Optional[UnveilAnnouncement] = None
    strategies: tuple[str, str] = ("", "")
    alice_record: Optional[AliceRecord] = field(default=None, repr=False)
    bob_guess: Optional[int] = None

    def to_dict(self) -> dict:
        params = self.params.to_dict()
        params["strategies"] = {"alice": self.strategies[0], "bob": self.strategies[1]}
        return {
            "params": params,
            "bob_secret": self.bob_secret.to_dict() if self.bob_secret else None,
            "evidence": self.evidence.to_dict() if self.evidence else None,
            "unveil": self.unveil.to_dict() if self.unveil else None,
            "verdict": self.verdict.to_dict(),
            "round_seed": self.round_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        d = json.loads(text)
        strategies = d["params"].get("strategies", {})
        return cls(
            params=ProtocolParams.from_dict(d["params"]),
            round_seed=d["round_seed"],
            verdict=Verdict.from_dict(d["verdict"]),
            bob_secret=BobSecret.from_dict(d["bob_secret"]) if d["bob_secret"] else None,
            evidence=EvidenceAnnouncement(d["evidence"]["x"]) if d["evidence"] else None,
            unveil=UnveilAnnouncement.from_dict(d["unveil"]) if d["unveil"] else None,
            strategies=(strategies.get("alice", ""), strategies.get("bob", "")),
        )

    def same_record(self, other: "Transcript") -> bool:
        return self.to_dict() == other.to_dict()


# -- protocol steps ----------------------------------------------------------

def random_bits(rng: np.random.Generator, n: int) -> Bits:
    return tuple(int(b) for b in rng.integers(0, 2, size=n))


def random_bases(rng: np.random.Generator, n: int) -> tuple[Basis, ...]:
    return tuple(Basis.DIAGONAL if b else Basis.RECTILINEAR for b in rng.integers(0, 2, size=n))


def bob_prepare(params: ProtocolParams, rng: np.random.Generator) -> tuple[BobSecret, StateVector]:
    # Code membership is enforced on Alice's (n-1)-bit string, so R_B ranges over all strings.
    R_B = random_bits(rng, params.n)
    eta = random_bases(rng, params.n)
    return BobSecret(R_B, eta), product_state(R_B, eta)


def alice_measure(state: StateVector, theta: Sequence[Basis], rng: np.random.Generator,
                  qubits: Optional[Sequence[int]] = None) -> tuple[Bits, StateVector]:
    """Measure photon i (qubit ``qubits[i]``) in basis ``theta[i]``, in order."""
    qubits = range(len(theta)) if qubits is None else qubits
    if len(qubits) != len(theta):
        raise ValueError("one basis per measured qubit required")
    us = rng.random(len(theta))
    if list(qubits) == list(range(state.num_qubits)):
        return _measure_all(state, theta, us)
    outcomes = []
    for q, basis, u in zip(qubits, theta, us):
        bit, state = measure_qubit(state, q, basis, u)
        outcomes.append(bit)
    return tuple(outcomes), state


def _measure_all(state: StateVector, theta: Sequence[Basis], us) -> tuple[Bits, StateVector]:
    # Measuring every qubit in order: collapse the leading qubit and carry only
    # the conditional state of the rest, so each step halves the work.
    amps = state.amplitudes
    outcomes = []
    for basis, u in zip(theta, us):
        a0, a1 = amps.reshape(2, -1)
        if Basis.parse(basis) is Basis.DIAGONAL:
            a0, a1 = (a0 + a1) * _SQRT_HALF, (a0 - a1) * _SQRT_HALF
        p0 = np.vdot(a0, a0).real
        bit = 0 if u < p0 else 1
        prob = p0 if bit == 0 else 1.0 - p0
        if prob < ZERO_BRANCH:
            raise QuantumFault(f"selected measurement branch has probability {prob:.3e}")
        amps = (a1 if bit else a0) / np.sqrt(prob)
        outcomes.append(bit)
    outcomes = tuple(outcomes)
    return outcomes, product_state(outcomes, theta)


def exclusion_candidates(R_A: Sequence[int], r: Sequence[int], b: int) -> list[int]:
    """Positions whose removal leaves parity ``b`` on the remaining string."""
    if parity(r, R_A) == b:
        return [i for i, a in enumerate(R_A) if a == 0]
    # removing a 1 only flips the parity where r contributes
    return [i for i, (a, ri) in enumerate(zip(R_A, r)) if a == 1 and ri == 1]


def alice_choose_exclusion(R_A: Sequence[int], r: Sequence[int], b: int, code: Code,
                           rng: np.random.Generator) -> int:
    candidates = exclusion_candidates(R_A, r, b)
    if not candidates:
        raise ProtocolAbort("no valid exclusion")
    if code.parity_check:
        candidates = [x for x in candidates if exclude(tuple(R_A), x) in code]
        if not candidates:
            raise ProtocolAbort("code-infeasible")
    x = candidates[int(rng.integers(len(candidates)))]
    if parity(exclude(tuple(r), x), exclude(tuple(R_A), x)) != b:
        raise InvariantViolation(f"exclusion at {x} does not encode b={b}")
    return x


def bob_verify(secret: BobSecret, evidence: EvidenceAnnouncement, unveil: UnveilAnnouncement,
               r: Sequence[int], code: Code) -> Verdict:
    n = len(secret.R_B)
    x = evidence.x
    if len(unveil.claimed_outcomes) != n or len(unveil.theta) != n or not 0 <= x < n:
        return Verdict(VerdictKind.REJECT_CONSISTENCY, "malformed announcement")
    for i in range(n):
        if i != x and secret.eta[i] == unveil.theta[i] and unveil.claimed_outcomes[i] != secret.R_B[i]:
            return Verdict(VerdictKind.REJECT_CONSISTENCY, f"position {i}")
    kept = exclude(unveil.claimed_outcomes, x)
    if parity(exclude(tuple(r), x), kept) != unveil.b or kept not in code:
        return Verdict(VerdictKind.REJECT_PARITY)
    return ACCEPT


# -- round driver ------------------------------------------------------------

class Committer(Protocol):
    name: str

    def commit(self, message: QuantumMessage, params: ProtocolParams,
               rng: np.random.Generator) -> tuple[AliceRecord, QuantumMessage]: ...

    def unveil(self, record: AliceRecord, message: QuantumMessage, params: ProtocolParams,
               rng: np.random.Generator) -> tuple[UnveilAnnouncement, QuantumMessage]: ...


class Acceptor(Protocol):
    name: str

    def prepare(self, params: ProtocolParams,
                rng: np.random.Generator) -> tuple[Optional[BobSecret], QuantumMessage]: ...

    def observe(self, secret: Optional[BobSecret], evidence: EvidenceAnnouncement,
                params: ProtocolParams) -> Optional[int]: ...

    def verify(self, secret: Optional[BobSecret], message: QuantumMessage,
               evidence: EvidenceAnnouncement, unveil: UnveilAnnouncement,
               params: ProtocolParams, rng: np.random.Generator) -> tuple[BobSecret, Verdict]: ...


def run_round(alice: Committer, bob: Acceptor, params: ProtocolParams, round_seed: int) -> Transcript:
    """Commitment phase, an empty holding phase, then unveiling."""
    # one stream consumed in phase order keeps the round a pure function of the seed
    rng = np.random.default_rng(round_seed)
    names = (alice.name, bob.name)

    secret, message = bob.prepare(params, rng)
    try:
        record, message = alice.commit(message, params, rng)
    except ProtocolAbort as exc:
        return Transcript(params, round_seed, Verdict(VerdictKind.ABORT, exc.reason, "commit"),
                          bob_secret=secret, message=message.description, strategies=names)
    evidence = EvidenceAnnouncement(record.x)
    guess = bob.observe(secret, evidence, params)

    try:
        unveil, message = alice.unveil(record, message, params, rng)
    except ProtocolAbort as exc:
        return Transcript(params, round_seed, Verdict(VerdictKind.ABORT, exc.reason, "unveil"),
                          bob_secret=secret, message=message.description, evidence=evidence,
                          strategies=names, alice_record=record, bob_guess=guess)
    secret, verdict = bob.verify(secret, message, evidence, unveil, params, rng)
    return Transcript(params, round_seed, verdict, bob_secret=secret, message=message.description,
                      evidence=evidence, unveil=unveil, strategies=names, alice_record=record,
                      bob_guess=guess)
