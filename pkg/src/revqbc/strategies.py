"""Honest and adversarial party behaviors.

Strategy objects hold configuration only; everything a round needs flows
through the arguments of ``commit``/``unveil`` and ``prepare``/``verify``,
so a single instance can serve many rounds and many workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import quantum as q
from .protocol import (
    ALL_STRINGS,
    AliceRecord,
    BobSecret,
    Code,
    EvidenceAnnouncement,
    ProtocolAbort,
    ProtocolParams,
    QuantumMessage,
    UnveilAnnouncement,
    Verdict,
    alice_choose_exclusion,
    alice_measure,
    bob_prepare,
    bob_verify,
    exclude,
    exclusion_candidates,
    parity,
    random_bases,
)
from .quantum import Basis, Ensemble, StateVector

EXACT_POSTERIOR_MAX_N = 10
EPR_MAX_N = 7


# -- honest parties ----------------------------------------------------------

@dataclass(frozen=True)
class HonestAlice:
    bit: Optional[int] = None
    name: str = "honest_alice"
    role: str = "committer"

    def choose_bit(self, rng: np.random.Generator) -> int:
        return int(rng.integers(2)) if self.bit is None else self.bit

    def commit(self, message: QuantumMessage, params: ProtocolParams, rng: np.random.Generator):
        b = self.choose_bit(rng)
        theta = random_bases(rng, params.n)
        R_A, state = alice_measure(message.state, theta, rng, message.alice_qubits)
        x = alice_choose_exclusion(R_A, params.r, b, params.code, rng)
        measured = QuantumMessage(state, message.alice_qubits, message.bob_qubits, message.description)
        return AliceRecord(theta, R_A, b, x), measured

    def unveil(self, record: AliceRecord, message: QuantumMessage, params: ProtocolParams,
               rng: np.random.Generator):
        return UnveilAnnouncement(record.b, record.R_A, record.theta), message


@dataclass(frozen=True)
class HonestBob:
    name: str = "honest_bob"
    role: str = "acceptor"

    def prepare(self, params: ProtocolParams, rng: np.random.Generator):
        secret, state = bob_prepare(params, rng)
        return secret, QuantumMessage(state, tuple(range(params.n)), (), "separable BB84 product")

    def observe(self, secret, evidence, params) -> Optional[int]:
        return None

    def verify(self, secret: BobSecret, message, evidence, unveil, params, rng):
        return secret, bob_verify(secret, evidence, unveil, params.r, params.code)


# -- binding: flip-cheating Alice --------------------------------------------

def flip_cheat_unveil(record: AliceRecord, target_b: int, r: Sequence[int],
                      rng: np.random.Generator) -> UnveilAnnouncement:
    """Announce ``target_b`` by altering one outcome that contributes to the parity.

    Prefers flipping a 1 to 0; when no such position exists, a 0 at a position
    with r(i) = 1 is flipped to 1 instead. Either change flips the parity of the
    kept string.
    """
    if target_b == record.b:
        raise ValueError("target bit equals the committed bit; nothing to cheat")
    kept = [i for i in range(len(record.R_A)) if i != record.x and r[i] == 1]
    flippable = [i for i in kept if record.R_A[i] == 1] or kept
    if not flippable:
        raise ProtocolAbort("no flippable position", "unveil")
    i = flippable[int(rng.integers(len(flippable)))]
    claimed = list(record.R_A)
    claimed[i] ^= 1
    return UnveilAnnouncement(target_b, tuple(claimed), record.theta)


@dataclass(frozen=True)
class FlipAlice(HonestAlice):
    name: str = "flip_alice"

    def unveil(self, record, message, params, rng):
        return flip_cheat_unveil(record, 1 - record.b, params.r, rng), message


# -- concealment: guessing Bob -----------------------------------------------

@lru_cache(maxsize=None)
def _outcome_kernel(bob_basis: Basis) -> np.ndarray:
    """P(Alice's outcome | Bob's bit) for one photon, averaged over her basis."""
    kernel = np.zeros((2, 2))
    for bob_bit, basis, alice_bit in product((0, 1), Basis, (0, 1)):
        sent = q.prepare_bb84(bob_bit, bob_basis)
        seen = q.prepare_bb84(alice_bit, basis)
        kernel[bob_bit, alice_bit] += 0.5 * q.fidelity(sent, seen)
    return kernel


@lru_cache(maxsize=64)
def _exclusion_table(r: tuple[int, ...], code: Code) -> np.ndarray:
    """table[b, R_A, x] = P(b) * P(Alice announces x | R_A, b); aborts carry no weight."""
    n = len(r)
    table = np.zeros((2, 2**n, n))
    for idx, R_A in enumerate(product((0, 1), repeat=n)):
        for b in (0, 1):
            cands = exclusion_candidates(R_A, r, b)
            if code.parity_check:
                cands = [x for x in cands if exclude(R_A, x) in code]
            for x in cands:
                table[b, idx, x] = 0.5 / len(cands)
    return table


def commitment_posterior(secret: BobSecret, r: Sequence[int], x: int,
                         code: Code = ALL_STRINGS) -> np.ndarray:
    """Bob's posterior over b given R_B, eta, r and the announced exclusion x.

    Alice's bases and the outcomes at mismatched positions are summed out
    exactly; rounds that would have aborted are excluded.
    """
    n = len(secret.R_B)
    if n > EXACT_POSTERIOR_MAX_N:
        raise ValueError(f"exact posterior limited to n <= {EXACT_POSTERIOR_MAX_N}, got {n}")
    likelihood = np.ones(1)
    for bit, basis in zip(secret.R_B, secret.eta):
        likelihood = np.kron(likelihood, _outcome_kernel(basis)[bit])
    joint = likelihood @ _exclusion_table(tuple(r), code)[:, :, x].T
    total = joint.sum()
    if total <= 0:
        raise ValueError("announced exclusion is impossible for this view")
    return joint / total


def guess_commitment(secret: BobSecret, r: Sequence[int], x: int, mode: str = "exact_posterior",
                     code: Code = ALL_STRINGS) -> int:
    if mode == "parity_proxy":
        return parity(exclude(tuple(r), x), exclude(secret.R_B, x))
    if mode == "exact_posterior":
        post = commitment_posterior(secret, r, x, code)
        return int(post[1] > post[0])
    raise ValueError(f"unknown guess mode {mode!r}")


@dataclass(frozen=True)
class GuessBob(HonestBob):
    mode: Optional[str] = None
    name: str = "guess_bob"

    def observe(self, secret, evidence: EvidenceAnnouncement, params: ProtocolParams) -> int:
        mode = self.mode or ("exact_posterior" if params.n <= EXACT_POSTERIOR_MAX_N else "parity_proxy")
        return guess_commitment(secret, params.r, evidence.x, mode, params.code)


# -- entangled Bob -----------------------------------------------------------

def epr_pair() -> StateVector:
    return StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2))


def epr_register(pairs: int) -> StateVector:
    """Bob's twins (qubits 0..pairs-1) maximally entangled with Alice's halves."""
    dim = 2**pairs
    amps = np.zeros(dim * dim, dtype=complex)
    amps[np.arange(dim) * dim + np.arange(dim)] = dim**-0.5
    return StateVector(amps)


@dataclass(frozen=True)
class EPRPreparation:
    n: int
    excluded: int
    layout: str = "B_hidden(n-1) then A(n-1)"


def epr_bob_prepare(n: int, rng: np.random.Generator) -> tuple[StateVector, EPRPreparation]:
    """Pairs left after Alice drops one at random, Bob's twins first.

    Pairs are mutually unentangled, so dropping one leaves exactly the
    maximally entangled register over the remaining n-1 pairs.
    """
    if not 2 <= n <= EPR_MAX_N:
        raise ValueError(f"EPR preparation supports 2 <= n <= {EPR_MAX_N}, got {n}")
    x = int(rng.integers(n))
    return epr_register(n - 1), EPRPreparation(n, x)


@dataclass(frozen=True)
class EPRBob(HonestBob):
    name: str = "epr_bob"
    max_n: int = 6

    def prepare(self, params, rng):
        if params.n > self.max_n:
            raise ValueError(f"epr_bob round simulation supports n <= {self.max_n}")
        n = params.n
        message = QuantumMessage(epr_register(n), tuple(range(n, 2 * n)), tuple(range(n)),
                                 f"{n} EPR pairs, twins retained")
        return None, message

    def verify(self, secret, message, evidence, unveil, params, rng):
        eta = random_bases(rng, params.n)
        R_B, _ = alice_measure(message.state, eta, rng, message.bob_qubits)
        secret = BobSecret(R_B, eta)
        return secret, bob_verify(secret, evidence, unveil, params.r, params.code)


# -- the steering attack -----------------------------------------------------

def string_ensemble(num_qubits: int, basis: Basis) -> tuple[Ensemble, tuple[tuple[int, ...], ...]]:
    """Uniform ensemble of every product string in one basis, plus the strings."""
    strings = tuple(product((0, 1), repeat=num_qubits))
    states = [q.product_state(s, [basis] * num_qubits) for s in strings]
    return Ensemble(np.full(len(strings), 1 / len(strings)), states), strings


@dataclass(frozen=True, eq=False)
class MLCPlan:
    """Everything Alice needs to open either bit from one held register.

    The held register is ancilla C (``ancilla_qubits``), then her halves A,
    then Bob's twins B, each of A and B holding n-1 qubits.
    """

    n: int
    pair_state: StateVector
    ancilla_qubits: int
    ensembles: dict
    labels: dict = field(default_factory=dict)
    _bases: dict = field(default_factory=dict, repr=False)

    @property
    def local_dimension(self) -> int:
        return 2 ** (self.ancilla_qubits + self.n - 1)

    @property
    def local_qubits(self) -> list[int]:
        return list(range(self.ancilla_qubits + self.n - 1))

    @property
    def bob_qubits(self) -> list[int]:
        start = self.ancilla_qubits + self.n - 1
        return list(range(start, start + self.n - 1))


MLC_MAX_N = 5


def mlc_augment(register: StateVector, n: int) -> StateVector:
    """Reorder an EPR register (twins first) to A then B and prepend ancilla C in |0..0>."""
    pairs = n - 1
    order = list(range(pairs, 2 * pairs)) + list(range(pairs))
    ab = q.permute_qubits(register, order)
    ancilla = n - 2
    if ancilla == 0:
        return ab
    return q.tensor(StateVector.basis_state([0] * ancilla), ab)


def mlc_build_plan(n: int, ensembles: Optional[dict] = None) -> MLCPlan:
    """Check both target ensembles against Bob's reduced state and size the ancilla.

    The combined CA register has dimension 2^(n-1) * 2^(n-2).
    """
    if not 2 <= n <= MLC_MAX_N:
        raise ValueError(f"steering attack supports 2 <= n <= {MLC_MAX_N}, got {n}")
    labels = {}
    if ensembles is None:
        ensembles = {}
        for b, basis in ((0, Basis.RECTILINEAR), (1, Basis.DIAGONAL)):
            ensembles[b], strings = string_ensemble(n - 1, basis)
            labels[b] = (basis, strings)
    bob_state = np.eye(2 ** (n - 1)) / 2 ** (n - 1)
    for b in (0, 1):
        mismatch = np.abs(ensembles[b].mixture().entries - bob_state).max()
        if mismatch > q.SYNTH_TOL:
            raise q.SteeringInfeasible(f"ensemble for b={b} misses Bob's reduced state by {mismatch:.3e}")
        if len(ensembles[b]) > 2 ** (2 * n - 3):
            raise q.SteeringInfeasible(f"ensemble for b={b} has more members than the CA dimension")
    return MLCPlan(n, epr_pair(), n - 2, dict(ensembles), labels)


def mlc_held_state(plan: MLCPlan) -> StateVector:
    return mlc_augment(epr_register(plan.n - 1), plan.n)


def mlc_steering_basis(plan: MLCPlan, held: StateVector, chosen_b: int) -> q.SteeringBasis:
    """Steering basis for ``chosen_b``, memoized per held state on the plan."""
    key = (chosen_b, held.amplitudes.tobytes())
    if key not in plan._bases:
        plan._bases[key] = q.steering_basis(held, plan.local_qubits, plan.ensembles[chosen_b])
    return plan._bases[key]


def mlc_open(plan: MLCPlan, held: StateVector, chosen_b: int,
             rng: np.random.Generator) -> tuple[int, StateVector]:
    """Measure CA in the steering basis for ``chosen_b``; return outcome and Bob's state."""
    basis = mlc_steering_basis(plan, held, chosen_b)
    j, post = q.measure_in_basis(held, plan.local_qubits, basis, rng.random())
    bob = q.contract_out(post, plan.local_qubits, StateVector(basis.vectors[:, j]))
    return j, bob


@dataclass(frozen=True)
class MLCAlice:
    """Skips her measurement, then steers Bob's twins at unveil time.

    Works against ``EPRBob``; the opened bit is ``open_bit`` or random.
    """

    open_bit: Optional[int] = None
    name: str = "mlc_alice"
    role: str = "committer"
    max_n: int = 4

    def commit(self, message, params, rng):
        if not message.bob_qubits:
            raise ProtocolAbort("steering needs an entangled preparation")
        if params.n > self.max_n:
            raise ValueError(f"mlc_alice round simulation supports n <= {self.max_n}")
        x = int(rng.integers(params.n))
        placeholder = (Basis.RECTILINEAR,) * params.n
        return AliceRecord(placeholder, (0,) * params.n, None, x), message

    def unveil(self, record, message, params, rng):
        n, x = params.n, record.x
        b = int(rng.integers(2)) if self.open_bit is None else self.open_bit
        pair_qubits = [message.bob_qubits[x], message.alice_qubits[x]]
        rest = q.contract_out(message.state, pair_qubits, epr_pair())
        # remaining qubits keep their relative order: twins then halves
        plan = mlc_build_plan(n)
        held = mlc_augment(rest, n)
        j, bob_state = mlc_open(plan, held, b, rng)
        basis, strings = plan.labels[b]
        claimed = list(strings[j])
        claimed.insert(x, 0)
        # Bob's view afterwards: pair x untouched, his other twins steered
        joint = q.tensor(epr_pair(), bob_state)
        others = [i for i in range(n) if i != x]
        bob_qubits = [0] * n
        bob_qubits[x] = 0
        for k, i in enumerate(others):
            bob_qubits[i] = 2 + k
        alice_qubits = [1] * n
        after = QuantumMessage(joint, tuple(alice_qubits), tuple(bob_qubits), message.description)
        return UnveilAnnouncement(b, tuple(claimed), (basis,) * n), after


STRATEGIES = {
    "honest_alice": HonestAlice,
    "flip_alice": FlipAlice,
    "mlc_alice": MLCAlice,
    "honest_bob": HonestBob,
    "epr_bob": EPRBob,
    "guess_bob": GuessBob,
}


def make_strategy(identifier: str, **kwargs):
    try:
        return STRATEGIES[identifier](**kwargs)
    except KeyError:
        raise ValueError(f"unknown strategy {identifier!r}; choose from {sorted(STRATEGIES)}") from None
