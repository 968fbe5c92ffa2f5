from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from revqbc import oracles
from revqbc import quantum as q
from revqbc.protocol import (
    ALL_STRINGS, AliceRecord, BobSecret, EvidenceAnnouncement, ProtocolAbort, ProtocolParams, VerdictKind,
    as_bits, bob_verify, exclude, parity, run_round,
)
from revqbc.quantum import Basis
from revqbc.strategies import (
    EPRBob, FlipAlice, GuessBob, HonestAlice, HonestBob, MLCAlice, commitment_posterior, epr_bob_prepare,
    epr_register, flip_cheat_unveil, guess_commitment, make_strategy, mlc_augment, mlc_build_plan,
    mlc_held_state, mlc_open, string_ensemble,
)

PLUS, CROSS = Basis.RECTILINEAR, Basis.DIAGONAL


# -- flip cheating -----------------------------------------------------------

def test_flip_cheat_flips_a_contributing_one():
    rec = AliceRecord((PLUS,) * 4, as_bits("0111"), 0, 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = flip_cheat_unveil(rec, 1, as_bits("1111"), rng)
        diff = [i for i in range(4) if u.claimed_outcomes[i] != rec.R_A[i]]
        assert len(diff) == 1 and diff[0] in (1, 2)
        assert u.b == 1 and u.theta == rec.theta
        assert parity(exclude(as_bits("1111"), 3), exclude(u.claimed_outcomes, 3)) == 1


def test_flip_cheat_falls_back_to_zero():
    rec = AliceRecord((PLUS,) * 3, as_bits("100"), 1, 0)
    u = flip_cheat_unveil(rec, 0, as_bits("111"), np.random.default_rng(0))
    assert sum(u.claimed_outcomes) == 2


def test_flip_cheat_without_position_aborts():
    rec = AliceRecord((PLUS,) * 3, as_bits("011"), 0, 0)
    with pytest.raises(ProtocolAbort) as exc:
        flip_cheat_unveil(rec, 1, as_bits("100"), np.random.default_rng(0))
    assert exc.value.phase == "unveil"


def test_flip_cheat_requires_a_different_bit():
    rec = AliceRecord((PLUS,) * 3, as_bits("011"), 0, 0)
    with pytest.raises(ValueError):
        flip_cheat_unveil(rec, 0, as_bits("111"), np.random.default_rng(0))


def test_flip_detected_iff_matched_basis_exhaustive():
    # n = 4: every Bob string, both basis strings, every flippable position
    n, r = 4, (1,) * 4
    for R_B, eta, theta in product(product((0, 1), repeat=n), product(Basis, repeat=n),
                                   product(Basis, repeat=n)):
        secret = BobSecret(R_B, eta)
        for x in range(n):
            for i in (i for i in range(n) if i != x):
                # Alice's honest outcomes where bases match, Bob's bits elsewhere
                claimed = list(R_B)
                claimed[i] ^= 1
                b = parity(exclude(r, x), exclude(tuple(claimed), x))
                verdict = bob_verify(secret, EvidenceAnnouncement(x),
                                     _unveil(b, claimed, theta), r, ALL_STRINGS)
                assert verdict.accepted == (eta[i] != theta[i])


def _unveil(b, claimed, theta):
    from revqbc.protocol import UnveilAnnouncement
    return UnveilAnnouncement(b, tuple(claimed), tuple(theta))


def test_flip_detection_oracle_is_one_half():
    assert oracles.flip_detection_rate(4) == Fraction(1, 2)
    assert oracles.enumerate_oracle("bind", 4) == 0.5


def test_flip_cheat_rounds_accept_half():
    params = ProtocolParams(8, (1,) * 8)
    accepted = completed = 0
    seed = 0
    while completed < 4000:
        t = run_round(FlipAlice(), HonestBob(), params, seed)
        seed += 1
        if t.verdict.aborted and t.verdict.phase == "commit":
            continue
        completed += 1
        accepted += t.verdict.accepted
    assert abs(accepted / completed - 0.5) <= 0.03


# -- guessing ----------------------------------------------------------------

@pytest.mark.parametrize("k, exact", [
    (1, Fraction(131, 152)), (2, Fraction(26, 37)), (3, Fraction(331, 544)), (4, Fraction(731, 1312)),
])
def test_concealment_oracle_values(k, exact):
    assert oracles.concealment_accuracy(6, oracles.weight_k_string(6, k)) == exact


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_parity_agreement_before_exclusion(k):
    r = oracles.weight_k_string(6, k)
    assert oracles.raw_parity_agreement(6, r) == (1 + Fraction(1, 2**k)) / 2


def test_concealment_decreases_with_weight():
    acc = [oracles.concealment_accuracy(6, oracles.weight_k_string(6, k)) for k in range(1, 5)]
    assert all(a > b for a, b in zip(acc, acc[1:]))


def test_bob_basis_does_not_matter():
    r = oracles.weight_k_string(4, 1)
    assert oracles.concealment_accuracy(4, r) == oracles.concealment_accuracy(4, r, all_eta=True)


def test_all_zero_r_forces_b():
    r = (0,) * 5
    assert oracles.concealment_accuracy(5, r) == 1
    rng = np.random.default_rng(0)
    for seed in range(50):
        t = run_round(HonestAlice(), GuessBob(), ProtocolParams(5, r), seed)
        if not t.verdict.aborted:
            assert t.alice_record.b == 0 and t.bob_guess == 0


def test_posterior_matches_enumeration():
    """Average MAP accuracy from the posterior equals the oracle at n = 4."""
    n, r = 4, oracles.weight_k_string(4, 2)
    eta = (PLUS,) * n
    # joint weight of (R_B, x, b) recomputed from the posterior times P(R_B, x)
    total = hits = 0.0
    for R_B in product((0, 1), repeat=n):
        secret = BobSecret(R_B, eta)
        for x in range(n):
            try:
                post = commitment_posterior(secret, r, x)
            except ValueError:
                continue
            mass = _view_mass(R_B, x, r)
            total += mass
            hits += mass * post.max()
    assert hits / total == pytest.approx(float(oracles.concealment_accuracy(n, r)), abs=1e-12)


def _view_mass(R_B, x, r):
    mass = 0.0
    for theta in product(Basis, repeat=len(R_B)):
        for R_A, w in oracles._outcome_strings(R_B, (PLUS,) * len(R_B), theta):
            for b in (0, 1):
                xs = oracles._exclusions(R_A, r, b)
                if x in xs:
                    mass += float(w) / len(xs)
    return mass


def test_guess_modes():
    secret = BobSecret(as_bits("0110"), (PLUS,) * 4)
    r = as_bits("1000")
    assert guess_commitment(secret, r, 2, "parity_proxy") == 0
    assert guess_commitment(secret, r, 2, "exact_posterior") in (0, 1)
    with pytest.raises(ValueError):
        guess_commitment(secret, r, 2, "coin")


def test_exact_posterior_size_limit():
    secret = BobSecret((0,) * 11, (PLUS,) * 11)
    with pytest.raises(ValueError):
        commitment_posterior(secret, (1,) * 11, 0)


def test_guess_bob_falls_back_to_proxy_for_large_n():
    params = ProtocolParams(12, (1,) + (0,) * 11)
    t = run_round(HonestAlice(), GuessBob(), params, 3)
    assert t.bob_guess in (0, 1)


# -- entangled Bob -----------------------------------------------------------

def test_epr_halves_are_maximally_mixed():
    reg = epr_register(3)
    for i in range(3, 6):
        np.testing.assert_allclose(q.partial_trace(reg, [i]).entries, np.eye(2) / 2, atol=1e-12)


def test_epr_prepare_matches_pair_register():
    reg, prep = epr_bob_prepare(4, np.random.default_rng(1))
    assert reg.num_qubits == 6 and 0 <= prep.excluded < 4
    # Bob's twin i and Alice's half i form a Bell pair
    pair = q.partial_trace(reg, [0, 3])
    bell = q.StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2)).density()
    assert q.trace_distance(pair, bell) < 1e-12
    with pytest.raises(ValueError):
        epr_bob_prepare(8, np.random.default_rng(0))


def test_epr_outcomes_are_not_predetermined():
    params = ProtocolParams(4, (1,) * 4)
    seen = set()
    for seed in range(40):
        t = run_round(HonestAlice(), EPRBob(), params, seed)
        if not t.verdict.aborted:
            assert t.verdict.accepted
            seen.add(t.bob_secret.R_B)
    assert len(seen) > 4


# -- steering attack ---------------------------------------------------------

@pytest.mark.parametrize("n, dim, ancilla", [(3, 8, 1), (4, 32, 2)])
def test_plan_sizes(n, dim, ancilla):
    plan = mlc_build_plan(n)
    assert plan.local_dimension == dim == 2 ** (2 * n - 3)
    assert 2**plan.ancilla_qubits == 2 ** (n - 2)
    assert plan.ancilla_qubits == ancilla


def test_plan_rejects_wrong_ensemble():
    wrong, _ = string_ensemble(2, PLUS)
    lopsided = q.Ensemble([0.7, 0.1, 0.1, 0.1], wrong.states)
    with pytest.raises(q.SteeringInfeasible):
        mlc_build_plan(3, {0: lopsided, 1: wrong})


def test_both_openings_from_one_held_state():
    plan = mlc_build_plan(3)
    held = mlc_held_state(plan)
    for b in (0, 1):
        basis = q.steering_basis(held, plan.local_qubits, plan.ensembles[b])
        probs, branches = q.outcome_branches(held, plan.local_qubits, basis.vectors)
        np.testing.assert_allclose(probs[:4], plan.ensembles[b].probabilities, atol=1e-12)
        for j, target in enumerate(plan.ensembles[b].states):
            got = q.StateVector.from_unnormalized(branches[j])
            assert q.fidelity(got, target) >= 1 - 1e-9


def test_mlc_open_statistics():
    plan = mlc_build_plan(3)
    held = mlc_held_state(plan)
    rng = np.random.default_rng(0)
    trials = 4000
    for b in (0, 1):
        counts = np.zeros(4)
        for _ in range(trials):
            j, bob = mlc_open(plan, held, b, rng)
            counts[j] += 1
            assert q.fidelity(bob, plan.ensembles[b].states[j]) >= 1 - 1e-9
        p = plan.ensembles[b].probabilities
        z = (counts / trials - p) / np.sqrt(p * (1 - p) / trials)
        assert np.abs(z).max() < 3.5


def test_bob_view_is_the_same_for_both_choices():
    plan = mlc_build_plan(3)
    held = mlc_held_state(plan)
    bob = q.partial_trace(held, plan.bob_qubits)
    for b in (0, 1):
        np.testing.assert_allclose(plan.ensembles[b].mixture().entries, bob.entries, atol=1e-10)
    assert q.trace_distance(plan.ensembles[0].mixture(), plan.ensembles[1].mixture()) < 1e-10


def test_augment_from_epr_prepare():
    reg, _ = epr_bob_prepare(3, np.random.default_rng(2))
    plan = mlc_build_plan(3)
    assert mlc_augment(reg, 3).allclose(mlc_held_state(plan))


@pytest.mark.parametrize("open_bit", [0, 1])
def test_mlc_alice_beats_entangled_bob(open_bit):
    params = ProtocolParams(3, (1, 1, 1))
    outcomes = [run_round(MLCAlice(open_bit), EPRBob(), params, seed) for seed in range(60)]
    for t in outcomes:
        assert t.unveil.b == open_bit
        assert t.verdict.kind is not VerdictKind.REJECT_CONSISTENCY
    # parity passes only when the steered string has the right parity
    assert any(t.verdict.accepted for t in outcomes)


def test_deferral_against_separable_bob_is_caught():
    worst = oracles.deferral_detection(4)
    assert all(worst[size] >= Fraction(1, 2) for size in worst)
    assert worst[1] == Fraction(1, 2)


def test_make_strategy():
    assert isinstance(make_strategy("flip_alice"), FlipAlice)
    assert make_strategy("guess_bob", mode="parity_proxy").mode == "parity_proxy"
    with pytest.raises(ValueError):
        make_strategy("eve")
