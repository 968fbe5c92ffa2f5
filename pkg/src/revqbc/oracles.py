"""Exact probabilities by exhaustive enumeration.

Nothing here samples. Every quantity is a sum over Bob's strings, both
parties' basis strings and the outcomes of mismatched measurements, each
weighted by its Born probability. The party decision rules are restated
locally so these sums do not share code with the simulated rounds they check.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
from typing import Iterator, Optional

from .quantum import Basis, fidelity, prepare_bb84

ENUMERATION_MAX_N = 6
HALF = Fraction(1, 2)


class OracleSizeError(ValueError):
    pass


@lru_cache(maxsize=None)
def born(sent_bit: int, sent_basis: Basis, seen_bit: int, seen_basis: Basis) -> Fraction:
    """Born probability of ``seen_bit`` when measuring a BB84 photon, as an exact fraction."""
    p = fidelity(prepare_bb84(sent_bit, sent_basis), prepare_bb84(seen_bit, seen_basis))
    return Fraction(p).limit_denominator(64)


def _strings(n: int):
    return list(product((0, 1), repeat=n))


def _outcome_strings(R_B, eta, theta) -> Iterator[tuple[tuple[int, ...], Fraction]]:
    """Alice's possible outcome strings and their Born weights."""
    per_position = []
    for bit, sent, seen in zip(R_B, eta, theta):
        per_position.append([(o, born(bit, sent, o, seen)) for o in (0, 1)
                             if born(bit, sent, o, seen)])
    for combo in product(*per_position):
        weight = Fraction(1)
        for _, w in combo:
            weight *= w
        yield tuple(o for o, _ in combo), weight


def _parity(r, s) -> int:
    return sum(a * b for a, b in zip(r, s)) % 2


def _drop(s, x):
    return tuple(v for i, v in enumerate(s) if i != x)


def _exclusions(R_A, r, b) -> list[int]:
    n = len(R_A)
    options = [x for x in range(n) if _parity(_drop(r, x), _drop(R_A, x)) == b]
    if _parity(r, R_A) == b:
        return [x for x in options if R_A[x] == 0]
    return [x for x in options if R_A[x] == 1]


def weight_k_string(n: int, k: int) -> tuple[int, ...]:
    return tuple([1] * k + [0] * (n - k))


def _check_size(n: int, cap: int = ENUMERATION_MAX_N):
    if not 2 <= n <= cap:
        raise OracleSizeError(f"exhaustive enumeration supports 2 <= n <= {cap}, got {n}")


def _bases(n: int, all_eta: bool):
    etas = list(product(Basis, repeat=n)) if all_eta else [(Basis.RECTILINEAR,) * n]
    return etas, list(product(Basis, repeat=n))


@lru_cache(maxsize=None)
def concealment_accuracy(n: int, r, all_eta: bool = False) -> Fraction:
    """Best possible probability that Bob names b after seeing (R_B, eta, x).

    b is uniform; rounds where Alice cannot encode b are discarded. Bob's
    basis string does not change the joint law of the rest, so by default it
    is fixed to the rectilinear string; ``all_eta`` sums over all of them.
    """
    _check_size(n)
    r = tuple(r)
    etas, thetas = _bases(n, all_eta)
    joint: dict = {}
    completed = Fraction(0)
    scale = HALF * Fraction(1, 2**n) * Fraction(1, len(etas) * len(thetas))
    for R_B, eta, theta in product(_strings(n), etas, thetas):
        for R_A, w in _outcome_strings(R_B, eta, theta):
            for b in (0, 1):
                xs = _exclusions(R_A, r, b)
                if not xs:
                    continue
                completed += w * scale
                for x in xs:
                    cell = joint.setdefault((R_B, eta, x), [Fraction(0), Fraction(0)])
                    cell[b] += w * scale / len(xs)
    return sum(max(cell) for cell in joint.values()) / completed


@lru_cache(maxsize=None)
def parity_proxy_accuracy(n: int, r) -> Fraction:
    """Probability that parity of Bob's kept string equals b, over completed rounds."""
    _check_size(n)
    r = tuple(r)
    _, thetas = _bases(n, False)
    eta = (Basis.RECTILINEAR,) * n
    hit = completed = Fraction(0)
    for R_B, theta in product(_strings(n), thetas):
        for R_A, w in _outcome_strings(R_B, eta, theta):
            for b in (0, 1):
                xs = _exclusions(R_A, r, b)
                if not xs:
                    continue
                completed += w
                for x in xs:
                    if _parity(_drop(r, x), _drop(R_B, x)) == b:
                        hit += w / len(xs)
    return hit / completed


@lru_cache(maxsize=None)
def raw_parity_agreement(n: int, r) -> Fraction:
    """P(parity(r, R_B) == parity(r, R_A)) before any exclusion is announced."""
    _check_size(n, 10)
    r = tuple(r)
    eta = (Basis.RECTILINEAR,) * n
    agree = Fraction(0)
    scale = Fraction(1, 2**n) * Fraction(1, 2**n)
    for R_B, theta in product(_strings(n), product(Basis, repeat=n)):
        for R_A, w in _outcome_strings(R_B, eta, theta):
            if _parity(r, R_A) == _parity(r, R_B):
                agree += w * scale
    return agree


def _verdict(R_B, eta, theta, claimed, x, r, b) -> bool:
    consistent = all(claimed[i] == R_B[i] for i in range(len(R_B)) if i != x and eta[i] == theta[i])
    return consistent and _parity(_drop(r, x), _drop(claimed, x)) == b


@lru_cache(maxsize=None)
def _round_acceptance(n: int, r, cheat: bool) -> Fraction:
    _check_size(n)
    r = tuple(r)
    etas, thetas = _bases(n, True)
    accepted = completed = Fraction(0)
    for R_B, eta, theta in product(_strings(n), etas, thetas):
        for R_A, w in _outcome_strings(R_B, eta, theta):
            for b in (0, 1):
                xs = _exclusions(R_A, r, b)
                if not xs:
                    continue
                completed += w
                for x in xs:
                    wx = w / len(xs)
                    if not cheat:
                        accepted += wx * _verdict(R_B, eta, theta, R_A, x, r, b)
                        continue
                    ones = [i for i in range(n) if i != x and r[i] and R_A[i]]
                    flips = ones or [i for i in range(n) if i != x and r[i]]
                    for i in flips:
                        claimed = tuple(v ^ (j == i) for j, v in enumerate(R_A))
                        accepted += wx / len(flips) * _verdict(R_B, eta, theta, claimed, x, r, 1 - b)
    return accepted / completed


@lru_cache(maxsize=None)
def flip_detection_rate(n: int) -> Fraction:
    """Fraction of single flipped outcomes caught by the matched-basis check.

    Enumerates every (R_B, eta, theta, outcome) and every flipped position;
    independent of the parity rule.
    """
    _check_size(n)
    caught = total = Fraction(0)
    for R_B, eta, theta in product(_strings(n), *_bases(n, True)):
        for R_A, w in _outcome_strings(R_B, eta, theta):
            for i in range(n):
                claimed = tuple(v ^ (j == i) for j, v in enumerate(R_A))
                total += w
                caught += w * any(claimed[j] != R_B[j] for j in range(n) if eta[j] == theta[j])
    return caught / total


@lru_cache(maxsize=None)
def deferral_detection(n: int = 4) -> dict[int, Fraction]:
    """Worst-case catch probability for each number of altered outcomes.

    Alice holds Bob's separable photons, reveals some basis string and
    outcomes, and alters a set of claimed outcomes away from what the photons
    give in that basis. Bob's basis string is uniform and unknown to her, so
    for each (R_B, theta, outcomes, x, altered set) the catch probability is
    averaged over eta, and the minimum over everything else is reported.
    """
    _check_size(n)
    worst: dict[int, Fraction] = {}
    etas, thetas = _bases(n, True)
    for R_B, theta in product(_strings(n), thetas):
        branches = [(eta, R_A, w) for eta in etas for R_A, w in _outcome_strings(R_B, eta, theta)]
        for x in range(n):
            positions = [i for i in range(n) if i != x]
            for size in range(1, len(positions) + 1):
                for S in combinations(positions, size):
                    caught = Fraction(0)
                    for eta, R_A, w in branches:
                        if any(R_A[j] ^ (j in S) != R_B[j] for j in positions if eta[j] == theta[j]):
                            caught += w
                    caught /= len(etas)
                    worst[size] = min(worst.get(size, Fraction(1)), caught)
    return worst


def enumerate_oracle(experiment: str, n: int, k: Optional[int] = None, s: int = 1) -> float:
    """Exact value of an experiment's estimate at small n.

    ``conceal`` uses an r of weight ``k``; ``bind`` and ``honest`` use the
    all-ones r. Rounds of ``bind`` are independent, so s rounds multiply.
    """
    if experiment == "conceal":
        if k is None or not 0 <= k <= n:
            raise ValueError("conceal needs 0 <= k <= n")
        return float(concealment_accuracy(n, weight_k_string(n, k)))
    if experiment == "bind":
        return float(_round_acceptance(n, (1,) * n, cheat=True) ** s)
    if experiment == "bind_detection":
        return float(flip_detection_rate(n))
    if experiment == "honest":
        return float(_round_acceptance(n, (1,) * n, cheat=False))
    raise ValueError(f"no enumeration oracle for {experiment!r}")
