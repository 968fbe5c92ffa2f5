"""Seeded Monte Carlo experiments over protocol rounds.

Every trial draws all of its randomness from a seed derived from
``(master_seed, trial_index)``, so results do not depend on how trials are
spread across worker processes.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import oracles
from . import quantum as q
from .protocol import InvariantViolation, ProtocolParams, Transcript, random_bits, run_round
from .report import ExperimentReport
from .strategies import (
    EXACT_POSTERIOR_MAX_N,
    FlipAlice,
    GuessBob,
    HonestAlice,
    HonestBob,
    MLC_MAX_N,
    epr_bob_prepare,
    mlc_augment,
    mlc_build_plan,
    mlc_open,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = ("honest", "bind", "conceal", "mlc", "nosig")
MAX_ATTEMPTS = 10_000
NOSIG_THRESHOLD = 1e-9
FIDELITY_FLOOR = 1 - 1e-9
# the bind sum runs over both parties' basis strings; n = 5 already takes a minute
BIND_ORACLE_MAX_N = 4

_N_LIMITS = {"honest": (2, 12), "bind": (2, 12), "conceal": (2, 12), "mlc": (2, MLC_MAX_N), "nosig": (1, 6)}


class ConfigError(ValueError):
    pass


class ExperimentFailure(RuntimeError):
    """An invariant broke inside a trial; carries what is needed to replay it."""

    def __init__(self, experiment: str, index: int, seed: int, cause: Exception):
        super().__init__(f"{experiment} trial {index} (seed {seed}) violated an invariant: {cause}")
        self.index = index
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int = 8
    trials: int = 10_000
    rounds: int = 1
    r_weight: int = 1
    master_seed: int = 0
    output: Optional[str] = None
    fmt: str = "json"
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        lo, hi = _N_LIMITS[self.experiment]
        if not lo <= self.n <= hi:
            raise ConfigError(f"{self.experiment} supports {lo} <= n <= {hi}, got {self.n}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.experiment == "conceal" and not 0 <= self.r_weight <= self.n:
            raise ConfigError(f"r weight must lie in [0, {self.n}]")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.fmt!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class TrialResult:
    index: int
    success: bool
    aborts: int = 0
    value: float = 0.0
    extra: tuple = field(default=())


def derive_seed(*parts: int) -> int:
    """64-bit seed mixed from a tuple of non-negative integers."""
    packed = b"".join(int(p).to_bytes(16, "little") for p in parts)
    return int.from_bytes(hashlib.blake2b(packed, digest_size=8, person=b"revqbc-seed").digest(), "little")


def trial_seed(master_seed: int, index: int) -> int:
    return derive_seed(master_seed, index)


# -- per-experiment trials ---------------------------------------------------

def check_matched_agreement(t: Transcript) -> None:
    rec, sec = t.alice_record, t.bob_secret
    if rec is None or sec is None or rec.b is None:
        return
    for i, (e, th) in enumerate(zip(sec.eta, rec.theta)):
        if e == th and rec.R_A[i] != sec.R_B[i]:
            raise InvariantViolation(f"matched basis at position {i} gave differing outcomes")


def _completed_round(alice, bob, make_params, seed: int, round_index: int) -> tuple[Transcript, int]:
    """Run one round, re-running with fresh randomness after commit-phase aborts."""
    for attempt in range(MAX_ATTEMPTS):
        round_seed = derive_seed(seed, round_index, attempt)
        params = make_params(round_seed)
        t = run_round(alice, bob, params, round_seed)
        check_matched_agreement(t)
        if not (t.verdict.aborted and t.verdict.phase == "commit"):
            return t, attempt
    raise InvariantViolation(f"no completed round after {MAX_ATTEMPTS} attempts")


def _honest_trial(config, seed):
    t, aborts = _completed_round(HonestAlice(), HonestBob(),
                                 lambda s: ProtocolParams(config.n, random_bits(np.random.default_rng(s), config.n)),
                                 seed, 0)
    return t.verdict.accepted, aborts, 0.0, ()


def _bind_trial(config, seed):
    params = ProtocolParams(config.n, (1,) * config.n, rounds=config.rounds)
    aborts = accepted_rounds = 0
    for k in range(config.rounds):
        t, a = _completed_round(FlipAlice(), HonestBob(), lambda _: params, seed, k)
        aborts += a
        accepted_rounds += t.verdict.accepted
    return accepted_rounds == config.rounds, aborts, float(accepted_rounds), ()


def _conceal_trial(config, seed):
    params = ProtocolParams(config.n, oracles.weight_k_string(config.n, config.r_weight))
    t, aborts = _completed_round(HonestAlice(), GuessBob(), lambda _: params, seed, 0)
    return t.bob_guess == t.alice_record.b, aborts, 0.0, ()


@lru_cache(maxsize=8)
def _mlc_setup(n: int, master_seed: int):
    plan = mlc_build_plan(n)
    register, prep = epr_bob_prepare(n, np.random.default_rng(derive_seed(master_seed, 2**32)))
    return plan, mlc_augment(register, n), prep


def _mlc_trial(config, seed):
    plan, held, _ = _mlc_setup(config.n, config.master_seed)
    rng = np.random.default_rng(seed)
    outcomes, fids = [], []
    for b in (0, 1):
        j, bob = mlc_open(plan, held, b, rng)
        outcomes.append(j)
        fids.append(q.fidelity(bob, plan.ensembles[b].states[j]))
    worst = min(fids)
    return worst >= FIDELITY_FLOOR, 0, worst, tuple(outcomes)


def nosig_distance(rng: np.random.Generator, max_qubits: int) -> tuple[float, int, int]:
    """Largest change in Bob's reduced state caused by Alice measuring her side."""
    n_a, n_b = (int(v) for v in rng.integers(1, max_qubits + 1, size=2))
    psi = q.random_state(rng, n_a + n_b)
    alice, bob = list(range(n_a)), list(range(n_a, n_a + n_b))
    before = q.partial_trace(psi, bob)
    afters = []
    for basis in (np.eye(2**n_a), q.random_unitary(rng, 2**n_a)):
        _, remote = q.outcome_branches(psi, alice, basis)
        afters.append(q.DensityMatrix(remote.T @ remote.conj()))
    worst = max(q.trace_distance(before, afters[0]), q.trace_distance(before, afters[1]),
                q.trace_distance(afters[0], afters[1]))
    return worst, n_a, n_b


def _nosig_trial(config, seed):
    worst, n_a, n_b = nosig_distance(np.random.default_rng(seed), config.n)
    return worst < NOSIG_THRESHOLD, 0, worst, (n_a, n_b)


_TRIALS = {"honest": _honest_trial, "bind": _bind_trial, "conceal": _conceal_trial,
           "mlc": _mlc_trial, "nosig": _nosig_trial}


def run_trial(config: ExperimentConfig, index: int, seed: Optional[int] = None) -> TrialResult:
    seed = trial_seed(config.master_seed, index) if seed is None else seed
    try:
        success, aborts, value, extra = _TRIALS[config.experiment](config, seed)
    except (InvariantViolation, q.QuantumFault) as exc:
        raise ExperimentFailure(config.experiment, index, seed, exc) from exc
    return TrialResult(index, bool(success), aborts, float(value), extra)


def _run_chunk(args) -> list[TrialResult]:
    config, lo, hi = args
    return [run_trial(config, i) for i in range(lo, hi)]


def run_trials(config: ExperimentConfig) -> list[TrialResult]:
    if config.workers == 1:
        return _run_chunk((config, 0, config.trials))
    chunks = min(config.trials, config.workers * 4)
    bounds = np.linspace(0, config.trials, chunks + 1).astype(int)
    jobs = [(config, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        results = [r for chunk in pool.map(_run_chunk, jobs) for r in chunk]
    return sorted(results, key=lambda r: r.index)


# -- aggregation -------------------------------------------------------------

def _binomial(successes: int, trials: int) -> tuple[float, float]:
    p = successes / trials
    return p, math.sqrt(p * (1 - p) / trials)


def _details(config: ExperimentConfig, results: list[TrialResult]) -> tuple[Optional[float], dict]:
    n, T = config.n, config.trials
    if config.experiment == "honest":
        return 1.0, {}
    if config.experiment == "bind":
        rounds = sum(r.value for r in results)
        details = {"rounds_per_trial": config.rounds, "reference": 0.5**config.rounds,
                   "per_round_acceptance": rounds / (T * config.rounds), "r": "all-ones"}
        exact = oracles.enumerate_oracle("bind", n, s=config.rounds) if n <= BIND_ORACLE_MAX_N else None
        return exact, details
    if config.experiment == "conceal":
        k = config.r_weight
        details = {"r_weight": k, "closed_form": (1 + 2.0**-k) / 2, "advantage_bound": 2.0 ** -(k + 1),
                   "guess_mode": "exact_posterior" if n <= EXACT_POSTERIOR_MAX_N else "parity_proxy"}
        if n > oracles.ENUMERATION_MAX_N:
            return None, details
        exact = oracles.enumerate_oracle("conceal", n, k)
        details["exact_advantage"] = exact - 0.5
        details["excess_over_bound"] = exact - 0.5 - 2.0 ** -(k + 1)
        details["raw_parity_agreement"] = float(oracles.raw_parity_agreement(n, oracles.weight_k_string(n, k)))
        return exact, details
    if config.experiment == "mlc":
        return 1.0, _mlc_details(config, results)
    worst = max(r.value for r in results)
    sizes = sorted({r.extra for r in results})
    return None, {"threshold": NOSIG_THRESHOLD, "max_trace_distance": worst,
                  "largest_split": list(max(sizes, key=sum)), "max_qubits_per_side": n}


def _mlc_details(config, results) -> dict:
    plan, held, prep = _mlc_setup(config.n, config.master_seed)
    T = config.trials
    N = 2 ** (2 * config.n - 3)
    bob_now = q.partial_trace(held, plan.bob_qubits)
    out = {"N": N, "ancilla_dimension": 2**plan.ancilla_qubits, "excluded_pair": prep.excluded,
           "min_fidelity": min(r.value for r in results)}
    worst_z = 0.0
    for b in (0, 1):
        counts = np.bincount([r.extra[b] for r in results], minlength=N)
        probs = np.zeros(N)
        probs[: len(plan.ensembles[b])] = plan.ensembles[b].probabilities
        for c, p in zip(counts, probs):
            if c and p == 0:
                worst_z = math.inf
            elif p > 0:
                worst_z = max(worst_z, abs(c / T - p) / math.sqrt(p * (1 - p) / T))
        out[f"counts_b{b}"] = counts.tolist()
        out[f"probabilities_b{b}"] = probs.tolist()
        out[f"bob_state_distance_b{b}"] = q.trace_distance(bob_now, plan.ensembles[b].mixture())
    out["max_abs_z"] = worst_z
    out["within_3_sigma"] = worst_z <= 3
    out["separable_defense_worst_catch"] = {
        str(k): float(v) for k, v in oracles.deferral_detection(4).items()}
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    results = run_trials(config)
    successes = sum(r.success for r in results)
    aborts = sum(r.aborts for r in results)
    exact, details = _details(config, results)
    if config.experiment == "nosig":
        estimate, stderr = details["max_trace_distance"], 0.0
    else:
        estimate, stderr = _binomial(successes, config.trials)
    flagged = exact is not None and abs(estimate - exact) > 3 * stderr + 1e-12
    if config.experiment == "nosig":
        flagged = estimate >= NOSIG_THRESHOLD
    if flagged:
        logger.warning("%s estimate %.6g disagrees with reference %s", config.experiment, estimate, exact)
    echo = {k: v for k, v in asdict(config).items() if k not in ("output", "workers")}
    return ExperimentReport(config.experiment, config.n, config.trials, config.master_seed, estimate,
                            stderr, exact, aborts, time.perf_counter() - start, echo, details, flagged)
