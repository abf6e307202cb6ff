"""Trial runners and exact oracles for the round dynamics.

Two sampling paths produce protocol runs:

* the aggregated path draws the next zero-count directly as
  Bin(z, p_keep_zero) + Bin(o, p_adopt_zero), valid because per-receiver
  loss patterns are disjoint sets of i.i.d. variables;
* the per-agent path simulates every receiver's received counts and applies
  the decision rule, serving as the reference implementation.

Two oracles pin the dynamics down exactly: an exhaustive enumeration of
all loss patterns for systems of up to 6 agents, and an exact Markov chain
on the zero-count for systems of up to 1000 agents.

All runs are keyed by (master_seed, trial); batching trials or changing
worker counts never changes any draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analytics
from .model import (
    OpinionCounts,
    OpinionVector,
    ProtocolConfig,
    is_consensus,
    is_majority_consensus,
    majority_update,
)
from .rng import RngStream, sample_binomial_lanes

__all__ = [
    "UnsupportedSizeError",
    "TrialOutcome",
    "CountDistribution",
    "BatchOutcome",
    "step_aggregated",
    "step_per_agent",
    "run_trial",
    "run_trials_batch",
    "aggregated_round_distribution",
    "exhaustive_round_distribution",
    "exact_chain_consensus_probability",
    "EXHAUSTIVE_MAX_AGENTS",
    "EXACT_CHAIN_MAX_AGENTS",
]

EXHAUSTIVE_MAX_AGENTS = 6
EXACT_CHAIN_MAX_AGENTS = 1000

MODE_AGGREGATED = "aggregated"
MODE_PER_AGENT = "per_agent"


class UnsupportedSizeError(ValueError):
    """The requested system size exceeds an oracle's practical ceiling."""


@dataclass(frozen=True)
class TrialOutcome:
    """One protocol run: per-round counts plus the consensus verdicts."""

    trajectory: tuple[OpinionCounts, ...]
    consensus: bool
    majority_consensus: bool
    final_value: int | None

    def __post_init__(self) -> None:
        totals = {c.total for c in self.trajectory}
        if len(totals) != 1:
            raise ValueError("trajectory does not conserve the agent count")


@dataclass(frozen=True)
class CountDistribution:
    """Exact law of a zero-count over the support 0..2n."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probabilities, dtype=np.float64)
        object.__setattr__(self, "probabilities", probs)
        if probs.ndim != 1 or len(probs) < 3:
            raise ValueError("need probabilities over a support 0..2n with 2n >= 2")
        if np.any(probs < -1e-12):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {probs.sum()}, not 1")

    @property
    def total(self) -> int:
        """Number of agents 2n."""
        return len(self.probabilities) - 1

    def total_variation(self, other: "CountDistribution") -> float:
        if self.total != other.total:
            raise ValueError("supports differ")
        return 0.5 * float(np.abs(self.probabilities - other.probabilities).sum())


def _transition_pair(z: int, o: int, q: float) -> tuple[float, float]:
    """(p_keep_zero, p_adopt_zero) with the empty-side convention.

    A side with no holders contributes a binomial over zero trials, so its
    undefined transition probability is never evaluated.
    """
    p00 = analytics.keep_zero_probability(z, o, q) if z > 0 else 0.0
    p10 = analytics.adopt_zero_probability(z, o, q) if o > 0 else 0.0
    return p00, p10


# --------------------------------------------------------------------------
# Sampling paths
# --------------------------------------------------------------------------


def _aggregated_rounds(
    zeros0: np.ndarray,
    total: int,
    q: float,
    rounds: int,
    master_seed: int,
    trial_ids: np.ndarray,
) -> np.ndarray:
    """Zero-count trajectories (rounds+1, T) for the aggregated path."""
    z = zeros0.astype(np.int64).copy()
    traj = np.empty((rounds + 1, len(z)), dtype=np.int64)
    traj[0] = z
    for round_index in range(1, rounds + 1):
        active = (z > 0) & (z < total)
        if np.any(active):
            zs = z[active]
            uniq, inverse = np.unique(zs, return_inverse=True)
            p00 = np.empty(len(uniq))
            p10 = np.empty(len(uniq))
            for i, zu in enumerate(uniq):
                p00[i], p10[i] = _transition_pair(int(zu), total - int(zu), q)
            kept = sample_binomial_lanes(
                zs, p00[inverse], master_seed, trial_ids[active], round_index, np.uint64(0)
            )
            gained = sample_binomial_lanes(
                total - zs, p10[inverse], master_seed, trial_ids[active], round_index, np.uint64(1)
            )
            z[active] = kept + gained
        traj[round_index] = z
    return traj


def _per_agent_rounds(
    bits0: np.ndarray,
    q: float,
    rounds: int,
    master_seed: int,
    trial_ids: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-count trajectories plus final bit matrix for the per-agent path.

    Each receiver draws its delivered zero- and one-counts from its own
    (trial, round, agent-side) stream; independence across receivers holds
    because every message's loss is a distinct i.i.d. variable.
    """
    bits = np.tile(np.asarray(bits0, dtype=np.int8), (len(trial_ids), 1))
    total = bits.shape[1]
    q_prime = 1.0 - q
    traj = np.empty((rounds + 1, len(trial_ids)), dtype=np.int64)
    traj[0] = total - bits.sum(axis=1)
    for round_index in range(1, rounds + 1):
        z = total - bits.sum(axis=1)
        active = (z > 0) & (z < total)
        if np.any(active):
            rows = np.flatnonzero(active)
            sub = bits[rows]
            z_act = z[rows]
            o_act = total - z_act
            new = sub.copy()
            for j in range(total):
                own_zero = sub[:, j] == 0
                m0 = z_act - own_zero
                m1 = o_act - (~own_zero)
                d0 = sample_binomial_lanes(
                    m0, q_prime, master_seed, trial_ids[rows], round_index, np.uint64(2 * j)
                )
                d1 = sample_binomial_lanes(
                    m1, q_prime, master_seed, trial_ids[rows], round_index, np.uint64(2 * j + 1)
                )
                n0 = d0 + own_zero
                n1 = d1 + ~own_zero
                new[:, j] = np.where(n0 > n1, 0, np.where(n1 > n0, 1, sub[:, j]))
            bits[rows] = new
        traj[round_index] = total - bits.sum(axis=1)
    return traj, bits


@dataclass(frozen=True)
class BatchOutcome:
    """Vectorized outcomes of many trials with a shared configuration."""

    initial: OpinionCounts
    zeros_trajectory: np.ndarray  # (rounds+1, trials)
    trial_ids: np.ndarray

    @property
    def total(self) -> int:
        return self.initial.total

    @property
    def final_zeros(self) -> np.ndarray:
        return self.zeros_trajectory[-1]

    def consensus_mask(self) -> np.ndarray:
        z = self.final_zeros
        return (z == 0) | (z == self.total)

    def majority_consensus_mask(self) -> np.ndarray:
        z = self.final_zeros
        if self.initial.zeros > self.initial.ones:
            return z == self.total
        if self.initial.ones > self.initial.zeros:
            return z == 0
        return (z == 0) | (z == self.total)

    def outcome(self, lane: int) -> TrialOutcome:
        traj = tuple(
            OpinionCounts(zeros=int(z), ones=self.total - int(z))
            for z in self.zeros_trajectory[:, lane]
        )
        return TrialOutcome(
            trajectory=traj,
            consensus=is_consensus(traj[-1]),
            majority_consensus=is_majority_consensus(traj[0], traj[-1]),
            final_value=_final_value(int(self.final_zeros[lane]), self.total),
        )

    def outcomes(self):
        for lane in range(self.zeros_trajectory.shape[1]):
            yield self.outcome(lane)


def _final_value(zeros: int, total: int) -> int | None:
    if zeros == total:
        return 0
    if zeros == 0:
        return 1
    return None


def run_trials_batch(
    config: ProtocolConfig,
    trial_ids,
    master_seed: int,
    mode: str = MODE_AGGREGATED,
) -> BatchOutcome:
    """Run one trial per entry of ``trial_ids``, all draws counter-addressed.

    Output is bit-identical however the ids are split into batches.
    """
    trial_ids = np.asarray(trial_ids, dtype=np.uint64)
    initial = config.initial_state()
    q = config.network.q
    if mode == MODE_AGGREGATED:
        zeros0 = np.full(len(trial_ids), initial.zeros)
        traj = _aggregated_rounds(
            zeros0, initial.total, q, config.rounds, master_seed, trial_ids
        )
    elif mode == MODE_PER_AGENT:
        bits0 = (0,) * initial.zeros + (1,) * initial.ones
        traj, _ = _per_agent_rounds(bits0, q, config.rounds, master_seed, trial_ids)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return BatchOutcome(initial=initial, zeros_trajectory=traj, trial_ids=trial_ids)


def run_trial(
    config: ProtocolConfig,
    trial_index: int,
    master_seed: int,
    mode: str = MODE_AGGREGATED,
) -> TrialOutcome:
    """One deterministic protocol run for (master_seed, trial_index)."""
    batch = run_trials_batch(config, [trial_index], master_seed, mode=mode)
    return batch.outcome(0)


def step_aggregated(counts: OpinionCounts, q: float, rng: RngStream) -> OpinionCounts:
    """One aggregated round from ``counts`` at the stream's (trial, round)."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    z, o, total = counts.zeros, counts.ones, counts.total
    if z == 0 or z == total:
        return counts
    p00, p10 = _transition_pair(z, o, q)
    trial = np.array([rng.trial], dtype=np.uint64)
    kept = sample_binomial_lanes(z, p00, rng.master_seed, trial, rng.round_index, np.uint64(0))
    gained = sample_binomial_lanes(o, p10, rng.master_seed, trial, rng.round_index, np.uint64(1))
    new_z = int(kept[0] + gained[0])
    return OpinionCounts(zeros=new_z, ones=total - new_z)


def step_per_agent(state: OpinionVector, q: float, rng: RngStream) -> OpinionVector:
    """One per-agent round; receiver j draws from groups (2j, 2j+1)."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    total = len(state)
    counts = state.counts()
    z, o = counts.zeros, counts.ones
    q_prime = 1.0 - q
    bits = []
    trial = np.array([rng.trial], dtype=np.uint64)
    for j, own in enumerate(state.bits):
        m0 = z - (own == 0)
        m1 = o - (own == 1)
        d0 = sample_binomial_lanes(
            m0, q_prime, rng.master_seed, trial, rng.round_index, np.uint64(2 * j)
        )
        d1 = sample_binomial_lanes(
            m1, q_prime, rng.master_seed, trial, rng.round_index, np.uint64(2 * j + 1)
        )
        n0 = int(d0[0]) + (own == 0)
        n1 = int(d1[0]) + (own == 1)
        bits.append(majority_update(own, n0, n1))
    return OpinionVector(bits=tuple(bits))


# --------------------------------------------------------------------------
# Exact oracles
# --------------------------------------------------------------------------


def aggregated_round_distribution(counts: OpinionCounts, q: float) -> CountDistribution:
    """Exact one-round law Bin(z, p_keep) * Bin(o, p_adopt) of the zero-count."""
    z, o = counts.zeros, counts.ones
    p00, p10 = _transition_pair(z, o, q)
    pmf_keep = np.exp(analytics._log_pmf_array(z, p00)) if z > 0 else np.ones(1)
    pmf_gain = np.exp(analytics._log_pmf_array(o, p10)) if o > 0 else np.ones(1)
    return CountDistribution(probabilities=np.convolve(pmf_keep, pmf_gain))


def exhaustive_round_distribution(counts: OpinionCounts, q: float) -> CountDistribution:
    """Ground-truth one-round law by enumerating every message-loss pattern.

    Each receiver's next opinion depends only on the losses of its own
    2n - 1 incoming messages, and those sets are disjoint across receivers,
    so the full 2^(2n(2n-1)) pattern space is enumerated receiver by
    receiver (2^(2n-1) patterns each) and combined as a product law.
    """
    total = counts.total
    if total > EXHAUSTIVE_MAX_AGENTS:
        raise UnsupportedSizeError(
            f"exhaustive oracle supports at most {EXHAUSTIVE_MAX_AGENTS} agents, got {total}"
        )
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    z, o = counts.zeros, counts.ones

    def p_next_zero(own: int) -> float:
        senders0 = z - (own == 0)
        senders1 = o - (own == 1)
        n_msgs = senders0 + senders1
        prob0 = 0.0
        for mask in range(1 << n_msgs):
            delivered0 = bin(mask & ((1 << senders0) - 1)).count("1")
            delivered = bin(mask).count("1")
            delivered1 = delivered - delivered0
            n0 = delivered0 + (own == 0)
            n1 = delivered1 + (own == 1)
            if majority_update(own, n0, n1) == 0:
                prob0 += (1.0 - q) ** delivered * q ** (n_msgs - delivered)
        return prob0

    dist = np.ones(1)
    for own, holders in ((0, z), (1, o)):
        if holders == 0:
            continue
        p0 = p_next_zero(own)
        for _ in range(holders):
            dist = np.convolve(dist, np.array([1.0 - p0, p0]))
    # dist[k] currently indexes the number of next-round zeros
    padded = np.zeros(total + 1)
    padded[: len(dist)] = dist
    return CountDistribution(probabilities=padded)


def exact_chain_consensus_probability(
    n: int, delta: int, q: float, rounds: int
) -> tuple[float, float]:
    """Exact (P{consensus}, P{majority consensus}) via the count Markov chain.

    The kernel row at z is the convolution Bin(z, p_keep) * Bin(2n - z,
    p_adopt); the start distribution is a point mass at n + delta and the
    chain is advanced ``rounds`` times.  Consensus states are absorbing
    rows, exact point masses.
    """
    total = 2 * n
    if total > EXACT_CHAIN_MAX_AGENTS:
        raise UnsupportedSizeError(
            f"exact chain supports at most {EXACT_CHAIN_MAX_AGENTS} agents, got {total}"
        )
    if abs(delta) > n:
        raise ValueError(f"|delta| must be <= n, got {delta}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    dist = np.zeros(total + 1)
    dist[n + delta] = 1.0
    rows: dict[int, np.ndarray] = {}
    for _ in range(rounds):
        new = np.zeros(total + 1)
        for z in np.flatnonzero(dist > 0.0):
            z = int(z)
            row = rows.get(z)
            if row is None:
                row = aggregated_round_distribution(
                    OpinionCounts(zeros=z, ones=total - z), q
                ).probabilities
                rows[z] = row
            new += dist[z] * row
        dist = new
    p_consensus = float(dist[0] + dist[total])
    if delta > 0:
        p_majority = float(dist[total])
    elif delta < 0:
        p_majority = float(dist[0])
    else:
        p_majority = p_consensus
    return min(p_consensus, 1.0), min(p_majority, 1.0)
