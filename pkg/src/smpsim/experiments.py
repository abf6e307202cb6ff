"""Monte Carlo estimation with confidence intervals, plus preset sweeps.

Estimates are binomial proportions with Wilson score intervals (95% by
default; Clopper-Pearson available), which stay honest at observed rates
of exactly 0 or 1 - the strongly asymmetric presets produce both.

Trials are split into fixed-size chunks processed either inline or by a
process pool; every chunk is keyed by absolute trial indices, and success
counting is associative, so results are identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import analytics
from .engine import (
    EXACT_CHAIN_MAX_AGENTS,
    MODE_AGGREGATED,
    BatchOutcome,
    TrialOutcome,
    exact_chain_consensus_probability,
    run_trials_batch,
)
from .model import AsymmetryRegime, NetworkModel, ProtocolConfig

__all__ = [
    "Estimate",
    "SweepRow",
    "SweepResult",
    "SymmetryBreakStats",
    "wilson_interval",
    "clopper_pearson_interval",
    "estimate_event_probability",
    "trichotomy_sweep",
    "symmetry_break_statistics",
    "theorem1_suite",
    "theorem2_suite",
    "max_error_sweep",
    "return_to_symmetry_rate",
    "EVENT_NAMES",
]

CHUNK_TRIALS = 1 << 16

EVENT_NAMES = (
    "consensus",
    "majority_consensus",
    "consensus_failure",
    "majority_consensus_failure",
)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must be in [0, trials], got {successes}/{trials}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p_hat = successes / trials
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2.0 * trials)) / denom
    margin = (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / trials + z * z / (4.0 * trials * trials))
    # the score interval hits the endpoints exactly at observed rates 0 and 1;
    # rounding in center - margin must not push the interval past p_hat
    low = 0.0 if successes == 0 else max(0.0, min(center - margin, p_hat))
    high = 1.0 if successes == trials else min(1.0, max(center + margin, p_hat))
    return low, high


def clopper_pearson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Exact (conservative) binomial interval from beta quantiles."""
    from scipy.stats import beta

    if trials < 1:
        raise ValueError("trials must be >= 1")
    alpha = 1.0 - confidence
    low = 0.0 if successes == 0 else float(beta.ppf(alpha / 2.0, successes, trials - successes + 1))
    high = (
        1.0 if successes == trials else float(beta.ppf(1.0 - alpha / 2.0, successes + 1, trials - successes))
    )
    return low, high


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo proportion with its confidence interval."""

    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    method: str = "wilson"

    def __post_init__(self) -> None:
        if not 0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0:
            raise ValueError("interval must satisfy 0 <= low <= p_hat <= high <= 1")

    @classmethod
    def from_counts(
        cls,
        successes: int,
        trials: int,
        confidence: float = 0.95,
        method: str = "wilson",
    ) -> "Estimate":
        if method == "wilson":
            low, high = wilson_interval(successes, trials, confidence)
        elif method == "clopper_pearson":
            low, high = clopper_pearson_interval(successes, trials, confidence)
        else:
            raise ValueError(f"unknown interval method {method!r}")
        return cls(
            successes=successes,
            trials=trials,
            p_hat=successes / trials,
            ci_low=low,
            ci_high=high,
            confidence=confidence,
            method=method,
        )

    def complement(self) -> "Estimate":
        return Estimate.from_counts(
            self.trials - self.successes, self.trials, self.confidence, self.method
        )

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0

    def covers(self, p: float) -> bool:
        return self.ci_low <= p <= self.ci_high


@dataclass(frozen=True)
class SweepRow:
    """One point of a sweep: identification plus estimate/exact/bound payloads."""

    n: int
    delta: int | None
    q: float
    rounds: int | None
    event: str
    estimate: Estimate | None = None
    exact: float | None = None
    bound: analytics.BoundReport | None = None
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    kind: str
    rows: tuple[SweepRow, ...]
    metadata: dict[str, Any] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Chunked trial running
# --------------------------------------------------------------------------


def _chunk_ranges(trials: int) -> list[tuple[int, int]]:
    return [(start, min(CHUNK_TRIALS, trials - start)) for start in range(0, trials, CHUNK_TRIALS)]


def _event_mask(batch: BatchOutcome, event: str) -> np.ndarray:
    if event == "consensus":
        return batch.consensus_mask()
    if event == "consensus_failure":
        return ~batch.consensus_mask()
    if event == "majority_consensus":
        return batch.majority_consensus_mask()
    if event == "majority_consensus_failure":
        return ~batch.majority_consensus_mask()
    raise ValueError(f"unknown event {event!r}, expected one of {EVENT_NAMES}")


def _count_event_chunk(args) -> int:
    config, start, size, master_seed, mode, event = args
    ids = np.arange(start, start + size, dtype=np.uint64)
    batch = run_trials_batch(config, ids, master_seed, mode=mode)
    if callable(event):
        return sum(1 for outcome in batch.outcomes() if event(outcome))
    return int(_event_mask(batch, event).sum())


def _final_zeros_chunk(args) -> np.ndarray:
    config, start, size, master_seed, mode = args
    ids = np.arange(start, start + size, dtype=np.uint64)
    return run_trials_batch(config, ids, master_seed, mode=mode).final_zeros


def _map_chunks(fn, args_list: list, workers: int) -> list:
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))


def estimate_event_probability(
    config: ProtocolConfig,
    event: str | Callable[[TrialOutcome], bool],
    trials: int,
    master_seed: int,
    *,
    workers: int = 1,
    mode: str = MODE_AGGREGATED,
    confidence: float = 0.95,
    method: str = "wilson",
) -> Estimate:
    """Estimate P{event} over independent runs of ``config``.

    ``event`` is one of EVENT_NAMES or a predicate on TrialOutcome (the
    predicate path materializes one outcome per trial and is accordingly
    slower; it must be picklable when workers > 1).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    args = [
        (config, start, size, master_seed, mode, event)
        for start, size in _chunk_ranges(trials)
    ]
    successes = sum(_map_chunks(_count_event_chunk, args, workers))
    return Estimate.from_counts(successes, trials, confidence, method)


def final_zeros_sample(
    config: ProtocolConfig,
    trials: int,
    master_seed: int,
    *,
    workers: int = 1,
    mode: str = MODE_AGGREGATED,
) -> np.ndarray:
    """Final-round zero-counts of ``trials`` independent runs, in trial order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    args = [
        (config, start, size, master_seed, mode) for start, size in _chunk_ranges(trials)
    ]
    return np.concatenate(_map_chunks(_final_zeros_chunk, args, workers))


def _single_round_final_zeros(
    n: int, q: float, trials: int, master_seed: int, workers: int
) -> np.ndarray:
    config = ProtocolConfig(n=n, delta=0, rounds=1, network=NetworkModel(q=q))
    return final_zeros_sample(config, trials, master_seed, workers=workers)


# --------------------------------------------------------------------------
# Preset experiments
# --------------------------------------------------------------------------


def trichotomy_sweep(
    regime: AsymmetryRegime, n_grid: Sequence[int], q: float
) -> SweepResult:
    """Exact single-round keep probabilities along a growth regime.

    No sampling: each point is keep_zero_probability(n + a_n, n - a_n, q),
    reported next to the regime's predicted limit.
    """
    rows = []
    limit = regime.limit(q)
    for n in n_grid:
        a_n = regime.offset(n)
        if a_n > n:
            raise ValueError(f"regime offset {a_n} exceeds n={n}")
        p_n = analytics.keep_zero_probability(n + a_n, n - a_n, q)
        rows.append(
            SweepRow(
                n=n, delta=a_n, q=q, rounds=1, event="keep_zero", exact=p_n,
                extra={"predicted_limit": limit},
            )
        )
    return SweepResult(
        kind="trichotomy",
        rows=tuple(rows),
        metadata={
            "regime": regime.kind,
            "alpha": regime.alpha,
            "beta": regime.beta,
            "case": regime.fact1_case(),
            "predicted_limit": limit,
            "limit_label": "limit (asymptotic reading)" if regime.fact1_case() == 2 else "limit",
            "offset_rounding": "ceil",
        },
    )


@dataclass(frozen=True)
class SymmetryBreakStats:
    """Sample law of the scaled round-1 fluctuation (N0 - n)/sqrt(n) from a tie."""

    n: int
    q: float
    trials: int
    mean: float
    variance: float
    outside_counts: dict[float, int]

    def fraction_outside(self, delta: float) -> float:
        return self.outside_counts[delta] / self.trials


def symmetry_break_statistics(
    n: int,
    q: float,
    trials: int,
    master_seed: int,
    *,
    deltas: Sequence[float] = (0.1, 0.25, 0.5, 1.0, 2.0, 3.0),
    workers: int = 1,
) -> SymmetryBreakStats:
    """Single-round fluctuation statistics from an exactly tied start."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    zeros = _single_round_final_zeros(n, q, trials, master_seed, workers)
    scaled = (zeros - n) / math.sqrt(n)
    mean = float(scaled.mean())
    variance = float(scaled.var(ddof=1)) if trials > 1 else 0.0
    outside = {
        float(d): int(np.count_nonzero(np.abs(scaled) >= d)) for d in deltas
    }
    return SymmetryBreakStats(
        n=n, q=q, trials=trials, mean=mean, variance=variance, outside_counts=outside
    )


def theorem1_suite(
    q: float,
    n_grid: Sequence[int],
    master_seed: int,
    *,
    trials_single_round: int = 100_000,
    trials_two_rounds: int = 1_000,
    trials_three_rounds: int = 1_000,
    alpha: float = 1.0,
    workers: int = 1,
) -> SweepResult:
    """Three achievability presets: one, two and three communication rounds.

    1. single round with imbalance n^(3/4): majority-consensus error rate
       next to its closed-form bound;
    2. two rounds with imbalance ceil(alpha sqrt(n)): majority-consensus rate;
    3. three rounds from a tie: consensus rate.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"theorem presets need q strictly inside (0, 1), got {q}")
    rows = []
    for n in n_grid:
        delta1 = min(n - 1, math.ceil(n ** 0.75))
        config1 = ProtocolConfig(n=n, delta=delta1, rounds=1, network=NetworkModel(q=q))
        err = estimate_event_probability(
            config1, "majority_consensus_failure", trials_single_round, master_seed,
            workers=workers,
        )
        bound = analytics.BoundReport(
            bound_name="prop1",
            parameters={"n": n, "A": delta1, "q": q},
            bound_value=analytics.prop1_error_bound(n, delta1, q),
            empirical_value=err.p_hat,
        )
        rows.append(
            SweepRow(n=n, delta=delta1, q=q, rounds=1,
                     event="majority_consensus_failure", estimate=err, bound=bound)
        )

        delta2 = math.ceil(alpha * math.sqrt(n))
        config2 = ProtocolConfig(n=n, delta=delta2, rounds=2, network=NetworkModel(q=q))
        est2 = estimate_event_probability(
            config2, "majority_consensus", trials_two_rounds, master_seed, workers=workers
        )
        rows.append(
            SweepRow(n=n, delta=delta2, q=q, rounds=2,
                     event="majority_consensus", estimate=est2)
        )

        config3 = ProtocolConfig(n=n, delta=0, rounds=3, network=NetworkModel(q=q))
        est3 = estimate_event_probability(
            config3, "consensus", trials_three_rounds, master_seed, workers=workers
        )
        rows.append(SweepRow(n=n, delta=0, q=q, rounds=3, event="consensus", estimate=est3))
    return SweepResult(
        kind="theorem1", rows=tuple(rows),
        metadata={"alpha": alpha, "offset_rounding": "ceil"},
    )


def theorem2_suite(
    q: float,
    n_grid: Sequence[int],
    trials: int,
    master_seed: int,
    *,
    workers: int = 1,
) -> SweepResult:
    """Two-round consensus rate from a tie, with the 3/n^c(q) envelope.

    Rows carry the exact chain value alongside the estimate wherever the
    system is small enough for the exact chain.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"theorem presets need q strictly inside (0, 1), got {q}")
    rows = []
    for n in n_grid:
        config = ProtocolConfig(n=n, delta=0, rounds=2, network=NetworkModel(q=q))
        est = estimate_event_probability(
            config, "consensus", trials, master_seed, workers=workers
        )
        exact = None
        if 2 * n <= EXACT_CHAIN_MAX_AGENTS:
            exact, _ = exact_chain_consensus_probability(n, 0, q, 2)
        bound = analytics.BoundReport(
            bound_name="theorem2_envelope",
            parameters={"n": n, "q": q, "exponent": analytics.envelope_exponent(q)},
            bound_value=analytics.theorem2_envelope(n, q),
            empirical_value=est.p_hat,
        )
        rows.append(
            SweepRow(n=n, delta=0, q=q, rounds=2, event="consensus",
                     estimate=est, exact=exact, bound=bound)
        )
    return SweepResult(
        kind="theorem2", rows=tuple(rows),
        metadata={"envelope_exponent": analytics.envelope_exponent(q)},
    )


def max_error_sweep(
    n: int,
    q: float,
    rounds: int,
    trials_per_point: int,
    master_seed: int,
    *,
    deltas: Iterable[int] | None = None,
    workers: int = 1,
) -> SweepResult:
    """Consensus error probability across initial imbalances delta in 0..n.

    Exchangeability reduces the maximum over all 2^(2n) initial states to a
    sweep over the imbalance.  Rows carry the exact chain error when the
    system is small enough.
    """
    if deltas is None:
        deltas = range(n + 1)
    rows = []
    exact_ok = 2 * n <= EXACT_CHAIN_MAX_AGENTS
    for offset, delta in enumerate(deltas):
        config = ProtocolConfig(n=n, delta=delta, rounds=rounds, network=NetworkModel(q=q))
        # distinct seeds per point so points are independent
        est = estimate_event_probability(
            config, "consensus_failure", trials_per_point, master_seed + offset,
            workers=workers,
        )
        exact = None
        if exact_ok:
            p_cons, _ = exact_chain_consensus_probability(n, delta, q, rounds)
            exact = 1.0 - p_cons
        rows.append(
            SweepRow(n=n, delta=delta, q=q, rounds=rounds,
                     event="consensus_failure", estimate=est, exact=exact)
        )
    argmax_row = max(rows, key=lambda r: r.estimate.p_hat)
    return SweepResult(
        kind="max_error", rows=tuple(rows),
        metadata={"argmax_delta": argmax_row.delta, "argmax_p_hat": argmax_row.estimate.p_hat},
    )


def return_to_symmetry_rate(
    n_grid: Sequence[int],
    q: float,
    trials: int,
    master_seed: int,
    *,
    workers: int = 1,
) -> SweepResult:
    """Probability that round 1 lands back on an exact tie, per n.

    The estimates are overlaid with a fitted c/sqrt(n) curve; the fit
    constant is the average of p_hat * sqrt(n) across the grid.
    """
    rows = []
    for n in n_grid:
        zeros = _single_round_final_zeros(n, q, trials, master_seed, workers)
        successes = int(np.count_nonzero(zeros == n))
        est = Estimate.from_counts(successes, trials)
        rows.append(
            SweepRow(n=n, delta=0, q=q, rounds=1, event="returned_to_tie", estimate=est)
        )
    fit_c = float(np.mean([r.estimate.p_hat * math.sqrt(r.n) for r in rows]))
    rows = tuple(
        SweepRow(
            n=r.n, delta=r.delta, q=r.q, rounds=r.rounds, event=r.event,
            estimate=r.estimate, exact=r.exact, bound=r.bound,
            extra={"sqrt_fit": fit_c / math.sqrt(r.n)},
        )
        for r in rows
    )
    return SweepResult(kind="return_to_symmetry", rows=rows, metadata={"sqrt_fit_c": fit_c})
