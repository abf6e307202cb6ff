"""Exact log-space binomial computations, transition probabilities, bounds.

Everything here is deterministic closed-form math.  Probabilities are
accumulated in natural-log space (log-sum-exp) because raw binomial terms
underflow doubles once the agent count reaches a few thousand.  A plain
``float`` in log space stands in for a log-probability: value <= 0, with
``-inf`` representing probability zero.

The two transition probabilities driving the whole protocol are, for a
state with ``z`` zeros, ``o`` ones and delivery probability q' = 1 - q:

* keep-zero:  P{ Bin(z-1, q') + 1 >= Bin(o, q') }
  (a zero-holder still holds 0 after one round; its own opinion breaks
  ties in its favor),
* adopt-zero: P{ Bin(z, q') >= Bin(o-1, q') + 2 }
  (a one-holder switches to 0; it must see a strict majority of zeros).

Both are memoized because Monte Carlo sweeps revisit the same counts
heavily; results are identical with the cache disabled.
"""

from __future__ import annotations

import functools
import math
import threading
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "LogProb",
    "TransitionProbabilities",
    "BoundReport",
    "BOUND_NAMES",
    "binomial_log_pmf",
    "binomial_log_cdf",
    "comparison_probability",
    "keep_zero_probability",
    "adopt_zero_probability",
    "transition_probabilities",
    "configure_transition_cache",
    "transition_cache_info",
    "clear_transition_cache",
    "kl_bernoulli",
    "std_normal_cdf",
    "q_function",
    "t_zero",
    "prop1_error_bound",
    "prop4_bound",
    "prop5_bound",
    "prop5_rate_constant",
    "envelope_exponent",
    "theorem2_envelope",
    "pn_sandwich",
    "pmf_stirling_bounds",
]

#: Log-probability: float <= 0 in natural-log space, -inf meaning probability 0.
LogProb = float

_LOG_FACT_LOCK = threading.Lock()
_LOG_FACT = np.zeros(1)  # _LOG_FACT[i] = log(i!)


def _log_factorials(upto: int) -> np.ndarray:
    """Table t with t[i] = log(i!) for i = 0..upto, grown geometrically."""
    global _LOG_FACT
    table = _LOG_FACT
    if len(table) > upto:
        return table
    with _LOG_FACT_LOCK:
        if len(_LOG_FACT) <= upto:
            size = max(upto + 1, 2 * len(_LOG_FACT), 1024)
            _LOG_FACT = gammaln(np.arange(1, size + 1, dtype=np.float64))
        return _LOG_FACT


def _log_pmf_array(m: int, p: float) -> np.ndarray:
    """log P{Bin(m, p) = k} for k = 0..m, with exact 0**0 = 1 conventions."""
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if p == 0.0:
        out = np.full(m + 1, -np.inf)
        out[0] = 0.0
        return out
    if p == 1.0:
        out = np.full(m + 1, -np.inf)
        out[m] = 0.0
        return out
    lf = _log_factorials(m)
    k = np.arange(m + 1)
    log_choose = lf[m] - lf[k] - lf[m - k]
    return log_choose + k * math.log(p) + (m - k) * math.log1p(-p)


def _log_cdf_array(m: int, p: float) -> np.ndarray:
    """log P{Bin(m, p) <= k} for k = 0..m via log-sum-exp prefix sums."""
    return np.minimum(np.logaddexp.accumulate(_log_pmf_array(m, p)), 0.0)


def binomial_log_pmf(m: int, p: float, k: int) -> LogProb:
    """log of C(m, k) p^k (1-p)^(m-k), computed via log-gamma."""
    if not 0 <= k <= m:
        raise ValueError(f"k must be in [0, m], got k={k}, m={m}")
    return float(_log_pmf_array(m, p)[k])


def binomial_log_cdf(m: int, p: float, k: int) -> LogProb:
    """log P{Bin(m, p) <= k}; -inf for k < 0 and 0.0 (probability 1) for k >= m."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if k < 0:
        return -math.inf
    if k >= m:
        return 0.0
    return float(_log_cdf_array(m, p)[k])


def comparison_probability(m1: int, m2: int, p: float, offset: int) -> float:
    """Exact P{ Bin(m1, p) + offset >= Bin(m2, p) } for independent binomials.

    Evaluated as sum_k pmf(m1, p, k) * P{Bin(m2, p) <= k + offset} with all
    accumulation in log space.  Relative error stays within the 1e-12
    budget for m up to a few thousand; beyond that it grows like
    m log(m) * machine-eps (about 1e-11 at m = 2e4) because log-factorial
    magnitudes outgrow double resolution.  Certain comparisons
    short-circuit exactly: offset >= m2 gives 1, m1 + offset < 0 gives 0.
    """
    if m1 < 0 or m2 < 0:
        raise ValueError(f"m1 and m2 must be nonnegative, got ({m1}, {m2})")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if offset >= m2:
        return 1.0
    if m1 + offset < 0:
        return 0.0
    log_pmf1 = _log_pmf_array(m1, p)
    log_cdf2 = _log_cdf_array(m2, p)
    j = np.arange(m1 + 1) + offset
    terms = log_pmf1 + log_cdf2[np.clip(j, 0, m2)]
    terms[j < 0] = -np.inf
    terms[j >= m2] = log_pmf1[j >= m2]  # cdf is exactly 1 there
    return float(min(math.exp(logsumexp(terms)), 1.0))


def _keep_zero_exact(z: int, o: int, q: float) -> float:
    if z < 1:
        raise ValueError(f"keep-zero probability needs at least one zero-holder, got z={z}")
    if o < 0:
        raise ValueError(f"o must be nonnegative, got {o}")
    return comparison_probability(z - 1, o, 1.0 - q, 1)


def _adopt_zero_exact(z: int, o: int, q: float) -> float:
    if o < 1:
        raise ValueError(f"adopt-zero probability needs at least one one-holder, got o={o}")
    if z < 0:
        raise ValueError(f"z must be nonnegative, got {z}")
    return comparison_probability(z, o - 1, 1.0 - q, -2)


DEFAULT_CACHE_CAPACITY = 1 << 20

_keep_cached = functools.lru_cache(maxsize=DEFAULT_CACHE_CAPACITY)(_keep_zero_exact)
_adopt_cached = functools.lru_cache(maxsize=DEFAULT_CACHE_CAPACITY)(_adopt_zero_exact)


def configure_transition_cache(capacity: int | None) -> None:
    """Rebuild the (z, o, q) memo caches; capacity 0 disables caching."""
    global _keep_cached, _adopt_cached
    if capacity is not None and capacity < 0:
        raise ValueError(f"capacity must be nonnegative or None, got {capacity}")
    if capacity == 0:
        _keep_cached = _keep_zero_exact
        _adopt_cached = _adopt_zero_exact
    else:
        _keep_cached = functools.lru_cache(maxsize=capacity)(_keep_zero_exact)
        _adopt_cached = functools.lru_cache(maxsize=capacity)(_adopt_zero_exact)


def transition_cache_info() -> dict[str, Any]:
    info = {}
    for name, fn in (("keep_zero", _keep_cached), ("adopt_zero", _adopt_cached)):
        info[name] = fn.cache_info()._asdict() if hasattr(fn, "cache_info") else None
    return info


def clear_transition_cache() -> None:
    for fn in (_keep_cached, _adopt_cached):
        if hasattr(fn, "cache_clear"):
            fn.cache_clear()


def keep_zero_probability(z: int, o: int, q: float) -> float:
    """Probability a zero-holder still holds 0 after one round (tie included)."""
    return _keep_cached(z, o, q)


def adopt_zero_probability(z: int, o: int, q: float) -> float:
    """Probability a one-holder switches to 0 after one round (strict majority)."""
    return _adopt_cached(z, o, q)


@dataclass(frozen=True)
class TransitionProbabilities:
    """Per-agent one-round transition probabilities at fixed counts (z, o).

    Only the zero-side pair is stored; the one-side probabilities follow by
    relabeling: p_keep_one(z, o, q) = p_keep_zero(o, z, q).
    """

    p_keep_zero: float
    p_adopt_zero: float

    def __post_init__(self) -> None:
        for name in ("p_keep_zero", "p_adopt_zero"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def transition_probabilities(z: int, o: int, q: float) -> TransitionProbabilities:
    return TransitionProbabilities(
        p_keep_zero=keep_zero_probability(z, o, q),
        p_adopt_zero=adopt_zero_probability(z, o, q),
    )


def kl_bernoulli(a: float, b: float) -> float:
    """Binary Kullback-Leibler divergence a*log(a/b) + (1-a)*log((1-a)/(1-b)).

    Uses the 0*log(0) = 0 convention.  Returns +inf when b is degenerate
    and a differs from it.
    """
    if not 0.0 <= a <= 1.0 or not 0.0 <= b <= 1.0:
        raise ValueError(f"a and b must be in [0, 1], got ({a}, {b})")
    if a == b:
        return 0.0
    if b in (0.0, 1.0):
        return math.inf
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / b)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return out


def std_normal_cdf(t: float) -> float:
    """Standard normal CDF via erfc, complementary form to avoid cancellation."""
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def q_function(t: float) -> float:
    """Upper tail 1 - Phi(t) of a standard normal."""
    return 0.5 * math.erfc(t / math.sqrt(2.0))


def t_zero(alpha: float, q: float) -> float:
    """Scale constant sqrt(2 alpha^2 (1-q) / q) of the exact-sqrt(n) regime."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    return math.sqrt(2.0 * alpha * alpha * (1.0 - q) / q)


def prop1_error_bound(n: int, a: int, q: float) -> float:
    """Single-round majority-consensus error bound from an n+A / n-A start.

    Evaluates 2n * sqrt((n+A)/(n-A)) * exp(-(1-q) A^2 / n).  Valid for
    0 <= A < n; callers wanting A = n clamp to n - 1, where the true error
    probability is dominated by the bound at any smaller imbalance.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= a < n:
        raise ValueError(f"A must satisfy 0 <= A < n, got A={a}, n={n}")
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must be in [0, 1), got {q}")
    return 2.0 * n * math.sqrt((n + a) / (n - a)) * math.exp(-(1.0 - q) * a * a / n)


def prop4_bound(n: int, b: int) -> float:
    """Bound 2 exp(-B^2/n) on P{|round-1 zero count - n| >= B} from a tied start."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if b < 0:
        raise ValueError(f"B must be nonnegative, got {b}")
    return 2.0 * math.exp(-b * b / n)


def prop5_rate_constant(q: float) -> float:
    """The constant 32 / min(q, 1-q) in the single-round consensus bound."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    return 32.0 / min(q, 1.0 - q)


def envelope_exponent(q: float) -> float:
    """Exponent c(q) of the 3/n^c(q) envelope for two-round consensus from a tie."""
    return 0.5 / prop5_rate_constant(q)


def theorem2_envelope(n: int, q: float) -> float:
    """The 3 / n^c(q) envelope on two-round consensus probability from a tie."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return 3.0 / n ** envelope_exponent(q)


def prop5_bound(n: int, c: int, q: float) -> float:
    """Single-round consensus probability bound from an n+C / n-C start.

    Evaluates exp{-C^2 exp{-f_q C^2/(n-C)}} with f_q = 32/min(q, 1-q).
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= c < n:
        raise ValueError(f"C must satisfy 0 <= C < n, got C={c}, n={n}")
    f_q = prop5_rate_constant(q)
    return math.exp(-c * c * math.exp(-f_q * c * c / (n - c)))


_STIRLING_PREFACTOR_UPPER = math.e / (2.0 * math.pi)
_STIRLING_PREFACTOR_LOWER = math.sqrt(2.0 * math.pi) / (math.e ** 2)


def pn_sandwich(n: int, q: float) -> tuple[float, float]:
    """Analytic bracket [1/2, upper] for the tied-state keep probability p_n.

    The upper bound is 1/2 + (3/2) [q^{2n} + G_n + (1-q)^{2n}], where G_n
    bounds the collision probability of two Bin(n, 1-q) draws by splitting
    the index range at eps_n = n^{-1/4} around the mean.  The split formula
    fixes q in (1/2, 1); for q < 1/2 the q <-> 1-q symmetry of the collision
    probability is applied first.  For n so small that eps_n >= min(q, 1-q)
    the split is empty and the bracket falls back to the always-valid
    upper bound 2 (collision probability bounded by one).
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    qq = max(q, 1.0 - q)
    eps = n ** -0.25
    c2 = _STIRLING_PREFACTOR_UPPER ** 2
    if 1.0 - qq - eps <= 0.0:
        return 0.5, 2.0
    g_n = c2 * n * math.exp(-4.0 * math.sqrt(n)) + c2 * (2.0 * n ** 0.75 + 1.0) / (
        n * (qq + eps) * (1.0 - qq - eps)
    )
    upper = 0.5 + 1.5 * (qq ** (2 * n) + g_n + (1.0 - qq) ** (2 * n))
    return 0.5, upper


def pmf_stirling_bounds(m: int, p: float, k: int) -> tuple[float, float]:
    """Two-sided closed-form bracket for the Bin(m, p) PMF at interior k.

    lower = (sqrt(2 pi)/e^2) sqrt(m/(k(m-k))) exp(-m D(k/m || p)),
    upper = (e/(2 pi))      sqrt(m/(k(m-k))) exp(-m D(k/m || p)).

    Valid only for 1 <= k <= m-1; the factorial bounds behind it do not
    cover the endpoints.
    """
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must be interior (1 <= k <= m-1), got k={k}, m={m}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    shared = math.sqrt(m / (k * (m - k))) * math.exp(-m * kl_bernoulli(k / m, p))
    return _STIRLING_PREFACTOR_LOWER * shared, _STIRLING_PREFACTOR_UPPER * shared


BOUND_NAMES = ("prop1", "prop4", "prop5", "pn_sandwich", "stirling_bracket", "theorem2_envelope")


@dataclass(frozen=True)
class BoundReport:
    """An evaluated closed-form bound, optionally next to the quantity it dominates."""

    bound_name: str
    parameters: dict[str, Any]
    bound_value: float
    empirical_value: float | None = None
    satisfied: bool | None = field(default=None)

    def __post_init__(self) -> None:
        if self.bound_name not in BOUND_NAMES:
            raise ValueError(f"unknown bound name {self.bound_name!r}")
        if self.bound_value < 0.0:
            raise ValueError(f"bound value must be nonnegative, got {self.bound_value}")
        if self.empirical_value is not None and self.satisfied is None:
            object.__setattr__(self, "satisfied", self.empirical_value <= self.bound_value)
