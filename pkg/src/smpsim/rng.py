"""Counter-based random streams and exact binomial sampling.

Every random draw in this package is a pure function of
``(master_seed, trial, round, group, slot)``.  The generator is
Philox-4x64 with 10 rounds, keyed by the master seed, with the counter
words carrying ``(slot, trial, round, group)``.  Distinct paths therefore
give statistically independent streams, and results are bit-identical no
matter how trials are batched or scheduled across workers.

The implementation is vectorized over lanes (one lane per trial, or per
trial x agent for the per-agent path) so a million draws cost a handful
of numpy calls.  The block function is validated against numpy's own
Philox bit generator in the test suite.

Binomial draws use exact CDF inversion for m <= 1024 (one uniform per
draw, table cached per (m, p)) and transformed rejection with an exact
log-PMF acceptance test above that; rejection lanes consume uniforms only
from their own counter block, so retries never perturb other lanes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np

from . import analytics

__all__ = ["RngStream", "philox4x64", "uniform_lanes", "sample_binomial", "sample_binomial_lanes"]

_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_MASK64 = (1 << 64) - 1

_PHILOX_M0 = 0xD2E7470EE14C6C93
_PHILOX_M1 = 0xCA5A826395121157
_WEYL_0 = 0x9E3779B97F4A7C15
_WEYL_1 = 0xBB67AE8584CAA73B
_ROUNDS = 10

#: Fixed key word mixed with the master seed so package streams never
#: collide with a bare Philox(seed) stream.
_DOMAIN = int.from_bytes(b"smp-sim\x01", "big")


def _make_mulhi(a: int):
    a_lo = np.uint64(a & 0xFFFFFFFF)
    a_hi = np.uint64(a >> 32)

    def mulhi(x: np.ndarray) -> np.ndarray:
        x_lo = x & _MASK32
        x_hi = x >> _SH32
        t1 = a_hi * x_lo
        t2 = a_lo * x_hi
        carry = (((a_lo * x_lo) >> _SH32) + (t1 & _MASK32) + (t2 & _MASK32)) >> _SH32
        return a_hi * x_hi + (t1 >> _SH32) + (t2 >> _SH32) + carry

    return mulhi


_mulhi_m0 = _make_mulhi(_PHILOX_M0)
_mulhi_m1 = _make_mulhi(_PHILOX_M1)
_M0 = np.uint64(_PHILOX_M0)
_M1 = np.uint64(_PHILOX_M1)


@functools.lru_cache(maxsize=64)
def _round_keys(key0: int, key1: int) -> tuple[tuple[np.uint64, np.uint64], ...]:
    keys = []
    for r in range(_ROUNDS):
        keys.append(
            (
                np.uint64((key0 + r * _WEYL_0) & _MASK64),
                np.uint64((key1 + r * _WEYL_1) & _MASK64),
            )
        )
    return tuple(keys)


def philox4x64(
    c0: np.ndarray, c1: np.ndarray, c2: np.ndarray, c3: np.ndarray, key0: int, key1: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Philox-4x64-10 block function, vectorized over counter arrays."""
    c0, c1, c2, c3 = np.broadcast_arrays(
        np.atleast_1d(np.asarray(c0, dtype=np.uint64)),
        np.atleast_1d(np.asarray(c1, dtype=np.uint64)),
        np.atleast_1d(np.asarray(c2, dtype=np.uint64)),
        np.atleast_1d(np.asarray(c3, dtype=np.uint64)),
    )
    for k0, k1 in _round_keys(key0 & _MASK64, key1 & _MASK64):
        hi0 = _mulhi_m0(c0)
        lo0 = _M0 * c0
        hi1 = _mulhi_m1(c2)
        lo1 = _M1 * c2
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _to_uniform(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles in [0, 1) using the top 53 bits."""
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _block_words(
    master_seed: int,
    slot,
    trial,
    round_index,
    group,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    return philox4x64(slot, trial, round_index, group, master_seed & _MASK64, _DOMAIN)


def uniform_lanes(
    master_seed: int,
    trial,
    round_index,
    group,
    slot=0,
    n_words: int = 1,
) -> tuple[np.ndarray, ...]:
    """Per-lane uniforms in [0, 1): words ``0..n_words-1`` of one counter block."""
    if not 1 <= n_words <= 4:
        raise ValueError(f"a block holds 4 words, asked for {n_words}")
    words = _block_words(master_seed, slot, trial, round_index, group)
    return tuple(_to_uniform(w) for w in words[:n_words])


@dataclass(frozen=True)
class RngStream:
    """A position in the seed's stream space: (master seed, trial, round, group)."""

    master_seed: int
    trial: int = 0
    round_index: int = 0
    group: int = 0

    def at(self, **path) -> RngStream:
        """A stream with path labels replaced, e.g. ``stream.at(round_index=2)``."""
        return replace(self, **path)

    def uniforms(self, count: int, first_slot: int = 0) -> np.ndarray:
        """``count`` uniforms from word 0 of consecutive slots of this stream."""
        slots = np.arange(first_slot, first_slot + count, dtype=np.uint64)
        (u,) = uniform_lanes(
            self.master_seed, np.uint64(self.trial), np.uint64(self.round_index),
            np.uint64(self.group), slot=slots, n_words=1,
        )
        return u


# --------------------------------------------------------------------------
# Binomial sampling
# --------------------------------------------------------------------------

_INVERSION_MAX_M = 1024
_REJECTION_MIN_MEAN = 10.0


@functools.lru_cache(maxsize=256)
def _inversion_cdf(m: int, p: float) -> np.ndarray:
    """CDF table for inversion sampling; truncated in the far right tail.

    For m > _INVERSION_MAX_M this path is only used when m*p < 10, so the
    table covers the mean plus a huge tail margin; the truncated mass is
    far below the 2^-53 resolution of a double uniform.
    """
    if m <= _INVERSION_MAX_M:
        k_max = m
    else:
        k_max = min(m, int(np.ceil(m * p + 40.0 * np.sqrt(m * p * (1.0 - p)) + 50.0)))
    lf = analytics._log_factorials(m)
    k = np.arange(k_max + 1)
    log_pmf = lf[m] - lf[k] - lf[m - k] + k * np.log(p) + (m - k) * np.log1p(-p)
    cdf = np.cumsum(np.exp(log_pmf))
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


def _sample_inversion(m, p, u, out, lanes) -> None:
    """Exact CDF inversion for lanes grouped by (m, p); one uniform each."""
    m_sel = m[lanes]
    p_sel = p[lanes]
    order = np.lexsort((p_sel, m_sel))
    m_ord = m_sel[order]
    p_ord = p_sel[order]
    boundaries = np.flatnonzero(np.r_[True, (np.diff(m_ord) != 0) | (np.diff(p_ord) != 0)])
    boundaries = np.r_[boundaries, len(m_ord)]
    u_ord = u[lanes][order]
    result = np.empty(len(m_ord), dtype=np.int64)
    for i in range(len(boundaries) - 1):
        lo, hi = boundaries[i], boundaries[i + 1]
        cdf = _inversion_cdf(int(m_ord[lo]), float(p_ord[lo]))
        result[lo:hi] = np.searchsorted(cdf, u_ord[lo:hi], side="right")
    out[lanes[order]] = result


def _sample_btrs(m, p, master_seed, trial, round_index, group, out, lanes, u0, v0) -> None:
    """Transformed rejection for large m with an exact log-PMF acceptance test.

    Envelope parameters follow the published method for binomials with
    m * p >= 10 and p <= 1/2; the acceptance comparison itself uses exact
    log factorials, so accepted draws follow Bin(m, p) exactly.  Attempt
    ``i`` of a lane reads slot ``i`` of that lane's own counter block, so
    the number of retries in one lane never shifts draws in any other.
    """
    m_int = m[lanes]
    m_sel = m_int.astype(np.float64)
    p_sel = p[lanes]
    stddev = np.sqrt(m_sel * p_sel * (1.0 - p_sel))
    b = 1.15 + 2.53 * stddev
    a = -0.0873 + 0.0248 * b + 0.01 * p_sel
    c = m_sel * p_sel + 0.5
    alpha = (2.83 + 5.1 / b) * stddev
    log_p = np.log(p_sel)
    log_q = np.log1p(-p_sel)
    mode = np.floor((m_sel + 1.0) * p_sel)
    lf = analytics._log_factorials(int(m_int.max()))

    def log_pmf(k: np.ndarray, idx: np.ndarray) -> np.ndarray:
        k_int = k.astype(np.int64)
        mm = m_int[idx]
        return (
            lf[mm] - lf[k_int] - lf[mm - k_int] + k * log_p[idx] + (mm - k) * log_q[idx]
        )

    log_pmf_mode = log_pmf(mode, np.arange(len(lanes)))
    group_is_scalar = np.isscalar(group) or np.ndim(group) == 0

    pending = np.arange(len(lanes))
    attempt = 0
    while pending.size:
        if attempt == 0:
            u = u0[lanes[pending]]
            v = v0[lanes[pending]]
        else:
            g = group if group_is_scalar else np.asarray(group)[lanes[pending]]
            u, v = uniform_lanes(
                master_seed, trial[lanes[pending]], round_index, g,
                slot=np.uint64(attempt), n_words=2,
            )
        u = u - 0.5
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            us = 0.5 - np.abs(u)
            k = np.floor((2.0 * a[pending] / us + b[pending]) * u + c[pending])
            in_range = (us > 0.0) & (k >= 0.0) & (k <= m_sel[pending])
            k_safe = np.where(in_range, k, 0.0)
            log_accept = (
                np.log(v) + np.log(alpha[pending])
                - np.log(a[pending] / (us * us) + b[pending])
            )
            ok = in_range & (log_accept <= log_pmf(k_safe, pending) - log_pmf_mode[pending])
        out[lanes[pending[ok]]] = k_safe[ok].astype(np.int64)
        pending = pending[~ok]
        attempt += 1
        if attempt > 10_000:
            raise RuntimeError("rejection sampler failed to terminate")


def sample_binomial_lanes(
    m,
    p,
    master_seed: int,
    trial,
    round_index: int,
    group,
) -> np.ndarray:
    """Per-lane exact Bin(m, p) draws; m, p broadcast against the trial lanes.

    ``trial`` (and optionally ``group``) are arrays of path labels; each
    lane draws from its own counter block.
    """
    trial = np.asarray(trial, dtype=np.uint64)
    m = np.broadcast_to(np.asarray(m, dtype=np.int64), trial.shape).copy()
    p = np.broadcast_to(np.asarray(p, dtype=np.float64), trial.shape).copy()
    if np.any(m < 0):
        raise ValueError("m must be nonnegative")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("p must be in [0, 1]")

    flipped = p > 0.5
    p_eff = np.where(flipped, 1.0 - p, p)
    out = np.zeros(trial.shape, dtype=np.int64)

    active = (m > 0) & (p_eff > 0.0)
    if np.any(active):
        mean = m * p_eff
        inversion = active & ((m <= _INVERSION_MAX_M) | (mean < _REJECTION_MIN_MEAN))
        rejection = active & ~inversion
        u0, v0 = uniform_lanes(master_seed, trial, np.uint64(round_index), group, n_words=2)
        if np.any(inversion):
            _sample_inversion(m, p_eff, u0, out, np.flatnonzero(inversion))
        if np.any(rejection):
            _sample_btrs(
                m, p_eff, master_seed, trial, np.uint64(round_index), group,
                out, np.flatnonzero(rejection), u0, v0,
            )
    return np.where(flipped, m - out, out)


def sample_binomial(m: int, p: float, rng: RngStream) -> int:
    """One exact Bin(m, p) draw from the stream's (trial, round, group) block."""
    draw = sample_binomial_lanes(
        m, p, rng.master_seed, np.array([rng.trial], dtype=np.uint64),
        rng.round_index, np.uint64(rng.group),
    )
    return int(draw[0])
