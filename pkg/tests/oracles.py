"""Independent brute-force oracles used by the test suite.

Everything here is deliberately naive: direct enumeration and exact
integer combinatorics, with none of the log-space machinery of the
package under test.
"""

from __future__ import annotations

import math
from fractions import Fraction


def binomial_pmf_direct(m: int, p: float, k: int) -> float:
    """PMF via exact integer binomial coefficients."""
    return math.comb(m, k) * p**k * (1.0 - p) ** (m - k)


def binomial_cdf_direct(m: int, p: float, k: int) -> float:
    if k < 0:
        return 0.0
    return sum(binomial_pmf_direct(m, p, j) for j in range(0, min(k, m) + 1))


def comparison_direct(m1: int, m2: int, p: float, offset: int) -> float:
    """P{Bin(m1,p) + offset >= Bin(m2,p)} by summing the joint PMF."""
    total = 0.0
    for k1 in range(m1 + 1):
        for k2 in range(m2 + 1):
            if k1 + offset >= k2:
                total += binomial_pmf_direct(m1, p, k1) * binomial_pmf_direct(m2, p, k2)
    return total


def comparison_fraction(m1: int, m2: int, p: Fraction, offset: int) -> Fraction:
    """Same comparison in exact rational arithmetic (for rational p)."""
    q = 1 - p

    def pmf(m: int, k: int) -> Fraction:
        return math.comb(m, k) * p**k * q ** (m - k)

    total = Fraction(0)
    for k1 in range(m1 + 1):
        for k2 in range(m2 + 1):
            if k1 + offset >= k2:
                total += pmf(m1, k1) * pmf(m2, k2)
    return total


def global_pattern_round_law(zeros: int, ones: int, q: float) -> list[float]:
    """Exact one-round law of the zero-count by enumerating EVERY loss mask.

    One mask covers all 2n(2n-1) directed messages at once; exponential in
    the square of the agent count, usable only for 2n = 2 or 4.  Exists to
    validate the package's receiver-factorized enumeration.
    """
    total = zeros + ones
    bits = [0] * zeros + [1] * ones
    n_msgs = total * (total - 1)
    law = [0.0] * (total + 1)
    # message slot (i, j), j != i: the message sent by j to receiver i
    slots = [(i, j) for i in range(total) for j in range(total) if j != i]
    for mask in range(1 << n_msgs):
        delivered = bin(mask).count("1")
        weight = (1.0 - q) ** delivered * q ** (n_msgs - delivered)
        next_zeros = 0
        for i in range(total):
            n0 = 1 if bits[i] == 0 else 0
            n1 = 1 - n0
            for s, (recv, sender) in enumerate(slots):
                if recv == i and (mask >> s) & 1:
                    if bits[sender] == 0:
                        n0 += 1
                    else:
                        n1 += 1
            if n0 > n1 or (n0 == n1 and bits[i] == 0):
                next_zeros += 1
        law[next_zeros] += weight
    return law


def normal_cdf_quadrature(t: float, steps: int = 200_000) -> float:
    """Phi(t) by Simpson quadrature over the density (independent of erf)."""
    lo = min(t - 12.0, -12.0)
    if t <= lo:
        return 0.0
    h = (t - lo) / steps
    xs = [lo + i * h for i in range(steps + 1)]
    dens = [math.exp(-x * x / 2.0) / math.sqrt(2.0 * math.pi) for x in xs]
    acc = dens[0] + dens[-1] + 4.0 * sum(dens[1:-1:2]) + 2.0 * sum(dens[2:-1:2])
    return acc * h / 3.0
