"""Closed-form interference analysis for the singleton decode attempt.

Models the interference seen by a user that is the only undecoded one on
its pilot in a slot, after its pilot-sharers have been subtracted with the
squared-norm update.  Each of the ``n_it = a_pilot * a_total - 1``
residual interfering terms behaves like an i.i.d. complex Gaussian vector
with per-entry variance equal to the antenna count, which gives the QPSK
hard-decision symbol error probability and, through a bounded-distance
decoder correcting ``t`` errors, the probability that the singleton fails.
The noise contribution is neglected throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import erfc


@dataclass(frozen=True)
class InterferenceScenario:
    """One slot's interference bookkeeping for the probed pilot."""

    m: int          # receive antennas
    a_total: int    # users transmitting in the slot
    a_pilot: int    # users sharing the probed pilot
    n_d: int        # payload symbols
    t: int          # correctable errors

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"antenna count must be >= 1, got {self.m}")
        if self.a_pilot < 1:
            raise ValueError(f"a_pilot must be >= 1, got {self.a_pilot}")
        if self.a_total < self.a_pilot:
            raise ValueError(
                f"a_total={self.a_total} cannot be below a_pilot={self.a_pilot}"
            )
        if self.n_d < 1:
            raise ValueError(f"n_d must be >= 1, got {self.n_d}")
        if self.t < 0:
            raise ValueError(f"t must be nonnegative, got {self.t}")

    @property
    def n_it(self) -> int:
        return interference_term_count(self.a_pilot, self.a_total)


def interference_term_count(a_pilot: int, a_total: int) -> int:
    """Residual interfering terms after subtracting the pilot-sharers."""
    if a_pilot < 1 or a_total < a_pilot:
        raise ValueError(f"need a_total >= a_pilot >= 1, got {a_total}, {a_pilot}")
    return a_pilot * a_total - 1


def symbol_error_probability(m: int, n_it: int) -> float:
    """QPSK hard-decision symbol error probability under ``n_it`` interferers.

    Interference-limited (noise neglected): zero when there is no
    interference, strictly decreasing in the antenna count otherwise.
    """
    if m < 1:
        raise ValueError(f"antenna count must be >= 1, got {m}")
    if n_it < 0:
        raise ValueError(f"interferer count must be nonnegative, got {n_it}")
    if n_it == 0:
        return 0.0
    e = float(erfc(math.sqrt(m / (2.0 * n_it))))
    return e - 0.25 * e * e


def _binomial_upper_tail(n: int, t: int, p: float) -> float:
    """P(X > t) for X ~ Binomial(n, p), summed term-by-term in log domain.

    The upper tail is accumulated directly (no 1 - CDF cancellation), so
    values many decades below one stay accurate to roughly 1e-13 relative.
    """
    if p <= 0.0:
        return 0.0
    if t < 0:
        return 1.0
    if t >= n:
        return 0.0
    if p >= 1.0:
        return 1.0
    log_p = math.log(p)
    log_q = math.log1p(-p)
    terms = []
    for d in range(t + 1, n + 1):
        log_term = math.log(math.comb(n, d)) + d * log_p + (n - d) * log_q
        terms.append(math.exp(log_term))
    return min(1.0, math.fsum(terms))


def singleton_failure_probability(scenario: InterferenceScenario) -> float:
    """Probability that the probed singleton user fails to decode.

    The packet fails when more than ``t`` of its ``n_d`` symbols are in
    error, with symbol errors i.i.d. at the interference-limited rate.
    """
    p_e = symbol_error_probability(scenario.m, scenario.n_it)
    return _binomial_upper_tail(scenario.n_d, scenario.t, p_e)


def pab_estimate_error_variance(a_total: int, n_d: int) -> float:
    """Per-entry error variance of the payload-correlation channel estimate.

    With ``a_total`` users superimposed in the slot and none subtracted yet,
    each of the other ``a_total - 1`` payloads leaks into the estimate with
    variance ``1 / n_d``.
    """
    if a_total < 1:
        raise ValueError(f"a_total must be >= 1, got {a_total}")
    if n_d < 1:
        raise ValueError(f"n_d must be >= 1, got {n_d}")
    return (a_total - 1) / n_d


def singleton_failure_curve(m: int, n_d: int, t: int, a_pilot: int, a_values):
    """Tabulate the singleton failure probability over slot loads.

    Returns (a_total, p_fail) pairs for every slot load in ``a_values``.
    """
    curve = []
    for a_total in a_values:
        scenario = InterferenceScenario(
            m=m, a_total=int(a_total), a_pilot=a_pilot, n_d=n_d, t=t
        )
        curve.append((int(a_total), singleton_failure_probability(scenario)))
    return curve
