"""Tardos primitives: parameters, bias sampling, columns, scores, codelengths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dyntrace.errors import ParameterError

# Inner binary scheme constants. Codelength l = D_LEN c^2 ln(n/eps1),
# threshold Z = D_THR c ln(n/eps1), cutoff delta = 1 / (D_CUT c^(4/3)).
D_LEN = math.pi**2 / 2
D_THR = math.pi
D_CUT = 4.0

# Sentinels used in every symbol array.
LAMBDA = -1
DISCONNECTED = -2


def _log_ratio(n: float, eps1: float) -> float:
    ratio = n / eps1
    if not ratio > 1:
        raise ParameterError(f"n/eps1 must exceed 1, got {ratio!r}")
    return math.log(ratio)


def codelength_static(c: float, n: float, eps1: float, d_len: float = D_LEN) -> int:
    """Binary dynamic Tardos codelength ``ceil(d_len * c^2 * ln(n/eps1))``.

    With ``d_len = pi^2/2`` this is the leading term of the binary
    codelength; lower-order corrections are not included.
    """
    if c < 1 or n < 2 or not 0 < eps1 < 1 or d_len <= 0:
        raise ParameterError(f"bad codelength arguments c={c} n={n} eps1={eps1} d_len={d_len}")
    return math.ceil(d_len * c * c * _log_ratio(n, eps1))


def codelength_qary_real(c: float, n: float, eps1: float, q: int) -> float:
    """Unrounded leading term ``pi^2 * c^2 / q * ln(n/eps1)``."""
    if q < 2 or q % 2:
        raise ParameterError(f"alphabet size must be even and >= 2, got {q}")
    return math.pi**2 * c * c / q * _log_ratio(n, eps1)


def codelength_qary_predicted(c: float, n: float, eps1: float, q: int) -> int:
    """Leading-order q-ary dynamic Tardos codelength (order terms dropped)."""
    return math.ceil(codelength_qary_real(c, n, eps1, q))


def threshold(c: float, n: float, eps1: float, d_thr: float = D_THR) -> float:
    """Accusation threshold ``Z = d_thr * c * ln(n/eps1)``."""
    if c <= 0 or n <= 0 or d_thr <= 0 or not 0 < eps1 < 1:
        raise ParameterError(f"bad threshold arguments c={c} n={n} eps1={eps1} d_thr={d_thr}")
    return d_thr * c * _log_ratio(n, eps1)


def cutoff(c: float, d_cut: float = D_CUT) -> float:
    """Bias cutoff ``delta = 1 / (d_cut * c^(4/3))``; must land below 1/2."""
    if c < 1 or d_cut <= 0:
        raise ParameterError(f"bad cutoff arguments c={c} d_cut={d_cut}")
    delta = 1.0 / (d_cut * c ** (4.0 / 3.0))
    if delta >= 0.5:
        raise ParameterError(f"cutoff {delta} >= 1/2; increase c or d_cut")
    return delta


@dataclass(frozen=True)
class SchemeParams:
    """Global tracing parameters."""

    c: int
    n: int
    eps1: float
    eps2: float
    q: int = 2
    d_len: float = D_LEN
    d_thr: float = D_THR
    d_cut: float = D_CUT

    def __post_init__(self) -> None:
        if not 1 <= self.c < self.n:
            raise ParameterError(f"need 1 <= c < n, got c={self.c} n={self.n}")
        if not (0 < self.eps1 < 1 and 0 < self.eps2 < 1):
            raise ParameterError(f"error bounds must lie in (0, 1): {self.eps1}, {self.eps2}")
        if self.q < 2 or self.q % 2:
            raise ParameterError(f"q must be even and >= 2, got {self.q}")
        if min(self.d_len, self.d_thr, self.d_cut) <= 0:
            raise ParameterError("scheme constants must be positive")
        # Only the cutoff can be invalid once the checks above pass.
        cutoff(self.c, self.d_cut)

    @property
    def k(self) -> int:
        return self.q // 2

    @property
    def delta(self) -> float:
        return cutoff(self.c, self.d_cut)

    @property
    def length(self) -> int:
        return codelength_static(self.c, self.n, self.eps1, self.d_len)

    @property
    def threshold(self) -> float:
        return threshold(self.c, self.n, self.eps1, self.d_thr)


@dataclass(frozen=True)
class BiasVector:
    p: np.ndarray
    delta: float

    def __post_init__(self) -> None:
        if self.p.size and (self.p.min() < self.delta or self.p.max() > 1 - self.delta):
            raise ParameterError("bias outside [delta, 1 - delta]")

    def __len__(self) -> int:
        return len(self.p)


def _arcsine_range(delta: float) -> tuple[float, float]:
    if not 0 < delta < 0.5:
        raise ParameterError(f"delta must lie in (0, 1/2), got {delta}")
    lo = math.asin(math.sqrt(delta))
    return lo, math.pi / 2 - lo


def sample_bias(count: int, delta: float, rng: np.random.Generator) -> BiasVector:
    """Draw ``count`` biases from the arcsine law truncated to [delta, 1-delta].

    Inverse transform: ``p = sin(r)^2`` with ``r`` uniform on
    ``[asin(sqrt(delta)), pi/2 - asin(sqrt(delta))]``.
    """
    if count < 0:
        raise ParameterError("count must be non-negative")
    lo, hi = _arcsine_range(delta)
    r = rng.uniform(lo, hi, size=count)
    # Rounding in sin^2 can leave the closed interval by one ulp.
    p = np.clip(np.sin(r) ** 2, delta, 1 - delta)
    return BiasVector(p, delta)


def draw_bias(delta: float, rng: np.random.Generator) -> float:
    """Scalar form of :func:`sample_bias` (same law, one draw from ``rng``)."""
    lo, hi = _arcsine_range(delta)
    p = math.sin(rng.uniform(lo, hi)) ** 2
    return min(max(p, delta), 1 - delta)


def bias_cdf(x: float | np.ndarray, delta: float) -> float | np.ndarray:
    """Closed-form CDF of the truncated arcsine bias distribution."""
    lo, hi = _arcsine_range(delta)
    x = np.clip(x, delta, 1 - delta)
    return (np.arcsin(np.sqrt(x)) - lo) / (hi - lo)


def score_weights(p: float) -> tuple[float, float]:
    """Return ``(sqrt((1-p)/p), sqrt(p/(1-p)))``."""
    if not 0 < p < 1:
        raise ParameterError(f"bias must lie in (0, 1), got {p}")
    return math.sqrt((1 - p) / p), math.sqrt(p / (1 - p))


def score_contribution(user_symbol: int, pirate_symbol: int, p: float) -> float:
    """Symmetric Tardos score of one user bit against one pirate bit."""
    a, b = score_weights(p)
    if pirate_symbol:
        return a if user_symbol else -b
    return b if not user_symbol else -a


def score_column(bits: np.ndarray, pirate_bit: int, p: float) -> np.ndarray:
    """Vectorised :func:`score_contribution` over a column of user bits."""
    a, b = score_weights(p)
    if pirate_bit:
        return np.where(bits == 1, a, -b)
    return np.where(bits == 0, b, -a)


def score_moments(p: float, pirate_symbol: int) -> tuple[float, float]:
    """Exact mean and variance of an innocent user's score at bias ``p``."""
    s1 = score_contribution(1, pirate_symbol, p)
    s0 = score_contribution(0, pirate_symbol, p)
    mean = p * s1 + (1 - p) * s0
    second = p * s1 * s1 + (1 - p) * s0 * s0
    return mean, second - mean * mean


def generate_column(
    p: float, users, rng: np.random.Generator, offset: int = 0
) -> np.ndarray:
    """One symbol per entry of ``users``: ``offset + 1`` with probability ``p``, else ``offset``."""
    bits = (rng.random(len(users)) < p).astype(np.int16)
    return bits + offset if offset else bits
