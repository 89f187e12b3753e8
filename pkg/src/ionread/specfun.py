"""Scalar special functions for the photon-count distributions.

Only two families are needed: the regularized lower incomplete gamma
function of integer order, and the Poisson pmf. Both are evaluated in log
space so that photon numbers up to ~1e6 neither overflow nor lose the
tail. Everything here is pure and thread safe.
"""

from __future__ import annotations

import math

from .errors import DomainError

_EPS = 1.0e-16
_MAX_ITER = 800


def _integer_order(a) -> int:
    if isinstance(a, bool):
        raise DomainError(f"gamma order must be a positive integer, got {a!r}")
    if isinstance(a, float):
        if not a.is_integer():
            raise DomainError(f"gamma order must be a positive integer, got {a}")
        a = int(a)
    if not isinstance(a, int):
        raise DomainError(f"gamma order must be a positive integer, got {a!r}")
    if a < 1:
        raise DomainError(f"gamma order must be >= 1, got {a}")
    return a


def _log_prefactor(a: int, x: float) -> float:
    # log of exp(-x) x^a / Gamma(a); factorials always via log-gamma
    return -x + a * math.log(x) - math.lgamma(a)


def _lower_series(a: int, x: float) -> float:
    # sum_{k>=0} x^k Gamma(a) / Gamma(a+1+k), converges fast for x < a+1
    term = 1.0 / a
    total = term
    denom = float(a)
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(_log_prefactor(a, x))
    raise RuntimeError(f"series for P({a}, {x}) did not converge")


def _upper_continued_fraction(a: int, x: float) -> float:
    # modified Lentz evaluation of the complement Q(a, x), stable for x >= a+1
    tiny = 1.0e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(_log_prefactor(a, x))
    raise RuntimeError(f"continued fraction for Q({a}, {x}) did not converge")


def reg_inc_gamma(a, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x), integer a >= 1.

    P(a, x) = (1/(a-1)!) * integral_0^x exp(-t) t^(a-1) dt, so P(a, 0) = 0
    and P(a, inf) = 1. For integer order this equals the probability that a
    Poisson variable with mean x is >= a. The series expansion is used for
    x < a + 1 and the continued fraction of the complement otherwise.
    """
    a = _integer_order(a)
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        raise DomainError(f"gamma argument must be a real number, got {x!r}")
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise DomainError(f"gamma argument must be finite and >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _lower_series(a, x)
    return 1.0 - _upper_continued_fraction(a, x)


def log_poisson_pmf(n, mean: float) -> float:
    """log of the Poisson pmf at count n; -inf where the pmf is zero."""
    if isinstance(n, float):
        if not n.is_integer():
            raise DomainError(f"count must be a non-negative integer, got {n}")
        n = int(n)
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise DomainError(f"count must be a non-negative integer, got {n!r}")
    mean = float(mean)
    if not math.isfinite(mean) or mean < 0.0:
        raise DomainError(f"Poisson mean must be finite and >= 0, got {mean}")
    if mean == 0.0:
        return 0.0 if n == 0 else -math.inf
    return n * math.log(mean) - mean - math.lgamma(n + 1)


def poisson_pmf(n, mean: float) -> float:
    """Poisson pmf exp(-mean) mean^n / n!, computed in log space."""
    return math.exp(log_poisson_pmf(n, mean))
