"""Hoeffding-type tail bound H_n(x, v): log-space evaluation, derivative,
relaxation, and the geometric tail bound C*delta^m/(M*sqrt(n)).

Everything is computed on log H and exponentiated last; the direct product
form underflows for moderate parameters. The variance parameter enters only
through w = v^2, and w is formed once so that identities like H(n, 0, v) = 1
hold exactly in floating point, not just up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundQuery:
    """Evaluation point: horizon n, standardized threshold x, variance v."""

    n: int
    x: float
    v: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise ValueError(f"n={self.n!r} must be a positive integer")
        if not (math.isfinite(self.x) and self.x >= 0.0):
            raise ValueError(f"x={self.x!r} must be finite and >= 0")
        if not (math.isfinite(self.v) and self.v > 0.0):
            raise ValueError(f"v={self.v!r} must be finite and > 0")


@dataclass(frozen=True)
class Theorem1Params:
    """Parameters of the geometric tail bound: C * delta^m / (M * sqrt(n))."""

    n: int
    m: int
    M: float
    C: float
    delta: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"n={self.n!r} must be a positive integer")
        if not isinstance(self.m, int) or not 1 <= self.m <= self.n:
            raise ValueError(f"m={self.m!r} must be an integer in [1, n]")
        if not self.M > 0.0:
            raise ValueError(f"M={self.M!r} must be > 0")
        if not self.C > 0.0:
            raise ValueError(f"C={self.C!r} must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta={self.delta!r} must be in (0,1)")


def log_H(q: BoundQuery) -> float:
    """log of H_n(x, v), -inf where the indicator kills the bound (x > n).

    At x = n the factor (n/(n-x))^(n-x) is the 0^0 form; we take its
    continuous limit 1, giving H_n(n, v) = (v^2/(n+v^2))^n. The literal
    convention H_n(n, v) = 1 would break monotonicity in x.
    """
    n, x, w = float(q.n), q.x, q.v * q.v
    if x > n:
        return -math.inf
    if x == n:
        return n * (math.log(w) - math.log(n + w))
    term_var = (x + w) * (math.log(w) - math.log(x + w))
    term_count = (n - x) * (math.log(n) - math.log(n - x))
    return (n / (n + w)) * (term_var + term_count)


def H(q: BoundQuery) -> float:
    """The bound itself, exp(log_H); 0 beyond the indicator."""
    lh = log_H(q)
    return 0.0 if lh == -math.inf else math.exp(lh)


def H_upper(x: float, v: float) -> float:
    """Relaxation e^x * (v^2/(x+v^2))^(x+v^2), an upper bound for every H_n."""
    if not (math.isfinite(x) and x >= 0.0):
        raise ValueError(f"x={x!r} must be finite and >= 0")
    if not (math.isfinite(v) and v > 0.0):
        raise ValueError(f"v={v!r} must be finite and > 0")
    w = v * v
    return math.exp(x + (x + w) * (math.log(w) - math.log(x + w)))


def dH_dx(q: BoundQuery) -> float:
    """Partial derivative of H in x on [0, n): (n/(n+v^2)) * H * log(...).

    Zero only at x = 0, strictly negative on (0, n); undefined at x >= n.
    """
    n, x, w = float(q.n), q.x, q.v * q.v
    if x >= n:
        raise ValueError(f"dH_dx needs 0 <= x < n, got x={x:g}, n={q.n}")
    ratio = (w * (n - x)) / (n * (w + x))
    return (n / (n + w)) * H(q) * math.log(ratio)


def sn_tail_bound(n: int, x: float, sigma: float, M: float) -> float:
    """Certified upper bound H_n(x, v_n) on P((S_n - n*mu)/M >= x), with
    v_n = sqrt(n) * sigma / M."""
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ValueError(f"sigma={sigma!r} must be finite and > 0")
    if not (math.isfinite(M) and M > 0.0):
        raise ValueError(f"M={M!r} must be finite and > 0")
    v = math.sqrt(n) * sigma / M
    return H(BoundQuery(n=n, x=x, v=v))


def theorem1_bound(p: Theorem1Params) -> float:
    """C * delta^m / (M * sqrt(n)); independent of the threshold x >= 3."""
    return p.C * p.delta ** p.m / (p.M * math.sqrt(p.n))
