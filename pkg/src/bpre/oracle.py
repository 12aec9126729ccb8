"""Brute-force exact laws of S_n and Z_n for small instances.

Ground truth for bound-domination and Monte Carlo checks: the environment law
is enumerated completely (cap 10^6 sequences) and, per sequence, the law of
Z_n is computed by generation-wise dynamic programming over integer
populations (cap k_max^n <= 2^20). Probabilities are floats accumulated with
compensated summation; there is no exact-rational mode.

Tail events compare a normalized statistic (stat - n*mu)/(n*M) against the
threshold x with a closed tail (>=). Exact-boundary atoms, such as the
all-max-state sequence at x = 1 under M_tight, sit precisely at the
threshold, where float summation order would otherwise decide inclusion by
one ulp; every comparison therefore allows the slack TIE_EPS on the
normalized scale. Gaps between distinct achievable atoms at feasible sizes
are many orders of magnitude wider, and the slack direction only enlarges
the reported tail, which is the conservative side for domination checks.
The Monte Carlo estimators apply the same rule, so oracle and estimate agree
on every sample path.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.stats

from .env import EnvDistribution, EnvState, ModelMoments, ResourceCapError, state_mean

TIE_EPS = 1e-9

MAX_SEQUENCES = 10 ** 6
DEFAULT_DP_CAP = 1 << 20

# math.comb stays float-convertible up to here; scipy's pmf takes over beyond.
_EXACT_COMB_MAX = 1000


@dataclass(frozen=True)
class WeightedSequence:
    """One fully specified environment sequence and its product probability."""

    states: tuple[str, ...]
    probability: float

    def __post_init__(self) -> None:
        if not 0.0 < self.probability <= 1.0:
            raise ValueError(f"probability {self.probability!r} outside (0,1]")


@dataclass(frozen=True)
class ExactPmf:
    """Exact law of an integer population: (value, probability), ascending."""

    support: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        values = [v for v, _ in self.support]
        if values != sorted(set(values)):
            raise ValueError("support values must be strictly increasing")
        total = math.fsum(p for _, p in self.support)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {total!r}")

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in self.support)


def _check_enumeration_cap(env: EnvDistribution, n: int) -> None:
    count = len(env.states) ** n
    if count > MAX_SEQUENCES:
        raise ResourceCapError(
            f"{len(env.states)}^{n} = {count} environment sequences exceeds "
            f"the cap {MAX_SEQUENCES}")


def _iter_state_sequences(env: EnvDistribution,
                          n: int) -> Iterator[tuple[tuple[EnvState, ...], float]]:
    _check_enumeration_cap(env, n)
    for combo in itertools.product(env.states, repeat=n):
        prob = math.prod(mass for _, mass in combo)
        yield tuple(state for state, _ in combo), prob


def enumerate_env_sequences(env: EnvDistribution, n: int) -> Iterator[WeightedSequence]:
    """All k_0^n environment sequences with product probabilities."""
    if n < 1:
        raise ValueError(f"n={n!r} must be >= 1")
    for states, prob in _iter_state_sequences(env, n):
        yield WeightedSequence(tuple(s.label for s in states), prob)


def exact_sn_tail(env: EnvDistribution, n: int, x: float, M: float, mu: float) -> float:
    """Exact P((S_n - n*mu)/(n*M) >= x) by complete enumeration.

    The event is the normalized form of the walk tail, the same quantity the
    Monte Carlo estimator counts; ties at the threshold are included.
    """
    if not M > 0.0:
        raise ValueError(f"M={M!r} must be > 0")
    if n < 1:
        raise ValueError(f"n={n!r} must be >= 1")
    log_mean = {state.label: math.log(state_mean(state)) for state, _ in env.states}
    hits = []
    for states, prob in _iter_state_sequences(env, n):
        s_n = math.fsum(log_mean[state.label] for state in states)
        if (s_n - n * mu) / (n * M) >= x - TIE_EPS:
            hits.append(prob)
    return math.fsum(hits)


def _binomial_row(z: int, p: float) -> np.ndarray:
    """P(Bin(z, p) = j) for j = 0..z."""
    if z <= _EXACT_COMB_MAX:
        q = 1.0 - p
        return np.array([float(math.comb(z, j)) * p ** j * q ** (z - j)
                         for j in range(z + 1)])
    return scipy.stats.binom.pmf(np.arange(z + 1), z, p)


def _convolve(dist: dict[int, float], pmf_entries: dict[int, float]) -> dict[int, float]:
    out: dict[int, list[float]] = defaultdict(list)
    for value, pv in dist.items():
        for k, pk in pmf_entries.items():
            if pk > 0.0:
                out[value + k].append(pv * pk)
    return {value: math.fsum(parts) for value, parts in out.items()}


def exact_population_distribution(env_seq: Sequence[EnvState],
                                  cap: int = DEFAULT_DP_CAP) -> ExactPmf:
    """Exact law of Z_n under a fixed environment sequence.

    Generation DP: the law of Z_{k+1} given Z_k = z is the z-fold convolution
    of the offspring pmf. {1,2}-supported states take the shifted-binomial
    row z + Bin(z, p_2) with exact binomial coefficients; general states walk
    a cached convolution power ladder. Contributions to each output value are
    combined with compensated summation.
    """
    n = len(env_seq)
    if n < 1:
        raise ValueError("environment sequence is empty")
    k_max = max(max(state.pmf.support) for state in env_seq)
    if k_max ** n > cap:
        raise ResourceCapError(f"k_max^n = {k_max}^{n} exceeds the DP cap {cap}")

    dist = {1: 1.0}
    for state in env_seq:
        entries = state.pmf.entries
        positive = {k: p for k, p in entries.items() if p > 0.0}
        out: dict[int, list[float]] = defaultdict(list)
        if set(positive) <= {1, 2}:
            p2 = positive.get(2, 0.0)
            for z, pz in sorted(dist.items()):
                if z == 0:
                    out[0].append(pz)
                    continue
                row = _binomial_row(z, p2)
                for j, pj in enumerate(row):
                    if pj > 0.0:
                        out[z + j].append(pz * float(pj))
        else:
            # Convolution power ladder, advanced once per distinct z ascending.
            power: dict[int, float] = {0: 1.0}
            power_order = 0
            for z, pz in sorted(dist.items()):
                while power_order < z:
                    power = _convolve(power, positive)
                    power_order += 1
                for value, pv in power.items():
                    out[value].append(pz * pv)
        dist = {value: math.fsum(parts) for value, parts in sorted(out.items())}
    return ExactPmf(tuple(sorted(dist.items())))


def exact_logZn_tail(env: EnvDistribution, n: int, x: float,
                     moments: ModelMoments, M: float,
                     cap: int = DEFAULT_DP_CAP) -> float:
    """Exact P((log Z_n - n*mu)/(n*M) >= x), mixing the per-sequence Z_n laws
    over the enumerated environment law. Extinct mass (Z_n = 0) never lies in
    an upper tail; ties follow the TIE_EPS rule."""
    if not M > 0.0:
        raise ValueError(f"M={M!r} must be > 0")
    mu = moments.mu
    total = []
    for states, prob in _iter_state_sequences(env, n):
        pmf = exact_population_distribution(states, cap)
        tail = math.fsum(
            p for v, p in pmf.support
            if v > 0 and (math.log(v) - n * mu) / (n * M) >= x - TIE_EPS)
        if tail > 0.0:
            total.append(prob * tail)
    return math.fsum(total)


def exact_EWn(env: EnvDistribution, n: int, cap: int = DEFAULT_DP_CAP) -> float:
    """E W_n via the exact laws: sum over sequences of P(seq) * E[Z_n]/Pi_n.

    The martingale identity makes this 1; the DP mean enters the numerator,
    so the value closing to 1 within 1e-9 certifies the whole oracle chain.
    """
    parts = []
    for states, prob in _iter_state_sequences(env, n):
        pmf = exact_population_distribution(states, cap)
        pi_n = math.prod(state_mean(state) for state in states)
        parts.append(prob * (pmf.mean / pi_n))
    return math.fsum(parts)
