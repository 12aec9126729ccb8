"""Monte Carlo estimation of tail probabilities and martingale-increment
decay, with exact binomial confidence intervals and geometric-decay fitting.

Trials are partitioned into fixed blocks of BLOCK_TRIALS; block b draws from
the Philox stream keyed by (seed, domain, b) regardless of how many workers
process the blocks, and partial results are reduced in block order. Estimates
are therefore bit-identical for any worker count. Within a block the draw
order is pinned: the environment uniform matrix first, then per generation
one offspring pass per state in declaration order, exact binomial draws
before Gaussian-approximate ones.

Tail events use the same normalized statistic and TIE_EPS closed-tail rule
as the exact oracle (see oracle module docstring), so the two agree on every
sample path.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.stats

from .env import ConfigError, EnvDistribution, ResourceCapError, compute_moments
from .oracle import TIE_EPS
from .simulate import (DEFAULT_EXACT_THRESHOLD, DEFAULT_POPULATION_CAP,
                       DOMAIN_SN, DOMAIN_TRAJ, EnvTables, step_population, stream)

BLOCK_TRIALS = 16384

MIN_TRIALS = 1000

# Vectorized int64 stepping is valid only while k_max^n cannot overflow;
# beyond this the per-trial arbitrary-precision path takes over. The choice
# depends only on (env, n), never on sampled values, so runs stay replayable.
_INT64_SAFE = 1 << 62


@dataclass(frozen=True)
class TailEstimate:
    hits: int
    trials: int
    point: float
    ci_low: float
    ci_high: float
    level: float
    threshold_x: float
    n: int

    def __post_init__(self) -> None:
        if not 0 <= self.hits <= self.trials:
            raise ValueError(f"hits={self.hits} outside [0, {self.trials}]")
        if not self.ci_low <= self.point <= self.ci_high:
            raise ValueError("confidence interval does not bracket the point estimate")


class IncrementStat(NamedTuple):
    k: int
    mean: float
    stderr: float


@dataclass(frozen=True)
class DecayFit:
    """Least-squares geometric fit mean_k ~ c * delta^k on the log scale."""

    increments: tuple[tuple[int, float], ...]
    c_hat: float
    delta_hat: float
    r2: float

    def __post_init__(self) -> None:
        if not self.increments:
            raise ValueError("increments are empty")
        if not self.c_hat > 0.0:
            raise ValueError(f"c_hat={self.c_hat!r} must be > 0")


def binomial_ci(hits: int, trials: int, level: float) -> tuple[float, float]:
    """Exact two-sided equal-tailed (Clopper-Pearson) binomial interval.

    Beta-quantile characterization; the boundary cases use the closed forms
    (alpha/2)^(1/trials) and 1 - (alpha/2)^(1/trials).
    """
    if trials < 1:
        raise ValueError(f"trials={trials!r} must be >= 1")
    if not 0 <= hits <= trials:
        raise ValueError(f"hits={hits!r} outside [0, {trials}]")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level={level!r} must be in (0,1)")
    half_alpha = (1.0 - level) / 2.0
    if hits == 0:
        low = 0.0
    elif hits == trials:
        low = half_alpha ** (1.0 / trials)
    else:
        low = float(scipy.stats.beta.ppf(half_alpha, hits, trials - hits + 1))
    if hits == trials:
        high = 1.0
    elif hits == 0:
        # 1 - (alpha/2)^(1/trials) via expm1: the direct subtraction loses
        # ~5 digits to cancellation once trials is large.
        high = -math.expm1(math.log(half_alpha) / trials)
    else:
        high = float(scipy.stats.beta.ppf(1.0 - half_alpha, hits + 1, trials - hits))
    return low, high


def _blocks(trials: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_TRIALS, trials - b * BLOCK_TRIALS))
            for b in range((trials + BLOCK_TRIALS - 1) // BLOCK_TRIALS)]

def _map_blocks(fn, trials: int, workers: int) -> list:
    """Run fn(block_index, block_size) over all blocks, results in block order."""
    blocks = _blocks(trials)
    if workers <= 1:
        return [fn(b, size) for b, size in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pair: fn(*pair), blocks))


def _require_trials(trials: int) -> None:
    if trials < MIN_TRIALS:
        raise ValueError(f"insufficient trials: {trials} < {MIN_TRIALS}")


def _require_no_extinction(env: EnvDistribution) -> None:
    bad = [s.label for s, _ in env.states if s.pmf.p0 > 0.0]
    if bad:
        raise ConfigError(
            f"extinction possible (p0 > 0) in states: {', '.join(bad)}")


def mc_tail_sn(env: EnvDistribution, n: int, x: float, M: float, trials: int,
               seed: int, level: float = 0.99, workers: int = 1) -> TailEstimate:
    """Estimate P((S_n - n*mu)/(n*M) >= x) from environment draws alone.

    S_n needs no offspring sampling, so a trial is just n state picks.
    """
    _require_trials(trials)
    if not M > 0.0:
        raise ValueError(f"M={M!r} must be > 0")
    if n < 1:
        raise ValueError(f"n={n!r} must be >= 1")
    tables = EnvTables(env)
    mu = compute_moments(env).mu
    cutoff = x - TIE_EPS

    def run_block(b: int, size: int) -> int:
        rng = stream(seed, DOMAIN_SN, b)
        idx = tables.pick_states(rng.random((size, n)))
        s_n = tables.X[idx].sum(axis=1)
        return int(np.count_nonzero((s_n - n * mu) / (n * M) >= cutoff))

    hits = sum(_map_blocks(run_block, trials, workers))
    low, high = binomial_ci(hits, trials, level)
    return TailEstimate(hits=hits, trials=trials, point=hits / trials,
                        ci_low=low, ci_high=high, level=level,
                        threshold_x=x, n=n)


def _offspring_vector(z: np.ndarray, descriptor, rng: np.random.Generator,
                      threshold: int) -> np.ndarray:
    """Vectorized one-generation totals for one state; z is int64, z >= 1."""
    if descriptor[0] == "binary":
        p2 = descriptor[1]
        if p2 <= 0.0:
            return z
        if p2 >= 1.0:
            return 2 * z
        return z + _binomial_vector(z, p2, rng, threshold)
    _, chain, k_last = descriptor
    remaining = z.copy()
    total = np.zeros_like(z)
    for k, cond_p in chain:
        if cond_p <= 0.0:
            continue
        if cond_p >= 1.0:
            c = remaining.copy()
        else:
            c = _binomial_vector(remaining, cond_p, rng, threshold)
        total += k * c
        remaining -= c
    return total + k_last * remaining


def _binomial_vector(trials: np.ndarray, p: float, rng: np.random.Generator,
                     threshold: int) -> np.ndarray:
    small = trials <= threshold
    out = np.zeros_like(trials)
    if small.any():
        out[small] = rng.binomial(trials[small], p)
    if not small.all():
        big = trials[~small].astype(np.float64)
        mean = big * p
        sd = np.sqrt(big * p * (1.0 - p))
        draw = np.rint(mean + sd * rng.standard_normal(big.size))
        out[~small] = np.clip(draw, 0.0, big).astype(np.int64)
    return out


def _vector_path_ok(env: EnvDistribution, n: int) -> bool:
    return env.k_max ** n <= _INT64_SAFE


def _final_logz_block(tables: EnvTables, n: int, size: int,
                      rng: np.random.Generator, threshold: int) -> np.ndarray:
    idx = tables.pick_states(rng.random((size, n)))
    z = np.ones(size, dtype=np.int64)
    for k in range(n):
        col = idx[:, k]
        for s in range(len(tables.labels)):
            sel = np.nonzero(col == s)[0]
            if sel.size:
                z[sel] = _offspring_vector(z[sel], tables.samplers[s], rng, threshold)
    return np.log(z.astype(np.float64))


def _final_logz_block_big(tables: EnvTables, n: int, size: int,
                          rng: np.random.Generator, threshold: int,
                          cap: int) -> np.ndarray:
    """Arbitrary-precision fallback; same env-matrix-first draw order."""
    idx = tables.pick_states(rng.random((size, n)))
    out = np.empty(size, dtype=np.float64)
    for t in range(size):
        z = 1
        for k in range(n):
            z = step_population(z, tables.states[idx[t, k]], rng, threshold)
            if z > cap:
                raise ResourceCapError(
                    f"population reached {z.bit_length()} bits, cap is "
                    f"{cap.bit_length() - 1} bits")
            if z == 0:
                raise RuntimeError("trajectory went extinct despite P0_ZERO")
        out[t] = math.log(z)
    return out


def mc_tail_logzn(env: EnvDistribution, n: int, x: float, M: float, trials: int,
                  seed: int, level: float = 0.99, workers: int = 1,
                  exact_sampling_threshold: int = DEFAULT_EXACT_THRESHOLD,
                  population_cap: int = DEFAULT_POPULATION_CAP) -> TailEstimate:
    """Estimate P((log Z_n - n*mu)/(n*M) >= x) from full trajectories."""
    _require_trials(trials)
    _require_no_extinction(env)
    if not M > 0.0:
        raise ValueError(f"M={M!r} must be > 0")
    if n < 1:
        raise ValueError(f"n={n!r} must be >= 1")
    tables = EnvTables(env)
    mu = compute_moments(env).mu
    cutoff = x - TIE_EPS
    vectorized = _vector_path_ok(env, n)

    def run_block(b: int, size: int) -> int:
        rng = stream(seed, DOMAIN_TRAJ, b)
        if vectorized:
            logz = _final_logz_block(tables, n, size, rng, exact_sampling_threshold)
        else:
            logz = _final_logz_block_big(tables, n, size, rng,
                                         exact_sampling_threshold, population_cap)
        return int(np.count_nonzero((logz - n * mu) / (n * M) >= cutoff))

    hits = sum(_map_blocks(run_block, trials, workers))
    low, high = binomial_ci(hits, trials, level)
    return TailEstimate(hits=hits, trials=trials, point=hits / trials,
                        ci_low=low, ci_high=high, level=level,
                        threshold_x=x, n=n)


def mc_logw_increments(env: EnvDistribution, n: int, trials: int, seed: int,
                       workers: int = 1,
                       exact_sampling_threshold: int = DEFAULT_EXACT_THRESHOLD
                       ) -> list[IncrementStat]:
    """Sample means of |log W_{k+1} - log W_k| for k = 0..n-1.

    The increment is log Z_{k+1} - log Z_k - X_{k+1}, the per-generation
    deviation of actual growth from the environment's conditional mean.
    """
    _require_trials(trials)
    _require_no_extinction(env)
    if n < 3:
        raise ValueError(f"n={n!r} must be >= 3")
    tables = EnvTables(env)
    if not _vector_path_ok(env, n):
        raise ResourceCapError(
            f"k_max^n = {env.k_max}^{n} exceeds the int64 stepping range; "
            "increment tracking is desk-scale only")

    def run_block(b: int, size: int) -> tuple[np.ndarray, np.ndarray]:
        rng = stream(seed, DOMAIN_TRAJ, b)
        idx = tables.pick_states(rng.random((size, n)))
        z = np.ones(size, dtype=np.int64)
        prev_logz = np.zeros(size)
        sums = np.empty(n)
        sums_sq = np.empty(n)
        for k in range(n):
            col = idx[:, k]
            for s in range(len(tables.labels)):
                sel = np.nonzero(col == s)[0]
                if sel.size:
                    z[sel] = _offspring_vector(z[sel], tables.samplers[s], rng,
                                               exact_sampling_threshold)
            logz = np.log(z.astype(np.float64))
            inc = np.abs(logz - prev_logz - tables.X[col])
            sums[k] = inc.sum()
            sums_sq[k] = (inc * inc).sum()
            prev_logz = logz
        return sums, sums_sq

    partials = _map_blocks(run_block, trials, workers)
    stats = []
    for k in range(n):
        total = math.fsum(p[0][k] for p in partials)
        total_sq = math.fsum(p[1][k] for p in partials)
        mean = total / trials
        var = max(total_sq - trials * mean * mean, 0.0) / (trials - 1)
        stats.append(IncrementStat(k=k, mean=mean, stderr=math.sqrt(var / trials)))
    return stats


def fit_geometric_decay(increments: Iterable[tuple[int, float]]) -> DecayFit:
    """Least-squares line through (k, log mean): delta_hat = exp(slope),
    c_hat = exp(intercept). Zero means are excluded, not clamped; at least
    four strictly positive means are required."""
    pairs = [(int(item[0]), float(item[1])) for item in increments]
    positive = [(k, m) for k, m in pairs if m > 0.0]
    if len(positive) < 4:
        raise ValueError(
            f"need at least 4 strictly positive means to fit, got {len(positive)}")
    ks = np.array([k for k, _ in positive], dtype=np.float64)
    logs = np.log([m for _, m in positive])
    slope, intercept = np.polyfit(ks, logs, 1)
    residuals = logs - (slope * ks + intercept)
    ss_res = float(residuals @ residuals)
    centered = logs - logs.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(increments=tuple(pairs), c_hat=float(np.exp(intercept)),
                    delta_hat=float(np.exp(slope)), r2=r2)


def theorem1_candidates(fit: DecayFit) -> tuple[float, float]:
    """Empirical (C_hat, delta_hat) for the geometric tail bound.

    delta_hat is the fitted ratio; C_hat folds in the tail-sum aggregation
    factor 1/(1 - delta_hat). These are candidates read off one model run,
    not the theorem's existential constants.
    """
    if not 0.0 < fit.delta_hat < 1.0:
        raise ValueError(
            f"fit gives delta_hat={fit.delta_hat:.6g}, outside (0,1); no "
            "geometric-decay candidate exists")
    return fit.c_hat / (1.0 - fit.delta_hat), fit.delta_hat


def convergence_report(env: EnvDistribution, n_values: Sequence[int],
                       y_values: Sequence[float], trials: int, seed: int,
                       level: float = 0.95, workers: int = 1,
                       exact_sampling_threshold: int = DEFAULT_EXACT_THRESHOLD,
                       population_cap: int = DEFAULT_POPULATION_CAP
                       ) -> list[TailEstimate]:
    """TailEstimates of P(|log Z_n / n - mu| >= y) over an (n, y) grid.

    Rows come out n-major, y-minor; threshold_x holds y. One trajectory set
    is shared by all y at a given n.
    """
    _require_trials(trials)
    _require_no_extinction(env)
    tables = EnvTables(env)
    mu = compute_moments(env).mu
    rows = []
    for n in n_values:
        if n < 1:
            raise ValueError(f"n={n!r} must be >= 1")
        vectorized = _vector_path_ok(env, n)

        def run_block(b: int, size: int, n: int = n, vec: bool = vectorized) -> np.ndarray:
            rng = stream(seed, DOMAIN_TRAJ, b)
            if vec:
                return _final_logz_block(tables, n, size, rng, exact_sampling_threshold)
            return _final_logz_block_big(tables, n, size, rng,
                                         exact_sampling_threshold, population_cap)

        logz_parts = _map_blocks(run_block, trials, workers)
        deviations = np.abs(np.concatenate(logz_parts) / n - mu)
        for y in y_values:
            hits = int(np.count_nonzero(deviations >= y - TIE_EPS))
            low, high = binomial_ci(hits, trials, level)
            rows.append(TailEstimate(hits=hits, trials=trials, point=hits / trials,
                                     ci_low=low, ci_high=high, level=level,
                                     threshold_x=float(y), n=int(n)))
    return rows
