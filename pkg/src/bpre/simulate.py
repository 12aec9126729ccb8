"""Exact trajectory simulation: environment sequence, population counts,
random walk S_n, and the normalized martingale W_n = Z_n / Pi_n.

Populations are arbitrary-precision integers with a hard cap (default 2^512);
the model stays exact at desk scale. Offspring totals are sampled as a chain
of conditional binomials over ascending family sizes, with the shifted
binomial z + Bin(z, p_2) shortcut for {1,2}-supported states. Binomial draws
above the exactness threshold use a continuity-corrected Gaussian
approximation and flag the trajectory.

Randomness contract: Philox4x64 counter-based streams with the 128-bit key
(seed << 64) | (domain << 48) | index. Domains separate the S_n-only sampler,
the batched trajectory sampler, quenched replicas, and single-trajectory
simulation, so a master seed can drive all of them without stream reuse.
The key derivation is the whole contract: any implementation of Philox4x64
can replay a run from (seed, domain, index) and the documented draw order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import ConfigError, EnvDistribution, EnvState, ResourceCapError, state_mean

RNG_ID = "philox4x64:key=seed<<64|domain<<48|index"

DOMAIN_SN = 1
DOMAIN_TRAJ = 2
DOMAIN_QUENCHED = 3
DOMAIN_SIMULATE = 4

DEFAULT_EXACT_THRESHOLD = 1 << 32
DEFAULT_POPULATION_CAP = 1 << 512

# numpy's exact binomial sampler takes int64 trial counts.
_INT64_SAFE = 1 << 62

_SEED_MAX = 1 << 64
_INDEX_MAX = 1 << 48


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Dedicated Philox stream for (seed, domain, index); see module docstring."""
    if not 0 <= seed < _SEED_MAX:
        raise ValueError(f"seed={seed!r} must be an unsigned 64-bit integer")
    if not 1 <= domain < 0x10000:
        raise ValueError(f"domain={domain!r} out of range")
    if not 0 <= index < _INDEX_MAX:
        raise ValueError(f"index={index!r} out of range")
    key = (seed << 64) | (domain << 48) | index
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SampleStats:
    """Mutable accumulator: did any draw take the Gaussian-approximation path?"""

    approx_used: bool = False


@dataclass(frozen=True)
class EnvSequence:
    """A realized environment: state labels and their X_i = log m values."""

    states: tuple[str, ...]
    log_means: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.states) != len(self.log_means):
            raise ValueError("states and log_means have different lengths")

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class GenRecord:
    Z: int
    S: float
    logW: float


@dataclass(frozen=True)
class Trajectory:
    records: tuple[GenRecord, ...]
    env: EnvSequence
    seed: int
    approx_sampling_used: bool = False
    extinct: bool = False


@dataclass(frozen=True)
class SimConfig:
    n: int
    seed: int
    exact_sampling_threshold: int = DEFAULT_EXACT_THRESHOLD
    record_full_path: bool = True
    population_cap: int = DEFAULT_POPULATION_CAP
    allow_extinction: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"n={self.n!r} must be a positive integer")
        if not 0 <= self.seed < _SEED_MAX:
            raise ValueError(f"seed={self.seed!r} must be an unsigned 64-bit integer")
        if not isinstance(self.exact_sampling_threshold, int) or self.exact_sampling_threshold < 1:
            raise ValueError("exact_sampling_threshold must be a positive integer")


class EnvTables:
    """Array form of an EnvDistribution for samplers.

    cum holds cumulative state masses for inverse-CDF lookup; per-state
    sampler descriptors are either ("binary", p2) for {1,2}-supported pmfs
    or ("chain", ((k, conditional_p), ...), k_last) for the ascending
    conditional-binomial chain.
    """

    def __init__(self, env: EnvDistribution):
        self.env = env
        self.labels = tuple(s.label for s, _ in env.states)
        self.states = tuple(s for s, _ in env.states)
        self.masses = np.array([mass for _, mass in env.states], dtype=np.float64)
        self.cum = np.cumsum(self.masses)
        self.means = np.array([state_mean(s) for s, _ in env.states], dtype=np.float64)
        self.X = np.log(self.means)
        self.index_of = {label: i for i, label in enumerate(self.labels)}
        self.samplers = tuple(_sampler_descriptor(s.pmf.entries) for s in self.states)

    def pick_states(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0,1) to state indices by inverse CDF."""
        idx = np.searchsorted(self.cum, u, side="right")
        return np.minimum(idx, len(self.labels) - 1)


def _sampler_descriptor(entries: dict[int, float]):
    positive = [(k, p) for k, p in sorted(entries.items()) if p > 0.0]
    sizes = [k for k, _ in positive]
    if all(k in (1, 2) for k in sizes):
        return ("binary", entries.get(2, 0.0))
    # Conditional probability of k_i given none of the smaller sizes, ascending.
    chain = []
    mass_left = 1.0
    for k, p in positive[:-1]:
        chain.append((k, min(max(p / mass_left, 0.0), 1.0)))
        mass_left -= p
    return ("chain", tuple(chain), positive[-1][0])


def _binomial_scalar(trials: int, prob: float, rng: np.random.Generator,
                     threshold: int, stats: SampleStats | None) -> int:
    """One binomial draw; exact up to the threshold, Gaussian-approximate above.

    Degenerate probabilities short-circuit without consuming randomness, so
    deterministic states never touch the stream.
    """
    if trials == 0 or prob <= 0.0:
        return 0
    if prob >= 1.0:
        return trials
    if trials <= threshold and trials <= _INT64_SAFE:
        return int(rng.binomial(trials, prob))
    if stats is not None:
        stats.approx_used = True
    mean = float(trials) * prob
    sd = math.sqrt(float(trials) * prob * (1.0 - prob))
    draw = int(round(mean + sd * rng.standard_normal()))
    return min(max(draw, 0), trials)


def sample_env_sequence(env: EnvDistribution, n: int,
                        rng: np.random.Generator) -> EnvSequence:
    """n i.i.d. state draws; one uniform per generation, in generation order."""
    if n < 1:
        raise ValueError(f"n={n!r} must be >= 1")
    tables = env if isinstance(env, EnvTables) else EnvTables(env)
    idx = tables.pick_states(rng.random(n))
    return EnvSequence(states=tuple(tables.labels[i] for i in idx),
                       log_means=tuple(float(tables.X[i]) for i in idx))


def step_population(z: int, state: EnvState, rng: np.random.Generator,
                    threshold: int = DEFAULT_EXACT_THRESHOLD,
                    stats: SampleStats | None = None) -> int:
    """One generation: total offspring of z individuals under the state's pmf.

    Multinomial counts are realized as conditional binomials over ascending
    family sizes; {1,2}-supported states use z + Bin(z, p_2) directly.
    """
    if z == 0:
        return 0
    if z < 0:
        raise ValueError(f"z={z!r} must be >= 0")
    descriptor = _sampler_descriptor(state.pmf.entries)
    if descriptor[0] == "binary":
        return z + _binomial_scalar(z, descriptor[1], rng, threshold, stats)
    _, chain, k_last = descriptor
    remaining = z
    total = 0
    for k, cond_p in chain:
        c = _binomial_scalar(remaining, cond_p, rng, threshold, stats)
        total += k * c
        remaining -= c
    return total + k_last * remaining


def simulate_trajectory(env: EnvDistribution, cfg: SimConfig,
                        rng: np.random.Generator | None = None) -> Trajectory:
    """Full trajectory: Z_0 = 1, Z_{k+1} = step_population(Z_k, xi_k).

    S is the running sum of realized X_i and logW := log Z - S, making the
    decomposition an identity; the independent content is that S matches
    log Pi recomputed from per-state means, which the tests check.
    Deterministic given (env, cfg.seed) when rng is not supplied.
    """
    if not cfg.allow_extinction:
        bad = [s.label for s, _ in env.states if s.pmf.p0 > 0.0]
        if bad:
            raise ConfigError(
                f"extinction possible (p0 > 0) in states: {', '.join(bad)}; "
                "all tail/martingale claims assume p0 = 0")
    if rng is None:
        rng = stream(cfg.seed, DOMAIN_SIMULATE, 0)
    tables = EnvTables(env)
    seq = sample_env_sequence(tables, cfg.n, rng)
    stats = SampleStats()
    states_by_label = {label: tables.states[i] for label, i in tables.index_of.items()}

    z = 1
    s = 0.0
    extinct = False
    records = [GenRecord(Z=1, S=0.0, logW=0.0)]
    for k in range(cfg.n):
        z = step_population(z, states_by_label[seq.states[k]], rng,
                            cfg.exact_sampling_threshold, stats)
        s = s + seq.log_means[k]
        if z > cfg.population_cap:
            raise ResourceCapError(
                f"population reached {z.bit_length()} bits at generation {k + 1}, "
                f"cap is {cfg.population_cap.bit_length() - 1} bits")
        if z == 0:
            extinct = True
            records.append(GenRecord(Z=0, S=s, logW=-math.inf))
            continue
        records.append(GenRecord(Z=z, S=s, logW=math.log(z) - s))
    if not cfg.record_full_path:
        records = [records[0], records[-1]]
    return Trajectory(records=tuple(records), env=seq, seed=cfg.seed,
                      approx_sampling_used=stats.approx_used, extinct=extinct)


@dataclass(frozen=True)
class QuenchedReport:
    mean_ratio: float
    stderr: float


def quenched_martingale_check(env: EnvDistribution, env_seq: EnvSequence,
                              k: int, replicas: int, rng: np.random.Generator,
                              threshold: int = DEFAULT_EXACT_THRESHOLD) -> QuenchedReport:
    """Quenched one-step martingale test at generation k of a fixed sequence.

    Simulates a single prefix to a common Z_k, then many independent one-step
    continuations; E[W_{k+1}/W_k | xi, Z_k] = 1, so the sample mean of
    Z_{k+1}/(Z_k m(xi_k)) should sit within a few stderr of 1.
    """
    if replicas < 100:
        raise ValueError(f"insufficient replicas: {replicas} < 100")
    if not 0 <= k < len(env_seq):
        raise ValueError(f"k={k} outside the sequence of length {len(env_seq)}")
    tables = EnvTables(env)
    z = 1
    for i in range(k):
        z = step_population(z, tables.states[tables.index_of[env_seq.states[i]]],
                            rng, threshold)
    state_idx = tables.index_of[env_seq.states[k]]
    state = tables.states[state_idx]
    m = float(tables.means[state_idx])

    descriptor = tables.samplers[state_idx]
    if z <= _INT64_SAFE and descriptor[0] == "binary":
        p2 = descriptor[1]
        if p2 <= 0.0:
            totals = np.full(replicas, z, dtype=np.float64)
        elif p2 >= 1.0:
            totals = np.full(replicas, 2 * z, dtype=np.float64)
        elif z <= threshold:
            totals = z + rng.binomial(z, p2, size=replicas).astype(np.float64)
        else:
            mean = z * p2
            sd = math.sqrt(z * p2 * (1.0 - p2))
            draw = np.rint(mean + sd * rng.standard_normal(replicas))
            totals = z + np.clip(draw, 0.0, float(z))
    else:
        totals = np.array([float(step_population(z, state, rng, threshold))
                           for _ in range(replicas)])
    ratios = totals / (float(z) * m)
    stderr = float(np.std(ratios, ddof=1)) / math.sqrt(replicas)
    return QuenchedReport(mean_ratio=float(np.mean(ratios)), stderr=stderr)
