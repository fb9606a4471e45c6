"""Composite FAR/FRR analytics for fused authentication systems.

All composition assumes independent factors. Counting strategies reduce
to tails of a Poisson-binomial pass-count distribution, computed by exact
dynamic programming; the weighted-threshold rule is evaluated by exact
enumeration over outcome vectors (meet-in-the-middle, capped at n=25).
A seeded Monte Carlo estimator serves as an independent cross-check for
every strategy. Probabilities stay in linear space with compensated
summation, and pass/fail probabilities are taken from the source rates
rather than re-derived as 1 - x, so degenerate cases (a single factor, an
exact tie) come out bit-exact. Positive results that vanish below 1e-300
are reported as 0 with an underflow flag, and log-scale values are derived
separately where a closed product form exists.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, EvaluationError
from .fusion import Policy, StrategyKind

UNDERFLOW_FLOOR = 1e-300

# two-sided 99% normal quantile; one-sided 99% zero-event exponent ln(100)
_Z99 = 2.5758293035489004
_LN100 = 4.605170185988092


class Population(Enum):
    LEGITIMATE = "legitimate"
    ADVERSARY = "adversary"


@dataclass(frozen=True)
class CompositeRates:
    """System-level error rates. A set underflow flag means the true value
    is positive but below 1e-300 and was reported as 0."""

    far: float
    frr: float
    far_underflow: bool = False
    frr_underflow: bool = False

    def __post_init__(self):
        for name in ("far", "frr"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise EvaluationError(f"{name}={value!r} outside [0, 1]")


@dataclass(frozen=True)
class PassCountDistribution:
    """P(exactly j of n factors pass) under one hypothesis."""

    probs: tuple[float, ...]
    population: Population

    def __post_init__(self):
        if any(p < 0.0 for p in self.probs):
            raise EvaluationError("pass-count probabilities must be non-negative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise EvaluationError(f"pass-count distribution sums to {total!r}, not 1")

    @property
    def n(self) -> int:
        return len(self.probs) - 1

    def at_least(self, k: int) -> float:
        """P(pass count >= k), summed directly over the upper tail."""
        return math.fsum(self.probs[k:])

    def below(self, k: int) -> float:
        """P(pass count < k), summed directly over the lower tail."""
        return math.fsum(self.probs[:k])


def _pass_counts(pq: Sequence[tuple[float, float]]) -> list[float]:
    # DP over explicit (pass, fail) pairs: callers supply both probabilities
    # straight from the source data instead of re-deriving one as 1 - x,
    # which keeps degenerate cases (single factor, exact rates) bit-exact
    probs = [1.0]
    for p, q in pq:
        nxt = [0.0] * (len(probs) + 1)
        for j, mass in enumerate(probs):
            nxt[j] += mass * q
            nxt[j + 1] += mass * p
        probs = nxt
    return probs


def pass_count_distribution(pass_probs: Sequence[float], population: Population) -> PassCountDistribution:
    """Poisson-binomial distribution of the number of passing factors.

    Exact dynamic programming: convolve one Bernoulli at a time.
    """
    for p in pass_probs:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"pass probability {p!r} outside [0, 1]")
    probs = _pass_counts([(p, 1.0 - p) for p in pass_probs])
    return PassCountDistribution(probs=tuple(probs), population=population)


def _validate_pairs(pairs: Sequence[tuple[float, float]]) -> None:
    if not pairs:
        raise EvaluationError("factor list must be non-empty")
    for i, (far, frr) in enumerate(pairs):
        if not 0.0 <= far <= 1.0:
            raise ConfigError(f"far {far!r} outside [0, 1]", field=f"factors[{i}].far")
        if not 0.0 <= frr <= 1.0:
            raise ConfigError(f"frr {frr!r} outside [0, 1]", field=f"factors[{i}].frr")


def _floored(value: float, possible: bool) -> tuple[float, bool]:
    # report tiny-but-positive results as 0 with the underflow flag; the
    # flag also covers values the float math already collapsed to 0
    if 0.0 < value < UNDERFLOW_FLOOR:
        return 0.0, True
    if value == 0.0 and possible:
        return 0.0, True
    return min(max(value, 0.0), 1.0), False


def compose_all(pairs: Sequence[tuple[float, float]]) -> CompositeRates:
    """Pass-all fusion: an adversary must fool every check, a legitimate
    user fails if any single check fails."""
    _validate_pairs(pairs)
    far = math.prod(far for far, _ in pairs)
    # P(some check fails), partitioned by the first failing factor; summing
    # the disjoint masses directly avoids the 1 - prod(1 - frr) round trip,
    # so one factor composes to exactly its own frr and tiny rates keep
    # their relative precision
    terms = []
    survive = 1.0
    for _, frr in pairs:
        terms.append(frr * survive)
        survive *= 1.0 - frr
    frr = math.fsum(terms)
    far, far_uf = _floored(far, all(f > 0.0 for f, _ in pairs))
    frr, frr_uf = _floored(frr, any(f > 0.0 for _, f in pairs))
    return CompositeRates(far=far, frr=frr, far_underflow=far_uf, frr_underflow=frr_uf)


def compose_any(pairs: Sequence[tuple[float, float]]) -> CompositeRates:
    """Pass-any fusion. Exact dual of compose_all with the error roles
    swapped, and implemented that way so the duality holds bit for bit."""
    swapped = [(frr, far) for far, frr in pairs]
    inner = compose_all(swapped)
    return CompositeRates(
        far=inner.frr,
        frr=inner.far,
        far_underflow=inner.frr_underflow,
        frr_underflow=inner.far_underflow,
    )


def compose_kofn(pairs: Sequence[tuple[float, float]], k: int) -> CompositeRates:
    """k-of-n counting fusion via Poisson-binomial tails.

    k=n and k=1 delegate to compose_all / compose_any so the boundary
    equivalences hold exactly, not merely to tolerance.
    """
    _validate_pairs(pairs)
    n = len(pairs)
    if not isinstance(k, int) or isinstance(k, bool) or not 1 <= k <= n:
        raise ConfigError(f"k must be an integer in [1, {n}]", field="k")
    if k == n:
        return compose_all(pairs)
    if k == 1:
        return compose_any(pairs)

    # fail probabilities come from the source data, not from 1 - pass
    adversary = _pass_counts([(far, 1.0 - far) for far, _ in pairs])
    legitimate = _pass_counts([(1.0 - frr, frr) for _, frr in pairs])
    far = math.fsum(adversary[k:])
    frr = math.fsum(legitimate[:k])
    # positivity: >= k can pass iff at least k factors have positive pass
    # probability; < k can happen iff fewer than k factors pass for certain
    far_possible = sum(1 for f, _ in pairs if f > 0.0) >= k
    frr_possible = sum(1 for _, f in pairs if f == 0.0) < k
    far, far_uf = _floored(far, far_possible)
    frr, frr_uf = _floored(frr, frr_possible)
    return CompositeRates(far=far, frr=frr, far_underflow=far_uf, frr_underflow=frr_uf)


# ---------------------------------------------------------------------------
# Weighted-threshold composition (exact enumeration)

EXACT_WEIGHTED_LIMIT = 25


def _subset_scores(weights: Sequence[float], pq: Sequence[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    # all 2^m outcomes of one half: score reached and its probability mass
    scores = np.zeros(1)
    mass = np.ones(1)
    for w, (p, q) in zip(weights, pq):
        scores = np.concatenate([scores, scores + w])
        mass = np.concatenate([mass * q, mass * p])
    return scores, mass


def _split_tail_probs(weights: Sequence[float], pq: Sequence[tuple[float, float]], threshold: float) -> tuple[float, float, bool, bool]:
    """P(score > T) and P(score <= T), each accumulated directly.

    Meet-in-the-middle: enumerate both halves, sort one, and resolve each
    left outcome against the right half's prefix/suffix mass. Also reports
    whether each event has any positive-probability outcome at all, so
    callers can distinguish a true zero from underflow.
    """
    half = (len(weights) + 1) // 2
    a_scores, a_mass = _subset_scores(weights[:half], pq[:half])
    b_scores, b_mass = _subset_scores(weights[half:], pq[half:])
    order = np.argsort(b_scores, kind="stable")
    b_scores = b_scores[order]
    b_mass = b_mass[order]

    prefix = np.concatenate([[0.0], np.cumsum(b_mass)])
    suffix = np.concatenate([np.cumsum(b_mass[::-1])[::-1], [0.0]])
    b_positive = b_mass > 0.0
    prefix_any = np.concatenate([[False], np.logical_or.accumulate(b_positive)])
    suffix_any = np.concatenate([np.logical_or.accumulate(b_positive[::-1])[::-1], [False]])

    idx = np.searchsorted(b_scores, threshold - a_scores, side="right")
    above = math.fsum(float(a_mass[i]) * float(suffix[idx[i]]) for i in range(len(a_scores)))
    below = math.fsum(float(a_mass[i]) * float(prefix[idx[i]]) for i in range(len(a_scores)))
    a_positive = a_mass > 0.0
    above_possible = bool(np.any(a_positive & suffix_any[idx]))
    below_possible = bool(np.any(a_positive & prefix_any[idx]))
    return above, below, above_possible, below_possible


def compose_weighted(
    factors: Sequence[tuple[float, float, float, float, float]],
    threshold: float,
    *,
    mode: str = "exact",
    trials: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
):
    """Composite rates of the weighted rule sum(delta*mu*tau*phi) > T.

    factors are (far, frr, mu, tau, phi) tuples. Exact mode enumerates all
    outcome vectors and is capped at n=25; past that, pass
    mode="monte-carlo" to get a seeded MonteCarloRates estimate instead.
    """
    if not factors:
        raise EvaluationError("factor list must be non-empty")
    if not math.isfinite(threshold):
        raise ConfigError("threshold must be finite", field="threshold")
    weights = []
    pairs = []
    for i, (far, frr, mu, tau, phi) in enumerate(factors):
        pairs.append((far, frr))
        for name, value in (("mu", mu), ("tau", tau), ("phi", phi)):
            if not math.isfinite(value) or value < 0.0:
                raise ConfigError(
                    f"{name} must be finite and non-negative", field=f"factors[{i}].{name}"
                )
        weights.append(mu * tau * phi)
    _validate_pairs(pairs)

    if mode == "monte-carlo":
        return _monte_carlo_weighted(pairs, weights, threshold, trials, seed, workers)
    if mode != "exact":
        raise ConfigError(f"mode must be 'exact' or 'monte-carlo', got {mode!r}", field="mode")
    if len(factors) > EXACT_WEIGHTED_LIMIT:
        raise CapacityError(
            f"exact mode enumerates 2^n outcomes and is capped at "
            f"n={EXACT_WEIGHTED_LIMIT}; got n={len(factors)}. "
            "Use mode='monte-carlo' for larger systems."
        )

    far, _, far_possible, _ = _split_tail_probs(weights, [(far, 1.0 - far) for far, _ in pairs], threshold)
    _, frr, _, frr_possible = _split_tail_probs(weights, [(1.0 - frr, frr) for _, frr in pairs], threshold)
    far, far_uf = _floored(far, far_possible)
    frr, frr_uf = _floored(frr, frr_possible)
    return CompositeRates(far=far, frr=frr, far_underflow=far_uf, frr_underflow=frr_uf)


# ---------------------------------------------------------------------------
# Monte Carlo estimation

_SHARD = 1 << 16


@dataclass(frozen=True)
class RateEstimate:
    """Empirical event rate with a 99% confidence half-width.

    With zero observed events the half-width is the one-sided 99% upper
    bound ln(100)/trials; otherwise it is the normal approximation with
    the event probability floored at one observed event.
    """

    value: float
    half_width: float
    events: int
    trials: int


@dataclass(frozen=True)
class MonteCarloRates:
    far: RateEstimate
    frr: RateEstimate
    seed: int


def _estimate(events: int, trials: int) -> RateEstimate:
    value = events / trials
    if events == 0:
        return RateEstimate(value=0.0, half_width=_LN100 / trials, events=0, trials=trials)
    p_eff = max(value, 1.0 / trials)
    half_width = _Z99 * math.sqrt(p_eff * (1.0 - p_eff) / trials)
    return RateEstimate(value=value, half_width=half_width, events=events, trials=trials)


def _shard_sizes(trials: int) -> list[int]:
    full, rem = divmod(trials, _SHARD)
    return [_SHARD] * full + ([rem] if rem else [])


def _simulate_counts(
    pass_probs: Sequence[float],
    grant_fn: Callable[[np.ndarray], np.ndarray],
    trials: int,
    seed_seq: np.random.SeedSequence,
    workers: int,
) -> int:
    """Count granted trials. Sharded with per-shard derived seeds and an
    integer reduction, so the result is identical at any worker count."""
    sizes = _shard_sizes(trials)
    children = seed_seq.spawn(len(sizes))
    probs = np.asarray(pass_probs)

    def run(shard: int) -> int:
        rng = np.random.default_rng(children[shard])
        passes = rng.random((sizes[shard], len(probs))) < probs
        return int(np.count_nonzero(grant_fn(passes)))

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(run, range(len(sizes))))
    return sum(run(i) for i in range(len(sizes)))


def _grant_rule(policy: Policy, weights: Sequence[float] | None) -> Callable[[np.ndarray], np.ndarray]:
    kind = policy.strategy.kind
    if kind is StrategyKind.WEIGHTED:
        w = np.asarray(weights)
        threshold = policy.strategy.threshold
        return lambda passes: passes @ w > threshold
    if kind is StrategyKind.ALL:
        return lambda passes: passes.all(axis=1)
    if kind is StrategyKind.ANY:
        return lambda passes: passes.any(axis=1)
    k = policy.strategy.k
    return lambda passes: passes.sum(axis=1) >= k


def monte_carlo_rates(
    factors: Sequence,
    policy: Policy,
    trials: int,
    seed: int,
    *,
    trust: dict[str, float] | None = None,
    workers: int = 1,
) -> MonteCarloRates:
    """Estimate composite rates by simulating adversary and legitimate
    attempts. factors are catalog Factor objects; for weighted policies
    the weight of factor i is vendor_accuracy * trust (default 1) * phi.

    Deterministic for a given seed regardless of workers.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1", field="trials")
    if not factors:
        raise EvaluationError("factor list must be non-empty")
    weights = None
    if policy.strategy.kind is StrategyKind.WEIGHTED:
        trust = trust or {}
        weights = []
        for f in factors:
            if f.id not in policy.weights:
                raise ConfigError(f"policy assigns no weight to factor '{f.id}'", field=f.id)
            weights.append(f.vendor_accuracy * trust.get(f.id, 1.0) * policy.weights[f.id])
    elif policy.strategy.kind is StrategyKind.KOFN and policy.strategy.k > len(factors):
        raise ConfigError(f"k={policy.strategy.k} exceeds the {len(factors)} factors", field="k")

    grant = _grant_rule(policy, weights)
    root = np.random.SeedSequence(seed)
    adversary_seq, legitimate_seq = root.spawn(2)
    false_grants = _simulate_counts([f.far for f in factors], grant, trials, adversary_seq, workers)
    grants = _simulate_counts([1.0 - f.frr for f in factors], grant, trials, legitimate_seq, workers)
    return MonteCarloRates(
        far=_estimate(false_grants, trials),
        frr=_estimate(trials - grants, trials),
        seed=seed,
    )


def _monte_carlo_weighted(pairs, weights, threshold, trials, seed, workers) -> MonteCarloRates:
    if trials < 1:
        raise ConfigError("trials must be at least 1", field="trials")
    w = np.asarray(weights)
    grant = lambda passes: passes @ w > threshold
    root = np.random.SeedSequence(seed)
    adversary_seq, legitimate_seq = root.spawn(2)
    false_grants = _simulate_counts([far for far, _ in pairs], grant, trials, adversary_seq, workers)
    grants = _simulate_counts([1.0 - frr for _, frr in pairs], grant, trials, legitimate_seq, workers)
    return MonteCarloRates(far=_estimate(false_grants, trials), frr=_estimate(trials - grants, trials), seed=seed)


# ---------------------------------------------------------------------------
# Strategy sweep (the rate-vs-n comparison table)

SWEEP_STRATEGIES = ("all", "any", "balanced")


def majority_k(n: int) -> int:
    """Strict-majority threshold for the balanced strategy."""
    return n // 2 + 1


@dataclass(frozen=True)
class SweepRow:
    n: int
    strategy: str
    k: int
    far: float
    frr: float
    log10_far: float
    log10_frr: float


def _log10_rate(value: float, log_factors: Sequence[float] | None = None) -> float:
    if value > 0.0:
        return math.log10(value)
    if log_factors is not None and all(v > 0.0 for v in log_factors):
        # underflowed pure product: recover the magnitude in log space
        return math.fsum(math.log10(v) for v in log_factors)
    return float("-inf")


def sweep(
    far: float,
    frr: float,
    n_range: Iterable[int],
    strategies: Sequence[str] = SWEEP_STRATEGIES,
    k_rule: Callable[[int], int] = majority_k,
) -> list[SweepRow]:
    """Composite rates for homogeneous factors across strategies and n.

    Output is sorted by (n, strategy) and fully deterministic. k reports
    the effective pass threshold of each strategy: n for all, 1 for any,
    k_rule(n) for balanced.
    """
    _validate_pairs([(far, frr)])
    for name in strategies:
        if name not in SWEEP_STRATEGIES:
            raise ConfigError(f"unknown strategy '{name}'", field="strategies")
    ns = sorted(set(n_range))
    if not ns:
        raise ConfigError("n range is empty", field="n_range")
    if ns[0] < 1:
        raise ConfigError("n must be at least 1", field="n_range")

    rows = []
    for n in ns:
        pairs = [(far, frr)] * n
        for name in sorted(set(strategies)):
            if name == "all":
                k_eff, rates = n, compose_all(pairs)
                log_far = _log10_rate(rates.far, [far] * n)
                log_frr = _log10_rate(rates.frr)
            elif name == "any":
                k_eff, rates = 1, compose_any(pairs)
                log_far = _log10_rate(rates.far)
                log_frr = _log10_rate(rates.frr, [frr] * n)
            else:
                k_eff = k_rule(n)
                if not 1 <= k_eff <= n:
                    raise ConfigError(f"k rule produced {k_eff}, outside [1, {n}]", field="k")
                rates = compose_kofn(pairs, k_eff)
                log_far = _log10_rate(rates.far)
                log_frr = _log10_rate(rates.frr)
            rows.append(
                SweepRow(n=n, strategy=name, k=k_eff, far=rates.far, frr=rates.frr,
                         log10_far=log_far, log10_frr=log_frr)
            )
    return rows


SWEEP_CSV_HEADER = "n,strategy,k,far,frr,log10_far,log10_frr"


def _fmt17(value: float) -> str:
    return "%.17g" % value


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    """Render sweep rows as CSV with 17-significant-digit rendering, so
    equal inputs produce byte-identical output."""
    lines = [SWEEP_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.n},{r.strategy},{r.k},{_fmt17(r.far)},{_fmt17(r.frr)},"
            f"{_fmt17(r.log10_far)},{_fmt17(r.log10_frr)}"
        )
    return "\n".join(lines) + "\n"
