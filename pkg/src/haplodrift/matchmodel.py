"""Haplotype match probabilities from the branching prior and database counts.

Pipeline per query haplotype h:

1. the matching-number prior P(N | omega) comes from the branching engine and
   depends on the deletion/duplication pattern only (through the aggregate
   non-mutation probability), so priors are cached per pattern;
2. the database evidence enters through a conditioned hypergeometric
   likelihood for the observed identity-match count c_I, treating h itself
   as an extra observed haplotype;
3. Bayes gives the posterior over N, whose mean divided by omega is the base
   probability p_u;
4. if h was never observed (c_I = 0), multiplicative deletion/duplication and
   repeat-pattern factors down-weight p_u.

Hypergeometric masses are evaluated through log-gamma, never a binomial
approximation, so population sizes of order 1e8 keep full precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .branching import (
    DEFAULT_ITERATIONS,
    DEFAULT_TRUNCATION,
    Generations,
    MatchingNumberDistribution,
    PopulationParams,
    combined_distribution,
    matching_number_distribution,
)
from .types import (
    DelDupPattern,
    Haplotype,
    HaplotypeDatabase,
    Kit,
    MatchCounts,
    MatchIndex,
    aggregate_nonmutation,
    extract_patterns,
)


@dataclass(frozen=True)
class PatternFactorParams:
    """Pattern-factor weights: a / b for starting and continuing a deletion
    run, c / d for starting and continuing an excess-duplication run."""

    a: float = 0.0048
    b: float = 0.105
    c: float = 0.0064
    d: float = 0.063

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"factor {name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class PopulationContext:
    """Total male population size, number of observed haplotypes, and the
    matching-number prior for the query haplotype's copy pattern."""

    omega: float
    M: int
    prior: MatchingNumberDistribution

    def __post_init__(self):
        if self.omega < self.M + 1:
            raise ValueError("population size must exceed the observed count")


@dataclass(frozen=True)
class MatchProbabilityResult:
    p_u: float
    f_D: float
    f_R: float
    probability: float
    posterior: np.ndarray  # over N = 1..K
    posterior_mean: float
    counts: MatchCounts
    prior_tail: float

    def posterior_quantile(self, q: float) -> int:
        """Smallest n with P(N <= n | data) >= q."""
        cdf = np.cumsum(self.posterior)
        return int(np.searchsorted(cdf, q) + 1)


def log_hypergeom_pmf(k, n_success, sample, population) -> np.ndarray:
    """log P(k successes when drawing `sample` without replacement from a
    population with `n_success` successes).

    C(n,k) C(omega-n, m-k) / C(omega, m) is rewritten as
    C(m,k) (n)_k prod_{i<m-k} (omega-n-i)/(omega-i) / prod_{i>=m-k} (omega-i)
    with falling factorials, so log-gamma only ever sees sample-sized
    arguments and the population-sized factors enter through log1p of ratios.
    This keeps the mass exact enough to condition on events of probability
    order 1/population, which differences of log-gamma at 1e8-sized
    arguments (absolute error ~1e-7) cannot.
    """
    k = np.asarray(k, dtype=float)
    n = np.asarray(n_success, dtype=float)
    m = int(sample)
    omega = float(population)
    k_b, n_b = np.broadcast_arrays(k, n)
    k_b = np.array(k_b, dtype=float)
    n_b = np.array(n_b, dtype=float)

    out = np.full(k_b.shape, -np.inf)
    support = (
        (k_b >= np.maximum(0.0, m - (omega - n_b)))
        & (k_b <= np.minimum(n_b, m))
        & (k_b == np.floor(k_b))
    )
    if not support.any():
        return out

    # suffix[j] = sum_{i=j}^{m-1} log(omega - i)
    logs = np.log(omega - np.arange(m, dtype=float)) if m else np.empty(0)
    suffix = np.zeros(m + 1)
    if m:
        suffix[:m] = np.cumsum(logs[::-1])[::-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        base = (
            gammaln(m + 1.0)
            - gammaln(k_b + 1.0)
            - gammaln(m - k_b + 1.0)
            + gammaln(n_b + 1.0)
            - gammaln(n_b - k_b + 1.0)
        )
    for j in np.unique((m - k_b[support]).astype(int)):
        mask = support & (m - k_b == j)
        nn = n_b[mask]
        if j:
            i = np.arange(j, dtype=float)
            ratio = np.log1p(-nn[:, None] / (omega - i[None, :])).sum(axis=1)
        else:
            ratio = 0.0
        out[mask] = base[mask] + ratio - suffix[j]
    return out


def conditional_count_likelihood(c_i: int, n: int, m_observed: int, omega: float) -> float:
    """P(c_i other identity matches are seen among M observed haplotypes,
    given n matching profiles in total and that the query haplotype itself
    was sampled)."""
    return float(
        np.exp(_conditional_count_loglik(np.asarray([c_i]), n, m_observed, omega))[0]
    )


def _conditional_count_loglik(c_i: np.ndarray, n, m_observed: int, omega: float):
    if m_observed + 1 > omega:
        raise ValueError("sample M + 1 exceeds the population size")
    log_num = log_hypergeom_pmf(np.asarray(c_i) + 1, n, m_observed + 1, omega)
    log_p0 = log_hypergeom_pmf(0, n, m_observed + 1, omega)
    # log(1 - P(0)) via expm1 keeps precision when P(0) is close to 1
    log_denom = np.log(-np.expm1(log_p0))
    return log_num - log_denom


def posterior_matching(
    c_i: int, ctx: PopulationContext
) -> tuple[np.ndarray, float, float]:
    """Bayes update of the matching-number prior by the observed count.

    Returns (posterior pmf over N = 1..K, posterior mean, p_u = mean/omega).
    The posterior support is the prior truncation; raise if no prior mass is
    consistent with the count.
    """
    K = ctx.prior.truncation
    n = np.arange(1, K + 1)
    with np.errstate(divide="ignore"):
        log_prior = np.log(ctx.prior.probs)
        # likelihood is zero wherever c_i > n - 1
        log_like = np.full(K, -np.inf)
        feasible = n - 1 >= c_i
        if feasible.any():
            log_like[feasible] = _conditional_count_loglik(
                np.full(feasible.sum(), c_i), n[feasible], ctx.M, ctx.omega
            )
    log_post = log_prior + log_like
    total = logsumexp(log_post)
    if not np.isfinite(total):
        raise ValueError(
            f"posterior has zero mass: no prior support is consistent with c_I={c_i}"
        )
    posterior = np.exp(log_post - total)
    mean = float(n @ posterior)
    return posterior, mean, mean / ctx.omega


def pattern_factor_breakdown(d: DelDupPattern, kit: Kit) -> tuple[int, int, int, int]:
    """Exponents (n_a, n_b, n_c, n_d) of the run-scan factors for pattern d.

    Deletion runs contribute a * b^(run length - 1); excess-duplication runs
    (pattern 2 on a locus that is not inherently multicopy) contribute
    c * d^(run length - 1).  Multicopy loci never count as duplications and
    break duplication runs.
    """
    if len(d) != len(kit):
        raise ValueError("pattern length does not match kit")
    n_a = n_b = n_c = n_d = 0
    prev_deleted = False
    prev_excess_dup = False
    for copies, locus in zip(d, kit.loci):
        deleted = copies == 0
        excess_dup = copies == 2 and not locus.multicopy
        if deleted:
            if prev_deleted:
                n_b += 1
            else:
                n_a += 1
        if excess_dup:
            if prev_excess_dup:
                n_d += 1
            else:
                n_c += 1
        prev_deleted = deleted
        prev_excess_dup = excess_dup
    return n_a, n_b, n_c, n_d


def deletion_duplication_factor(
    d: DelDupPattern, kit: Kit, counts: MatchCounts, params: PatternFactorParams
) -> float:
    """f_D: proportion-based when the pattern was observed, run-scan weights
    otherwise."""
    if counts.c_D > 0:
        return (1 + counts.c_D) / (counts.M + 1)
    n_a, n_b, n_c, n_d = pattern_factor_breakdown(d, kit)
    return (
        params.a**n_a * params.b**n_b * params.c**n_c * params.d**n_d
    )


def repeat_factor(counts: MatchCounts) -> float:
    """f_R: proportion-based when the repeat pattern was observed, otherwise
    the product of per-locus repeat-item proportions."""
    if counts.c_R > 0:
        return (1 + counts.c_R) / (counts.M + 1)
    out = 1.0
    for r in counts.r_m:
        out *= (1 + r) / (counts.M + 1)
    return out


# Heavily deleted patterns can push the same-profile offspring rate to or
# past criticality (an all-deleted profile cannot mutate at all), where no
# equilibrium exists.  Their rate is floored so a prior is still defined;
# such profiles carry negligible peak likelihood in any real mixture.
MAX_EFFECTIVE_RATE = 0.995


class PriorCache:
    """Matching-number priors per deletion/duplication pattern.

    The branching computation depends on the pattern only through the
    aggregate mutation probability, and it is by far the most expensive part
    of a query, so results are cached per pattern.
    """

    def __init__(
        self,
        kit: Kit,
        growth: float = 0.0,
        truncation: int = DEFAULT_TRUNCATION,
        iters: int = DEFAULT_ITERATIONS,
        generations: Generations = Generations.THREE_COMBINED,
    ):
        self.kit = kit
        self.growth = growth
        self.truncation = truncation
        self.iters = iters
        self.generations = generations
        self._cache: dict[DelDupPattern, MatchingNumberDistribution] = {}

    def prior_for(self, d: DelDupPattern) -> MatchingNumberDistribution:
        d = tuple(d)
        if d not in self._cache:
            mu = 1.0 - aggregate_nonmutation(d, self.kit)
            lam = 1.0 + self.growth
            mu = max(mu, 1.0 - MAX_EFFECTIVE_RATE / lam)
            params = PopulationParams.from_growth(self.growth, mu)
            dist = combined_distribution(
                params,
                generations=self.generations,
                truncation=self.truncation,
                iters=self.iters,
            )
            self._cache[d] = matching_number_distribution(dist)
        return self._cache[d]


class HaplotypeMatchModel:
    """Warm query surface: one database index plus a prior cache, then
    haplotype probabilities in O(loci) plus a cached branching run."""

    def __init__(
        self,
        kit: Kit,
        db: HaplotypeDatabase,
        typed: Sequence[Haplotype] = (),
        omega: float = 2e8,
        growth: float = 0.0,
        factors: PatternFactorParams = PatternFactorParams(),
        truncation: int = DEFAULT_TRUNCATION,
        iters: int = DEFAULT_ITERATIONS,
        prior_cache: PriorCache | None = None,
    ):
        self.kit = kit
        self.omega = float(omega)
        self.factors = factors
        pool = list(db.haplotypes) + list(typed)
        if any(len(h) != len(kit) for h in pool):
            raise ValueError("database/typed haplotypes do not match the kit")
        self.M = len(pool)
        if self.omega < self.M + 1:
            raise ValueError("population size must exceed database + typed count")
        self._index = MatchIndex(pool)
        if prior_cache is not None:
            if (prior_cache.kit, prior_cache.growth) != (kit, growth):
                raise ValueError("shared prior cache was built for different settings")
            self._priors = prior_cache
        else:
            self._priors = PriorCache(kit, growth=growth, truncation=truncation, iters=iters)
        self._posterior_cache: dict[tuple[DelDupPattern, int], tuple] = {}

    def context_for(self, d: DelDupPattern) -> PopulationContext:
        return PopulationContext(self.omega, self.M, self._priors.prior_for(d))

    def probability(self, h: Haplotype) -> MatchProbabilityResult:
        counts = self._index.counts_for(h)
        _, deldup, _ = extract_patterns(h)
        key = (deldup, counts.c_I)
        if key not in self._posterior_cache:
            ctx = self.context_for(deldup)
            self._posterior_cache[key] = posterior_matching(counts.c_I, ctx)
        posterior, mean, p_u = self._posterior_cache[key]
        prior_tail = float(self._priors.prior_for(deldup).probs[-1])
        if counts.c_I > 0:
            return MatchProbabilityResult(
                p_u=p_u,
                f_D=1.0,
                f_R=1.0,
                probability=p_u,
                posterior=posterior,
                posterior_mean=mean,
                counts=counts,
                prior_tail=prior_tail,
            )
        f_d = deletion_duplication_factor(deldup, self.kit, counts, self.factors)
        f_r = repeat_factor(counts)
        return MatchProbabilityResult(
            p_u=p_u,
            f_D=f_d,
            f_R=f_r,
            probability=f_d * f_r * p_u,
            posterior=posterior,
            posterior_mean=mean,
            counts=counts,
            prior_tail=prior_tail,
        )


def haplotype_probability(
    h: Haplotype,
    db: HaplotypeDatabase,
    typed: Iterable[Haplotype],
    kit: Kit,
    omega: float,
    growth: float = 0.0,
    factors: PatternFactorParams = PatternFactorParams(),
    truncation: int = DEFAULT_TRUNCATION,
    iters: int = DEFAULT_ITERATIONS,
) -> MatchProbabilityResult:
    """One-shot convenience wrapper around HaplotypeMatchModel."""
    model = HaplotypeMatchModel(
        kit,
        db,
        typed=tuple(typed),
        omega=omega,
        growth=growth,
        factors=factors,
        truncation=truncation,
        iters=iters,
    )
    return model.probability(h)
