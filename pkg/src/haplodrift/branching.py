"""Equilibrium cluster-size distributions for a growing haplotype population.

The population of distinct haplotype profiles is modelled as a collection of
clusters (equivalence classes of identical profiles).  Each individual leaves
a Poisson(lambda) number of offspring per generation and each offspring
mutates to a brand-new profile with aggregate probability mu, so the count of
same-profile descendants is a sub-critical branching process whenever
lambda * (1 - mu) < 1.

This module computes, by truncated probability-generating-function derivative
recursions:

* the single-generation equilibrium proportions f_k of clusters of size k,
* the cluster-size distribution of two or three consecutive generations
  pooled together (the "live male" window), and
* the size-biased matching-number distribution p(k) that a randomly chosen
  individual shares its profile with k individuals in total.

All Poisson and binomial masses are evaluated in log space via log-gamma and
exponentiated only at the end, so rates up to K * lambda stay finite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

DEFAULT_TRUNCATION = 512
DEFAULT_ITERATIONS = 200
DEFAULT_TOLERANCE = 1e-14

_SUM_TOL = 1e-12


class Generations(enum.Enum):
    ONE = 1
    TWO_COMBINED = 2
    THREE_COMBINED = 3


@dataclass(frozen=True)
class PopulationParams:
    """Mean offspring count per generation (lam = 1 + growth) and aggregate
    per-generation mutation probability mu over all loci."""

    lam: float
    mu: float

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lambda must be positive")
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError("mu must lie in [0, 1]")
        # the critical boundary is admitted so one-step operators stay usable;
        # the equilibrium iteration separately refuses effective rates >= 1
        if self.effective_rate > 1.0:
            raise ValueError(
                f"supercritical regime refused: lambda*(1-mu) = {self.effective_rate:.6g} > 1"
            )

    @property
    def effective_rate(self) -> float:
        """Mean number of same-profile offspring, lambda * (1 - mu)."""
        return self.lam * (1.0 - self.mu)

    @classmethod
    def from_growth(cls, growth: float, mu: float) -> "PopulationParams":
        return cls(lam=1.0 + growth, mu=mu)


@dataclass(frozen=True)
class ClusterDistribution:
    """Truncated cluster-size probabilities; probs[k-1] is the proportion of
    clusters of size k, for k = 1..K."""

    probs: np.ndarray
    generations: Generations
    converged: bool = True
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("need a 1-d probability vector with K >= 2")
        if np.any(probs < 0.0):
            raise ValueError("cluster probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"cluster probabilities sum to {probs.sum()!r}, not 1")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def truncation(self) -> int:
        return self.probs.size

    @property
    def tail_value(self) -> float:
        """Mass at the truncation bound; large values signal insufficient K."""
        return float(self.probs[-1])

    def prob(self, k: int) -> float:
        if not (1 <= k <= self.truncation):
            raise IndexError(f"cluster size {k} outside 1..{self.truncation}")
        return float(self.probs[k - 1])


@dataclass(frozen=True)
class MatchingNumberDistribution:
    """Size-biased cluster distribution: probs[k-1] = P(a random individual's
    profile is carried by k individuals in total)."""

    probs: np.ndarray
    mean: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > _SUM_TOL:
            raise ValueError("matching-number probabilities must be a distribution")
        if self.mean < 1.0:
            raise ValueError("mean matching number cannot be below 1")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def truncation(self) -> int:
        return self.probs.size


def _poisson_pmf(counts: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Poisson pmf on a broadcast grid, safe for zero rates and large rates."""
    counts = np.asarray(counts, dtype=float)
    rates = np.asarray(rates, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = counts * np.log(rates) - rates - gammaln(counts + 1.0)
    pmf = np.where(np.isfinite(logs), np.exp(logs), 0.0)
    # rate 0: point mass at count 0
    zero_rate = np.broadcast_to(rates == 0.0, pmf.shape)
    zero_count = np.broadcast_to(counts == 0.0, pmf.shape)
    pmf = np.where(zero_rate, np.where(zero_count, 1.0, 0.0), pmf)
    return pmf


def nonmutated_offspring_pmf(m: int, j: int, p: PopulationParams) -> float:
    """P(a cluster of j identical haplotypes leaves exactly m non-mutated
    offspring).

    The offspring count is Poisson(j*lam) thinned by the per-offspring
    non-mutation probability 1-mu, hence Poisson(j * lam * (1-mu)).
    """
    return float(_poisson_pmf(np.asarray(m), np.asarray(j * p.effective_rate)))


def _single_generation_matrix(p: PopulationParams, K: int) -> np.ndarray:
    j = np.arange(1, K + 1, dtype=float)
    rates = j * p.effective_rate
    m = np.arange(1, K + 1, dtype=float)[:, None]
    T = _poisson_pmf(m, rates[None, :])
    # size-1 clusters also arise from every mutated offspring
    T[0, :] = j * p.lam * p.mu + j * p.effective_rate * np.exp(-rates)
    return T


def next_generation(
    f: ClusterDistribution, p: PopulationParams
) -> tuple[ClusterDistribution, float]:
    """One update of the equilibrium recursion.

    Returns the sum-normalized next-generation cluster distribution together
    with the pre-normalization total mass (the expected cluster-count growth
    factor, taking the current cluster count as 1).
    """
    if f.generations is not Generations.ONE:
        raise ValueError("next_generation operates on single-generation distributions")
    if p.effective_rate >= 1.0:
        raise ValueError("equilibrium recursion requires lambda*(1-mu) < 1")
    T = _single_generation_matrix(p, f.truncation)
    raw = T @ f.probs
    total = float(raw.sum())
    g = ClusterDistribution(raw / total, Generations.ONE)
    return g, total


def equilibrium(
    p: PopulationParams,
    truncation: int = DEFAULT_TRUNCATION,
    iters: int = DEFAULT_ITERATIONS,
    tol: float = DEFAULT_TOLERANCE,
) -> ClusterDistribution:
    """Iterate the cluster recursion from f = delta_1 to its fixed point.

    Iteration stops once max_k |f_k - f*_k| < tol or after `iters` updates;
    slow convergence is reported through the `converged` flag rather than an
    exception so that parameter sweeps can still use partial results.
    """
    if truncation < 2:
        raise ValueError("truncation must be at least 2")
    if p.effective_rate >= 1.0:
        raise ValueError("equilibrium recursion requires lambda*(1-mu) < 1")
    T = _single_generation_matrix(p, truncation)
    f = np.zeros(truncation)
    f[0] = 1.0
    residual = np.inf
    used = 0
    for used in range(1, iters + 1):
        raw = T @ f
        g = raw / raw.sum()
        residual = float(np.max(np.abs(g - f)))
        f = g
        if residual < tol:
            break
    return ClusterDistribution(
        f,
        Generations.ONE,
        converged=residual < tol,
        residual=residual,
        iterations=used,
    )


def combine_two(f: ClusterDistribution, p: PopulationParams) -> ClusterDistribution:
    """Cluster-size distribution of the current generation pooled with its
    offspring generation.  No iteration is required; the single-generation
    equilibrium is pushed through the two-generation derivative formulas and
    sum-normalized."""
    if f.generations is not Generations.ONE:
        raise ValueError("combine_two expects a single-generation equilibrium")
    K = f.truncation
    j = np.arange(1, K + 1, dtype=float)
    rates = j * p.effective_rate
    m = np.arange(1, K + 1, dtype=float)[:, None]
    # row m: parents-plus-surviving-children cluster reaches size m
    T = _poisson_pmf(m - j[None, :], rates[None, :])
    # row 1: every mutated child is a fresh singleton; a singleton parent
    # additionally stays a singleton when all its children mutate
    T[0, :] = j * p.lam * p.mu
    T[0, 0] = p.lam * p.mu + np.exp(-p.effective_rate)
    raw = T @ f.probs
    return ClusterDistribution(raw / raw.sum(), Generations.TWO_COMBINED)


def combine_three(f: ClusterDistribution, p: PopulationParams) -> ClusterDistribution:
    """Cluster-size distribution of three consecutive generations pooled.

    For a current cluster of size j with m non-mutated children, the pooled
    main cluster reaches size z = j + m + n where n is the number of
    non-mutated grandchildren of those children; each mutated child founds a
    cluster of size 1 + Poisson(lam*(1-mu)), and every mutated grandchild is
    a singleton.  The inner sum over the Poisson offspring count collapses
    exactly by Poisson thinning, so the computation is two K x K kernels and
    one matrix product.
    """
    if f.generations is not Generations.ONE:
        raise ValueError("combine_three expects a single-generation equilibrium")
    K = f.truncation
    lam, mu, eff = p.lam, p.mu, p.effective_rate
    fj = f.probs
    j = np.arange(1, K + 1, dtype=float)
    mean_size = float(j @ fj)

    z = np.arange(1, K + 1, dtype=float)
    # clusters founded by mutated children: one per child, grown by its own
    # non-mutated offspring
    raw = mean_size * lam * mu * _poisson_pmf(z - 1.0, np.asarray(eff))

    # main clusters: j parents + m non-mutated children + their non-mutated
    # offspring, summed over j and m via s = j + m
    m_grid = np.arange(0, K, dtype=float)
    A = _poisson_pmf(m_grid[:, None], (j * eff)[None, :])  # A[m, j-1]
    W = np.zeros((K, K))  # W[s-1, m] = f_{s-m} * A[m, s-m]
    for m in range(K):
        W[m:, m] = fj[: K - m] * A[m, : K - m]
    B = _poisson_pmf(m_grid[:, None], (m_grid * eff)[None, :])  # B[n, m]
    V = W @ B.T  # V[s-1, n] = sum_m W[s-1, m] B[n, m]
    for s in range(1, K + 1):
        raw[s - 1 :] += V[s - 1, : K - s + 1]

    # mutated grandchildren are always singletons
    raw[0] += mean_size * lam * lam * mu
    return ClusterDistribution(raw / raw.sum(), Generations.THREE_COMBINED)


def combined_distribution(
    p: PopulationParams,
    generations: Generations = Generations.THREE_COMBINED,
    truncation: int = DEFAULT_TRUNCATION,
    iters: int = DEFAULT_ITERATIONS,
    tol: float = DEFAULT_TOLERANCE,
) -> ClusterDistribution:
    """Equilibrium followed by the requested generation combination."""
    eq = equilibrium(p, truncation=truncation, iters=iters, tol=tol)
    if generations is Generations.ONE:
        return eq
    if generations is Generations.TWO_COMBINED:
        combined = combine_two(eq, p)
    else:
        combined = combine_three(eq, p)
    return ClusterDistribution(
        combined.probs,
        combined.generations,
        converged=eq.converged,
        residual=eq.residual,
        iterations=eq.iterations,
    )


def matching_number_distribution(f: ClusterDistribution) -> MatchingNumberDistribution:
    """Size-bias the cluster distribution: p(k) = k f_k / sum_k k f_k."""
    k = np.arange(1, f.truncation + 1, dtype=float)
    weighted = k * f.probs
    total = weighted.sum()
    if total <= 0.0:
        raise ValueError("cluster distribution has no mass")
    probs = weighted / total
    mean = float((k * probs).sum())
    return MatchingNumberDistribution(probs=probs, mean=mean)
