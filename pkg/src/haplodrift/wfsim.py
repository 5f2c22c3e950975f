"""Forward population simulator used as the brute-force oracle for the
branching-process engine.

Haplotype identity is tracked by integer labels under the infinite-sites
approximation: a mutation always creates a never-before-seen profile, so a
fresh label per mutation is sufficient and no allele vectors are simulated.
Offspring generation and mutation are applied as two separate steps per
generation.  Two reproduction modes are supported: free Poisson growth and
classic fixed-size resampling.
"""

from __future__ import annotations

import enum
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np


class SimMode(enum.Enum):
    POISSON_GROWTH = "poisson"
    WRIGHT_FISHER_FIXED = "fixed"


@dataclass(frozen=True)
class SimConfig:
    initial_size: int
    generations: int
    lam: float = 1.0
    mu: float = 0.0
    seed: int = 0
    mode: SimMode = SimMode.WRIGHT_FISHER_FIXED

    def __post_init__(self):
        if self.initial_size < 1:
            raise ValueError("initial_size must be at least 1")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError("mu must lie in [0, 1]")


@dataclass(frozen=True)
class SimSummary:
    """Cluster-size histograms of the final generation and of the final three
    generations pooled, plus the population trajectory."""

    final_histogram: dict[int, int]
    combined3_histogram: dict[int, int]
    trajectory: tuple[int, ...]
    extinct_at: int | None = None

    @property
    def extinct(self) -> bool:
        return self.extinct_at is not None


def _cluster_histogram(labels: np.ndarray) -> dict[int, int]:
    _, counts = np.unique(labels, return_counts=True)
    sizes, multiplicity = np.unique(counts, return_counts=True)
    return {int(s): int(m) for s, m in zip(sizes, multiplicity)}


def simulate(cfg: SimConfig) -> SimSummary:
    """Run the simulator; deterministic for a given config (seed included)."""
    rng = np.random.default_rng(cfg.seed)
    labels = np.arange(cfg.initial_size, dtype=np.int64)
    next_label = cfg.initial_size
    trajectory = [cfg.initial_size]
    recent: list[np.ndarray] = [labels]
    extinct_at = None
    for gen in range(1, cfg.generations + 1):
        if cfg.mode is SimMode.WRIGHT_FISHER_FIXED:
            parents = rng.integers(0, labels.size, size=cfg.initial_size)
            children = labels[parents]
        else:
            offspring = rng.poisson(cfg.lam, size=labels.size)
            children = np.repeat(labels, offspring)
            if children.size == 0:
                extinct_at = gen
                trajectory.append(0)
                break
        mutated = rng.random(children.size) < cfg.mu
        n_mut = int(mutated.sum())
        if n_mut:
            children[mutated] = np.arange(next_label, next_label + n_mut)
            next_label += n_mut
        labels = children
        trajectory.append(labels.size)
        recent.append(labels)
        if len(recent) > 3:
            recent.pop(0)
    final = _cluster_histogram(recent[-1]) if recent[-1].size else {}
    combined = np.concatenate(recent) if recent else np.empty(0, dtype=np.int64)
    combined_hist = _cluster_histogram(combined) if combined.size else {}
    return SimSummary(
        final_histogram=final,
        combined3_histogram=combined_hist,
        trajectory=tuple(trajectory),
        extinct_at=extinct_at,
    )


def worker_count() -> int:
    """Worker cap for replicate-level parallelism (HAPLODRIFT_THREADS, default 1)."""
    try:
        return max(1, int(os.environ.get("HAPLODRIFT_THREADS", "1")))
    except ValueError:
        return 1


def run_replicates(cfg: SimConfig, replicates: int) -> list[SimSummary]:
    """Independent replicates with streams derived from (seed, replicate index)."""
    configs = [
        SimConfig(
            initial_size=cfg.initial_size,
            generations=cfg.generations,
            lam=cfg.lam,
            mu=cfg.mu,
            seed=np.random.SeedSequence((cfg.seed, i)).generate_state(1)[0],
            mode=cfg.mode,
        )
        for i in range(replicates)
    ]
    workers = worker_count()
    if workers == 1:
        return [simulate(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(simulate, configs))


def total_progeny_histogram(
    lambda_eff: float, trials: int, seed: int = 0
) -> dict[int, int]:
    """Histogram of founder-plus-identical-descendant totals over independent
    branching realizations with Poisson(lambda_eff) offspring per individual."""
    if lambda_eff < 0 or lambda_eff >= 1:
        raise ValueError("lambda_eff must lie in [0, 1) for finite total progeny")
    rng = np.random.default_rng(seed)
    alive = np.ones(trials, dtype=np.int64)
    totals = np.ones(trials, dtype=np.int64)
    while alive.any():
        active = alive > 0
        children = rng.poisson(lambda_eff * alive[active])
        totals[active] += children
        alive = np.zeros_like(alive)
        alive[active] = children
    values, counts = np.unique(totals, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def family_cluster_histogram(
    eq_probs: np.ndarray,
    lam: float,
    mu: float,
    generations: int,
    trials: int,
    seed: int = 0,
) -> dict[int, int]:
    """Monte Carlo oracle for the combined-generation cluster distributions.

    Each trial draws a founder cluster size j from `eq_probs`, then simulates
    children (and grandchildren when generations == 3) literally: Poisson
    offspring per cluster, binomial mutation thinning, fresh profiles for
    mutants.  Every cluster the pooled generations contain is recorded.
    """
    if generations not in (2, 3):
        raise ValueError("generations must be 2 or 3")
    rng = np.random.default_rng(seed)
    K = len(eq_probs)
    j = rng.choice(np.arange(1, K + 1), size=trials, p=eq_probs)
    children = rng.poisson(lam * j)
    kept = rng.binomial(children, 1.0 - mu)  # non-mutated children
    mutated = children - kept

    hist: Counter = Counter()
    if generations == 2:
        main = j + kept
        sizes, counts = np.unique(main, return_counts=True)
        for s, c in zip(sizes, counts):
            hist[int(s)] += int(c)
        hist[1] += int(mutated.sum())
        return dict(hist)

    # third generation: children of the children
    grand_of_kept = rng.poisson(lam * kept)
    grand_kept = rng.binomial(grand_of_kept, 1.0 - mu)
    main = j + kept + grand_kept
    sizes, counts = np.unique(main, return_counts=True)
    for s, c in zip(sizes, counts):
        hist[int(s)] += int(c)
    singleton_grandchildren = int((grand_of_kept - grand_kept).sum())

    # each mutated child founds its own cluster
    n_mut = int(mutated.sum())
    if n_mut:
        g = rng.poisson(lam, size=n_mut)
        g_kept = rng.binomial(g, 1.0 - mu)
        sizes, counts = np.unique(1 + g_kept, return_counts=True)
        for s, c in zip(sizes, counts):
            hist[int(s)] += int(c)
        singleton_grandchildren += int((g - g_kept).sum())
    hist[1] += singleton_grandchildren
    return dict(hist)
