import itertools
from fractions import Fraction

import numpy as np
import pytest

from haplodrift.branching import MatchingNumberDistribution
from haplodrift.matchmodel import (
    HaplotypeMatchModel,
    PatternFactorParams,
    PopulationContext,
    PriorCache,
    conditional_count_likelihood,
    deletion_duplication_factor,
    haplotype_probability,
    pattern_factor_breakdown,
    posterior_matching,
    repeat_factor,
)
from haplodrift.types import (
    HaplotypeDatabase,
    MatchCounts,
    count_matches,
    extract_patterns,
    parse_haplotype,
)


def brute_force_conditional(c_i: int, n: int, M: int, omega: int) -> float:
    """Enumerate all (M+1)-subsets of a population whose first n items carry
    the queried haplotype, keeping subsets where that haplotype was seen at
    least once; one seen copy is attributed to the queried person, so c_i
    counts the remaining matches."""
    numerator = denominator = 0
    for subset in itertools.combinations(range(omega), M + 1):
        matches = sum(1 for item in subset if item < n)
        if matches == 0:
            continue
        denominator += 1
        if matches - 1 == c_i:
            numerator += 1
    return numerator / denominator


def delta_prior(K: int = 8) -> MatchingNumberDistribution:
    probs = np.zeros(K)
    probs[0] = 1.0
    return MatchingNumberDistribution(probs=probs, mean=1.0)


class TestConditionalCountLikelihood:
    def test_single_copy_population(self):
        assert conditional_count_likelihood(0, 1, 10, 1000) == pytest.approx(1.0)
        assert conditional_count_likelihood(1, 1, 10, 1000) == 0.0

    def test_against_subset_enumeration(self):
        omega, n, M = 10, 3, 4
        for c_i in range(0, min(n - 1, M) + 1):
            expected = brute_force_conditional(c_i, n, M, omega)
            got = conditional_count_likelihood(c_i, n, M, omega)
            assert got == pytest.approx(expected, rel=1e-10)

    def test_pmf_normalizes(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            omega = int(rng.integers(1000, 10**8))
            n = int(rng.integers(1, 400))
            M = int(rng.integers(0, 900))
            total = sum(
                conditional_count_likelihood(c, n, M, omega)
                for c in range(0, min(n - 1, M) + 1)
            )
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_sample_larger_than_population(self):
        with pytest.raises(ValueError):
            conditional_count_likelihood(0, 1, 10, 5)


class TestPosterior:
    def test_delta_prior(self):
        ctx = PopulationContext(omega=1000, M=10, prior=delta_prior())
        posterior, mean, p_u = posterior_matching(0, ctx)
        assert posterior[0] == pytest.approx(1.0)
        assert mean == pytest.approx(1.0)
        assert p_u == pytest.approx(1e-3)

    def test_impossible_count_raises(self):
        ctx = PopulationContext(omega=1000, M=10, prior=delta_prior())
        with pytest.raises(ValueError, match="zero mass"):
            posterior_matching(1, ctx)

    def test_mean_nondecreasing_in_count(self):
        probs = np.ones(32) / 32
        prior = MatchingNumberDistribution(probs=probs, mean=16.5)
        ctx = PopulationContext(omega=5000, M=100, prior=prior)
        means = [posterior_matching(c, ctx)[1] for c in range(0, 6)]
        assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))

    def test_posterior_normalizes(self):
        probs = np.ones(16) / 16
        prior = MatchingNumberDistribution(probs=probs, mean=8.5)
        ctx = PopulationContext(omega=10**8, M=718, prior=prior)
        posterior, _, _ = posterior_matching(2, ctx)
        assert posterior.sum() == pytest.approx(1.0, abs=1e-12)

    def test_population_must_exceed_observations(self):
        with pytest.raises(ValueError):
            PopulationContext(omega=10, M=10, prior=delta_prior())


def counts(c_i=0, c_d=0, c_r=0, r_m=(), M=0):
    return MatchCounts(c_i, c_d, c_r, tuple(r_m), M)


class TestPatternFactors:
    def test_no_artifacts(self, table_kit):
        d = (1, 2, 1, 1, 1, 1, 1, 1, 1)
        assert pattern_factor_breakdown(d, table_kit) == (0, 0, 0, 0)
        f = deletion_duplication_factor(
            d, table_kit, counts(M=100, r_m=(0,) * 9), PatternFactorParams()
        )
        assert f == 1.0

    def test_three_deletion_runs_one_duplication(self, table_kit):
        d = (2, 2, 0, 1, 0, 0, 0, 1, 0)
        assert pattern_factor_breakdown(d, table_kit) == (3, 2, 1, 0)
        params = PatternFactorParams()
        f = deletion_duplication_factor(d, table_kit, counts(M=50, r_m=(0,) * 9), params)
        exact = (
            Fraction(params.a) ** 3 * Fraction(params.b) ** 2 * Fraction(params.c)
        )
        assert f == pytest.approx(float(exact), rel=1e-14)
        assert f == params.a**3 * params.b**2 * params.c

    def test_two_runs_each(self, table_kit):
        d = (1, 2, 0, 2, 2, 0, 0, 1, 2)
        assert pattern_factor_breakdown(d, table_kit) == (2, 1, 2, 1)
        params = PatternFactorParams()
        f = deletion_duplication_factor(d, table_kit, counts(M=50, r_m=(0,) * 9), params)
        assert f == params.a**2 * params.b * params.c**2 * params.d

    def test_observed_pattern_uses_proportion(self, table_kit):
        d = (2, 2, 0, 1, 0, 0, 0, 1, 0)
        f = deletion_duplication_factor(
            d, table_kit, counts(c_d=4, M=99, r_m=(0,) * 9), PatternFactorParams()
        )
        assert f == pytest.approx(5 / 100)

    def test_multicopy_breaks_duplication_runs(self, table_kit):
        # duplication on either side of the multicopy locus: two separate runs
        d = (2, 2, 2, 1, 1, 1, 1, 1, 1)
        assert pattern_factor_breakdown(d, table_kit) == (0, 0, 2, 0)

    def test_extra_artifact_strictly_decreases_factor(self, table_kit):
        params = PatternFactorParams()
        base = (1, 2, 1, 1, 1, 1, 1, 1, 1)
        one_del = (0, 2, 1, 1, 1, 1, 1, 1, 1)
        two_runs = (0, 2, 0, 1, 1, 1, 1, 1, 1)
        c = counts(M=10, r_m=(0,) * 9)
        f0 = deletion_duplication_factor(base, table_kit, c, params)
        f1 = deletion_duplication_factor(one_del, table_kit, c, params)
        f2 = deletion_duplication_factor(two_runs, table_kit, c, params)
        assert f0 > f1 > f2 > 0


class TestRepeatFactor:
    def test_observed_branch(self):
        assert repeat_factor(counts(c_r=5, M=99, r_m=(0, 0))) == pytest.approx(0.06)

    def test_all_zero_locus_counts(self):
        assert repeat_factor(counts(M=9, r_m=(0, 0, 0))) == pytest.approx(1e-3)

    def test_mixed_locus_counts(self):
        assert repeat_factor(counts(M=9, r_m=(3, 0))) == pytest.approx(0.04)

    def test_unobserved_extra_locus_decreases(self):
        f1 = repeat_factor(counts(M=9, r_m=(3,)))
        f2 = repeat_factor(counts(M=9, r_m=(3, 0)))
        assert 0 < f2 < f1 <= 1


class TestHaplotypeMatchModel:
    @pytest.fixture(scope="class")
    def model(self, mini_kit):
        db = HaplotypeDatabase(
            tuple(
                parse_haplotype(text, mini_kit)
                for text in (
                    "14,15,16,17",
                    "14,15,16,18",
                    "13,15,16,17",
                    "14,-,16,17",
                    "14,15,16,17.2",
                )
            )
        )
        return HaplotypeMatchModel(
            mini_kit, db, omega=1e6, growth=0.0, truncation=64, iters=100
        )

    def test_observed_haplotype_skips_factors(self, model, mini_kit):
        result = model.probability(parse_haplotype("14,15,16,17", mini_kit))
        assert result.counts.c_I == 1
        assert result.f_D == result.f_R == 1.0
        assert result.probability == result.p_u

    def test_unobserved_composes_factors(self, model, mini_kit):
        h = parse_haplotype("11,11,11,11", mini_kit)
        result = model.probability(h)
        assert result.counts.c_I == 0
        # clean single-copy pattern appears in the database: proportion branch
        assert result.f_D == pytest.approx((1 + result.counts.c_D) / (result.counts.M + 1))
        assert result.probability == pytest.approx(
            result.f_D * result.f_R * result.p_u
        )
        assert 0 < result.probability <= 1

    def test_pattern_equivalent_haplotypes_get_equal_probability(self, model, mini_kit):
        r1 = model.probability(parse_haplotype("11,11,11,11", mini_kit))
        r2 = model.probability(parse_haplotype("12,12,12,12", mini_kit))
        assert r1.probability == r2.probability

    def test_composition_matches_components(self, model, mini_kit):
        h = parse_haplotype("11,11,11,11.2", mini_kit)
        result = model.probability(h)
        c = count_matches(h, HaplotypeDatabase(()), typed=[])  # structure only
        _, deldup, _ = extract_patterns(h)
        ctx = model.context_for(deldup)
        _, mean, p_u = posterior_matching(result.counts.c_I, ctx)
        assert result.p_u == pytest.approx(p_u)
        f_r = repeat_factor(result.counts)
        f_d = deletion_duplication_factor(
            deldup, mini_kit, result.counts, model.factors
        )
        assert result.probability == pytest.approx(f_d * f_r * p_u)

    def test_posterior_quantiles_monotone(self, model, mini_kit):
        result = model.probability(parse_haplotype("14,15,16,17", mini_kit))
        q50 = result.posterior_quantile(0.5)
        q99 = result.posterior_quantile(0.99)
        assert 1 <= q50 <= q99 <= 64

    def test_one_shot_wrapper_agrees(self, model, mini_kit):
        h = parse_haplotype("14,15,16,17", mini_kit)
        db = HaplotypeDatabase(
            tuple(
                parse_haplotype(text, mini_kit)
                for text in (
                    "14,15,16,17",
                    "14,15,16,18",
                    "13,15,16,17",
                    "14,-,16,17",
                    "14,15,16,17.2",
                )
            )
        )
        direct = haplotype_probability(
            h, db, (), mini_kit, omega=1e6, growth=0.0, truncation=64, iters=100
        )
        assert direct.probability == pytest.approx(model.probability(h).probability)


class TestPriorCache:
    def test_prior_depends_on_pattern_only_through_rate(self, mini_kit):
        cache = PriorCache(mini_kit, growth=0.0, truncation=64, iters=100)
        p1 = cache.prior_for((1, 1, 1, 1))
        p2 = cache.prior_for((1, 1, 1, 1))
        assert p1 is p2  # cached object reused
        p3 = cache.prior_for((0, 1, 1, 1))
        assert p3.mean > p1.mean  # fewer mutable loci, larger clusters

    def test_shared_cache_rejects_mismatched_settings(self, mini_kit):
        cache = PriorCache(mini_kit, growth=0.02, truncation=64, iters=100)
        db = HaplotypeDatabase((parse_haplotype("14,15,16,17", mini_kit),))
        with pytest.raises(ValueError, match="different settings"):
            HaplotypeMatchModel(mini_kit, db, omega=1e6, growth=0.0, prior_cache=cache)
