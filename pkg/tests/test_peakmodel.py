import numpy as np
import pytest

from haplodrift.peakmodel import (
    ContributorParams,
    EvidenceProfile,
    LocusComboTable,
    LocusEvidence,
    PeakModelConfig,
    effective_copies,
    locus_likelihood,
    locus_log_likelihood,
    position_set,
    simulate_evidence,
)
from haplodrift.types import Allele, LocusProfile, parse_haplotype

CFG = PeakModelConfig()


def ev(peaks, threshold=15.0, locus="L1"):
    return LocusEvidence(locus, tuple((Allele(a) if isinstance(a, int) else a, h) for a, h in peaks), threshold)


def single(a):
    return LocusProfile.single(Allele(a) if isinstance(a, int) else a)


class TestConfigValidation:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            PeakModelConfig(cv=0.0)

    def test_rejects_heavy_stutter(self):
        with pytest.raises(ValueError):
            PeakModelConfig(stutter_proportion=0.6)

    def test_negative_cells_rejected(self):
        with pytest.raises(ValueError):
            ContributorParams((-1.0,))

    def test_evidence_below_threshold_rejected(self):
        with pytest.raises(ValueError, match="censored"):
            ev([(12, 5.0)])


class TestLocusLikelihood:
    def test_nothing_expected_nothing_seen(self):
        # zero cells for every contributor and no peaks: likelihood is exactly 1
        value = locus_likelihood(
            ev([]), [single(12)], ContributorParams((0.0,)), CFG
        )
        assert value == 1.0
        value = locus_likelihood(
            ev([]), [LocusProfile.deleted()], ContributorParams((1000.0,)), CFG
        )
        assert value == 1.0

    def test_density_against_simulation_histogram(self):
        # single contributor, one allele, observed at its expected mean:
        # density should match a Monte Carlo histogram of simulated heights
        cells = 1000.0
        mass = cells * CFG.extraction_efficiency * CFG.aliquot_fraction * CFG.height_per_cell
        main_mean = (1 - CFG.stutter_proportion) * mass
        params = ContributorParams((cells,))
        profile = [single(12)]
        rng = np.random.default_rng(8)
        draws = rng.gamma(CFG.shape, main_mean * CFG.cv**2, size=1_000_000)
        width = main_mean * 0.01
        hist_density = ((np.abs(draws - main_mean) < width / 2).mean()) / width

        # isolate the main-peak factor: evidence with only the main peak, and
        # divide out the stutter-position dropout factor
        value = locus_likelihood(ev([(12, main_mean)]), profile, params, CFG)
        from scipy.special import gammainc

        stutter_mean = CFG.stutter_proportion * mass
        dropout = gammainc(CFG.shape, 15.0 / (stutter_mean * CFG.cv**2))
        density = value / dropout
        assert density == pytest.approx(hist_density, rel=0.03)

    def test_unimodal_in_observed_height(self):
        params = ContributorParams((1000.0,))
        mean = 1000.0 * 0.2 * 0.1 * 10.0
        values = [
            locus_log_likelihood(ev([(12, h)]), [single(12)], params, CFG)
            for h in (mean * 0.4, mean * 0.7, mean, mean * 1.4, mean * 2.0)
        ]
        assert values[2] == max(values)
        assert values[0] < values[1] < values[2] > values[3] > values[4]

    def test_stutter_moves_mass_down(self):
        positions = position_set([], [single(12)])
        assert positions == [Allele(11), Allele(12)]
        copies = effective_copies(single(12), positions, CFG.stutter_proportion)
        np.testing.assert_allclose(copies, [CFG.stutter_proportion, 1 - CFG.stutter_proportion])

    def test_partial_repeat_stutter_preserves_fraction(self):
        positions = position_set([], [single(Allele(17, 2))])
        assert positions == [Allele(16, 2), Allele(17, 2)]

    def test_dropout_factor(self):
        # expected allele with no peak contributes the mass below threshold
        from scipy.special import gammainc

        params = ContributorParams((1000.0,))
        cfg = PeakModelConfig(stutter_proportion=0.49)  # keep stutter above T too
        value = locus_likelihood(ev([]), [single(12)], params, cfg)
        mean = 1000.0 * 0.2 * 0.1 * 10.0
        expected = gammainc(cfg.shape, 15.0 / ((1 - 0.49) * mean * cfg.cv**2)) * gammainc(
            cfg.shape, 15.0 / (0.49 * mean * cfg.cv**2)
        )
        assert value == pytest.approx(expected, rel=1e-12)

    def test_drop_in_factor(self):
        # observed peak with no expected mass: drop-in rate times excess density
        params = ContributorParams((0.0,))
        h = 40.0
        value = locus_likelihood(ev([(13, h)]), [single(13)], params, CFG)
        expected = CFG.drop_in_rate * np.exp(-(h - 15.0) / CFG.drop_in_mean) / CFG.drop_in_mean
        assert value == pytest.approx(expected, rel=1e-12)

    def test_duplicated_allele_doubles_mass(self):
        params = ContributorParams((1000.0,))
        dup = LocusProfile.duplicated(Allele(12), Allele(12))
        positions = position_set([], [dup])
        copies = effective_copies(dup, positions, CFG.stutter_proportion)
        np.testing.assert_allclose(copies, [2 * CFG.stutter_proportion, 2 * (1 - CFG.stutter_proportion)])

    def test_profile_count_must_match_params(self):
        with pytest.raises(ValueError, match="contributor count"):
            locus_log_likelihood(ev([]), [single(12)], ContributorParams((1.0, 2.0)), CFG)


class TestComboTable:
    def test_matches_scalar_implementation(self):
        rng = np.random.default_rng(3)
        evidence = ev([(12, 200.0), (13, 150.0), (11, 18.0)])
        typed = (single(13),)
        pool = [
            LocusProfile.deleted(),
            single(11),
            single(12),
            single(14),
            LocusProfile.duplicated(Allele(11), Allele(12)),
        ]
        combos = [(p,) for p in pool] + [(p, q) for p in pool[:3] for q in pool[:3]]
        combos_1 = [c for c in combos if len(c) == 1]
        table = LocusComboTable(evidence, typed, combos_1, CFG, locus_position=2)
        params = ContributorParams((800.0, 300.0))
        vec = table.loglik(params)
        for combo, value in zip(combos_1, vec):
            direct = locus_log_likelihood(
                evidence, list(typed) + list(combo), params, CFG, locus_position=2
            )
            assert value == pytest.approx(direct, rel=1e-12, abs=1e-12)

    def test_empty_positions(self):
        table = LocusComboTable(ev([]), (), [(LocusProfile.deleted(),)], CFG, 0)
        np.testing.assert_array_equal(table.loglik(ContributorParams((10.0,))), [0.0])


class TestSimulateEvidence:
    def test_deterministic(self, mini_kit):
        h = parse_haplotype("14,15,16,17", mini_kit)
        params = ContributorParams((1000.0,))
        a = simulate_evidence(mini_kit, [h], params, CFG, 15.0, seed=5)
        b = simulate_evidence(mini_kit, [h], params, CFG, 15.0, seed=5)
        assert a == b

    def test_all_peaks_censored_at_threshold(self, mini_kit):
        h = parse_haplotype("14,15,16,17", mini_kit)
        evp = simulate_evidence(mini_kit, [h], ContributorParams((300.0,)), CFG, 15.0, seed=6)
        for locus_ev in evp.loci:
            assert all(height >= 15.0 for _, height in locus_ev.peaks)

    def test_csv_round_trip(self, mini_kit):
        h = parse_haplotype("14,15,16,17.2", mini_kit)
        evp = simulate_evidence(mini_kit, [h], ContributorParams((1000.0,)), CFG, 15.0, seed=7)
        again = EvidenceProfile.from_csv(evp.to_csv(), mini_kit, 15.0)
        assert again == evp

    def test_csv_header_required(self, mini_kit):
        with pytest.raises(ValueError, match="header"):
            EvidenceProfile.from_csv("a,b\n1,2\n", mini_kit, 15.0)

    def test_unknown_locus_rejected(self, mini_kit):
        with pytest.raises(ValueError, match="unknown"):
            EvidenceProfile.from_csv(
                "locus,allele,height_rfu\nNOPE,12,100\n", mini_kit, 15.0
            )
