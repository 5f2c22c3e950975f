"""Likelihood maximization and deconvolution for Y-STR mixtures.

The full likelihood sums peak-height terms over every joint haplotype of the
untyped contributors, which is astronomically large.  The pipeline restricts
it to a manageable candidate set:

1. maximize the likelihood over contributor amounts treating loci as if
   independent (product rule), with per-locus profile priors from database
   allele frequencies;
2. at the fitted amounts, rank the joint per-locus profiles of the untyped
   contributors by likelihood times prior and keep the top k per locus;
3. combine the per-locus lists into the top m joint haplotypes by best-first
   search over the sorted lists;
4. replace each candidate's product-rule prior with the haplotype match
   probability (database counts, branching prior, pattern factors);
5. re-maximize the summed likelihood over contributor amounts on the fixed
   candidate set.

Marginalizing the final weighted candidate set per contributor gives the
deconvolution; the ranked per-candidate log-likelihood curve indicates
whether k and m were large enough.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .matchmodel import HaplotypeMatchModel
from .mbest import top_m_products
from .peakmodel import (
    ContributorParams,
    EvidenceProfile,
    LocusComboTable,
    LocusEvidence,
    PeakModelConfig,
)
from .types import Allele, Haplotype, HaplotypeDatabase, Kit, LocusProfile

LN10 = math.log(10.0)


@dataclass(frozen=True)
class Hypothesis:
    """Contributor hypothesis: known profiles plus a number of untyped males."""

    typed: tuple[Haplotype, ...]
    n_untyped: int = 0

    def __post_init__(self):
        if self.n_untyped < 0:
            raise ValueError("n_untyped cannot be negative")
        if len(self.typed) + self.n_untyped < 1:
            raise ValueError("hypothesis needs at least one contributor")

    @property
    def n_contributors(self) -> int:
        return len(self.typed) + self.n_untyped


@dataclass(frozen=True)
class LocusFrequencies:
    """Database-derived locus profile prior: profile-type proportions plus
    add-one-smoothed allele frequencies over the candidate support."""

    p_deleted: float
    p_single: float
    p_duplicated: float
    allele_freqs: dict[Allele, float]

    def log_prior(self, profile: LocusProfile) -> float:
        if profile.is_deleted:
            return math.log(self.p_deleted)
        if profile.copy_number == 1:
            return math.log(self.p_single) + math.log(
                self.allele_freqs[profile.alleles[0]]
            )
        a, b = profile.alleles
        fa, fb = self.allele_freqs[a], self.allele_freqs[b]
        pair = fa * fa if a == b else 2.0 * fa * fb
        return math.log(self.p_duplicated) + math.log(pair)


def allele_frequencies(
    db: HaplotypeDatabase, kit: Kit, support: Sequence[set[Allele]]
) -> list[LocusFrequencies]:
    """Per-locus frequencies with one pseudocount per allele in the support
    (database alleles plus candidate alleles) and per profile type."""
    out = []
    for y in range(len(kit)):
        type_counts = {0: 1, 1: 1, 2: 1}
        allele_counts: dict[Allele, int] = {a: 1 for a in support[y]}
        for h in db.haplotypes:
            profile = h.profiles[y]
            type_counts[profile.copy_number] += 1
            for a in profile.alleles:
                allele_counts[a] = allele_counts.get(a, 0) + 1
        n_types = sum(type_counts.values())
        n_alleles = sum(allele_counts.values())
        out.append(
            LocusFrequencies(
                p_deleted=type_counts[0] / n_types,
                p_single=type_counts[1] / n_types,
                p_duplicated=type_counts[2] / n_types,
                allele_freqs={a: c / n_alleles for a, c in allele_counts.items()},
            )
        )
    return out


def candidate_alleles(ev_y: LocusEvidence, neighborhood: int = 1) -> list[Allele]:
    """Observed alleles widened by the stutter neighborhood."""
    out: set[Allele] = set()
    for a, _ in ev_y.peaks:
        for delta in range(-neighborhood, neighborhood + 1):
            i = a.repeat_integer + delta
            if 0 <= i <= 99:
                out.add(Allele(i, a.repeat_part))
    return sorted(out)


def candidate_profiles(ev_y: LocusEvidence, neighborhood: int = 1) -> list[LocusProfile]:
    """Deleted, every single allele, and every ordered pair over the
    candidate alleles.  A locus with no surviving peaks only admits the
    deletion candidate."""
    alleles = candidate_alleles(ev_y, neighborhood)
    profiles = [LocusProfile.deleted()]
    profiles.extend(LocusProfile.single(a) for a in alleles)
    for i, a in enumerate(alleles):
        for b in alleles[i:]:
            profiles.append(LocusProfile.duplicated(a, b))
    return profiles


@dataclass
class LocusContext:
    """Everything Step 1 and Step 2 need for one locus."""

    ev: LocusEvidence
    typed_profiles: tuple[LocusProfile, ...]
    combos: list[tuple[LocusProfile, ...]]
    log_priors: np.ndarray
    table: LocusComboTable
    step1_indices: np.ndarray  # subset of combos used inside the optimizer


def build_contexts(
    kit: Kit,
    ev: EvidenceProfile,
    hyp: Hypothesis,
    freqs: Sequence[LocusFrequencies],
    cfg: PeakModelConfig,
    neighborhood: int = 1,
    step1_joint_cap: int = 50_000,
) -> list[LocusContext]:
    contexts = []
    for y in range(len(kit)):
        ev_y = ev.loci[y]
        typed_profiles = tuple(h.profiles[y] for h in hyp.typed)
        if hyp.n_untyped == 0:
            combos: list[tuple[LocusProfile, ...]] = [()]
        else:
            profiles = candidate_profiles(ev_y, neighborhood)
            combos = [c for c in itertools.product(profiles, repeat=hyp.n_untyped)]
        log_priors = np.array(
            [sum(freqs[y].log_prior(p) for p in combo) for combo in combos]
        )
        table = LocusComboTable(ev_y, typed_profiles, combos, cfg, y)
        step1_indices = np.arange(len(combos))
        contexts.append(
            LocusContext(ev_y, typed_profiles, combos, log_priors, table, step1_indices)
        )
    return contexts


def _initial_cells_guess(
    ev: EvidenceProfile, n_contrib: int, cfg: PeakModelConfig
) -> float:
    """Total-cell heuristic: observed peak mass divided by per-cell yield."""
    per_locus = [sum(h for _, h in ev_y.peaks) for ev_y in ev.loci if ev_y.peaks]
    if not per_locus:
        return 100.0
    mean_mass = float(np.mean(per_locus))
    total = mean_mass / (
        cfg.height_per_cell * cfg.extraction_efficiency * cfg.aliquot_fraction
    )
    return max(total, 1.0)


def _start_grid(total: float, n_contrib: int) -> list[np.ndarray]:
    """Fixed, documented start grid: equal shares, then one dominant
    contributor at 70% for each slot."""
    starts = [np.full(n_contrib, total / n_contrib)]
    if n_contrib > 1:
        for i in range(n_contrib):
            shares = np.full(n_contrib, 0.3 / (n_contrib - 1))
            shares[i] = 0.7
            starts.append(total * shares)
    else:
        starts.append(np.array([total * 0.5]))
        starts.append(np.array([total * 2.0]))
    return starts


def _fit_cells(
    objective: Callable[[ContributorParams], float],
    n_contrib: int,
    total_guess: float,
    fit_degradation: bool = False,
    maxiter: int = 400,
) -> tuple[ContributorParams, float]:
    """Deterministic multi-start Nelder-Mead over log cell counts (and
    degradation rates when enabled).  Returns the best parameters and the
    maximized log-likelihood (natural log)."""

    n_deg = n_contrib if fit_degradation else 0

    def unpack(x: np.ndarray) -> ContributorParams:
        cells = tuple(float(c) for c in np.exp(x[:n_contrib]))
        if fit_degradation:
            deg = tuple(float(max(d, 0.0)) for d in x[n_contrib:])
        else:
            deg = tuple(0.0 for _ in range(n_contrib))
        return ContributorParams(cells, deg)

    def neg(x: np.ndarray) -> float:
        value = objective(unpack(x))
        return -value if np.isfinite(value) else 1e300

    best_x, best_val = None, -np.inf
    for start in _start_grid(total_guess, n_contrib):
        x0 = np.concatenate([np.log(start), np.zeros(n_deg)])
        res = minimize(
            neg,
            x0,
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-7, "adaptive": True},
        )
        if -res.fun > best_val:
            best_val, best_x = -res.fun, res.x
    return unpack(best_x), float(best_val)


def _step1_objective(contexts: Sequence[LocusContext]) -> Callable[[ContributorParams], float]:
    def objective(params: ContributorParams) -> float:
        total = 0.0
        for ctx in contexts:
            loglik = ctx.table.loglik(params)
            idx = ctx.step1_indices
            total += float(logsumexp(loglik[idx] + ctx.log_priors[idx]))
        return total

    return objective


def _apply_step1_cap(
    contexts: Sequence[LocusContext], params: ContributorParams, cap: int
) -> None:
    """Restrict the Step-1 sum to the best-scoring combos when the joint
    enumeration is too large for the optimizer loop.  Step 2 always ranks
    the full enumeration."""
    for ctx in contexts:
        if len(ctx.combos) <= cap:
            continue
        scores = ctx.table.loglik(params) + ctx.log_priors
        keep = np.argsort(-scores, kind="stable")[:cap]
        ctx.step1_indices = np.sort(keep)


def maximize_product_rule(
    contexts: Sequence[LocusContext],
    ev: EvidenceProfile,
    hyp: Hypothesis,
    cfg: PeakModelConfig,
    fit_degradation: bool = False,
    step1_joint_cap: int = 50_000,
) -> tuple[ContributorParams, float]:
    """Step 1: fit contributor amounts under the product rule.

    Returns (params, natural-log likelihood).  Deterministic: fixed start
    grid, fixed optimizer options.
    """
    n = hyp.n_contributors
    total = _initial_cells_guess(ev, n, cfg)
    if any(len(ctx.combos) > step1_joint_cap for ctx in contexts):
        rough = ContributorParams(tuple(total / n for _ in range(n)))
        _apply_step1_cap(contexts, rough, step1_joint_cap)
    objective = _step1_objective(contexts)
    return _fit_cells(objective, n, total, fit_degradation=fit_degradation)


def top_k_locus_profiles(
    ctx: LocusContext, params: ContributorParams, k: int
) -> list[tuple[tuple[LocusProfile, ...], float]]:
    """Step 2: the k highest likelihood-times-prior joint locus profiles,
    ranked over the full enumeration; ties break on enumeration order."""
    scores = ctx.table.loglik(params) + ctx.log_priors
    order = np.argsort(-scores, kind="stable")[:k]
    return [(ctx.combos[i], float(scores[i])) for i in order]


@dataclass
class CandidateSet:
    """Joint haplotypes over the untyped contributors with their scores.

    Arrays are aligned; `order` sorts them descending by final weight once
    Step 5 has run.
    """

    hypothesis: Hypothesis
    per_locus: list[list[tuple[tuple[LocusProfile, ...], float]]]
    choices: np.ndarray  # (n_candidates, n_loci) indices into per_locus lists
    product_log_scores: np.ndarray
    untyped: list[tuple[Haplotype, ...]]
    log_match_prob: np.ndarray | None = None
    log_peak: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.untyped)


def top_m_haplotypes(
    hyp: Hypothesis,
    per_locus: list[list[tuple[tuple[LocusProfile, ...], float]]],
    m: int,
) -> CandidateSet:
    """Step 3: combine the per-locus ranked lists into the top m joint
    haplotypes by product-rule score."""
    if any(not lst for lst in per_locus):
        raise ValueError("every locus must contribute at least one ranked profile")
    score_lists = [[s for _, s in lst] for lst in per_locus]
    ranked = top_m_products(score_lists, m)
    choices = np.array([idx for idx, _ in ranked], dtype=np.intp)
    scores = np.array([s for _, s in ranked])
    untyped = []
    for idx in choices:
        per_person = []
        for u in range(hyp.n_untyped):
            per_person.append(
                Haplotype(tuple(per_locus[y][idx[y]][0][u] for y in range(len(per_locus))))
            )
        untyped.append(tuple(per_person))
    return CandidateSet(
        hypothesis=hyp,
        per_locus=per_locus,
        choices=choices.reshape(len(ranked), -1),
        product_log_scores=scores,
        untyped=untyped,
    )


class _CandidateEvaluator:
    """Vectorized P(evidence | candidate) over the candidate set: per locus
    only the distinct profile combos are evaluated, then gathered."""

    def __init__(
        self,
        contexts: Sequence[LocusContext],
        candidates: CandidateSet,
        cfg: PeakModelConfig,
    ):
        self._tables: list[LocusComboTable] = []
        self._gather: list[np.ndarray] = []
        for y, ctx in enumerate(contexts):
            combo_ids = [candidates.per_locus[y][i][0] for i in candidates.choices[:, y]]
            distinct: dict[tuple[LocusProfile, ...], int] = {}
            gather = np.empty(len(combo_ids), dtype=np.intp)
            for row, combo in enumerate(combo_ids):
                if combo not in distinct:
                    distinct[combo] = len(distinct)
                gather[row] = distinct[combo]
            table = LocusComboTable(
                ctx.ev, ctx.typed_profiles, list(distinct), cfg, y
            )
            self._tables.append(table)
            self._gather.append(gather)

    def log_peak(self, params: ContributorParams) -> np.ndarray:
        out = None
        for table, gather in zip(self._tables, self._gather):
            vals = table.loglik(params)[gather]
            out = vals if out is None else out + vals
        return out


def reweight_and_maximize(
    candidates: CandidateSet,
    match_model: HaplotypeMatchModel,
    contexts: Sequence[LocusContext],
    params0: ContributorParams,
    cfg: PeakModelConfig,
    fit_degradation: bool = False,
) -> tuple[float, ContributorParams]:
    """Steps 4 and 5: swap product-rule priors for haplotype match
    probabilities, then re-maximize over contributor amounts.

    The candidate set is modified in place (match probabilities, final peak
    likelihoods, normalized weights, descending order) and the maximized
    natural-log likelihood plus fitted parameters are returned.
    """
    cache: dict[tuple[Haplotype, ...], float] = {}
    log_prob = np.empty(len(candidates))
    for i, people in enumerate(candidates.untyped):
        if people not in cache:
            total = 0.0
            for h in people:
                p = match_model.probability(h).probability
                # zero-weight factors can zero a candidate out entirely
                total += math.log(p) if p > 0 else -math.inf
            cache[people] = total
        log_prob[i] = cache[people]
    candidates.log_match_prob = log_prob

    evaluator = _CandidateEvaluator(contexts, candidates, cfg)

    def objective(params: ContributorParams) -> float:
        return float(logsumexp(evaluator.log_peak(params) + log_prob))

    n = candidates.hypothesis.n_contributors
    total_guess = float(np.sum(params0.cell_counts))
    starts = [np.asarray(params0.cell_counts)] + _start_grid(total_guess, n)[:1]
    best_params, best_val = None, -np.inf
    n_deg = n if fit_degradation else 0
    for start in starts:
        x0 = np.concatenate([np.log(np.maximum(start, 1e-9)), np.zeros(n_deg)])

        def neg(x):
            cells = tuple(float(c) for c in np.exp(x[:n]))
            deg = (
                tuple(float(max(d, 0.0)) for d in x[n:])
                if fit_degradation
                else tuple(0.0 for _ in range(n))
            )
            value = objective(ContributorParams(cells, deg))
            return -value if np.isfinite(value) else 1e300

        res = minimize(
            neg,
            x0,
            method="Nelder-Mead",
            options={"maxiter": 400, "xatol": 1e-4, "fatol": 1e-7, "adaptive": True},
        )
        if -res.fun > best_val:
            best_val = -res.fun
            cells = tuple(float(c) for c in np.exp(res.x[:n]))
            deg = (
                tuple(float(max(d, 0.0)) for d in res.x[n:])
                if fit_degradation
                else tuple(0.0 for _ in range(n))
            )
            best_params = ContributorParams(cells, deg)

    if not np.isfinite(best_val):
        raise ValueError("all candidate likelihoods vanished; nothing to maximize")

    log_peak = evaluator.log_peak(best_params)
    joint = log_peak + log_prob
    weights = np.exp(joint - logsumexp(joint))
    # candidates with vanished probability or likelihood carry zero weight
    # and would put non-finite values into reports; drop them
    finite = np.isfinite(joint)
    order = np.lexsort((candidates.product_log_scores, joint))[::-1]
    order = order[finite[order]]
    candidates.choices = candidates.choices[order]
    candidates.product_log_scores = candidates.product_log_scores[order]
    candidates.log_match_prob = log_prob[order]
    candidates.log_peak = log_peak[order]
    candidates.weights = weights[order]
    candidates.untyped = [candidates.untyped[i] for i in order]
    return float(best_val), best_params


def deconvolve(
    candidates: CandidateSet, contributor_index: int
) -> list[tuple[Haplotype, float]]:
    """Marginal haplotype distribution of one untyped contributor, sorted
    descending by probability."""
    if candidates.weights is None:
        raise ValueError("candidate set has no weights; run reweight_and_maximize first")
    if not (0 <= contributor_index < candidates.hypothesis.n_untyped):
        raise IndexError("contributor index out of range")
    marginals: dict[Haplotype, float] = {}
    for people, w in zip(candidates.untyped, candidates.weights):
        h = people[contributor_index]
        marginals[h] = marginals.get(h, 0.0) + float(w)
    return sorted(marginals.items(), key=lambda kv: (-kv[1], str(kv[0])))


@dataclass
class MixtureResult:
    hypothesis: Hypothesis
    product_rule_log10: float
    haplotype_model_log10: float
    step1_params: ContributorParams
    final_params: ContributorParams
    candidates: CandidateSet
    curve_log10: np.ndarray
    deconvolution: list[list[tuple[Haplotype, float]]]

    @property
    def mixing_proportions(self) -> tuple[float, ...]:
        cells = np.asarray(self.final_params.cell_counts)
        return tuple(float(c) for c in cells / cells.sum())


def analyze_mixture(
    kit: Kit,
    ev: EvidenceProfile,
    hyp: Hypothesis,
    db: HaplotypeDatabase,
    match_model: HaplotypeMatchModel | None = None,
    cfg: PeakModelConfig = PeakModelConfig(),
    k: int = 1500,
    m: int = 5000,
    omega: float = 2e8,
    growth: float = 0.0,
    neighborhood: int = 1,
    fit_degradation: bool = False,
    step1_joint_cap: int = 50_000,
) -> MixtureResult:
    """Run Steps 1-5 end to end for one hypothesis and deconvolve."""
    support = [
        set(candidate_alleles(ev.loci[y], neighborhood)) for y in range(len(kit))
    ]
    freqs = allele_frequencies(db, kit, support)
    contexts = build_contexts(
        kit, ev, hyp, freqs, cfg, neighborhood=neighborhood, step1_joint_cap=step1_joint_cap
    )
    params1, ll1 = maximize_product_rule(
        contexts, ev, hyp, cfg, fit_degradation=fit_degradation,
        step1_joint_cap=step1_joint_cap,
    )
    per_locus = [top_k_locus_profiles(ctx, params1, k) for ctx in contexts]
    candidates = top_m_haplotypes(hyp, per_locus, m)
    if match_model is None:
        match_model = HaplotypeMatchModel(
            kit, db, typed=hyp.typed, omega=omega, growth=growth
        )
    ll2, params2 = reweight_and_maximize(
        candidates, match_model, contexts, params1, cfg,
        fit_degradation=fit_degradation,
    )
    curve = np.sort(candidates.log_peak + candidates.log_match_prob)[::-1] / LN10
    deconvolution = [deconvolve(candidates, u) for u in range(hyp.n_untyped)]
    return MixtureResult(
        hypothesis=hyp,
        product_rule_log10=ll1 / LN10,
        haplotype_model_log10=ll2 / LN10,
        step1_params=params1,
        final_params=params2,
        candidates=candidates,
        curve_log10=curve,
        deconvolution=deconvolution,
    )


def log10_likelihood_ratio(
    result_h1: MixtureResult, result_h2: MixtureResult
) -> float:
    """log10 LR of two fitted hypotheses under the haplotype model."""
    return result_h1.haplotype_model_log10 - result_h2.haplotype_model_log10
