"""Prequential model-fit diagnostics for a fitted mixture.

Allele positions are walked in a fixed order (kit locus order, alleles
ascending).  At each position the one-step-ahead predictive distribution of
the peak is formed under the current candidate weights, the observation is
scored, and only then are the weights updated with that observation, so the
emitted quantities are independent when the model is correct:

* probability-plot points: for each observed peak, the predictive
  P(H <= h | H >= threshold, previous data) -- uniform under a correct model;
* presence/absence monitor: the cumulative normalized score
  sum(x - pi) / sqrt(sum(pi (1 - pi))) over positions, where x indicates a
  peak at or above the threshold and pi its predictive probability --
  asymptotically standard normal under a correct model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammainc, gammaln, logsumexp

from .peakmodel import (
    ContributorParams,
    EvidenceProfile,
    PeakModelConfig,
    effective_copies,
    position_set,
    _amplifiable_mass,
)
from .types import Haplotype, Kit


@dataclass(frozen=True)
class ProbabilityPoint:
    locus: str
    allele: str
    value: float


@dataclass(frozen=True)
class MonitorPoint:
    locus: str
    allele: str
    observed: bool
    predicted: float
    z: float


@dataclass
class DiagnosticsReport:
    probability_points: list[ProbabilityPoint]
    monitor: list[MonitorPoint]

    @property
    def final_z(self) -> float:
        return self.monitor[-1].z if self.monitor else 0.0


def run_diagnostics(
    kit: Kit,
    ev: EvidenceProfile,
    typed: Sequence[Haplotype],
    candidates: Sequence[tuple[tuple[Haplotype, ...], float]],
    params: ContributorParams,
    cfg: PeakModelConfig,
) -> DiagnosticsReport:
    """Walk the evidence prequentially under a weighted candidate set.

    `candidates` holds (untyped haplotypes, log prior weight) pairs; pass a
    single `((), 0.0)` entry when every contributor is typed.  Weights start
    from the haplotype probabilities and absorb the data position by
    position, never ahead of the prediction being scored.
    """
    if not candidates:
        raise ValueError("need at least one candidate profile set")
    n_cand = len(candidates)
    logw = np.array([lw for _, lw in candidates], dtype=float)
    logw -= logsumexp(logw)

    shape = cfg.shape
    T = ev.analytic_threshold
    points: list[ProbabilityPoint] = []
    monitor: list[MonitorPoint] = []
    num = 0.0
    var = 0.0

    for y, locus in enumerate(kit.loci):
        ev_y = ev.loci[y]
        heights = {a: h for a, h in ev_y.peaks}
        all_profiles = []
        for people, _ in candidates:
            all_profiles.extend(h.profiles[y] for h in people)
        all_profiles.extend(h.profiles[y] for h in typed)
        positions = position_set(heights.keys(), all_profiles)
        if not positions:
            continue

        mass = _amplifiable_mass(params, cfg, y)
        means = np.zeros((n_cand, len(positions)))
        for c, (people, _) in enumerate(candidates):
            profiles = list(typed) + list(people)
            for contrib, person in enumerate(profiles):
                means[c] += mass[contrib] * effective_copies(
                    person.profiles[y], positions, cfg.stutter_proportion
                )
        means *= cfg.height_per_cell

        for i, pos in enumerate(positions):
            mean_col = means[:, i]
            positive = mean_col > 0
            scale = np.where(positive, mean_col * cfg.cv * cfg.cv, 1.0)
            cdf_T = np.where(positive, gammainc(shape, T / scale), 0.0)
            present = np.where(positive, 1.0 - cdf_T, cfg.drop_in_rate)

            w = np.exp(logw - logsumexp(logw))
            pi = float(w @ present)
            observed = pos in heights

            if observed:
                h = heights[pos]
                cdf_h = np.where(positive, gammainc(shape, h / scale), 0.0)
                trunc = np.where(
                    positive & (present > 0),
                    np.clip(cdf_h - cdf_T, 0.0, None) / np.maximum(present, 1e-300),
                    1.0 - math.exp(-(h - T) / cfg.drop_in_mean),
                )
                weight_present = w * present
                denom = weight_present.sum()
                u = float(weight_present @ trunc / denom) if denom > 0 else 1.0
                points.append(
                    ProbabilityPoint(locus.name, str(pos), min(max(u, 0.0), 1.0))
                )
                with np.errstate(divide="ignore"):
                    log_pdf = np.where(
                        positive,
                        (shape - 1.0) * np.log(h)
                        - h / scale
                        - shape * np.log(scale)
                        - gammaln(shape),
                        math.log(cfg.drop_in_rate)
                        - (h - T) / cfg.drop_in_mean
                        - math.log(cfg.drop_in_mean),
                    )
                logw = logw + log_pdf
            else:
                with np.errstate(divide="ignore"):
                    log_absent = np.where(
                        positive,
                        np.log(np.maximum(cdf_T, 1e-300)),
                        math.log1p(-cfg.drop_in_rate),
                    )
                logw = logw + log_absent
            logw -= logsumexp(logw)

            num += (1.0 if observed else 0.0) - pi
            var += pi * (1.0 - pi)
            z = num / math.sqrt(var) if var > 0 else 0.0
            monitor.append(MonitorPoint(locus.name, str(pos), observed, pi, z))

    return DiagnosticsReport(probability_points=points, monitor=monitor)
