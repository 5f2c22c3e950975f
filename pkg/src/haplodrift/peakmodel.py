"""Reference peak-height model for Y-STR electropherogram data.

This is the package's built-in stand-in for a full probabilistic genotyping
model, fully specified here so results are reproducible:

* each contributor provides `cells` pre-extraction cells; the amplifiable
  template is cells x extraction_efficiency x aliquot_fraction, optionally
  decayed by exp(-degradation x locus position) along the kit;
* a peak's expected height is height_per_cell x total amplifiable copies at
  that allele, after moving `stutter_proportion` of every allele's mass to
  the allele one whole repeat below (single back-stutter; forward and
  double-back stutters are not modelled);
* observed heights are Gamma distributed around the expected height with
  coefficient of variation `cv`; peaks below the analytic threshold are
  censored, so an expected-but-unseen allele contributes the Gamma mass
  below the threshold;
* an observed peak with no expected mass is drop-in: it contributes
  drop_in_rate x an exponential density for its excess height above the
  threshold.  No penalty is applied for the absence of drop-ins, which keeps
  the empty-evidence likelihood at exactly 1 and cancels in all likelihood
  ratios.

The same per-position rules drive the likelihood, the evidence simulator and
the model-fit diagnostics.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammainc, gammaln

from .types import Allele, Haplotype, Kit, LocusProfile


@dataclass(frozen=True)
class PeakModelConfig:
    height_per_cell: float = 10.0
    stutter_proportion: float = 0.08
    cv: float = 0.25
    extraction_efficiency: float = 0.2
    aliquot_fraction: float = 0.1
    drop_in_rate: float = 1e-3
    drop_in_mean: float = 30.0

    def __post_init__(self):
        for name in (
            "height_per_cell",
            "cv",
            "extraction_efficiency",
            "aliquot_fraction",
            "drop_in_rate",
            "drop_in_mean",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.stutter_proportion < 0.5):
            raise ValueError("stutter_proportion must lie in (0, 0.5)")

    @property
    def shape(self) -> float:
        return 1.0 / (self.cv * self.cv)


@dataclass(frozen=True)
class ContributorParams:
    """Per-contributor pre-extraction cell counts and degradation decay rates."""

    cell_counts: tuple[float, ...]
    degradation: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.cell_counts:
            raise ValueError("need at least one contributor")
        if any(c < 0 for c in self.cell_counts):
            raise ValueError("cell counts must be non-negative")
        if not self.degradation:
            object.__setattr__(
                self, "degradation", tuple(0.0 for _ in self.cell_counts)
            )
        elif len(self.degradation) != len(self.cell_counts):
            raise ValueError("degradation vector must match cell_counts length")


@dataclass(frozen=True)
class LocusEvidence:
    locus: str
    peaks: tuple[tuple[Allele, float], ...]
    threshold: float

    def __post_init__(self):
        alleles = [a for a, _ in self.peaks]
        if len(set(alleles)) != len(alleles):
            raise ValueError(f"duplicate allele in evidence at {self.locus}")
        if any(h < self.threshold for _, h in self.peaks):
            raise ValueError("peaks below the analytic threshold must be censored")


@dataclass(frozen=True)
class EvidenceProfile:
    """Per-locus peak lists aligned with the kit, plus the analytic threshold."""

    loci: tuple[LocusEvidence, ...]
    analytic_threshold: float

    @classmethod
    def from_peaks(
        cls,
        kit: Kit,
        peaks: dict[str, Sequence[tuple[Allele, float]]],
        threshold: float,
    ) -> "EvidenceProfile":
        loci = []
        unknown = set(peaks) - {l.name for l in kit.loci}
        if unknown:
            raise ValueError(f"peaks reference unknown loci: {sorted(unknown)}")
        for locus in kit.loci:
            rows = tuple(
                (a, float(h))
                for a, h in sorted(peaks.get(locus.name, ()), key=lambda p: p[0])
                if h >= threshold
            )
            loci.append(LocusEvidence(locus.name, rows, threshold))
        return cls(tuple(loci), threshold)

    @classmethod
    def from_csv(cls, text: str, kit: Kit, threshold: float) -> "EvidenceProfile":
        """Peaks CSV: header `locus,allele,height_rfu`, one peak per row."""
        from .types import parse_allele

        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "locus",
            "allele",
            "height_rfu",
        ]:
            raise ValueError("peaks CSV must start with header locus,allele,height_rfu")
        peaks: dict[str, list[tuple[Allele, float]]] = {}
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            locus, allele, height = row
            peaks.setdefault(locus.strip(), []).append(
                (parse_allele(allele), float(height))
            )
        return cls.from_peaks(kit, peaks, threshold)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["locus", "allele", "height_rfu"])
        for ev in self.loci:
            for allele, height in ev.peaks:
                writer.writerow([ev.locus, str(allele), repr(height)])
        return buf.getvalue()


def _stutter_target(a: Allele) -> Allele | None:
    if a.repeat_integer == 0:
        return None
    return Allele(a.repeat_integer - 1, a.repeat_part)


def _stutter_parent(a: Allele) -> Allele | None:
    if a.repeat_integer >= 99:
        return None
    return Allele(a.repeat_integer + 1, a.repeat_part)


def _copies(profile: LocusProfile) -> dict[Allele, int]:
    out: dict[Allele, int] = {}
    for a in profile.alleles:
        out[a] = out.get(a, 0) + 1
    return out


def position_set(
    observed: Iterable[Allele], profiles: Iterable[LocusProfile]
) -> list[Allele]:
    """Observed alleles plus every position that could carry expected mass
    (contributor alleles and their back-stutter targets), sorted."""
    positions = set(observed)
    for profile in profiles:
        for a in profile.alleles:
            positions.add(a)
            down = _stutter_target(a)
            if down is not None:
                positions.add(down)
    return sorted(positions)


def effective_copies(
    profile: LocusProfile, positions: Sequence[Allele], stutter_proportion: float
) -> np.ndarray:
    """Per-position expected copy factors for one contributor profile after
    moving stutter_proportion of each allele's mass one repeat down."""
    copies = _copies(profile)
    out = np.zeros(len(positions))
    for i, pos in enumerate(positions):
        direct = copies.get(pos, 0)
        parent = _stutter_parent(pos)
        from_stutter = copies.get(parent, 0) if parent is not None else 0
        out[i] = (1.0 - stutter_proportion) * direct + stutter_proportion * from_stutter
    return out


def _amplifiable_mass(
    params: ContributorParams, cfg: PeakModelConfig, locus_position: int
) -> np.ndarray:
    cells = np.asarray(params.cell_counts)
    decay = np.exp(-np.asarray(params.degradation) * locus_position)
    return cells * cfg.extraction_efficiency * cfg.aliquot_fraction * decay


def loglik_given_means(
    means: np.ndarray,
    positions: Sequence[Allele],
    ev: LocusEvidence,
    cfg: PeakModelConfig,
) -> np.ndarray:
    """Log-likelihood of the locus evidence for each row of expected means.

    `means` has shape (n_candidates, n_positions) aligned with `positions`.
    """
    means = np.atleast_2d(means)
    heights = {a: h for a, h in ev.peaks}
    T = ev.threshold
    shape = cfg.shape
    total = np.zeros(means.shape[0])
    for i, pos in enumerate(positions):
        mean_col = means[:, i]
        positive = mean_col > 0
        col = np.zeros(means.shape[0])
        if pos in heights:
            h = heights[pos]
            if positive.any():
                scale = mean_col[positive] * cfg.cv * cfg.cv
                col[positive] = (
                    (shape - 1.0) * np.log(h)
                    - h / scale
                    - shape * np.log(scale)
                    - gammaln(shape)
                )
            # drop-in: excess height above threshold is exponential
            col[~positive] = (
                np.log(cfg.drop_in_rate)
                - (h - T) / cfg.drop_in_mean
                - np.log(cfg.drop_in_mean)
            )
        else:
            if positive.any():
                scale = mean_col[positive] * cfg.cv * cfg.cv
                with np.errstate(divide="ignore"):
                    col[positive] = np.log(gammainc(shape, T / scale))
            # no expected mass and no peak: nothing to explain
        total += col
    return total


def locus_log_likelihood(
    ev_y: LocusEvidence,
    joint_profile: Sequence[LocusProfile],
    params: ContributorParams,
    cfg: PeakModelConfig,
    locus_position: int = 0,
) -> float:
    """Log-likelihood of one locus' evidence under a fully specified set of
    contributor profiles (typed and untyped alike)."""
    if not joint_profile:
        raise ValueError("joint profile must cover at least one contributor")
    if len(joint_profile) != len(params.cell_counts):
        raise ValueError("profile count does not match contributor count")
    positions = position_set((a for a, _ in ev_y.peaks), joint_profile)
    if not positions:
        return 0.0
    mass = _amplifiable_mass(params, cfg, locus_position)
    means = np.zeros(len(positions))
    for contrib, profile in enumerate(joint_profile):
        means += mass[contrib] * effective_copies(
            profile, positions, cfg.stutter_proportion
        )
    means *= cfg.height_per_cell
    return float(loglik_given_means(means[None, :], positions, ev_y, cfg)[0])


def locus_likelihood(
    ev_y: LocusEvidence,
    joint_profile: Sequence[LocusProfile],
    params: ContributorParams,
    cfg: PeakModelConfig,
    locus_position: int = 0,
) -> float:
    return float(
        np.exp(locus_log_likelihood(ev_y, joint_profile, params, cfg, locus_position))
    )


class LocusComboTable:
    """Vectorized evaluator for one locus over many untyped profile combos.

    The position set and per-profile copy vectors are built once; each call
    with new contributor parameters costs one small matrix evaluation.  Typed
    contributors come first in the parameter vector, then the untyped.
    """

    def __init__(
        self,
        ev_y: LocusEvidence,
        typed_profiles: Sequence[LocusProfile],
        combos: Sequence[tuple[LocusProfile, ...]],
        cfg: PeakModelConfig,
        locus_position: int,
    ):
        self.ev = ev_y
        self.cfg = cfg
        self.locus_position = locus_position
        self.combos = list(combos)
        profiles: list[LocusProfile] = list(typed_profiles)
        for combo in self.combos:
            profiles.extend(combo)
        self.positions = position_set((a for a, _ in ev_y.peaks), profiles)
        distinct = sorted(
            {p for combo in self.combos for p in combo} | set(typed_profiles),
            key=str,
        )
        self._profile_index = {p: i for i, p in enumerate(distinct)}
        if self.positions:
            self._copy_matrix = np.stack(
                [
                    effective_copies(p, self.positions, cfg.stutter_proportion)
                    for p in distinct
                ]
            )
        else:
            self._copy_matrix = np.zeros((len(distinct), 0))
        self._typed_idx = [self._profile_index[p] for p in typed_profiles]
        self._combo_idx = np.array(
            [[self._profile_index[p] for p in combo] for combo in self.combos],
            dtype=np.intp,
        ).reshape(len(self.combos), -1)

    def loglik(self, params: ContributorParams) -> np.ndarray:
        """Per-combo log-likelihood at the given contributor parameters."""
        if not self.positions:
            return np.zeros(len(self.combos))
        mass = _amplifiable_mass(params, self.cfg, self.locus_position)
        n_typed = len(self._typed_idx)
        base = np.zeros(len(self.positions))
        for contrib, idx in enumerate(self._typed_idx):
            base += mass[contrib] * self._copy_matrix[idx]
        means = np.broadcast_to(base, (len(self.combos), len(self.positions))).copy()
        for u in range(self._combo_idx.shape[1]):
            means += mass[n_typed + u, None] * self._copy_matrix[self._combo_idx[:, u]]
        means *= self.cfg.height_per_cell
        return loglik_given_means(means, self.positions, self.ev, self.cfg)


def simulate_evidence(
    kit: Kit,
    contributors: Sequence[Haplotype],
    params: ContributorParams,
    cfg: PeakModelConfig,
    threshold: float,
    seed: int = 0,
) -> EvidenceProfile:
    """Draw one replicate from the reference model and censor at the threshold."""
    if len(contributors) != len(params.cell_counts):
        raise ValueError("contributor count does not match parameter vector")
    rng = np.random.default_rng(seed)
    peaks: dict[str, list[tuple[Allele, float]]] = {}
    for y, locus in enumerate(kit.loci):
        profiles = [h.profiles[y] for h in contributors]
        positions = position_set((), profiles)
        if not positions:
            continue
        mass = _amplifiable_mass(params, cfg, y)
        means = np.zeros(len(positions))
        for contrib, profile in enumerate(profiles):
            means += mass[contrib] * effective_copies(
                profile, positions, cfg.stutter_proportion
            )
        means *= cfg.height_per_cell
        rows = []
        for pos, mean in zip(positions, means):
            if mean <= 0:
                continue
            height = rng.gamma(cfg.shape, mean * cfg.cv * cfg.cv)
            if height >= threshold:
                rows.append((pos, float(height)))
        if rows:
            peaks[locus.name] = rows
    return EvidenceProfile.from_peaks(kit, peaks, threshold)
