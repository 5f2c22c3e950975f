"""Request/response models for the HTTP service.

Field layouts mirror the on-disk formats: a kit is the same JSON object as a
kit file, databases and peak tables travel as CSV text in the exact file
grammar, haplotypes and hypotheses use the CLI token grammar.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class LocusSpec(BaseModel):
    name: str
    chromosome_order: int
    mutation_rate: float
    multicopy: bool = False


class KitSpec(BaseModel):
    name: str
    loci: list[LocusSpec]


class FactorSpec(BaseModel):
    a: float = 0.0048
    b: float = 0.105
    c: float = 0.0064
    d: float = 0.063


class PeakModelSpec(BaseModel):
    height_per_cell: float = 10.0
    stutter_proportion: float = 0.08
    cv: float = 0.25
    extraction_efficiency: float = 0.2
    aliquot_fraction: float = 0.1
    drop_in_rate: float = 1e-3
    drop_in_mean: float = 30.0


class EquilibriumRequest(BaseModel):
    kit: KitSpec
    growth: float = 0.0
    truncation: int = 512
    iters: int = 200
    generations: int = Field(default=3, ge=1, le=3)
    deldup_pattern: str | None = None  # comma-separated 0/1/2, defaults to full profile


class DistributionRow(BaseModel):
    k: int
    f_k: float
    p_k: float


class EquilibriumResponse(BaseModel):
    lam: float
    mu: float
    converged: bool
    residual: float
    iterations: int
    tail_value: float
    mean_matching: float
    rows: list[DistributionRow]


class SimulateRequest(BaseModel):
    size: int = Field(ge=1)
    generations: int = Field(ge=1)
    growth: float = 0.0
    mu: float = Field(ge=0.0, le=1.0)
    seed: int = 0
    mode: str = Field(default="fixed", pattern="^(fixed|poisson)$")


class SimulateResponse(BaseModel):
    trajectory: list[int]
    final_histogram: dict[int, int]
    combined3_histogram: dict[int, int]
    extinct_at: int | None


class MatchProbRequest(BaseModel):
    kit: KitSpec
    database_csv: str
    haplotype: str
    typed: list[str] = []
    omega: float = 2e8
    growth: float = 0.0
    truncation: int = 512
    iters: int = 200
    factors: FactorSpec = FactorSpec()


class MatchProbResponse(BaseModel):
    p_u: float
    f_d: float
    f_r: float
    probability: float
    c_i: int
    c_d: int
    c_r: int
    r_m: list[int]
    m_observed: int
    posterior_mean: float
    posterior_quantiles: dict[str, int]
    prior_tail: float


class HypothesisSpec(BaseModel):
    typed: list[str] = []
    n_untyped: int = 0


class MixtureRequest(BaseModel):
    kit: KitSpec
    database_csv: str
    peaks_csv: str
    typed: list[str] = []
    n_untyped: int = 0
    threshold: float = 15.0
    omega: float = 2e8
    growth: float = 0.0
    k: int = 1500
    m: int = 5000
    neighborhood: int = 1
    factors: FactorSpec = FactorSpec()
    peak_model: PeakModelSpec = PeakModelSpec()
    fit_degradation: bool = False
    include_diagnostics: bool = True


class HaplotypeProbability(BaseModel):
    haplotype: str
    probability: float


class ProbabilityPointModel(BaseModel):
    locus: str
    allele: str
    value: float


class MonitorPointModel(BaseModel):
    locus: str
    allele: str
    observed: bool
    predicted: float
    z: float


class DiagnosticsModel(BaseModel):
    probability_points: list[ProbabilityPointModel]
    monitor: list[MonitorPointModel]
    final_z: float


class MixtureResponse(BaseModel):
    product_rule_log10: float
    haplotype_model_log10: float
    cell_counts_step1: list[float]
    cell_counts: list[float]
    mixing_proportions: list[float]
    n_candidates: int
    curve_log10: list[float]
    deconvolution: list[list[HaplotypeProbability]]
    diagnostics: DiagnosticsModel | None = None


class LRRequest(BaseModel):
    kit: KitSpec
    database_csv: str
    peaks_csv: str
    hyp1: HypothesisSpec
    hyp2: HypothesisSpec
    threshold: float = 15.0
    omega: float = 2e8
    growth: float = 0.0
    k: int = 1500
    m: int = 5000
    neighborhood: int = 1
    factors: FactorSpec = FactorSpec()
    peak_model: PeakModelSpec = PeakModelSpec()


class LRSideResponse(BaseModel):
    product_rule_log10: float
    haplotype_model_log10: float
    cell_counts: list[float]


class LRResponse(BaseModel):
    log10_lr: float
    omega: float
    stand_in_count: float
    h1: LRSideResponse
    h2: LRSideResponse


class SweepRequest(BaseModel):
    base: MixtureRequest
    param: str = Field(pattern="^(factors|omega|growth|k|m)$")
    values: list[float]


class SweepRow(BaseModel):
    param: str
    value: float
    product_rule_log10: float
    haplotype_model_log10: float
    cell_counts: list[float]


class SweepResponse(BaseModel):
    rows: list[SweepRow]
