"""FastAPI service wrapping the core package.

Every endpoint is stateless with respect to the filesystem: kit definitions,
databases and peak tables arrive in the request body, so one running
instance can serve many clients and cases concurrently.  Domain validation
errors surface as HTTP 400 with the offending message.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import branching, wfsim
from ..diagnostics import run_diagnostics
from ..matchmodel import HaplotypeMatchModel, PatternFactorParams
from ..mixture import Hypothesis, MixtureResult, analyze_mixture
from ..peakmodel import EvidenceProfile, PeakModelConfig
from ..types import (
    HaplotypeDatabase,
    Kit,
    Locus,
    aggregate_nonmutation,
    parse_haplotype,
)
from . import schemas


def kit_from_spec(spec: schemas.KitSpec) -> Kit:
    return Kit(
        name=spec.name,
        loci=tuple(
            Locus(l.name, l.chromosome_order, l.mutation_rate, l.multicopy)
            for l in spec.loci
        ),
    )


def _factors(spec: schemas.FactorSpec) -> PatternFactorParams:
    return PatternFactorParams(spec.a, spec.b, spec.c, spec.d)


def _peak_config(spec: schemas.PeakModelSpec) -> PeakModelConfig:
    return PeakModelConfig(
        height_per_cell=spec.height_per_cell,
        stutter_proportion=spec.stutter_proportion,
        cv=spec.cv,
        extraction_efficiency=spec.extraction_efficiency,
        aliquot_fraction=spec.aliquot_fraction,
        drop_in_rate=spec.drop_in_rate,
        drop_in_mean=spec.drop_in_mean,
    )


def _full_profile_pattern(kit: Kit) -> tuple[int, ...]:
    return tuple(2 if locus.multicopy else 1 for locus in kit.loci)


def _mixture_response(
    result: MixtureResult, diagnostics: schemas.DiagnosticsModel | None
) -> schemas.MixtureResponse:
    return schemas.MixtureResponse(
        product_rule_log10=result.product_rule_log10,
        haplotype_model_log10=result.haplotype_model_log10,
        cell_counts_step1=list(result.step1_params.cell_counts),
        cell_counts=list(result.final_params.cell_counts),
        mixing_proportions=list(result.mixing_proportions),
        n_candidates=len(result.candidates),
        curve_log10=[float(v) for v in result.curve_log10],
        deconvolution=[
            [
                schemas.HaplotypeProbability(haplotype=str(h), probability=p)
                for h, p in marginals
            ]
            for marginals in result.deconvolution
        ],
        diagnostics=diagnostics,
    )


def _run_mixture(req: schemas.MixtureRequest) -> tuple[MixtureResult, Kit, EvidenceProfile]:
    kit = kit_from_spec(req.kit)
    db = HaplotypeDatabase.from_csv(req.database_csv, kit)
    ev = EvidenceProfile.from_csv(req.peaks_csv, kit, req.threshold)
    typed = tuple(parse_haplotype(t, kit) for t in req.typed)
    hyp = Hypothesis(typed=typed, n_untyped=req.n_untyped)
    model = HaplotypeMatchModel(
        kit, db, typed=typed, omega=req.omega, growth=req.growth,
        factors=_factors(req.factors),
    )
    result = analyze_mixture(
        kit,
        ev,
        hyp,
        db,
        match_model=model,
        cfg=_peak_config(req.peak_model),
        k=req.k,
        m=req.m,
        omega=req.omega,
        growth=req.growth,
        neighborhood=req.neighborhood,
        fit_degradation=req.fit_degradation,
    )
    return result, kit, ev


def _diagnostics_model(
    result: MixtureResult, kit: Kit, ev: EvidenceProfile, cfg: PeakModelConfig
) -> schemas.DiagnosticsModel:
    cands = result.candidates
    if cands.hypothesis.n_untyped == 0:
        weighted = [((), 0.0)]
    else:
        weighted = list(zip(cands.untyped, cands.log_match_prob))
    report = run_diagnostics(
        kit, ev, cands.hypothesis.typed, weighted, result.final_params, cfg
    )
    return schemas.DiagnosticsModel(
        probability_points=[
            schemas.ProbabilityPointModel(locus=p.locus, allele=p.allele, value=p.value)
            for p in report.probability_points
        ],
        monitor=[
            schemas.MonitorPointModel(
                locus=p.locus,
                allele=p.allele,
                observed=p.observed,
                predicted=p.predicted,
                z=p.z,
            )
            for p in report.monitor
        ],
        final_z=report.final_z,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="haplodrift", version="0.1.0")

    @app.exception_handler(ValueError)
    async def _value_error(request, exc: ValueError):  # pragma: no cover - glue
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/equilibrium", response_model=schemas.EquilibriumResponse)
    def equilibrium(req: schemas.EquilibriumRequest) -> schemas.EquilibriumResponse:
        try:
            kit = kit_from_spec(req.kit)
            if req.deldup_pattern is None:
                pattern = _full_profile_pattern(kit)
            else:
                pattern = tuple(int(x) for x in req.deldup_pattern.split(","))
            mu = 1.0 - aggregate_nonmutation(pattern, kit)
            params = branching.PopulationParams.from_growth(req.growth, mu)
            dist = branching.combined_distribution(
                params,
                generations=branching.Generations(req.generations),
                truncation=req.truncation,
                iters=req.iters,
            )
            matching = branching.matching_number_distribution(dist)
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        rows = [
            schemas.DistributionRow(
                k=k, f_k=float(dist.probs[k - 1]), p_k=float(matching.probs[k - 1])
            )
            for k in range(1, dist.truncation + 1)
        ]
        return schemas.EquilibriumResponse(
            lam=params.lam,
            mu=params.mu,
            converged=dist.converged,
            residual=dist.residual,
            iterations=dist.iterations,
            tail_value=dist.tail_value,
            mean_matching=matching.mean,
            rows=rows,
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest) -> schemas.SimulateResponse:
        mode = (
            wfsim.SimMode.WRIGHT_FISHER_FIXED
            if req.mode == "fixed"
            else wfsim.SimMode.POISSON_GROWTH
        )
        try:
            summary = wfsim.simulate(
                wfsim.SimConfig(
                    initial_size=req.size,
                    generations=req.generations,
                    lam=1.0 + req.growth,
                    mu=req.mu,
                    seed=req.seed,
                    mode=mode,
                )
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return schemas.SimulateResponse(
            trajectory=list(summary.trajectory),
            final_histogram=summary.final_histogram,
            combined3_histogram=summary.combined3_histogram,
            extinct_at=summary.extinct_at,
        )

    @app.post("/matchprob", response_model=schemas.MatchProbResponse)
    def matchprob(req: schemas.MatchProbRequest) -> schemas.MatchProbResponse:
        try:
            kit = kit_from_spec(req.kit)
            db = HaplotypeDatabase.from_csv(req.database_csv, kit)
            typed = tuple(parse_haplotype(t, kit) for t in req.typed)
            h = parse_haplotype(req.haplotype, kit)
            model = HaplotypeMatchModel(
                kit,
                db,
                typed=typed,
                omega=req.omega,
                growth=req.growth,
                factors=_factors(req.factors),
                truncation=req.truncation,
                iters=req.iters,
            )
            result = model.probability(h)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        quantiles = {
            str(q): result.posterior_quantile(q) for q in (0.5, 0.9, 0.95, 0.99)
        }
        return schemas.MatchProbResponse(
            p_u=result.p_u,
            f_d=result.f_D,
            f_r=result.f_R,
            probability=result.probability,
            c_i=result.counts.c_I,
            c_d=result.counts.c_D,
            c_r=result.counts.c_R,
            r_m=list(result.counts.r_m),
            m_observed=result.counts.M,
            posterior_mean=result.posterior_mean,
            posterior_quantiles=quantiles,
            prior_tail=result.prior_tail,
        )

    @app.post("/mixture", response_model=schemas.MixtureResponse)
    def mixture(req: schemas.MixtureRequest) -> schemas.MixtureResponse:
        try:
            result, kit, ev = _run_mixture(req)
            diagnostics = None
            if req.include_diagnostics:
                diagnostics = _diagnostics_model(
                    result, kit, ev, _peak_config(req.peak_model)
                )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return _mixture_response(result, diagnostics)

    @app.post("/deconvolve", response_model=schemas.MixtureResponse)
    def deconvolve_endpoint(req: schemas.MixtureRequest) -> schemas.MixtureResponse:
        try:
            result, _, _ = _run_mixture(req)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return _mixture_response(result, None)

    @app.post("/lr", response_model=schemas.LRResponse)
    def likelihood_ratio(req: schemas.LRRequest) -> schemas.LRResponse:
        sides = []
        try:
            for hyp in (req.hyp1, req.hyp2):
                sub = schemas.MixtureRequest(
                    kit=req.kit,
                    database_csv=req.database_csv,
                    peaks_csv=req.peaks_csv,
                    typed=hyp.typed,
                    n_untyped=hyp.n_untyped,
                    threshold=req.threshold,
                    omega=req.omega,
                    growth=req.growth,
                    k=req.k,
                    m=req.m,
                    neighborhood=req.neighborhood,
                    factors=req.factors,
                    peak_model=req.peak_model,
                    include_diagnostics=False,
                )
                result, _, _ = _run_mixture(sub)
                sides.append(result)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        log10_lr = sides[0].haplotype_model_log10 - sides[1].haplotype_model_log10
        stand_in = req.omega / (10.0**log10_lr) if np.isfinite(log10_lr) else float("inf")
        return schemas.LRResponse(
            log10_lr=log10_lr,
            omega=req.omega,
            stand_in_count=stand_in,
            h1=schemas.LRSideResponse(
                product_rule_log10=sides[0].product_rule_log10,
                haplotype_model_log10=sides[0].haplotype_model_log10,
                cell_counts=list(sides[0].final_params.cell_counts),
            ),
            h2=schemas.LRSideResponse(
                product_rule_log10=sides[1].product_rule_log10,
                haplotype_model_log10=sides[1].haplotype_model_log10,
                cell_counts=list(sides[1].final_params.cell_counts),
            ),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        rows = []
        try:
            for value in req.values:
                sub = req.base.model_copy(deep=True)
                sub.include_diagnostics = False
                if req.param == "factors":
                    sub.factors = schemas.FactorSpec(a=value, b=value, c=value, d=value)
                elif req.param == "omega":
                    sub.omega = value
                elif req.param == "growth":
                    sub.growth = value
                elif req.param == "k":
                    sub.k = int(value)
                elif req.param == "m":
                    sub.m = int(value)
                result, _, _ = _run_mixture(sub)
                rows.append(
                    schemas.SweepRow(
                        param=req.param,
                        value=value,
                        product_rule_log10=result.product_rule_log10,
                        haplotype_model_log10=result.haplotype_model_log10,
                        cell_counts=list(result.final_params.cell_counts),
                    )
                )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return schemas.SweepResponse(rows=rows)

    return app


app = create_app()
