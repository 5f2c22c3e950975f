"""Command-line client for the haplodrift service.

The CLI is a thin client: every subcommand builds a request, sends it to the
service and writes the response to local artifacts.  By default the service
runs in-process over an ASGI test transport, so batch use needs no server;
pass --server (or set HAPLODRIFT_SERVER) to talk to a remote instance
started with `haplodrift serve`.

Artifacts are reproducible: every CSV starts with `# config: {...}` comment
lines and every JSON report embeds the resolved request under "config", so
the same inputs yield byte-identical outputs.
"""

from __future__ import annotations

import csv
import io
import json
import pathlib
import sys

import click
import httpx


def _fail(message: str) -> None:
    click.echo(json.dumps({"error": message}, sort_keys=True), err=True)
    sys.exit(1)


class ServiceClient:
    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                # the vendored test transport warns about its own httpx pin
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

                from .service import create_app

                self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            _fail(f"service unreachable: {exc}")
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            _fail(str(detail))
        return resp.json()


def _client(ctx: click.Context) -> ServiceClient:
    return ServiceClient(ctx.obj.get("server"))


def _read(path: str) -> str:
    return pathlib.Path(path).read_text()


def _load_kit_spec(path: str) -> dict:
    return json.loads(_read(path))


def _load_typed(paths: str | None) -> list[str]:
    """Each typed-person file is a one-row database CSV; return the row as a
    haplotype string in kit order."""
    if not paths:
        return []
    out = []
    for path in paths.split(","):
        rows = list(csv.reader(io.StringIO(_read(path.strip()))))
        rows = [r for r in rows if any(c.strip() for c in r)]
        if len(rows) != 2:
            _fail(f"typed-person file {path!r} must hold a header row plus one haplotype row")
        out.append(",".join(rows[1]))
    return out


def _parse_factors(text: str | None) -> dict:
    if not text:
        return {}
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        _fail("--factors expects four comma-separated values a,b,c,d")
    a, b, c, d = (float(p) for p in parts)
    return {"a": a, "b": b, "c": c, "d": d}


def _write_csv(path: str, config: dict, meta: dict, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    for key, value in meta.items():
        buf.write(f"# {key}: {value!r}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    pathlib.Path(path).write_text(buf.getvalue())


def _write_json(path: str, config: dict, payload: dict) -> None:
    document = {"config": config, **payload}
    pathlib.Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def _peak_model_options(f):
    options = [
        click.option("--height-per-cell", type=float, default=10.0, show_default=True),
        click.option("--stutter", type=float, default=0.08, show_default=True),
        click.option("--cv", type=float, default=0.25, show_default=True),
        click.option("--extraction", type=float, default=0.2, show_default=True),
        click.option("--aliquot", type=float, default=0.1, show_default=True),
        click.option("--dropin-rate", type=float, default=1e-3, show_default=True),
        click.option("--dropin-mean", type=float, default=30.0, show_default=True),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _peak_model_payload(kwargs: dict) -> dict:
    return {
        "height_per_cell": kwargs.pop("height_per_cell"),
        "stutter_proportion": kwargs.pop("stutter"),
        "cv": kwargs.pop("cv"),
        "extraction_efficiency": kwargs.pop("extraction"),
        "aliquot_fraction": kwargs.pop("aliquot"),
        "drop_in_rate": kwargs.pop("dropin_rate"),
        "drop_in_mean": kwargs.pop("dropin_mean"),
    }


@click.group()
@click.option("--server", default=None, envvar="HAPLODRIFT_SERVER",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Y-STR haplotype sharing, match probabilities and mixture analysis."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--kit", "kit_path", required=True, type=click.Path(exists=True))
@click.option("--growth", type=float, default=0.0, show_default=True)
@click.option("--truncation", type=int, default=512, show_default=True)
@click.option("--iters", type=int, default=200, show_default=True)
@click.option("--generations", type=int, default=3, show_default=True)
@click.option("--pattern", default=None,
              help="Deletion/duplication pattern (comma-separated 0/1/2); default full profile.")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def equilibrium(ctx, kit_path, growth, truncation, iters, generations, pattern, out):
    """Cluster-size equilibrium and matching-number distribution."""
    payload = {
        "kit": _load_kit_spec(kit_path),
        "growth": growth,
        "truncation": truncation,
        "iters": iters,
        "generations": generations,
        "deldup_pattern": pattern,
    }
    data = _client(ctx).post("/equilibrium", payload)
    config = {k: v for k, v in payload.items() if k != "kit"}
    config["kit"] = payload["kit"]["name"]
    meta = {
        "lambda": data["lam"],
        "mu": data["mu"],
        "converged": data["converged"],
        "residual": data["residual"],
        "tail_mass": data["tail_value"],
        "mean_matching": data["mean_matching"],
    }
    _write_csv(
        out,
        config,
        meta,
        ["k", "f_k", "p_k"],
        ([row["k"], repr(row["f_k"]), repr(row["p_k"])] for row in data["rows"]),
    )
    click.echo(f"wrote {out} (mean matching males {data['mean_matching']:.3f})")


@main.command()
@click.option("--size", type=int, required=True)
@click.option("--gens", type=int, required=True)
@click.option("--growth", type=float, default=0.0, show_default=True)
@click.option("--mu", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(["fixed", "poisson"]), default="fixed",
              show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def simulate(ctx, size, gens, growth, mu, seed, mode, out):
    """Forward Wright-Fisher / Poisson-growth population simulation."""
    payload = {
        "size": size, "generations": gens, "growth": growth,
        "mu": mu, "seed": seed, "mode": mode,
    }
    data = _client(ctx).post("/simulate", payload)
    rows = [["trajectory", gen, size_] for gen, size_ in enumerate(data["trajectory"])]
    rows += [["final_histogram", k, v] for k, v in sorted(
        data["final_histogram"].items(), key=lambda kv: int(kv[0]))]
    rows += [["combined3_histogram", k, v] for k, v in sorted(
        data["combined3_histogram"].items(), key=lambda kv: int(kv[0]))]
    meta = {"extinct_at": data["extinct_at"]}
    _write_csv(out, payload, meta, ["kind", "key", "value"], rows)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--kit", "kit_path", required=True, type=click.Path(exists=True))
@click.option("--db", "db_path", required=True, type=click.Path(exists=True))
@click.option("--haplotype", required=True)
@click.option("--typed", default=None, help="Comma-separated typed-person CSV files.")
@click.option("--omega", type=float, default=2e8, show_default=True)
@click.option("--growth", type=float, default=0.0, show_default=True)
@click.option("--truncation", type=int, default=512, show_default=True)
@click.option("--iters", type=int, default=200, show_default=True)
@click.option("--factors", default=None, help="a,b,c,d pattern factors.")
@click.option("--out", default=None, type=click.Path(), help="Optional JSON report path.")
@click.pass_context
def matchprob(ctx, kit_path, db_path, haplotype, typed, omega, growth,
              truncation, iters, factors, out):
    """Match probability P(h) of one haplotype against a database."""
    payload = {
        "kit": _load_kit_spec(kit_path),
        "database_csv": _read(db_path),
        "haplotype": haplotype,
        "typed": _load_typed(typed),
        "omega": omega,
        "growth": growth,
        "truncation": truncation,
        "iters": iters,
    }
    f = _parse_factors(factors)
    if f:
        payload["factors"] = f
    data = _client(ctx).post("/matchprob", payload)
    for key in ("p_u", "f_d", "f_r", "probability"):
        click.echo(f"{key} = {data[key]:.6e}")
    click.echo(f"counts: c_I={data['c_i']} c_D={data['c_d']} c_R={data['c_r']} M={data['m_observed']}")
    click.echo(f"posterior mean matching males = {data['posterior_mean']:.3f}")
    quantiles = " ".join(f"q{q}={n}" for q, n in sorted(data["posterior_quantiles"].items()))
    click.echo(f"posterior quantiles: {quantiles}")
    if out:
        config = dict(payload)
        config["kit"] = payload["kit"]["name"]
        config.pop("database_csv")
        config["database"] = db_path
        _write_json(out, config, data)
        click.echo(f"wrote {out}")


def _mixture_payload(kit_path, db_path, peaks_path, typed, untyped, omega, growth,
                     k, m, threshold, neighborhood, factors, peak_model,
                     include_diagnostics=True):
    payload = {
        "kit": _load_kit_spec(kit_path),
        "database_csv": _read(db_path),
        "peaks_csv": _read(peaks_path),
        "typed": _load_typed(typed),
        "n_untyped": untyped,
        "threshold": threshold,
        "omega": omega,
        "growth": growth,
        "k": k,
        "m": m,
        "neighborhood": neighborhood,
        "peak_model": peak_model,
        "include_diagnostics": include_diagnostics,
    }
    f = _parse_factors(factors)
    if f:
        payload["factors"] = f
    return payload


def _mixture_config(payload: dict, db_path: str, peaks_path: str) -> dict:
    config = {k: v for k, v in payload.items()
              if k not in ("kit", "database_csv", "peaks_csv")}
    config["kit"] = payload["kit"]["name"]
    config["database"] = db_path
    config["peaks"] = peaks_path
    return config


def _mixture_options(f):
    options = [
        click.option("--kit", "kit_path", required=True, type=click.Path(exists=True)),
        click.option("--db", "db_path", required=True, type=click.Path(exists=True)),
        click.option("--peaks", "peaks_path", required=True, type=click.Path(exists=True)),
        click.option("--typed", default=None,
                     help="Comma-separated typed-person CSV files."),
        click.option("--untyped", type=int, default=0, show_default=True),
        click.option("--omega", type=float, default=2e8, show_default=True),
        click.option("--growth", type=float, default=0.0, show_default=True),
        click.option("--k", type=int, default=1500, show_default=True),
        click.option("--m", type=int, default=5000, show_default=True),
        click.option("--threshold", type=float, default=15.0, show_default=True),
        click.option("--neighborhood", type=int, default=1, show_default=True),
        click.option("--factors", default=None, help="a,b,c,d pattern factors."),
    ]
    for option in reversed(options):
        f = option(f)
    return _peak_model_options(f)


@main.command()
@_mixture_options
@click.option("--no-diagnostics", is_flag=True, default=False)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def mixture(ctx, kit_path, db_path, peaks_path, typed, untyped, omega, growth,
            k, m, threshold, neighborhood, factors, no_diagnostics, out, **peak_kwargs):
    """Full mixture analysis: likelihoods, cell counts, deconvolution, diagnostics."""
    peak_model = _peak_model_payload(peak_kwargs)
    payload = _mixture_payload(kit_path, db_path, peaks_path, typed, untyped,
                               omega, growth, k, m, threshold, neighborhood,
                               factors, peak_model, not no_diagnostics)
    data = _client(ctx).post("/mixture", payload)
    config = _mixture_config(payload, db_path, peaks_path)
    curve = data.pop("curve_log10")
    _write_json(out, config, data)
    curve_path = str(pathlib.Path(out).with_suffix("")) + ".curve.csv"
    _write_csv(curve_path, config, {"n_candidates": data["n_candidates"]},
               ["rank", "log10_likelihood"],
               ([i + 1, repr(v)] for i, v in enumerate(curve)))
    click.echo(f"product rule log10 L = {data['product_rule_log10']:.3f}")
    click.echo(f"haplotype model log10 L = {data['haplotype_model_log10']:.3f}")
    click.echo(f"cell counts = {[round(c, 1) for c in data['cell_counts']]}")
    click.echo(f"wrote {out} and {curve_path}")


@main.command()
@_mixture_options
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def deconvolve(ctx, kit_path, db_path, peaks_path, typed, untyped, omega, growth,
               k, m, threshold, neighborhood, factors, out, **peak_kwargs):
    """Marginal haplotype distributions of the untyped contributors."""
    peak_model = _peak_model_payload(peak_kwargs)
    payload = _mixture_payload(kit_path, db_path, peaks_path, typed, untyped,
                               omega, growth, k, m, threshold, neighborhood,
                               factors, peak_model, False)
    data = _client(ctx).post("/deconvolve", payload)
    config = _mixture_config(payload, db_path, peaks_path)
    _write_json(out, config, {"deconvolution": data["deconvolution"],
                              "n_candidates": data["n_candidates"]})
    for u, marginals in enumerate(data["deconvolution"]):
        if marginals:
            top = marginals[0]
            click.echo(f"contributor U{u + 1}: top haplotype p={top['probability']:.4f} {top['haplotype']}")
    click.echo(f"wrote {out}")


def _parse_hypothesis(text: str) -> dict:
    typed, n_untyped = [], 0
    for item in text.split(","):
        item = item.strip()
        if item.upper() == "U":
            n_untyped += 1
        else:
            typed.append(item)
    return {"typed": _load_typed(",".join(typed)) if typed else [], "n_untyped": n_untyped}


@main.command()
@click.option("--kit", "kit_path", required=True, type=click.Path(exists=True))
@click.option("--db", "db_path", required=True, type=click.Path(exists=True))
@click.option("--peaks", "peaks_path", required=True, type=click.Path(exists=True))
@click.option("--hyp1", required=True,
              help="Comma list of typed-person CSVs and U markers, e.g. A.csv,U,U")
@click.option("--hyp2", required=True)
@click.option("--omega", type=float, default=2e8, show_default=True)
@click.option("--growth", type=float, default=0.0, show_default=True)
@click.option("--k", type=int, default=1500, show_default=True)
@click.option("--m", type=int, default=5000, show_default=True)
@click.option("--threshold", type=float, default=15.0, show_default=True)
@click.option("--neighborhood", type=int, default=1, show_default=True)
@click.option("--factors", default=None)
@_peak_model_options
@click.option("--out", default=None, type=click.Path())
@click.pass_context
def lr(ctx, kit_path, db_path, peaks_path, hyp1, hyp2, omega, growth, k, m,
       threshold, neighborhood, factors, out, **peak_kwargs):
    """log10 likelihood ratio of two contributor hypotheses."""
    payload = {
        "kit": _load_kit_spec(kit_path),
        "database_csv": _read(db_path),
        "peaks_csv": _read(peaks_path),
        "hyp1": _parse_hypothesis(hyp1),
        "hyp2": _parse_hypothesis(hyp2),
        "threshold": threshold,
        "omega": omega,
        "growth": growth,
        "k": k,
        "m": m,
        "neighborhood": neighborhood,
        "peak_model": _peak_model_payload(peak_kwargs),
    }
    f = _parse_factors(factors)
    if f:
        payload["factors"] = f
    data = _client(ctx).post("/lr", payload)
    click.echo(f"log10 LR = {data['log10_lr']:.3f}")
    click.echo(f"assumed population size omega = {data['omega']:.6g}")
    click.echo(f"expected stand-in count (omega / LR) = {data['stand_in_count']:.1f}")
    if out:
        config = _mixture_config(payload, db_path, peaks_path)
        config["hyp1"], config["hyp2"] = hyp1, hyp2
        _write_json(out, config, data)
        click.echo(f"wrote {out}")


@main.command()
@_mixture_options
@click.option("--param", required=True,
              type=click.Choice(["factors", "omega", "growth", "k", "m"]))
@click.option("--values", required=True, help="Comma-separated grid values.")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def sweep(ctx, kit_path, db_path, peaks_path, typed, untyped, omega, growth,
          k, m, threshold, neighborhood, factors, param, values, out, **peak_kwargs):
    """Sensitivity sweep of one parameter over a grid."""
    peak_model = _peak_model_payload(peak_kwargs)
    base = _mixture_payload(kit_path, db_path, peaks_path, typed, untyped,
                            omega, growth, k, m, threshold, neighborhood,
                            factors, peak_model, False)
    grid = [float(v) for v in values.split(",")]
    data = _client(ctx).post("/sweep", {"base": base, "param": param, "values": grid})
    config = _mixture_config(base, db_path, peaks_path)
    config["param"], config["values"] = param, grid
    rows = [
        [r["param"], repr(r["value"]), repr(r["product_rule_log10"]),
         repr(r["haplotype_model_log10"]),
         ";".join(repr(c) for c in r["cell_counts"])]
        for r in data["rows"]
    ]
    _write_csv(out, config, {},
               ["param", "value", "product_rule_log10", "haplotype_model_log10",
                "cell_counts"], rows)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
