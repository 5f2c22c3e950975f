import numpy as np
import pytest

from haplodrift.matchmodel import HaplotypeMatchModel
from haplodrift.peakmodel import ContributorParams, PeakModelConfig, simulate_evidence
from haplodrift.types import HaplotypeDatabase, parse_haplotype

from synthetic import load_kit


@pytest.fixture(scope="module")
def client():
    from fastapi.testclient import TestClient

    from haplodrift.service import create_app

    return TestClient(create_app())


@pytest.fixture(scope="module")
def kit_spec(mini_kit):
    import json

    return json.loads(mini_kit.to_json())


@pytest.fixture(scope="module")
def db_csv(mini_kit):
    rows = ["14,15,16,17", "14,15,16,18", "13,15,16,17", "14,-,16,17"]
    db = HaplotypeDatabase(tuple(parse_haplotype(r, mini_kit) for r in rows))
    return db.to_csv(mini_kit)


@pytest.fixture(scope="module")
def peaks_csv(mini_kit):
    a = parse_haplotype("14,15,16,17", mini_kit)
    b = parse_haplotype("12,18,13,19", mini_kit)
    ev = simulate_evidence(
        mini_kit, [a, b], ContributorParams((1200.0, 600.0)),
        PeakModelConfig(), 15.0, seed=55,
    )
    return ev.to_csv()


def test_health(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_equilibrium_endpoint(client, kit_spec):
    resp = client.post(
        "/equilibrium",
        json={"kit": kit_spec, "growth": 0.0, "truncation": 64, "iters": 150},
    )
    assert resp.status_code == 200
    data = resp.json()
    p = np.array([row["p_k"] for row in data["rows"]])
    f = np.array([row["f_k"] for row in data["rows"]])
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert f.sum() == pytest.approx(1.0, abs=1e-9)
    assert data["mean_matching"] > 1
    assert data["mu"] == pytest.approx(1 - (0.998 * 0.997 * 0.996 * 0.994))


def test_equilibrium_pattern_changes_rate(client, kit_spec):
    full = client.post("/equilibrium", json={"kit": kit_spec, "truncation": 64}).json()
    partial = client.post(
        "/equilibrium",
        json={"kit": kit_spec, "truncation": 64, "deldup_pattern": "0,1,1,1"},
    ).json()
    assert partial["mu"] < full["mu"]
    assert partial["mean_matching"] > full["mean_matching"]


def test_equilibrium_supercritical_is_400(client, kit_spec):
    resp = client.post("/equilibrium", json={"kit": kit_spec, "growth": 0.05})
    assert resp.status_code == 400
    assert "supercritical" in resp.json()["detail"]


def test_simulate_endpoint_deterministic(client):
    payload = {"size": 800, "generations": 30, "mu": 0.05, "seed": 9, "mode": "fixed"}
    a = client.post("/simulate", json=payload).json()
    b = client.post("/simulate", json=payload).json()
    assert a == b
    assert len(a["trajectory"]) == 31
    mass = sum(int(k) * v for k, v in a["final_histogram"].items())
    assert mass == 800


def test_matchprob_matches_library(client, kit_spec, db_csv, mini_kit):
    payload = {
        "kit": kit_spec,
        "database_csv": db_csv,
        "haplotype": "14,15,16,17",
        "omega": 1e6,
        "growth": 0.0,
        "truncation": 64,
        "iters": 150,
    }
    resp = client.post("/matchprob", json=payload)
    assert resp.status_code == 200
    data = resp.json()
    db = HaplotypeDatabase.from_csv(db_csv, mini_kit)
    model = HaplotypeMatchModel(
        mini_kit, db, omega=1e6, growth=0.0, truncation=64, iters=150
    )
    direct = model.probability(parse_haplotype("14,15,16,17", mini_kit))
    assert data["probability"] == pytest.approx(direct.probability, rel=1e-12)
    assert data["c_i"] == 1
    assert "0.99" in data["posterior_quantiles"]


def test_matchprob_bad_haplotype_is_400(client, kit_spec, db_csv):
    resp = client.post(
        "/matchprob",
        json={"kit": kit_spec, "database_csv": db_csv, "haplotype": "14,15"},
    )
    assert resp.status_code == 400
    assert "expected 4 locus fields" in resp.json()["detail"]


def test_mixture_endpoint(client, kit_spec, db_csv, peaks_csv):
    payload = {
        "kit": kit_spec,
        "database_csv": db_csv,
        "peaks_csv": peaks_csv,
        "typed": ["14,15,16,17"],
        "n_untyped": 1,
        "threshold": 15.0,
        "omega": 1e6,
        "k": 60,
        "m": 120,
    }
    resp = client.post("/mixture", json=payload)
    assert resp.status_code == 200
    data = resp.json()
    assert data["n_candidates"] <= 120
    assert len(data["cell_counts"]) == 2
    assert len(data["deconvolution"]) == 1
    assert data["diagnostics"] is not None
    assert data["curve_log10"] == sorted(data["curve_log10"], reverse=True)
    marginals = data["deconvolution"][0]
    assert sum(m["probability"] for m in marginals) == pytest.approx(1.0, abs=1e-9)
    assert marginals[0]["haplotype"] == "12,18,13,19"


def test_deconvolve_endpoint_skips_diagnostics(client, kit_spec, db_csv, peaks_csv):
    payload = {
        "kit": kit_spec,
        "database_csv": db_csv,
        "peaks_csv": peaks_csv,
        "typed": ["14,15,16,17"],
        "n_untyped": 1,
        "omega": 1e6,
        "k": 60,
        "m": 120,
    }
    resp = client.post("/deconvolve", json=payload)
    assert resp.status_code == 200
    assert resp.json()["diagnostics"] is None


def test_lr_endpoint(client, kit_spec, db_csv, peaks_csv):
    payload = {
        "kit": kit_spec,
        "database_csv": db_csv,
        "peaks_csv": peaks_csv,
        "hyp1": {"typed": ["14,15,16,17", "12,18,13,19"], "n_untyped": 0},
        "hyp2": {"typed": ["14,15,16,17"], "n_untyped": 1},
        "omega": 1e6,
        "k": 60,
        "m": 120,
    }
    resp = client.post("/lr", json=payload)
    assert resp.status_code == 200
    data = resp.json()
    assert data["log10_lr"] == pytest.approx(
        data["h1"]["haplotype_model_log10"] - data["h2"]["haplotype_model_log10"]
    )
    assert data["omega"] == 1e6
    assert data["stand_in_count"] == pytest.approx(1e6 / 10 ** data["log10_lr"])


def test_sweep_endpoint(client, kit_spec, db_csv, peaks_csv):
    base = {
        "kit": kit_spec,
        "database_csv": db_csv,
        "peaks_csv": peaks_csv,
        "typed": ["14,15,16,17"],
        "n_untyped": 1,
        "omega": 1e6,
        "k": 40,
        "m": 80,
    }
    resp = client.post(
        "/sweep", json={"base": base, "param": "omega", "values": [1e6, 1e7]}
    )
    assert resp.status_code == 200
    rows = resp.json()["rows"]
    assert [r["value"] for r in rows] == [1e6, 1e7]
    # smaller population, larger haplotype probabilities, higher likelihood
    assert rows[0]["haplotype_model_log10"] > rows[1]["haplotype_model_log10"]


def test_sweep_rejects_unknown_param(client, kit_spec, db_csv, peaks_csv):
    base = {
        "kit": kit_spec,
        "database_csv": db_csv,
        "peaks_csv": peaks_csv,
    }
    resp = client.post(
        "/sweep", json={"base": base, "param": "nope", "values": [1.0]}
    )
    assert resp.status_code == 422


def test_bundled_kits_load():
    for name in ("yfiler", "powerplex_y23", "yfiler_plus"):
        kit = load_kit(name)
        assert len(kit.loci) >= 16
        assert any(l.multicopy for l in kit.loci)
