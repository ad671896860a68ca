from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import FIXTURES
from scholargraph.cli import main

EXAMPLE = str(FIXTURES / "worked_example.jsonl")
BASE = ["--input", EXAMPLE, "--venues", "Other", "--years", "1967-2003"]


def run(tmp_path, *args):
    # later flags win, so per-test flags go last
    return main([args[0], *BASE, "--out", str(tmp_path / "out"), *args[1:]])


def read_table(path):
    lines = path.read_text().splitlines()
    meta = json.loads(lines[0][2:])
    return meta, [line.split(",") for line in lines[1:]]


def test_build_writes_manifest_and_reuses_cache(tmp_path):
    assert run(tmp_path, "build") == 0
    manifest = json.loads((tmp_path / "out/manifest.json").read_text())
    rows = {(r["kind"], r["year"]): (r["nodes"], r["edges"]) for r in manifest["snapshots"]}
    assert rows[("ACi", 2003)] == (3, 5)
    assert rows[("ACo", 1969)] == (1, 0)
    assert rows[("CC", 2003)] == (3, 5)
    assert manifest["run"]["cache_hits"] == 0
    assert run(tmp_path, "build") == 0
    again = json.loads((tmp_path / "out/manifest.json").read_text())
    assert again["run"]["cache_misses"] == 0 and again["run"]["cache_hits"] > 0
    assert again["snapshots"] == manifest["snapshots"]


def test_corrupt_cache_entry_is_rebuilt(tmp_path):
    assert run(tmp_path, "build", "--graphs", "PC") == 0
    entry = sorted((tmp_path / "out/cache").glob("PC-cum-2003-*.json"))[0]
    entry.write_text("garbage")
    assert run(tmp_path, "build", "--graphs", "PC") == 0
    assert json.loads(entry.read_text())["key"] == entry.stem


def test_centrality_outputs(tmp_path):
    assert run(tmp_path, "centrality", "--graphs", "ACi", "--centralities", "in_degree,pagerank") == 0
    meta, rows = read_table(tmp_path / "out/centrality/ACi_in_degree_2003.csv")
    assert meta["graph"] == "ACi" and meta["year"] == 2003
    assert rows[0] == ["node", "kind", "score", "year"]
    assert ["1", "in_degree", "1.5", "2003"] in rows
    assert json.loads((tmp_path / "out/centrality/errors.json").read_text()) == []


def test_centrality_failures_are_warnings(tmp_path, capsys):
    assert run(tmp_path, "centrality", "--graphs", "PC", "--centralities", "closeness") == 0
    errors = json.loads((tmp_path / "out/centrality/errors.json").read_text())
    assert errors and errors[0]["centrality"] == "closeness"
    assert "warning" in capsys.readouterr().err
    assert run(tmp_path, "centrality", "--graphs", "PC", "--centralities", "closeness",
               "--closeness-mode", "per_component", "--format", "json") == 0
    payload = json.loads((tmp_path / "out/centrality/PC_closeness_2003.json").read_text())
    assert payload["scores"] == {"1": 0.0, "2": 1.0, "3": 1.0}


def test_self_cite_analysis(tmp_path):
    assert run(tmp_path, "analyze", "self-cite") == 0
    _, rows = read_table(tmp_path / "out/analysis/self_cite.csv")
    assert rows[0] == ["year", "self_citations", "authors", "mean", "normalized_mean"]
    assert rows[-1] == ["2003", "1", "1", "1.0", "1.0"]


def test_country_share_with_empty_tables(tmp_path):
    (tmp_path / "orgs.json").write_text("{}")
    (tmp_path / "authors.yml").write_text("{}\n")
    assert run(tmp_path, "analyze", "country-share", "--include-unresolved",
               "--org-table", str(tmp_path / "orgs.json"), "--author-table", str(tmp_path / "authors.yml")) == 0
    _, rows = read_table(tmp_path / "out/analysis/country_share.csv")
    assert rows == [["year", "Unknown"], ["1967", "100.0"], ["1970", "100.0"], ["2003", "100.0"]]


@pytest.mark.parametrize("name, extra", [
    ("rank-over-time", ["--graphs", "PC", "--centralities", "pagerank", "--sample-years", "1970,2003"]),
    ("top-k-share", ["--centralities", "pagerank"]),
    ("citation-share", ["--source-venue", "Other"]),
    ("new-authors", []),
    ("overlap", ["--pair", "Other,AAAI"]),
    ("authors-per-paper", []),
    ("sliding-window", ["--window", "3"]),
    ("laureate-correlation", ["--laureates", str(FIXTURES / "laureates.yml")]),
])
def test_every_analysis_runs(tmp_path, name, extra):
    assert run(tmp_path, "analyze", name, *extra) == 0
    out = tmp_path / "out/analysis" / (name.replace("-", "_") + ".csv")
    meta, rows = read_table(out)
    assert meta["config"]["venues"] == ["Other"]
    assert len(rows) > 1


def test_rank_over_time_trajectories(tmp_path):
    assert run(tmp_path, "analyze", "rank-over-time", "--graphs", "PC", "--centralities", "pagerank",
               "--sample-years", "1970,2003", "--top-k", "1") == 0
    _, rows = read_table(tmp_path / "out/analysis/rank_over_time.csv")
    assert rows == [["node", "1970", "2003"], ["1", "1", "1"]]


@pytest.mark.parametrize("args", [
    ["analyze", "laureate-correlation"],
    ["centrality", "--centralities", "eigenvector"],
    ["build", "--graphs", "XYZ"],
    ["build", "--venues", "Nowhere"],
    ["build", "--years", "soon"],
    ["analyze", "overlap"],
    ["analyze", "citation-share"],
    ["build", "--org-table", "/nonexistent.json", "--graphs", "CC"],
])
def test_usage_errors_exit_2(tmp_path, args, capsys):
    assert run(tmp_path, *args) == 2
    assert "error" in capsys.readouterr().err


def test_missing_input_exit_2(tmp_path):
    assert main(["build", "--input", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 2
    assert main(["build", "--out", str(tmp_path)]) == 2


def test_unusable_cache_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(tmp_path, "build", "--graphs", "PC", "--cache", str(blocker / "cache")) == 3


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('graphs = ["PC"]\nformat = "json"\ncentralities = "degree"\n')
    assert run(tmp_path, "centrality", "--config", str(cfg), "--format", "csv") == 0
    names = sorted(p.name for p in (tmp_path / "out/centrality").iterdir())
    assert "PC_degree_2003.csv" in names and not any(n.startswith("ACi") for n in names)
    cfg.write_text('colour = "blue"\n')
    assert run(tmp_path, "build", "--config", str(cfg)) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "scholargraph", "build", *BASE, "--graphs", "ACo",
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "scholargraph", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
