from __future__ import annotations

import random
from pathlib import Path

import pytest

from scholargraph.graphs import CITATION, COLLABORATION, LabeledGraph
from scholargraph.ingest import AuthorRef, PaperRecord, VenueRef, canonicalize_venue

FIXTURES = Path(__file__).parent / "fixtures"

RAW_VENUES = ["AAAI", "IJCAI", "NeurIPS", "ICML", "CVPR", "Some Workshop", "KDD"]
ORGS = [
    "MIT", "UFRGS", "TU KL", "Stanford University, USA", "Dept. of CS, (Brazil)",
    "Nowhere Institute", None, "Some Lab, Germany",
]


def make_record(pid, year, authors=(), refs=(), venue="Some Conference", title="untitled"):
    """authors: iterable of author ids or (id, org) pairs."""
    refs_ = []
    for a in authors:
        aid, org = (a, None) if isinstance(a, str) else a
        refs_.append(AuthorRef(aid, f"name {aid}", org))
    return PaperRecord(
        str(pid), title, refs_, VenueRef(venue, None, canonicalize_venue(venue)), year,
        [str(r) for r in refs],
    )


WORDS = "graph learning neural network deep model agent search planning logic vision data".split()


def random_corpus(seed, n_papers=40, n_authors=15, years=(1990, 1996), p_external=0.1):
    """Seeded synthetic corpus with in-corpus, same-year, forward and external references."""
    rng = random.Random(seed)
    records = []
    for i in range(n_papers):
        year = rng.randint(*years)
        k = rng.choice([0, 1, 1, 2, 2, 3, 4])
        authors = [(f"a{rng.randrange(n_authors)}", rng.choice(ORGS)) for _ in range(k)]
        refs = [str(rng.randrange(n_papers)) for _ in range(rng.randint(0, 5))]
        if rng.random() < p_external:
            refs.append(f"ext{i}")
        title = " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 6)))
        records.append(make_record(i, year, authors, refs, rng.choice(RAW_VENUES), title))
    records.sort(key=lambda r: r.year)
    return records


def graph_from_edges(nodes, edges, directed, multigraph=True):
    g = LabeledGraph(directed, multigraph if directed else False)
    for u in nodes:
        g.add_node(str(u), "author")
    kind = CITATION if directed else COLLABORATION
    for s, t in edges:
        g.add_edge(str(s), str(t), kind)
    return g


def random_digraph(rng, n, p=0.3, multi=True):
    nodes = list(range(n))
    edges = []
    for s in nodes:
        for t in nodes:
            if s != t and rng.random() < p:
                edges.append((s, t))
                if multi and rng.random() < 0.2:
                    edges.append((s, t))
    return nodes, edges


@pytest.fixture
def example_path():
    return FIXTURES / "worked_example.jsonl"


@pytest.fixture
def example_records(example_path):
    from scholargraph.ingest import read_records

    return list(read_records(example_path))


@pytest.fixture
def example_buckets(example_records):
    from scholargraph.ingest import bucket_by_year

    return bucket_by_year(example_records)


# acceptance reporting: one line per criterion-marked test

_CRITERIA: list[tuple[str, str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.skipped):
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
            _CRITERIA.append((label, "SKIP", title, reason.removeprefix("Skipped: ")))
        else:
            status = "PASS" if report.passed else "FAIL"
            _CRITERIA.append((label, status, title, f"{report.duration:.2f}s"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, title, note in sorted(_CRITERIA, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {label:<3} {status}  {title} ({note})")
