"""Time-series tables derived from records, snapshots and centralities.

Every function here is pure: it reads immutable inputs and returns plain
tables.  Records tagged ``out_of_window`` are ignored wherever records are
consumed directly.
"""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.stats import rankdata

from .centrality import CentralityTable
from .geo import RecordResolution
from .graphs import LabeledGraph
from .ingest import PaperRecord, venue_of as record_venue

UNKNOWN = "Unknown"
ABSENT = "N/A"

TIE_RULE = "ordinal: score descending, then node id ascending"
OVERLAP_RULE = "jaccard: |A & B| / |A | B|"
COUNTRY_RULE = "one attribution per distinct resolved country per record"
NEW_AUTHOR_RULE = "an author debuting in k venues in one year adds 1/k to each"
TFIDF_RULE = "document = one title; tf = raw count; idf = ln(N/df); word weight = sum over documents"

Buckets = Mapping[int, Sequence[PaperRecord]]


def _live(records: Iterable[PaperRecord]) -> list[PaperRecord]:
    return [r for r in records if not r.out_of_window]


def _ordinal_ranking(scores: Mapping[str, float]) -> list[tuple[str, float, int]]:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(node, score, i) for i, (node, score) in enumerate(ordered, 1)]


# tables


@dataclass
class ShareTable:
    """Per-year category values, either raw counts or percentages."""

    values: dict[int, dict[str, float]]
    mode: str = "percentage"
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def years(self) -> list[int]:
        return sorted(self.values)

    @property
    def categories(self) -> list[str]:
        return sorted({c for row in self.values.values() for c in row})

    def row(self, year: int) -> dict[str, float]:
        return self.values.get(year, {})

    def write_csv(self, path: str | Path) -> None:
        cats = self.categories
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps({"mode": self.mode, **self.metadata}, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["year", *cats])
            for year in self.years:
                row = self.values[year]
                w.writerow([year, *(repr(float(row.get(c, 0.0))) for c in cats)])

    def to_json(self) -> str:
        payload = {
            "metadata": {"mode": self.mode, **self.metadata},
            "values": {str(y): dict(sorted(self.values[y].items())) for y in self.years},
        }
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def _percentages(counts: Mapping[int, Mapping[str, float]]) -> dict[int, dict[str, float]]:
    out = {}
    for year, row in counts.items():
        total = sum(row.values())
        out[year] = {c: 100.0 * v / total for c, v in row.items()} if total else {}
    return out


def _share(counts: dict[int, dict[str, float]], mode: str, metadata: dict) -> ShareTable:
    if mode not in ("count", "percentage"):
        raise ValueError(f"mode must be 'count' or 'percentage', not {mode!r}")
    values = counts if mode == "count" else _percentages(counts)
    return ShareTable({y: values[y] for y in sorted(values)}, mode, metadata)


@dataclass
class RankSeries:
    centrality_kind: str
    years: list[int]
    rankings: dict[int, list[tuple[str, float, int]]]
    trajectories: dict[str, list[int | None]]
    top_k: int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            meta = {"kind": self.centrality_kind, "top_k": self.top_k, "tie_rule": TIE_RULE, "absent": ABSENT}
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", *self.years])
            for node, ranks in self.trajectories.items():
                w.writerow([node, *(ABSENT if r is None else r for r in ranks)])


def rank_over_time(
    tables: Mapping[int, CentralityTable], sample_years: Sequence[int], top_k: int
) -> RankSeries:
    """Rank trajectories of every node that reaches the top ``top_k`` in some sampled year.

    A node missing from a year's table gets ``None`` (written as N/A).
    """
    kind = next(iter(tables.values())).kind if tables else ""
    years = sorted(sample_years) if tables else []
    missing = [y for y in years if y not in tables]
    if missing:
        raise ValueError(f"sample years without a table: {missing}")
    rankings = {y: _ordinal_ranking(tables[y].scores) for y in years}
    rank_of = {y: {node: r for node, _, r in rankings[y]} for y in years}
    chosen = {node for y in years for node, _, r in rankings[y] if r <= top_k}
    best = {node: min(rank_of[y][node] for y in years if node in rank_of[y]) for node in chosen}
    order = sorted(chosen, key=lambda node: (best[node], node))
    trajectories = {node: [rank_of[y].get(node) for y in years] for node in order}
    return RankSeries(kind, years, rankings, trajectories, top_k)


def top_k_venue_share(
    paper_tables: Mapping[int, CentralityTable],
    venue_of: Mapping[str, str],
    k: int = 100,
    mode: str = "percentage",
) -> ShareTable:
    """Venue mix of the ``k`` best-scoring papers per year."""
    if k < 1:
        raise ValueError("k must be at least 1")
    counts: dict[int, dict[str, float]] = {}
    short = []
    for year in sorted(paper_tables):
        ranking = _ordinal_ranking(paper_tables[year].scores)
        if len(ranking) < k:
            short.append(year)
        tally = Counter(venue_of[node] for node, _, _ in ranking[:k])
        counts[year] = {v: float(c) for v, c in tally.items()}
    return _share(counts, mode, {"k": k, "tie_rule": TIE_RULE, "years_with_fewer_than_k": short})


def citation_share_by_source(
    pc_graphs: Mapping[int, LabeledGraph],
    source_venue: str,
    venue_of: Mapping[str, str],
    year_of: Mapping[str, int],
    mode: str = "percentage",
) -> ShareTable:
    """Where citations made by ``source_venue`` papers of each year point to, by venue."""
    counts: dict[int, dict[str, float]] = {}
    empty = []
    for year in sorted(pc_graphs):
        tally: Counter[str] = Counter()
        for (s, t, _), c in pc_graphs[year].edges.items():
            if venue_of.get(s) == source_venue and year_of.get(s) == year:
                tally[venue_of[t]] += c
        if not tally:
            empty.append(year)
        counts[year] = {v: float(c) for v, c in tally.items()}
    return _share(counts, mode, {"source_venue": source_venue, "empty_years": empty})


@dataclass
class SelfCitationYear:
    per_author: dict[str, int]
    total: int
    mean: float
    normalized_mean: float


def self_citation_stats(
    aci_yearly: Mapping[int, LabeledGraph], buckets: Buckets
) -> dict[int, SelfCitationYear]:
    """Self-citation counts per publishing author and year.

    ``aci_yearly`` holds per-year (non-cumulative) author citation graphs.
    ``per_author`` covers every author publishing that year, zeros
    included.  ``mean`` averages over authors with at least one
    self-citation; ``normalized_mean`` divides the year's total by the
    number of distinct publishing authors.
    """
    out = {}
    for year in sorted(aci_yearly):
        authors = dict.fromkeys(a for rec in _live(buckets.get(year, [])) for a in rec.author_ids)
        loops = aci_yearly[year].self_loops()
        per_author = {a: loops.get(a, 0) for a in authors}
        total = sum(loops.values())
        citing = [c for c in per_author.values() if c]
        out[year] = SelfCitationYear(
            per_author,
            total,
            sum(citing) / len(citing) if citing else 0.0,
            total / len(authors) if authors else 0.0,
        )
    return out


@dataclass
class NewAuthorStats:
    debut: dict[str, int]
    venue_share: ShareTable
    new_coauthors: dict[str, int]
    career_length: dict[str, int]
    normalized_rate: dict[str, float]


def new_author_stats(buckets: Buckets, venue_of: Callable[[PaperRecord], str] = record_venue) -> NewAuthorStats:
    """Debut years, per-venue share of debuting authors, and new-coauthor counts.

    An author is new in the year of their first record.  Author A gains a
    new coauthor B when they share a record published in B's debut year;
    each B counts once for A.
    """
    debut: dict[str, int] = {}
    last: dict[str, int] = {}
    for year in sorted(buckets):
        for rec in _live(buckets[year]):
            for a in rec.author_ids:
                debut.setdefault(a, year)
                last[a] = year

    shares: dict[int, dict[str, float]] = {}
    partners: dict[str, set[str]] = defaultdict(set)
    for year in sorted(buckets):
        venues_by_author: dict[str, set[str]] = defaultdict(set)
        for rec in _live(buckets[year]):
            ids = rec.author_ids
            for a in ids:
                if debut[a] == year:
                    venues_by_author[a].add(venue_of(rec))
            for a in ids:
                for b in ids:
                    if a != b and debut[b] == year:
                        partners[a].add(b)
        row: dict[str, float] = defaultdict(float)
        for venues in venues_by_author.values():
            for v in venues:
                row[v] += 1.0 / len(venues)
        shares[year] = dict(row)

    new_coauthors = {a: len(partners.get(a, ())) for a in debut}
    career = {a: last[a] - debut[a] + 1 for a in debut}
    rate = {a: new_coauthors[a] / career[a] for a in debut}
    share = _share(shares, "percentage", {"attribution": NEW_AUTHOR_RULE})
    return NewAuthorStats(debut, share, new_coauthors, career, rate)


def author_overlap(
    buckets: Buckets,
    venue_pair: tuple[str, str],
    year: int,
    venue_of: Callable[[PaperRecord], str] = record_venue,
) -> float | None:
    """Jaccard overlap (in percent) of the two venues' author sets; None if both are empty."""
    first, second = venue_pair
    a: set[str] = set()
    b: set[str] = set()
    for rec in _live(buckets.get(year, [])):
        v = venue_of(rec)
        if v == first:
            a.update(rec.author_ids)
        if v == second:
            b.update(rec.author_ids)
    union = a | b
    if not union:
        return None
    return 100.0 * len(a & b) / len(union)


def authors_per_paper_distribution(buckets: Buckets) -> dict[int, dict[str, float]]:
    """Mean, median, 95th/99th percentile of author counts per year; zero-author records counted apart."""
    out = {}
    for year in sorted(buckets):
        lengths = [len(rec.author_ids) for rec in _live(buckets[year])]
        if not lengths:
            continue
        arr = np.asarray(lengths, dtype=float)
        out[year] = {
            "papers": len(lengths),
            "mean": float(arr.mean()),
            "median": float(np.median(arr)),
            "p95": float(np.percentile(arr, 95)),
            "p99": float(np.percentile(arr, 99)),
            "zero_author_records": int((arr == 0).sum()),
        }
    return out


def country_share(
    resolutions: Iterable[RecordResolution],
    mode: str = "percentage",
    include_unresolved: bool = False,
) -> ShareTable:
    """Records per country per year.

    A record counts once for each distinct country among its resolved
    authors.  Records with no resolved author go to ``Unknown`` when
    ``include_unresolved`` is set and are dropped otherwise.
    """
    counts: dict[int, dict[str, float]] = defaultdict(dict)
    for res in resolutions:
        row = counts[res.year]
        countries = res.countries
        if not countries and include_unresolved:
            countries = [UNKNOWN]
        for c in countries:
            row[c] = row.get(c, 0.0) + 1.0
    meta = {"attribution": COUNTRY_RULE, "include_unresolved": include_unresolved}
    return _share(dict(counts), mode, meta)


def sliding_window_average(share: ShareTable, width: int = 2) -> ShareTable:
    """Trailing mean over the last ``width`` years that exist in ``share``."""
    if width < 1:
        raise ValueError("width must be at least 1")
    years = share.years
    cats = share.categories
    present = set(years)
    out = {}
    for year in years:
        window = [y for y in range(year - width + 1, year + 1) if y in present]
        out[year] = {c: sum(share.values[y].get(c, 0.0) for y in window) / len(window) for c in cats}
    return ShareTable(out, share.mode, {**share.metadata, "window": width})


# text


_TOKEN = re.compile(r"[^0-9a-z]+")


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("scholargraph").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def tokenize(title: str, stopwords: frozenset[str]) -> list[str]:
    return [t for t in _TOKEN.split(title.lower()) if len(t) >= 2 and t not in stopwords]


def tfidf_weights(titles: Sequence[str], stopwords: frozenset[str]) -> dict[str, float]:
    docs = [Counter(tokenize(t, stopwords)) for t in titles]
    n = len(docs)
    df: Counter[str] = Counter()
    for d in docs:
        df.update(d.keys())
    weights: dict[str, float] = defaultdict(float)
    for d in docs:
        for word, tf in d.items():
            weights[word] += tf * math.log(n / df[word])
    return dict(weights)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks; NaN when undefined."""
    if len(x) != len(y):
        raise ValueError("spearman needs equal-length inputs")
    if len(x) < 2:
        return math.nan
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0 or vy == 0:
        return math.nan
    return float(dx @ dy) / math.sqrt(vx * vy)


@dataclass(frozen=True)
class CorrelationResult:
    rho: float | None
    common_words: int
    status: str  # ok | insufficient | empty | undefined


def tfidf_rank_correlation(
    laureate_titles: Mapping[int, Sequence[str]],
    corpus_titles: Mapping[int, Sequence[str]],
    stopwords: frozenset[str] | None = None,
    min_common: int = 3,
) -> dict[int, CorrelationResult]:
    """Per-year Spearman rho between the two sides' TF-IDF word rankings.

    Each side's weights are computed over its own titles; rho is taken
    over words present on both sides.
    """
    stop = load_stopwords() if stopwords is None else stopwords
    out = {}
    for year in sorted(set(laureate_titles) | set(corpus_titles)):
        left, right = laureate_titles.get(year, []), corpus_titles.get(year, [])
        if not left or not right:
            out[year] = CorrelationResult(None, 0, "empty")
            continue
        wl, wr = tfidf_weights(left, stop), tfidf_weights(right, stop)
        common = sorted(set(wl) & set(wr))
        if len(common) < min_common:
            out[year] = CorrelationResult(None, len(common), "insufficient")
            continue
        rho = spearman([wl[w] for w in common], [wr[w] for w in common])
        if math.isnan(rho):
            out[year] = CorrelationResult(None, len(common), "undefined")
        else:
            out[year] = CorrelationResult(rho, len(common), "ok")
    return out


def load_laureates(path: str | Path) -> list[dict[str, Any]]:
    """Laureate file: a YAML list of ``{laureate, year_awarded, papers: [ids]}``."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a list of laureate entries")
    for entry in data:
        if not isinstance(entry, dict) or not {"laureate", "year_awarded", "papers"} <= entry.keys():
            raise ValueError(f"{path}: every entry needs laureate, year_awarded and papers")
        entry["papers"] = [str(p) for p in entry["papers"]]
    return data


def laureate_titles_by_year(
    laureates: Iterable[Mapping[str, Any]], records: Iterable[PaperRecord]
) -> dict[int, list[str]]:
    wanted = {p for entry in laureates for p in entry["papers"]}
    out: dict[int, list[str]] = defaultdict(list)
    for rec in _live(records):
        if rec.id in wanted:
            out[rec.year].append(rec.title)
    return dict(sorted(out.items()))
