"""Citation and collaboration graph builders.

Five graph kinds are supported:

``ACi``  author citation, directed multigraph (self-loops are self-citations)
``ACo``  author collaboration, undirected simple graph
``PC``   paper citation, directed simple graph
``APC``  author-paper graph: PC plus author -> paper authorship edges
``CC``   country citation, directed multigraph

Every builder is a fold over year buckets in ascending order.  A year's
papers enter the paper-id lookup table before that year's references are
resolved, so citations between papers of the same year are kept while
references to papers outside the corpus are skipped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .ingest import AuthorRef, PaperRecord

logger = logging.getLogger(__name__)

AUTHOR, PAPER, COUNTRY = "author", "paper", "country"
CITATION, COLLABORATION, AUTHORSHIP = "citation", "collaboration", "authorship"

GRAPH_KINDS = ("ACi", "ACo", "PC", "APC", "CC")
CACHE_FORMAT = "scholargraph.graph"
CACHE_VERSION = 1

Resolver = Callable[[AuthorRef, PaperRecord], "str | None"]
Edge = tuple[str, str, str]


class GraphError(ValueError):
    pass


class LabeledGraph:
    """A typed (multi)graph keyed by opaque string ids.

    Edges live in a counter mapping ``(source, target, kind)`` to its
    multiplicity.  Undirected edges are stored with endpoints sorted.
    ``stats`` and ``diagnostics`` carry builder bookkeeping and take no part
    in equality.
    """

    def __init__(self, directed: bool, multigraph: bool):
        self.directed = directed
        self.multigraph = multigraph
        self.nodes: dict[str, str] = {}
        self.edges: Counter[Edge] = Counter()
        self.stats: Counter[str] = Counter()
        self.diagnostics: list[str] = []

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return sum(self.edges.values())

    def add_node(self, key: str, kind: str) -> None:
        current = self.nodes.setdefault(key, kind)
        if current != kind:
            raise GraphError(f"node {key!r} already exists as {current}, not {kind}")

    def add_edge(self, source: str, target: str, kind: str, count: int = 1) -> None:
        if source not in self.nodes or target not in self.nodes:
            raise GraphError(f"edge {source!r}->{target!r} has an unknown endpoint")
        if (kind == COLLABORATION) == self.directed:
            raise GraphError(f"{kind} edges do not belong in a {'' if self.directed else 'un'}directed graph")
        if not self.directed and target < source:
            source, target = target, source
        key = (source, target, kind)
        if self.multigraph:
            self.edges[key] += count
        else:
            self.edges[key] = 1

    def has_edge(self, source: str, target: str, kind: str | None = None) -> bool:
        if not self.directed and target < source:
            source, target = target, source
        if kind is not None:
            return (source, target, kind) in self.edges
        return any((source, target, k) in self.edges for k in (CITATION, COLLABORATION, AUTHORSHIP))

    def self_loops(self) -> Counter[str]:
        """Self-loop multiplicity per node (nodes without loops are omitted)."""
        loops: Counter[str] = Counter()
        for (s, t, _), c in self.edges.items():
            if s == t:
                loops[s] += c
        return loops

    def copy(self) -> "LabeledGraph":
        g = LabeledGraph(self.directed, self.multigraph)
        g.nodes = dict(self.nodes)
        g.edges = Counter(self.edges)
        g.stats = Counter(self.stats)
        g.diagnostics = list(self.diagnostics)
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return (
            self.directed == other.directed
            and self.multigraph == other.multigraph
            and self.nodes == other.nodes
            and +self.edges == +other.edges
        )

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        multi = " multigraph" if self.multigraph else ""
        return f"<LabeledGraph {kind}{multi} n={self.n} m={self.m}>"

    # serialization

    def sorted_nodes(self) -> list[tuple[str, str]]:
        return sorted(self.nodes.items())

    def sorted_edges(self) -> list[tuple[str, str, str, int]]:
        return [(s, t, k, c) for (s, t, k), c in sorted(self.edges.items()) if c]

    def to_dict(self) -> dict:
        return {
            "directed": self.directed,
            "multigraph": self.multigraph,
            "nodes": [list(n) for n in self.sorted_nodes()],
            "edges": [list(e) for e in self.sorted_edges()],
            "stats": dict(sorted(self.stats.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LabeledGraph":
        g = cls(bool(data["directed"]), bool(data["multigraph"]))
        for key, kind in data["nodes"]:
            g.add_node(key, kind)
        for s, t, kind, count in data["edges"]:
            if not g.multigraph and count != 1:
                raise GraphError("simple graph with edge multiplicity != 1")
            g.add_edge(s, t, kind, count)
        g.stats.update(data.get("stats", {}))
        return g

    def adjacency(self) -> dict[str, list[list]]:
        """Adjacency-list form: node -> [[neighbor, edge kind, multiplicity], ...]."""
        adj: dict[str, list[list]] = {k: [] for k, _ in self.sorted_nodes()}
        for s, t, kind, count in self.sorted_edges():
            adj[s].append([t, kind, count])
            if not self.directed and s != t:
                adj[t].append([s, kind, count])
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def write_csv(self, node_path: str | Path, edge_path: str | Path) -> None:
        with open(node_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["key", "kind"])
            w.writerows(self.sorted_nodes())
        with open(edge_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source", "target", "kind", "multiplicity"])
            w.writerows(self.sorted_edges())

    def write_adjacency_json(self, path: str | Path) -> None:
        payload = {
            "directed": self.directed,
            "multigraph": self.multigraph,
            "nodes": dict(self.sorted_nodes()),
            "adjacency": self.adjacency(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def paper_key(paper_id: str) -> str:
    return f"paper:{paper_id}"


def author_key(author_id: str) -> str:
    return f"author:{author_id}"


# builders


def _unique_refs(record: PaperRecord, graph: LabeledGraph) -> list[str]:
    """References in listed order, repeats and self-references removed."""
    refs = []
    for ref in dict.fromkeys(record.references):
        if ref == record.id:
            graph.stats["self_references"] += 1
            graph.diagnostics.append(f"paper {record.id!r} lists itself as a reference; dropped")
            continue
        refs.append(ref)
    return refs


class _Builder:
    """Ascending-year fold.

    ``feed(records, emit=False)`` only registers papers in the lookup
    table; per-year graphs use it to make earlier years citable without
    putting them in the graph.
    """

    directed = True
    multigraph = False

    def __init__(self) -> None:
        self.graph = LabeledGraph(self.directed, self.multigraph)
        self.last_year: int | None = None

    def feed_year(self, year: int, records: Sequence[PaperRecord], emit: bool = True) -> None:
        if self.last_year is not None and year <= self.last_year:
            raise GraphError(f"years must be fed in ascending order ({year} after {self.last_year})")
        self.last_year = year
        self._register(records)
        if emit:
            for rec in records:
                self._emit(rec)

    def _register(self, records: Sequence[PaperRecord]) -> None:
        pass

    def _emit(self, record: PaperRecord) -> None:
        raise NotImplementedError


class AuthorCitationBuilder(_Builder):
    directed, multigraph = True, True

    def __init__(self) -> None:
        super().__init__()
        self.lookup: dict[str, list[str]] = {}

    def _register(self, records):
        for rec in records:
            if rec.authors:
                self.lookup[rec.id] = rec.author_ids

    def _emit(self, rec):
        g = self.graph
        citing = rec.author_ids
        if not citing:
            g.stats["zero_author_records"] += 1
            return
        for a in citing:
            g.add_node(a, AUTHOR)
        for ref in _unique_refs(rec, g):
            cited = self.lookup.get(ref)
            if cited is None:
                g.stats["skipped_references"] += 1
                continue
            for v in cited:
                g.add_node(v, AUTHOR)
                for u in citing:
                    g.add_edge(u, v, CITATION)


class CollaborationBuilder(_Builder):
    directed, multigraph = False, False

    def _emit(self, rec):
        g = self.graph
        authors = rec.author_ids
        if not authors:
            g.stats["zero_author_records"] += 1
            return
        for a in authors:
            g.add_node(a, AUTHOR)
        for i, u in enumerate(authors):
            for v in authors[i + 1:]:
                g.add_edge(u, v, COLLABORATION)


class PaperCitationBuilder(_Builder):
    directed, multigraph = True, False

    def __init__(self) -> None:
        super().__init__()
        self.known: set[str] = set()

    def _register(self, records):
        self.known.update(rec.id for rec in records)

    def _node(self, paper_id: str) -> str:
        return paper_id

    def _emit(self, rec):
        g = self.graph
        src = self._node(rec.id)
        g.add_node(src, PAPER)
        for ref in _unique_refs(rec, g):
            if ref not in self.known:
                g.stats["skipped_references"] += 1
                continue
            dst = self._node(ref)
            g.add_node(dst, PAPER)
            g.add_edge(src, dst, CITATION)


class AuthorPaperBuilder(PaperCitationBuilder):
    """Paper citation graph plus one authorship edge per (author, paper).

    Authors and papers share an id namespace in the source data, so node
    keys carry an ``author:`` or ``paper:`` prefix.
    """

    def _node(self, paper_id: str) -> str:
        return paper_key(paper_id)

    def _emit(self, rec):
        super()._emit(rec)
        g = self.graph
        for a in rec.author_ids:
            key = author_key(a)
            g.add_node(key, AUTHOR)
            g.add_edge(key, paper_key(rec.id), AUTHORSHIP)


class CountryCitationBuilder(_Builder):
    """Country citation multigraph.

    ``resolver(author, record)`` is called exactly once per author occurrence,
    in ascending year order, when the record enters the lookup table.
    """

    directed, multigraph = True, True

    def __init__(self, resolver: Resolver) -> None:
        super().__init__()
        self.resolver = resolver
        self.lookup: dict[str, list[str | None]] = {}

    def _register(self, records):
        for rec in records:
            authors = {a.id: a for a in reversed(rec.authors)}
            self.lookup[rec.id] = [self.resolver(authors[a], rec) for a in rec.author_ids]

    def _emit(self, rec):
        g = self.graph
        citing = self.lookup[rec.id]
        g.stats["unresolved_authors"] += sum(c is None for c in citing)
        citing = [c for c in citing if c is not None]
        for c in citing:
            g.add_node(c, COUNTRY)
        for ref in _unique_refs(rec, g):
            cited = self.lookup.get(ref)
            if cited is None:
                g.stats["skipped_references"] += 1
                continue
            for v in cited:
                if v is None:
                    continue
                g.add_node(v, COUNTRY)
                for u in citing:
                    g.add_edge(u, v, CITATION)


def make_builder(kind: str, resolver: Resolver | None = None) -> _Builder:
    if kind == "ACi":
        return AuthorCitationBuilder()
    if kind == "ACo":
        return CollaborationBuilder()
    if kind == "PC":
        return PaperCitationBuilder()
    if kind == "APC":
        return AuthorPaperBuilder()
    if kind == "CC":
        if resolver is None:
            raise GraphError("the CC graph needs a country resolver")
        return CountryCitationBuilder(resolver)
    raise GraphError(f"unknown graph kind {kind!r}; expected one of {', '.join(GRAPH_KINDS)}")


def _fold(builder: _Builder, buckets: Mapping[int, Sequence[PaperRecord]]) -> LabeledGraph:
    for year in sorted(buckets):
        builder.feed_year(year, buckets[year])
    return builder.graph


def build_author_citation(buckets: Mapping[int, Sequence[PaperRecord]]) -> LabeledGraph:
    return _fold(AuthorCitationBuilder(), buckets)


def build_collaboration(buckets: Mapping[int, Sequence[PaperRecord]]) -> LabeledGraph:
    return _fold(CollaborationBuilder(), buckets)


def build_paper_citation(buckets: Mapping[int, Sequence[PaperRecord]]) -> LabeledGraph:
    return _fold(PaperCitationBuilder(), buckets)


def build_author_paper(buckets: Mapping[int, Sequence[PaperRecord]]) -> LabeledGraph:
    return _fold(AuthorPaperBuilder(), buckets)


def build_country_citation(
    buckets: Mapping[int, Sequence[PaperRecord]], resolver: Resolver
) -> LabeledGraph:
    return _fold(CountryCitationBuilder(resolver), buckets)


def build_graph(
    kind: str, buckets: Mapping[int, Sequence[PaperRecord]], resolver: Resolver | None = None
) -> LabeledGraph:
    return _fold(make_builder(kind, resolver), buckets)


# snapshots


@dataclass
class SnapshotSeries:
    graph_kind: str
    venues: frozenset[str]
    years: list[tuple[int, LabeledGraph]] = field(default_factory=list)
    cumulative: bool = True

    def __len__(self) -> int:
        return len(self.years)

    def __iter__(self) -> Iterator[tuple[int, LabeledGraph]]:
        return iter(self.years)

    def graph(self, year: int) -> LabeledGraph:
        for y, g in self.years:
            if y == year:
                return g
        raise KeyError(year)

    def as_dict(self) -> dict[int, LabeledGraph]:
        return dict(self.years)


def cumulative_snapshots(
    buckets: Mapping[int, Sequence[PaperRecord]],
    kind: str,
    year_range: tuple[int, int],
    *,
    cumulative: bool = True,
    resolver_factory: Callable[[], Resolver] | None = None,
    venues: Iterable[str] = (),
) -> SnapshotSeries:
    """One graph per year of ``year_range`` (inclusive).

    Cumulative mode: the snapshot for year y covers every bucket <= y,
    including buckets before the range start.  Per-year mode: the snapshot
    for y holds only the nodes and edges contributed by year-y papers; for
    citation kinds, earlier papers stay citable through the lookup table
    (their cited endpoints appear as nodes).

    ``resolver_factory`` must return a fresh resolver; it is called once.
    """
    first, last = year_range
    series = SnapshotSeries(kind, frozenset(venues), cumulative=cumulative)
    if first > last:
        return series
    resolver = resolver_factory() if resolver_factory is not None else None
    builder = make_builder(kind, resolver)
    start = min([first, *buckets])
    for year in range(start, last + 1):
        records = buckets.get(year, [])
        if cumulative:
            builder.feed_year(year, records)
            if year >= first:
                series.years.append((year, builder.graph.copy()))
        else:
            if year >= first:
                # carry the lookup table forward but start an empty graph
                builder.graph = LabeledGraph(builder.directed, builder.multigraph)
                builder.feed_year(year, records)
                series.years.append((year, builder.graph))
            else:
                builder.feed_year(year, records, emit=False)
    return series


# content-addressed cache


def corpus_digest(records: Iterable[PaperRecord]) -> str:
    """SHA-256 over the canonical serialization of ``records`` in order."""
    h = hashlib.sha256()
    for rec in records:
        h.update(json.dumps(rec.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def snapshot_cache_key(
    kind: str,
    venues: Iterable[str],
    year: int,
    corpus_digest: str,
    *,
    cumulative: bool = True,
    extra: str = "",
) -> str:
    """Deterministic cache key; ``extra`` covers other inputs (e.g. lookup tables)."""
    payload = json.dumps(
        {
            "format": CACHE_FORMAT,
            "version": CACHE_VERSION,
            "kind": kind,
            "venues": sorted(set(venues)),
            "year": year,
            "digest": corpus_digest,
            "cumulative": cumulative,
            "extra": extra,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    mode = "cum" if cumulative else "year"
    return f"{kind}-{mode}-{year}-{hashlib.sha256(payload.encode('utf-8')).hexdigest()}"


class SnapshotCache:
    """One JSON file per key under ``root``.

    Writes go to a temporary file that is atomically renamed into place, so
    concurrent readers see either nothing or a complete file.  Unreadable
    or mismatching files are treated as misses.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def load(self, key: str) -> LabeledGraph | None:
        path = self.path(key)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            self.misses += 1
            return None
        try:
            data = json.loads(raw)
            if data.get("format") != CACHE_FORMAT or data.get("version") != CACHE_VERSION:
                raise ValueError(f"unsupported cache format {data.get('format')}/{data.get('version')}")
            if data.get("key") != key:
                raise ValueError("key mismatch")
            graph = LabeledGraph.from_dict(data["graph"])
        except (ValueError, KeyError, TypeError, GraphError) as exc:
            logger.warning("ignoring corrupt cache entry %s: %s", path, exc)
            self.misses += 1
            return None
        self.hits += 1
        return graph

    def store(self, key: str, graph: LabeledGraph) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {"format": CACHE_FORMAT, "version": CACHE_VERSION, "key": key, "graph": graph.to_dict()}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{key}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, self.path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return self.path(key)
