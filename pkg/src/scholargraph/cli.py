"""Command-line entry point: ``scholargraph {build,centrality,analyze}``.

Options may also come from a TOML file (``--config``) whose keys mirror
the long flags with dashes turned into underscores; flags given on the
command line win.  Every output file embeds the resolved configuration.

Exit codes: 0 success (possibly with warnings), 2 usage or input error,
3 cache/environment error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analytics, centrality, geo, graphs, ingest

logger = logging.getLogger("scholargraph")

EXIT_OK, EXIT_USAGE, EXIT_ENV = 0, 2, 3

ANALYSES = (
    "rank-over-time", "top-k-share", "citation-share", "self-cite", "new-authors",
    "overlap", "authors-per-paper", "country-share", "sliding-window", "laureate-correlation",
)
PAPER_CENTRALITIES = ["degree", "in_degree", "out_degree", "betweenness", "closeness", "pagerank"]


class UsageError(Exception):
    pass


class EnvironmentFailure(Exception):
    pass


@dataclass
class PipelineConfig:
    input: list[str] = field(default_factory=list)
    venues: list[str] = field(default_factory=lambda: list(ingest.CONFERENCES))
    years: str = "1969-2019"
    graphs: list[str] = field(default_factory=lambda: list(graphs.GRAPH_KINDS))
    centralities: list[str] = field(default_factory=lambda: list(PAPER_CENTRALITIES))
    q: float = centrality.DEFAULT_Q
    tol: float = centrality.DEFAULT_TOL
    max_iter: int = centrality.DEFAULT_MAX_ITER
    h: int = centrality.DEFAULT_H
    workers: int = 1
    normalizer: str = "pairs"
    closeness_mode: str = "strict"
    paths: str = "directed"
    distinct: bool = False
    per_year: bool = False
    org_table: str | None = None
    author_table: str | None = None
    venue_aliases: str | None = None
    laureates: str | None = None
    stopwords: str | None = None
    out: str = "out"
    cache: str | None = None
    format: str = "csv"
    include_unresolved: bool = False
    window: int = 2
    top_k: int = 10
    sample_years: list[int] | None = None
    source_venue: str | None = None
    pair: list[str] | None = None

    @property
    def year_range(self) -> tuple[int, int]:
        return parse_years(self.years)

    @property
    def cache_dir(self) -> Path:
        return Path(self.cache) if self.cache else Path(self.out) / "cache"

    def echo(self) -> dict[str, Any]:
        return asdict(self)


LIST_FIELDS = {"input", "venues", "graphs", "centralities", "sample_years", "pair"}


def parse_years(text: str) -> tuple[int, int]:
    parts = str(text).split("-")
    try:
        if len(parts) == 1:
            return int(parts[0]), int(parts[0])
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise UsageError(f"--years must look like 1969-2019, got {text!r}")


def _split(value: Any) -> list[str]:
    if isinstance(value, (list, tuple)):
        items = [str(v) for v in value]
    else:
        items = str(value).split(",")
    return [v.strip() for v in items if v.strip()]


def load_config(args: argparse.Namespace) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    values: dict[str, Any] = {}
    if args.config:
        try:
            data = tomllib.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        values.update(data)
    for name in known:
        flag = getattr(args, name, None)
        if flag is not None and flag is not False:
            values[name] = flag
    for name in LIST_FIELDS & values.keys():
        values[name] = _split(values[name])
    if "sample_years" in values:
        values["sample_years"] = [int(y) for y in values["sample_years"]]
    cfg = PipelineConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    cfg.year_range
    if cfg.venues == ["all"]:
        cfg.venues = sorted(ingest.CANONICAL_VENUES)
    bad = sorted(set(cfg.venues) - ingest.CANONICAL_VENUES)
    if bad:
        raise UsageError(f"unknown venues: {', '.join(bad)}")
    bad = [g for g in cfg.graphs if g not in graphs.GRAPH_KINDS]
    if bad:
        raise UsageError(f"unknown graph kinds: {', '.join(bad)}")
    bad = [c for c in cfg.centralities if c not in centrality.KINDS]
    if bad:
        raise UsageError(f"unknown centralities: {', '.join(bad)}")
    if cfg.format not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    if cfg.normalizer not in ("pairs", "directed"):
        raise UsageError("--normalizer must be pairs or directed")
    if cfg.closeness_mode not in ("strict", "per_component"):
        raise UsageError("--closeness-mode must be strict or per_component")
    if cfg.paths not in ("directed", "undirected"):
        raise UsageError("--paths must be directed or undirected")
    if cfg.workers < 1 or cfg.window < 1 or cfg.top_k < 1 or cfg.h < 1:
        raise UsageError("--workers, --window, --top-k and --h must be positive")


# pipeline


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.diagnostics: list[str] = []
        self._records: list[ingest.PaperRecord] | None = None
        self._lookup: geo.CountryLookup | None = None
        self._digest: str | None = None
        self.cache = graphs.SnapshotCache(cfg.cache_dir)

    @property
    def records(self) -> list[ingest.PaperRecord]:
        if self._records is None:
            if not self.cfg.input:
                raise UsageError("no --input given")
            aliases = ingest.load_venue_aliases(self.cfg.venue_aliases) if self.cfg.venue_aliases else None
            diags: list[ingest.Diagnostic] = []
            recs = []
            for path in self.cfg.input:
                try:
                    recs.extend(ingest.read_records(path, diags, aliases))
                except OSError as exc:
                    raise UsageError(f"cannot read input {path}: {exc}") from exc
                self.diagnostics.extend(f"{path}: {d}" for d in diags)
                diags.clear()
            recs = ingest.dedupe_records(recs, self.diagnostics)
            recs = ingest.filter_by_venues(recs, self.cfg.venues)
            first, last = self.cfg.year_range
            ingest.tag_window(recs, first, last)
            recs.sort(key=lambda r: r.year)
            self._records = recs
        return self._records

    @property
    def buckets(self) -> dict[int, list[ingest.PaperRecord]]:
        return ingest.bucket_by_year(self.records)

    @property
    def lookup(self) -> geo.CountryLookup:
        if self._lookup is None:
            try:
                self._lookup = geo.load_lookup(
                    self.cfg.org_table, self.cfg.author_table, diagnostics=self.diagnostics
                )
            except (OSError, geo.LookupLoadError) as exc:
                raise UsageError(str(exc)) from exc
        return self._lookup

    @property
    def digest(self) -> str:
        if self._digest is None:
            self._digest = graphs.corpus_digest(self.records)
        return self._digest

    def snapshots(self, kind: str, cumulative: bool | None = None) -> graphs.SnapshotSeries:
        """Snapshots for the configured year range, served from cache when possible."""
        cumulative = not self.cfg.per_year if cumulative is None else cumulative
        first, last = self.cfg.year_range
        extra = self.lookup.digest_payload() if kind == "CC" else ""
        keys = {
            y: graphs.snapshot_cache_key(kind, self.cfg.venues, y, self.digest, cumulative=cumulative, extra=extra)
            for y in range(first, last + 1)
        }
        cached = {}
        for y, key in keys.items():
            g = self.cache.load(key)
            if g is None:
                break
            cached[y] = g
        series = graphs.SnapshotSeries(kind, frozenset(self.cfg.venues), cumulative=cumulative)
        if len(cached) == len(keys):
            logger.info("%s: %d snapshots from cache", kind, len(keys))
            series.years = sorted(cached.items())
            return series
        factory = (lambda: geo.make_resolver(self.lookup.fresh())) if kind == "CC" else None
        series = graphs.cumulative_snapshots(
            self.buckets, kind, (first, last), cumulative=cumulative,
            resolver_factory=factory, venues=self.cfg.venues,
        )
        for y, g in series:
            try:
                self.cache.store(keys[y], g)
            except OSError as exc:
                raise EnvironmentFailure(f"cannot write cache entry {keys[y]}: {exc}") from exc
        return series

    def cache_key(self, kind: str, year: int, cumulative: bool) -> str:
        extra = self.lookup.digest_payload() if kind == "CC" else ""
        return graphs.snapshot_cache_key(kind, self.cfg.venues, year, self.digest, cumulative=cumulative, extra=extra)

    def centrality_params(self) -> dict[str, Any]:
        c = self.cfg
        return dict(q=c.q, tol=c.tol, max_iter=c.max_iter, h=c.h, normalizer=c.normalizer,
                    closeness_mode=c.closeness_mode, paths=c.paths, distinct=c.distinct)

    def metadata(self, **extra: Any) -> dict[str, Any]:
        return {"config": self.cfg.echo(), **extra}


# output helpers


def _out_dir(cfg: PipelineConfig, *parts: str) -> Path:
    path = Path(cfg.out, *parts)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]], metadata: dict, fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        payload = {"metadata": metadata, "rows": [dict(zip(header, r)) for r in rows]}
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        return path
    path = path.with_suffix(".csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _write_share(table: analytics.ShareTable, path: Path, metadata: dict, fmt: str) -> Path:
    table.metadata = {**table.metadata, **metadata}
    if fmt == "json":
        path = path.with_suffix(".json")
        path.write_text(table.to_json(), encoding="utf-8")
    else:
        path = path.with_suffix(".csv")
        table.write_csv(path)
    return path


def _num(x: float | None) -> str:
    return "" if x is None else repr(float(x))


# commands


def cmd_build(cfg: PipelineConfig) -> int:
    pipe = Pipeline(cfg)
    rows = []
    cumulative = not cfg.per_year
    first, last = cfg.year_range
    for kind in cfg.graphs:
        if first > last:
            continue
        series = pipe.snapshots(kind)
        for year, g in series:
            rows.append({"kind": kind, "year": year, "nodes": g.n, "edges": g.m,
                         "cache_key": pipe.cache_key(kind, year, cumulative)})
    manifest = {
        "config": cfg.echo(),
        "corpus_digest": pipe.digest,
        "diagnostics": pipe.diagnostics,
        "snapshots": rows,
        "run": {
            "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "cache_hits": pipe.cache.hits,
            "cache_misses": pipe.cache.misses,
        },
    }
    out = _out_dir(cfg)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    logger.info("cache: %d hits, %d misses", pipe.cache.hits, pipe.cache.misses)
    return EXIT_OK


def cmd_centrality(cfg: PipelineConfig) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg, "centrality")
    failures = []
    for kind in cfg.graphs:
        series = pipe.snapshots(kind)
        for year, g in series:
            for ckind in cfg.centralities:
                try:
                    table = centrality.compute(g, ckind, workers=cfg.workers, **pipe.centrality_params())
                except centrality.CentralityError as exc:
                    failures.append({"graph": kind, "year": year, "centrality": ckind, "error": str(exc)})
                    logger.warning("%s %s %d: %s", kind, ckind, year, exc)
                    continue
                meta = pipe.metadata(graph=kind, year=year)
                stem = out / f"{kind}_{ckind}_{year}"
                if cfg.format == "json":
                    stem.with_suffix(".json").write_text(table.to_json(year, meta), encoding="utf-8")
                else:
                    table.write_csv(stem.with_suffix(".csv"), year, meta)
    (out / "errors.json").write_text(json.dumps(failures, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if failures:
        print(f"warning: {len(failures)} centrality item(s) failed; see {out / 'errors.json'}", file=sys.stderr)
    return EXIT_OK


def _analysis_years(pipe: Pipeline) -> list[int]:
    first, last = pipe.cfg.year_range
    return list(range(first, last + 1))


def cmd_analyze(cfg: PipelineConfig, name: str) -> int:
    pipe = Pipeline(cfg)
    out = _out_dir(cfg, "analysis")
    stem = out / name.replace("-", "_")
    fmt = cfg.format
    meta = pipe.metadata(analysis=name)
    venue_of = {r.id: ingest.venue_of(r) for r in pipe.records}
    year_of = {r.id: r.year for r in pipe.records}

    if name == "rank-over-time":
        kind, ckind = cfg.graphs[0], cfg.centralities[0]
        series = pipe.snapshots(kind)
        tables = {y: centrality.compute(g, ckind, workers=cfg.workers, **pipe.centrality_params()) for y, g in series}
        sample = cfg.sample_years or [y for y, _ in series]
        ranks = analytics.rank_over_time(tables, sample, cfg.top_k)
        rows = [[node, *("N/A" if r is None else r for r in traj)] for node, traj in ranks.trajectories.items()]
        _write_rows(stem, ["node", *map(str, ranks.years)], rows,
                    {**meta, "graph": kind, "centrality": ckind, "tie_rule": analytics.TIE_RULE}, fmt)

    elif name == "top-k-share":
        ckind = cfg.centralities[0]
        series = pipe.snapshots("PC")
        tables = {y: centrality.compute(g, ckind, workers=cfg.workers, **pipe.centrality_params())
                  for y, g in series if g.n}
        share = analytics.top_k_venue_share(tables, venue_of, cfg.top_k)
        _write_share(share, stem, {**meta, "centrality": ckind}, fmt)

    elif name == "citation-share":
        if not cfg.source_venue:
            raise UsageError("citation-share needs --source-venue")
        series = pipe.snapshots("PC", cumulative=False)
        share = analytics.citation_share_by_source(series.as_dict(), cfg.source_venue, venue_of, year_of)
        _write_share(share, stem, meta, fmt)

    elif name == "self-cite":
        series = pipe.snapshots("ACi", cumulative=False)
        live = {y: [r for r in b if not r.out_of_window] for y, b in pipe.buckets.items()}
        stats = analytics.self_citation_stats(series.as_dict(), live)
        rows = [[y, s.total, len(s.per_author), _num(s.mean), _num(s.normalized_mean)] for y, s in stats.items()]
        _write_rows(stem, ["year", "self_citations", "authors", "mean", "normalized_mean"], rows, meta, fmt)

    elif name == "new-authors":
        stats = analytics.new_author_stats(pipe.buckets)
        _write_share(stats.venue_share, stem, meta, fmt)
        rows = [[a, stats.debut[a], stats.new_coauthors[a], stats.career_length[a], _num(stats.normalized_rate[a])]
                for a in sorted(stats.debut)]
        _write_rows(out / "new_authors_per_author",
                    ["author", "debut", "new_coauthors", "career_length", "normalized_rate"], rows, meta, fmt)

    elif name == "overlap":
        if not cfg.pair or len(cfg.pair) != 2:
            raise UsageError("overlap needs --pair VENUE_A,VENUE_B")
        a, b = cfg.pair
        rows = []
        for y in _analysis_years(pipe):
            value = analytics.author_overlap(pipe.buckets, (a, b), y)
            rows.append([y, _num(value), "empty" if value is None else "ok"])
        _write_rows(stem, ["year", "overlap_percent", "status"], rows,
                    {**meta, "pair": [a, b], "denominator": analytics.OVERLAP_RULE}, fmt)

    elif name == "authors-per-paper":
        dist = analytics.authors_per_paper_distribution(pipe.buckets)
        header = ["year", "papers", "mean", "median", "p95", "p99", "zero_author_records"]
        rows = [[y, d["papers"], _num(d["mean"]), _num(d["median"]), _num(d["p95"]), _num(d["p99"]),
                 d["zero_author_records"]] for y, d in dist.items()]
        _write_rows(stem, header, rows, meta, fmt)

    elif name in ("country-share", "sliding-window"):
        live = [r for r in pipe.records if not r.out_of_window]
        resolutions = geo.resolve_records(live, pipe.lookup.fresh())
        share = analytics.country_share(resolutions, "percentage", cfg.include_unresolved)
        if name == "sliding-window":
            share = analytics.sliding_window_average(share, cfg.window)
        _write_share(share, stem, meta, fmt)

    elif name == "laureate-correlation":
        if not cfg.laureates:
            raise UsageError("laureate-correlation needs --laureates")
        try:
            laureates = analytics.load_laureates(cfg.laureates)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        stop = analytics.load_stopwords(cfg.stopwords)
        left = analytics.laureate_titles_by_year(laureates, pipe.records)
        right: dict[int, list[str]] = {}
        for r in pipe.records:
            if not r.out_of_window:
                right.setdefault(r.year, []).append(r.title)
        result = analytics.tfidf_rank_correlation(left, right, stop)
        rows = [[y, _num(c.rho), c.common_words, c.status] for y, c in result.items()]
        _write_rows(stem, ["year", "rho", "common_words", "status"], rows,
                    {**meta, "tfidf": analytics.TFIDF_RULE}, fmt)
    else:
        raise UsageError(f"unknown analysis {name!r}")
    return EXIT_OK


# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with default option values")
    p.add_argument("--input", action="append", help="newline-delimited JSON records (.gz ok); repeatable")
    p.add_argument("--venues", help="comma-separated canonical venues, or 'all'")
    p.add_argument("--years", help="inclusive year range, e.g. 1969-2019")
    p.add_argument("--graphs", help=f"comma-separated graph kinds ({','.join(graphs.GRAPH_KINDS)})")
    p.add_argument("--centralities", help=f"comma-separated centralities ({','.join(centrality.KINDS)})")
    p.add_argument("--q", type=float, help="PageRank teleport probability (default 0.15)")
    p.add_argument("--tol", type=float, help="PageRank L1 tolerance (default 1e-10)")
    p.add_argument("--max-iter", type=int, help="PageRank iteration cap (default 200)")
    p.add_argument("--h", type=int, help="volume centrality radius (default 2)")
    p.add_argument("--workers", type=int, help="processes for betweenness/closeness")
    p.add_argument("--normalizer", choices=["pairs", "directed"], help="betweenness divisor: pairs = (n-1)(n-2)/2, directed = (n-1)(n-2)")
    p.add_argument("--closeness-mode", choices=["strict", "per_component"])
    p.add_argument("--paths", choices=["directed", "undirected"], help="path semantics on directed graphs")
    p.add_argument("--distinct", action="store_true", default=None, help="degree counts distinct neighbors")
    p.add_argument("--per-year", action="store_true", default=None, help="per-year instead of cumulative graphs")
    p.add_argument("--org-table", help="JSON organization -> country table")
    p.add_argument("--author-table", help="YAML author id -> country table")
    p.add_argument("--venue-aliases", help="JSON venue alias table")
    p.add_argument("--laureates", help="YAML laureate paper list")
    p.add_argument("--stopwords", help="stop-word list, one word per line")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--cache", help="snapshot cache directory (default OUT/cache)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--include-unresolved", action="store_true", default=None)
    p.add_argument("--window", type=int, help="sliding-window width in years (default 2)")
    p.add_argument("--top-k", type=int, help="top-k cut for rankings and shares (default 10)")
    p.add_argument("--sample-years", help="comma-separated years for rank-over-time")
    p.add_argument("--source-venue", help="source venue for citation-share")
    p.add_argument("--pair", help="two venues for overlap, e.g. AAAI,IJCAI")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scholargraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("build", help="build cumulative graph snapshots and a manifest"))
    _add_common(sub.add_parser("centrality", help="compute centrality tables for every snapshot"))
    p = sub.add_parser("analyze", help="emit one analysis table")
    p.add_argument("analysis", choices=ANALYSES)
    _add_common(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "centrality":
            return cmd_centrality(cfg)
        return cmd_analyze(cfg, args.analysis)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"scholargraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EnvironmentFailure, OSError) as exc:
        print(f"scholargraph: error: {exc}", file=sys.stderr)
        return EXIT_ENV
