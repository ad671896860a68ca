"""Affiliation to country resolution.

An author's free-form ``org`` string is cleaned (keep the text after the
last comma, strip tag noise and bracket/dash/underscore characters) and
then matched against an organization table, falling back to its first and
last words, the raw string, and finally to whatever country the same
author resolved to earlier in the run.  A curated per-author table is
consulted before all of that.
"""

from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .ingest import AuthorRef, PaperRecord

CURATED_AUTHOR = "curated_author"
EXACT = "exact"
FIRST_WORD = "first_word"
LAST_WORD = "last_word"
RAW = "raw"
PAST_AUTHOR = "past_author"
UNRESOLVED = "unresolved"
STEPS = (CURATED_AUTHOR, EXACT, FIRST_WORD, LAST_WORD, RAW, PAST_AUTHOR, UNRESOLVED)

_STRIP_CHARS = re.compile(r"[\(\)\[\]\-\_]")


class LookupLoadError(ValueError):
    def __init__(self, path: str | Path, line: int | None, reason: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {reason}")
        self.path = str(path)
        self.line = line


class OrderError(ValueError):
    """Records were handed over out of ascending year order."""


def load_vocabulary(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("scholargraph").joinpath("data/countries.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


@dataclass
class CountryLookup:
    org_table: dict[str, str] = field(default_factory=dict)
    author_table: dict[str, str] = field(default_factory=dict)
    past_table: dict[str, str] = field(default_factory=dict)

    def fresh(self) -> "CountryLookup":
        """Same curated tables, empty run-local history."""
        return CountryLookup(self.org_table, self.author_table, {})

    def digest_payload(self) -> str:
        return json.dumps([self.org_table, self.author_table], sort_keys=True)


@dataclass(frozen=True)
class CountryResolution:
    author_id: str
    raw_org: str | None
    country: str | None
    step: str


def preprocess_org(raw_org: str | None) -> str:
    """Clean an affiliation string down to its last comma-separated segment.

    >>> preprocess_org("Institute of Informatics, Federal University of Rio Grande do Sul, Brazil")
    'Brazil'
    """
    if not raw_org:
        return ""
    org = raw_org.split(",")[-1]
    org = org.replace("#TAB#", "").replace("#tab#", "")
    org = _STRIP_CHARS.sub("", org)
    return org.strip()


def infer_country(raw_org: str | None, author_id: str, lookup: CountryLookup) -> CountryResolution:
    """Run the resolution cascade for one author occurrence.

    Hits on the organization stages (exact, first word, last word, raw)
    update ``lookup.past_table``; curated and past-author hits do not.
    """
    if author_id in lookup.author_table:
        return CountryResolution(author_id, raw_org, lookup.author_table[author_id], CURATED_AUTHOR)

    table = lookup.org_table
    org = preprocess_org(raw_org)
    words = org.split()
    candidates = [(EXACT, org)]
    if words:
        candidates += [(FIRST_WORD, words[0]), (LAST_WORD, words[-1])]
    if raw_org is not None:
        candidates.append((RAW, raw_org))
    for step, text in candidates:
        if text and text in table:
            country = table[text]
            lookup.past_table[author_id] = country
            return CountryResolution(author_id, raw_org, country, step)

    if author_id in lookup.past_table:
        return CountryResolution(author_id, raw_org, lookup.past_table[author_id], PAST_AUTHOR)
    return CountryResolution(author_id, raw_org, None, UNRESOLVED)


def make_resolver(lookup: CountryLookup):
    """Adapt ``lookup`` to the ``(author, record) -> country`` graph-builder hook."""

    def resolve(author: AuthorRef, record: PaperRecord) -> str | None:
        return infer_country(author.org, author.id, lookup).country

    return resolve


# loading


class _DupCheckingLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader: _DupCheckingLoader, node: yaml.MappingNode, deep: bool = False):
    loader.flatten_mapping(node)
    out = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in out:
            loader.duplicates.append((str(key), key_node.start_mark.line + 1))
        out[key] = loader.construct_object(value_node, deep=deep)
    return out


_DupCheckingLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def _check_table(table: object, path: Path, vocabulary: frozenset[str]) -> dict[str, str]:
    if table is None:
        return {}
    if not isinstance(table, dict):
        raise LookupLoadError(path, None, "expected a mapping at top level")
    out = {}
    for key, country in table.items():
        if not isinstance(country, str):
            raise LookupLoadError(path, None, f"value for {key!r} is not a string")
        if country not in vocabulary:
            raise LookupLoadError(path, None, f"unknown country {country!r} for {key!r}")
        out[str(key)] = country
    return out


def load_org_table(
    path: str | Path, vocabulary: frozenset[str], diagnostics: list[str] | None = None
) -> dict[str, str]:
    path = Path(path)
    dups: list[str] = []

    def pairs_hook(pairs):
        seen = {}
        for k, v in pairs:
            if k in seen:
                dups.append(k)
            seen[k] = v
        return seen

    try:
        table = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=pairs_hook)
    except json.JSONDecodeError as exc:
        raise LookupLoadError(path, exc.lineno, exc.msg) from exc
    if diagnostics is not None:
        diagnostics.extend(f"{path}: duplicate org key {k!r}; last value kept" for k in dups)
    return _check_table(table, path, vocabulary)


def load_author_table(
    path: str | Path, vocabulary: frozenset[str], diagnostics: list[str] | None = None
) -> dict[str, str]:
    path = Path(path)
    loader = _DupCheckingLoader(path.read_text(encoding="utf-8"))
    loader.duplicates = []
    try:
        table = loader.get_single_data()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise LookupLoadError(path, mark.line + 1 if mark else None, str(exc.problem)) from exc
    except yaml.YAMLError as exc:
        raise LookupLoadError(path, None, str(exc)) from exc
    finally:
        loader.dispose()
    if diagnostics is not None:
        diagnostics.extend(
            f"{path}:{line}: duplicate author key {k!r}; last value kept" for k, line in loader.duplicates
        )
    return _check_table(table, path, vocabulary)


def _data_path(name: str) -> Path:
    return Path(str(resources.files("scholargraph").joinpath(f"data/{name}")))


def load_lookup(
    org_table_file: str | Path | None = None,
    author_table_file: str | Path | None = None,
    *,
    vocabulary: frozenset[str] | None = None,
    diagnostics: list[str] | None = None,
) -> CountryLookup:
    """Load the organization (JSON) and curated author (YAML) tables.

    Missing arguments fall back to the small fixture tables shipped with
    the package.
    """
    vocab = vocabulary if vocabulary is not None else load_vocabulary()
    org_path = Path(org_table_file) if org_table_file else _data_path("org_countries.json")
    author_path = Path(author_table_file) if author_table_file else _data_path("author_countries.yml")
    return CountryLookup(
        load_org_table(org_path, vocab, diagnostics),
        load_author_table(author_path, vocab, diagnostics),
    )


# batch resolution


@dataclass(frozen=True)
class RecordResolution:
    record_id: str
    year: int
    resolutions: tuple[CountryResolution, ...]

    @property
    def countries(self) -> list[str]:
        """Distinct resolved countries in byline order."""
        return list(dict.fromkeys(r.country for r in self.resolutions if r.country is not None))


def resolve_records(records: Iterable[PaperRecord], lookup: CountryLookup) -> list[RecordResolution]:
    """Resolve every (record, author) occurrence; records must come in ascending year order."""
    out = []
    last_year = None
    for rec in records:
        if last_year is not None and rec.year < last_year:
            raise OrderError(f"record {rec.id!r} ({rec.year}) follows a {last_year} record")
        last_year = rec.year
        seen = set()
        resolved = []
        for author in rec.authors:
            if author.id in seen:
                continue
            seen.add(author.id)
            resolved.append(infer_country(author.org, author.id, lookup))
        out.append(RecordResolution(rec.id, rec.year, tuple(resolved)))
    return out


def coverage_report(
    records: Sequence[PaperRecord], lookup: CountryLookup
) -> dict[int, tuple[int, int]]:
    """Per-year ``(resolved, unresolved)`` counts over author occurrences."""
    counts: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for res in resolve_records(records, lookup):
        row = counts[res.year]
        for r in res.resolutions:
            row[r.country is None] += 1
    return {year: (row[0], row[1]) for year, row in sorted(counts.items())}


def write_coverage_csv(report: dict[int, tuple[int, int]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "resolved", "unresolved", "resolution_rate"])
        for year, (ok, missing) in sorted(report.items()):
            total = ok + missing
            w.writerow([year, ok, missing, repr(ok / total) if total else ""])
