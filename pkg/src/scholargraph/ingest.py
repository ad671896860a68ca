"""Streaming ingestion of Arnet-style newline-delimited paper records.

Each input line holds one JSON object.  Lines are decoded one at a time so
memory stays proportional to the longest line, never to the file.  Lines
that fail validation are reported as :class:`Diagnostic` entries and
skipped; everything else becomes a :class:`PaperRecord`.
"""

from __future__ import annotations

import gzip
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Any, Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

CONFERENCES = (
    "IJCAI", "AAAI", "NeurIPS", "CVPR", "ECCV", "ICCV", "ACL",
    "NAACL", "EMNLP", "ICML", "KDD", "SIGIR", "WWW",
)
OTHER = "Other"
CANONICAL_VENUES = frozenset(CONFERENCES) | {OTHER}

FIRST_ANALYSIS_YEAR = 1969
GZIP_MAGIC = b"\x1f\x8b"


class RecordError(ValueError):
    """A single record failed schema validation."""


@dataclass(frozen=True)
class Diagnostic:
    line: int
    reason: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.reason}"


@dataclass(frozen=True)
class AuthorRef:
    id: str
    name: str
    org: str | None = None


@dataclass(frozen=True)
class VenueRef:
    raw: str
    id: str | None = None
    canonical: str | None = None


@dataclass(frozen=True)
class IndexedAbstract:
    length: int
    inverted_index: dict[str, tuple[int, ...]]


@dataclass
class PaperRecord:
    id: str
    title: str
    authors: list[AuthorRef]
    venue: VenueRef
    year: int
    references: list[str] = field(default_factory=list)
    indexed_abstract: IndexedAbstract | None = None
    out_of_window: bool = False

    @property
    def author_ids(self) -> list[str]:
        """Author ids in byline order with repeats removed."""
        return list(dict.fromkeys(a.id for a in self.authors))

    def to_dict(self) -> dict[str, Any]:
        """Serialize back to the input schema (derived fields are dropped)."""
        out: dict[str, Any] = {
            "id": self.id,
            "title": self.title,
            "authors": [],
            "venue": {"raw": self.venue.raw},
            "year": self.year,
            "references": list(self.references),
        }
        for a in self.authors:
            entry = {"id": a.id, "name": a.name}
            if a.org is not None:
                entry["org"] = a.org
            out["authors"].append(entry)
        if self.venue.id is not None:
            out["venue"]["id"] = self.venue.id
        if self.indexed_abstract is not None:
            out["indexed_abstract"] = {
                "IndexLength": self.indexed_abstract.length,
                "InvertedIndex": {
                    w: list(p) for w, p in self.indexed_abstract.inverted_index.items()
                },
            }
        return out


def _require_str(obj: Mapping[str, Any], key: str, where: str, allow_empty: bool = False) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise RecordError(f"{where}.{key} missing or not a string")
    if not allow_empty and not value:
        raise RecordError(f"{where}.{key} is empty")
    return value


def _parse_abstract(obj: Any) -> IndexedAbstract:
    if not isinstance(obj, dict):
        raise RecordError("indexed_abstract is not an object")
    length = obj.get("IndexLength", obj.get("indexLength"))
    index = obj.get("InvertedIndex")
    if not isinstance(length, int) or isinstance(length, bool) or length < 0:
        raise RecordError("indexed_abstract length missing or invalid")
    if not isinstance(index, dict):
        raise RecordError("indexed_abstract.InvertedIndex missing")
    parsed: dict[str, tuple[int, ...]] = {}
    for word, positions in index.items():
        if not isinstance(positions, list) or not all(
            isinstance(p, int) and not isinstance(p, bool) for p in positions
        ):
            raise RecordError(f"positions for {word!r} are not integers")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise RecordError(f"positions for {word!r} are not strictly increasing")
        if positions and (positions[0] < 0 or positions[-1] >= length):
            raise RecordError(f"position for {word!r} outside index length {length}")
        parsed[word] = tuple(positions)
    return IndexedAbstract(length, parsed)


def record_from_dict(obj: Any, aliases: Mapping[str, str] | None = None) -> PaperRecord:
    """Validate one decoded JSON object and build a :class:`PaperRecord`.

    Unknown keys (``n_citation``, ``fos``, ...) are ignored.
    """
    if not isinstance(obj, dict):
        raise RecordError("record is not a JSON object")
    pid = _require_str(obj, "id", "record")
    title = obj.get("title", "")
    if not isinstance(title, str):
        raise RecordError("record.title is not a string")

    year = obj.get("year")
    if not isinstance(year, int) or isinstance(year, bool) or year <= 0:
        raise RecordError("record.year missing or not a positive integer")

    raw_authors = obj.get("authors", [])
    if not isinstance(raw_authors, list):
        raise RecordError("record.authors is not a list")
    authors = []
    for i, a in enumerate(raw_authors):
        if not isinstance(a, dict):
            raise RecordError(f"authors[{i}] is not an object")
        org = a.get("org")
        if org is not None and not isinstance(org, str):
            raise RecordError(f"authors[{i}].org is not a string")
        name = a.get("name", "")
        if not isinstance(name, str):
            raise RecordError(f"authors[{i}].name is not a string")
        authors.append(AuthorRef(_require_str(a, "id", f"authors[{i}]"), name, org))

    venue_obj = obj.get("venue")
    if not isinstance(venue_obj, dict):
        raise RecordError("record.venue missing")
    raw_venue = _require_str(venue_obj, "raw", "venue")
    venue_id = venue_obj.get("id")
    if venue_id is not None and not isinstance(venue_id, str):
        raise RecordError("venue.id is not a string")
    venue = VenueRef(raw_venue, venue_id, canonicalize_venue(raw_venue, aliases))

    refs = obj.get("references", [])
    if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
        raise RecordError("record.references is not a list of strings")

    abstract = None
    if obj.get("indexed_abstract") is not None:
        abstract = _parse_abstract(obj["indexed_abstract"])

    return PaperRecord(pid, title, authors, venue, year, list(refs), abstract)


def parse_records(
    stream: IO[bytes] | IO[str] | Iterable[bytes | str],
    diagnostics: list[Diagnostic] | None = None,
    aliases: Mapping[str, str] | None = None,
) -> Iterator[PaperRecord]:
    """Lazily yield one :class:`PaperRecord` per well-formed line.

    Malformed lines are skipped and appended to ``diagnostics`` when given.
    Blank lines are ignored silently.  I/O errors propagate.
    """
    for lineno, line in enumerate(stream, 1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as exc:
                _report(diagnostics, lineno, f"invalid UTF-8: {exc.reason}")
                continue
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            _report(diagnostics, lineno, f"invalid JSON: {exc.msg}")
            continue
        try:
            yield record_from_dict(obj, aliases)
        except RecordError as exc:
            _report(diagnostics, lineno, str(exc))


def _report(diagnostics: list[Diagnostic] | None, lineno: int, reason: str) -> None:
    diag = Diagnostic(lineno, reason)
    logger.debug("skipping %s", diag)
    if diagnostics is not None:
        diagnostics.append(diag)


def open_records(path: str | Path) -> IO[bytes]:
    """Open a record file for reading, transparently un-gzipping it."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == GZIP_MAGIC:
        return gzip.open(path, "rb")  # type: ignore[return-value]
    return open(path, "rb")


def read_records(
    path: str | Path,
    diagnostics: list[Diagnostic] | None = None,
    aliases: Mapping[str, str] | None = None,
) -> Iterator[PaperRecord]:
    with open_records(path) as fh:
        yield from parse_records(fh, diagnostics, aliases)


def dedupe_records(
    records: Iterable[PaperRecord], diagnostics: list[str] | None = None
) -> list[PaperRecord]:
    """Collapse repeated paper ids; the last occurrence wins.

    The surviving record keeps the position of the first occurrence.
    """
    by_id: dict[str, PaperRecord] = {}
    for rec in records:
        if rec.id in by_id and diagnostics is not None:
            diagnostics.append(f"duplicate paper id {rec.id!r}: keeping last record")
        by_id[rec.id] = rec
    return list(by_id.values())


def tag_window(
    records: Iterable[PaperRecord], first: int = FIRST_ANALYSIS_YEAR, last: int | None = None
) -> list[PaperRecord]:
    """Mark records published outside ``[first, last]``; nothing is dropped."""
    out = []
    for rec in records:
        rec.out_of_window = rec.year < first or (last is not None and rec.year > last)
        out.append(rec)
    return out


_DEFAULT_ALIASES: dict[str, str] | None = None


def _normalize_alias(text: str) -> str:
    return " ".join(text.split()).casefold()


def load_venue_aliases(path: str | Path | None = None) -> dict[str, str]:
    """Load an alias table ``{alias: canonical}``; keys are case-folded and trimmed."""
    if path is None:
        text = resources.files("scholargraph").joinpath("data/venue_aliases.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table = json.loads(text)
    if not isinstance(table, dict):
        raise ValueError("venue alias table must be a JSON object")
    out = {}
    for alias, canonical in table.items():
        if canonical not in CANONICAL_VENUES:
            raise ValueError(f"alias {alias!r} maps to unknown venue {canonical!r}")
        out[_normalize_alias(alias)] = canonical
    return out


def canonicalize_venue(raw: str, aliases: Mapping[str, str] | None = None) -> str:
    """Map a free-form venue name to one of :data:`CONFERENCES` or ``Other``."""
    global _DEFAULT_ALIASES
    if aliases is None:
        if _DEFAULT_ALIASES is None:
            _DEFAULT_ALIASES = load_venue_aliases()
        aliases = _DEFAULT_ALIASES
    return aliases.get(_normalize_alias(raw), OTHER)


def venue_of(record: PaperRecord) -> str:
    return record.venue.canonical or canonicalize_venue(record.venue.raw)


def filter_by_venues(records: Iterable[PaperRecord], venues: Iterable[str]) -> list[PaperRecord]:
    wanted = set(venues)
    return [r for r in records if venue_of(r) in wanted]


def bucket_by_year(records: Iterable[PaperRecord]) -> dict[int, list[PaperRecord]]:
    """Group records by publication year, keeping input order inside a bucket.

    Keys come out in ascending order; years without records are absent.
    """
    buckets: dict[int, list[PaperRecord]] = defaultdict(list)
    for rec in records:
        buckets[rec.year].append(rec)
    return {year: buckets[year] for year in sorted(buckets)}
