from __future__ import annotations

import gzip
import io
import json
import tracemalloc

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scholargraph import ingest
from scholargraph.ingest import (
    Diagnostic, RecordError, bucket_by_year, canonicalize_venue, dedupe_records,
    filter_by_venues, parse_records, read_records, record_from_dict, tag_window,
)

GOOD = {
    "id": "7", "title": "T", "year": 2001,
    "authors": [{"id": "a", "name": "A", "org": "MIT"}],
    "venue": {"raw": "NIPS", "id": "v1"}, "references": ["1"],
}


def lines(*objs):
    return io.BytesIO("\n".join(o if isinstance(o, str) else json.dumps(o) for o in objs).encode())


def test_example_fixture_parses(example_records):
    assert [r.id for r in example_records] == ["1", "2", "3"]
    assert [r.year for r in example_records] == [1967, 1970, 2003]
    assert example_records[1].author_ids == ["2", "3"]
    assert example_records[2].references == ["1", "2"]
    assert {ingest.venue_of(r) for r in example_records} == {"Other"}


def test_malformed_lines_are_skipped_with_diagnostics():
    diags: list[Diagnostic] = []
    bad_year = {**GOOD, "year": "2001"}
    no_venue = {k: v for k, v in GOOD.items() if k != "venue"}
    recs = list(parse_records(lines(GOOD, "{not json", "", bad_year, no_venue, GOOD), diags))
    assert len(recs) == 2
    assert [d.line for d in diags] == [2, 4, 5]
    assert "invalid JSON" in diags[0].reason


def test_invalid_utf8_is_a_diagnostic():
    diags: list[Diagnostic] = []
    stream = io.BytesIO(b"\xff\xfe\n" + json.dumps(GOOD).encode())
    assert len(list(parse_records(stream, diags))) == 1
    assert diags[0].line == 1


def test_unknown_keys_ignored_and_optional_fields():
    rec = record_from_dict({**GOOD, "n_citation": 5, "fos": []})
    assert rec.venue.canonical == "NeurIPS"
    minimal = record_from_dict({"id": "x", "year": 1999, "venue": {"raw": "Foo"}})
    assert minimal.authors == [] and minimal.references == [] and minimal.title == ""


@pytest.mark.parametrize("patch", [
    {"id": ""}, {"id": 3}, {"year": 0}, {"year": True}, {"authors": {}},
    {"authors": [{"name": "no id"}]}, {"authors": [{"id": "a", "org": 3}]},
    {"references": [1]}, {"venue": {"raw": ""}},
    {"indexed_abstract": {"IndexLength": 2, "InvertedIndex": {"w": [1, 0]}}},
    {"indexed_abstract": {"IndexLength": 2, "InvertedIndex": {"w": [2]}}},
    {"indexed_abstract": {"InvertedIndex": {}}},
])
def test_record_validation(patch):
    with pytest.raises(RecordError):
        record_from_dict({**GOOD, **patch})


def test_indexed_abstract_both_spellings():
    for key in ("IndexLength", "indexLength"):
        rec = record_from_dict({**GOOD, "indexed_abstract": {key: 3, "InvertedIndex": {"a": [0, 2]}}})
        assert rec.indexed_abstract.length == 3
        assert rec.indexed_abstract.inverted_index == {"a": (0, 2)}


def test_gzip_input(tmp_path):
    path = tmp_path / "c.jsonl.gz"
    with gzip.open(path, "wt") as fh:
        fh.write(json.dumps(GOOD) + "\n")
    assert [r.id for r in read_records(path)] == ["7"]


def test_missing_file_raises():
    with pytest.raises(OSError):
        list(read_records("/nonexistent/file.jsonl"))


def test_dedupe_last_wins_first_position():
    a1 = record_from_dict({**GOOD, "id": "a", "title": "old"})
    b = record_from_dict({**GOOD, "id": "b"})
    a2 = record_from_dict({**GOOD, "id": "a", "title": "new"})
    diags: list[str] = []
    out = dedupe_records([a1, b, a2], diags)
    assert [(r.id, r.title) for r in out] == [("a", "new"), ("b", "T")]
    assert len(diags) == 1


def test_tag_window_marks_but_keeps():
    early = record_from_dict({**GOOD, "year": 1960})
    late = record_from_dict({**GOOD, "year": 2030})
    mid = record_from_dict(GOOD)
    out = tag_window([early, mid, late], 1969, 2019)
    assert [r.out_of_window for r in out] == [True, False, True]


def test_venue_aliases():
    assert canonicalize_venue("  nips ") == "NeurIPS"
    assert canonicalize_venue("NeurIPS") == "NeurIPS"
    assert canonicalize_venue("Obscure Workshop") == "Other"
    assert canonicalize_venue("x", {"x": "AAAI"}) == "AAAI"


def test_bad_alias_table(tmp_path):
    p = tmp_path / "aliases.json"
    p.write_text(json.dumps({"foo": "NotAVenue"}))
    with pytest.raises(ValueError):
        ingest.load_venue_aliases(p)


def test_filter_and_bucket():
    recs = [record_from_dict({**GOOD, "id": str(i), "year": y, "venue": {"raw": v}})
            for i, (y, v) in enumerate([(2001, "NIPS"), (1999, "AAAI"), (2001, "Foo")])]
    assert [r.id for r in filter_by_venues(recs, ["NeurIPS", "Other"])] == ["0", "2"]
    buckets = bucket_by_year(recs)
    assert list(buckets) == [1999, 2001]
    assert [r.id for r in buckets[2001]] == ["0", "2"]


def test_parse_memory_is_bounded(tmp_path):
    path = tmp_path / "big.jsonl"
    with open(path, "w") as fh:
        for i in range(20000):
            fh.write(json.dumps({**GOOD, "id": str(i), "title": "x" * 200}) + "\n")
    tracemalloc.start()
    count = sum(1 for _ in read_records(path))
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert count == 20000
    assert peak < 2_000_000  # file is ~5 MB; streaming keeps only a line or so live


ids = st.text("abc123", min_size=1, max_size=4)
authors = st.lists(st.fixed_dictionaries(
    {"id": ids, "name": st.text(max_size=5)}, optional={"org": st.text(max_size=8)}), max_size=4)
records = st.fixed_dictionaries({
    "id": ids, "title": st.text(max_size=10), "year": st.integers(1, 3000),
    "authors": authors, "venue": st.fixed_dictionaries({"raw": st.text(min_size=1, max_size=8)}),
    "references": st.lists(ids, max_size=4),
})


@settings(max_examples=100, deadline=None)
@given(records)
def test_round_trip(obj):
    rec = record_from_dict(obj)
    again = record_from_dict(json.loads(json.dumps(rec.to_dict())))
    assert again == rec


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1960, 2020), max_size=30))
def test_buckets_partition(years):
    recs = [record_from_dict({**GOOD, "id": str(i), "year": y}) for i, y in enumerate(years)]
    buckets = bucket_by_year(recs)
    flat = [r for b in buckets.values() for r in b]
    assert sorted(r.id for r in flat) == sorted(r.id for r in recs)
    assert list(buckets) == sorted(buckets)
    assert all(r.year == y for y, b in buckets.items() for r in b)
