"""Bibliometric graph analytics over Arnet-style paper records."""

from .centrality import CentralityTable, all_centralities
from .geo import CountryLookup, infer_country, load_lookup, preprocess_org
from .graphs import LabeledGraph, SnapshotSeries, build_graph, cumulative_snapshots
from .ingest import PaperRecord, bucket_by_year, filter_by_venues, parse_records, read_records

__version__ = "0.1.0"

__all__ = [
    "CentralityTable", "CountryLookup", "LabeledGraph", "PaperRecord", "SnapshotSeries",
    "all_centralities", "bucket_by_year", "build_graph", "cumulative_snapshots",
    "filter_by_venues", "infer_country", "load_lookup", "parse_records",
    "preprocess_org", "read_records",
]
