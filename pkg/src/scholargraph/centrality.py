"""Exact node centralities on :class:`~scholargraph.graphs.LabeledGraph`.

Shortest-path centralities (betweenness, closeness) run one BFS per
source.  Sources are cut into fixed-size blocks that do not depend on the
worker count; each block yields a private partial result and the partials
are reduced in block order.  The output is therefore bit-identical for any
``workers`` value.
"""

from __future__ import annotations

import csv
import heapq
import json
import multiprocessing
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .graphs import AUTHOR, AUTHORSHIP, CITATION, PAPER, LabeledGraph, SnapshotSeries

KINDS = (
    "degree", "in_degree", "out_degree", "betweenness", "closeness",
    "pagerank", "semi_local", "volume", "h_index", "coreness",
)
INTEGER_KINDS = frozenset({"h_index", "coreness"})

DEFAULT_Q = 0.15
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
DEFAULT_H = 2
SOURCE_BLOCK = 32


class CentralityError(ValueError):
    pass


class InvalidModeError(CentralityError):
    pass


class DisconnectedGraphError(CentralityError):
    def __init__(self, source: str, target: str):
        super().__init__(f"graph is disconnected: no path from {source!r} to {target!r}")
        self.pair = (source, target)


@dataclass
class CentralityTable:
    kind: str
    scores: dict[str, float]
    params: dict[str, Any] = field(default_factory=dict)

    def ranked(self) -> list[tuple[str, float]]:
        """Nodes by descending score, ties broken by ascending node key."""
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))

    def rows(self, year: int | None = None) -> list[tuple]:
        return [(node, self.kind, _fmt(score), "" if year is None else year)
                for node, score in sorted(self.scores.items())]

    def write_csv(self, path: str | Path, year: int | None = None, metadata: Mapping | None = None) -> None:
        meta = {"kind": self.kind, "params": self.params, **(metadata or {})}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "kind", "score", "year"])
            w.writerows(self.rows(year))

    def to_json(self, year: int | None = None, metadata: Mapping | None = None) -> str:
        meta = {"kind": self.kind, "params": self.params, "year": year, **(metadata or {})}
        payload = {"metadata": meta, "scores": dict(sorted(self.scores.items()))}
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def _fmt(score: float) -> str:
    return str(score) if isinstance(score, int) else repr(float(score))


# graph views


def _node_order(graph: LabeledGraph) -> list[str]:
    return sorted(graph.nodes)


def _simple_adjacency(graph: LabeledGraph, undirected: bool) -> tuple[list[str], list[list[int]]]:
    """Neighbor lists over sorted node keys: parallel edges collapsed, self-loops dropped."""
    keys = _node_order(graph)
    index = {k: i for i, k in enumerate(keys)}
    nbrs: list[set[int]] = [set() for _ in keys]
    for (s, t, _kind), count in graph.edges.items():
        if s == t or count <= 0:
            continue
        i, j = index[s], index[t]
        nbrs[i].add(j)
        if undirected or not graph.directed:
            nbrs[j].add(i)
    return keys, [sorted(x) for x in nbrs]


def _use_undirected(graph: LabeledGraph, paths: str) -> bool:
    if paths not in ("directed", "undirected"):
        raise InvalidModeError(f"paths must be 'directed' or 'undirected', not {paths!r}")
    return not graph.directed or paths == "undirected"


# degree


def degree(graph: LabeledGraph, mode: str = "total", distinct: bool = False) -> CentralityTable:
    """k_u / (n - 1).

    Edge multiplicity counts unless ``distinct``; a directed self-loop adds
    one to both in- and out-degree, an undirected one adds two.  With
    ``distinct`` the count is the number of distinct other nodes.
    """
    if mode not in ("total", "in", "out"):
        raise InvalidModeError(f"unknown degree mode {mode!r}")
    if mode != "total" and not graph.directed:
        raise InvalidModeError(f"{mode}-degree is undefined on an undirected graph")
    kind = {"total": "degree", "in": "in_degree", "out": "out_degree"}[mode]
    k: dict[str, float] = dict.fromkeys(graph.nodes, 0)
    if distinct:
        seen: dict[str, set[str]] = {u: set() for u in graph.nodes}
        for (s, t, _), c in graph.edges.items():
            if c <= 0 or s == t:
                continue
            if mode in ("total", "out"):
                seen[s].add(t)
            if mode in ("total", "in"):
                seen[t].add(s)
        k = {u: len(v) for u, v in seen.items()}
    else:
        for (s, t, _), c in graph.edges.items():
            if mode in ("total", "out"):
                k[s] += c
            if mode in ("total", "in"):
                k[t] += c
    n = graph.n
    scores = {u: (k[u] / (n - 1) if n > 1 else 0.0) for u in graph.nodes}
    return CentralityTable(kind, scores, {"mode": mode, "distinct": distinct})


# worker pool plumbing

_ADJ: list[list[int]] | None = None


def _init_worker(adj: list[list[int]]) -> None:
    global _ADJ
    _ADJ = adj


def _pool_context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("fork" if "fork" in methods else "spawn")


def _map_blocks(func: Callable, adj: list[list[int]], workers: int) -> list:
    n = len(adj)
    blocks = [range(i, min(i + SOURCE_BLOCK, n)) for i in range(0, n, SOURCE_BLOCK)]
    if workers < 1:
        raise ValueError("workers must be a positive integer")
    if workers == 1 or len(blocks) <= 1:
        return [func(adj, b) for b in blocks]
    with ProcessPoolExecutor(
        max_workers=min(workers, len(blocks)),
        mp_context=_pool_context(),
        initializer=_init_worker,
        initargs=(adj,),
    ) as pool:
        return list(pool.map(_call_with_global, [func] * len(blocks), blocks))


def _call_with_global(func: Callable, block: range):
    return func(_ADJ, block)


# betweenness


def _brandes_block(adj: list[list[int]], sources: range) -> list[float]:
    n = len(adj)
    partial = [0.0] * n
    for s in sources:
        sigma = [0] * n
        dist = [-1] * n
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma[s], dist[s] = 1, 0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            dv = dist[v] + 1
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    queue.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                partial[w] += delta[w]
    return partial


def betweenness(
    graph: LabeledGraph,
    workers: int = 1,
    normalizer: str = "pairs",
    paths: str = "directed",
) -> CentralityTable:
    """Shortest-path betweenness divided by (n-1)(n-2)/2.

    Undirected graphs sum over unordered pairs, directed graphs over ordered
    pairs.  ``normalizer="directed"`` divides by (n-1)(n-2) instead;
    ``paths="undirected"`` ignores edge direction.
    """
    if normalizer not in ("pairs", "directed"):
        raise InvalidModeError(f"unknown normalizer {normalizer!r}")
    undirected = _use_undirected(graph, paths)
    keys, adj = _simple_adjacency(graph, undirected)
    n = len(keys)
    params = {"workers_independent": True, "normalizer": normalizer,
              "paths": "undirected" if undirected else "directed"}
    if n < 3:
        return CentralityTable("betweenness", dict.fromkeys(keys, 0.0), params)
    total = [0.0] * n
    for partial in _map_blocks(_brandes_block, adj, workers):
        for i, x in enumerate(partial):
            total[i] += x
    scale = (n - 1) * (n - 2) / 2
    if normalizer == "directed":
        scale *= 2
    if undirected:
        scale *= 2  # every unordered pair was visited from both ends
    return CentralityTable("betweenness", {k: total[i] / scale for i, k in enumerate(keys)}, params)


# closeness


def _distance_block(adj: list[list[int]], sources: range) -> list[tuple[int, int]]:
    n = len(adj)
    out = []
    for s in sources:
        dist = [-1] * n
        dist[s] = 0
        queue = deque([s])
        reached = total = 0
        while queue:
            v = queue.popleft()
            dv = dist[v] + 1
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    reached += 1
                    total += dv
                    queue.append(w)
        out.append((reached, total))
    return out


def _first_unreachable(adj: list[list[int]], s: int) -> int:
    seen = {s}
    queue = deque([s])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return next(i for i in range(len(adj)) if i not in seen)


def closeness(
    graph: LabeledGraph,
    mode: str = "strict",
    workers: int = 1,
    paths: str = "directed",
) -> CentralityTable:
    """(n-1) / sum of hop distances from u.

    ``strict`` raises :class:`DisconnectedGraphError` when some node cannot
    reach another.  ``per_component`` uses the set of nodes reachable from u
    (its connected component when undirected) as the local n; nodes that
    reach nothing score 0.
    """
    if mode not in ("strict", "per_component"):
        raise InvalidModeError(f"unknown closeness mode {mode!r}")
    undirected = _use_undirected(graph, paths)
    keys, adj = _simple_adjacency(graph, undirected)
    n = len(keys)
    params = {"mode": mode, "paths": "undirected" if undirected else "directed"}
    if n <= 1:
        return CentralityTable("closeness", dict.fromkeys(keys, 0.0), params)
    sums = [x for block in _map_blocks(_distance_block, adj, workers) for x in block]
    scores = {}
    for i, (reached, total) in enumerate(sums):
        if mode == "strict":
            if reached < n - 1:
                raise DisconnectedGraphError(keys[i], keys[_first_unreachable(adj, i)])
            scores[keys[i]] = (n - 1) / total
        else:
            scores[keys[i]] = reached / total if reached else 0.0
    return CentralityTable("closeness", scores, params)


# pagerank


def pagerank(
    graph: LabeledGraph,
    q: float = DEFAULT_Q,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CentralityTable:
    """Power iteration of score(u) = q/n + (1-q) * sum_{v->u} score(v)/k_out(v).

    Transitions are weighted by edge multiplicity; dangling nodes spread
    their mass uniformly.  Undirected edges count in both directions.
    Stops when the L1 change drops below ``tol``; ``params["converged"]``
    records whether that happened within ``max_iter`` iterations.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    keys = _node_order(graph)
    n = len(keys)
    params: dict[str, Any] = {"q": q, "tol": tol, "max_iter": max_iter}
    if n == 0:
        return CentralityTable("pagerank", {}, {**params, "converged": True, "iterations": 0})
    index = {k: i for i, k in enumerate(keys)}
    src, dst, weight = [], [], []
    for (s, t, _), c in sorted(graph.edges.items()):
        if c <= 0:
            continue
        src.append(index[s]); dst.append(index[t]); weight.append(float(c))
        if not graph.directed and s != t:
            src.append(index[t]); dst.append(index[s]); weight.append(float(c))
    src_a = np.asarray(src, dtype=np.int64)
    dst_a = np.asarray(dst, dtype=np.int64)
    w_a = np.asarray(weight, dtype=float)
    out_w = np.bincount(src_a, weights=w_a, minlength=n)
    dangling = out_w == 0
    edge_share = w_a / np.where(out_w == 0, 1.0, out_w)[src_a] if len(src) else w_a

    base = q / n
    x = np.full(n, 1.0 / n)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        flow = np.bincount(dst_a, weights=x[src_a] * edge_share, minlength=n).astype(float)
        flow += x[dangling].sum() / n
        new = base + (1 - q) * flow
        change = float(np.abs(new - x).sum())
        x = new
        if change < tol:
            converged = True
            break
    params.update(converged=converged, iterations=iterations)
    return CentralityTable("pagerank", {k: float(x[i]) for i, k in enumerate(keys)}, params)


# local measures


def semi_local(graph: LabeledGraph) -> CentralityTable:
    """Sum over neighbors v, and their neighbors w, of d2(w).

    d2(w) counts distinct nodes at distance 1 or 2 from w.  Direction and
    self-loops are ignored.
    """
    keys, adj = _simple_adjacency(graph, undirected=True)
    d2 = []
    for w, nbrs in enumerate(adj):
        reach = set(nbrs)
        for v in nbrs:
            reach.update(adj[v])
        reach.discard(w)
        d2.append(len(reach))
    inner = [sum(d2[w] for w in nbrs) for nbrs in adj]
    return CentralityTable("semi_local", {k: float(sum(inner[v] for v in adj[i])) for i, k in enumerate(keys)})


def volume(graph: LabeledGraph, h: int = DEFAULT_H) -> CentralityTable:
    """Sum of degrees over u and every node within h hops of it (undirected, simple view)."""
    if h < 1:
        raise ValueError("h must be at least 1")
    keys, adj = _simple_adjacency(graph, undirected=True)
    deg = [len(x) for x in adj]
    scores = {}
    for s, key in enumerate(keys):
        dist = {s: 0}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            if dist[v] == h:
                continue
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        scores[key] = float(sum(deg[v] for v in dist))
    return CentralityTable("volume", scores, {"h": h})


def h_index(citation_counts: Iterable[int]) -> int:
    """Largest h such that at least h entries are >= h."""
    h = 0
    for i, c in enumerate(sorted(citation_counts, reverse=True), 1):
        if c < i:
            break
        h = i
    return h


def h_index_table(graph: LabeledGraph) -> CentralityTable:
    """h-index per node of an author-paper graph.

    An author's citation list is the in-citation count of each paper they
    authored.  A paper node is scored as a one-paper list of its own
    citation count (so 1 if cited at all, else 0).
    """
    cited: dict[str, int] = {k: 0 for k, kind in graph.nodes.items() if kind == PAPER}
    if not cited:
        raise CentralityError("h_index needs an author-paper (APC) graph")
    papers_of: dict[str, list[str]] = {k: [] for k, kind in graph.nodes.items() if kind == AUTHOR}
    for (s, t, kind), c in graph.edges.items():
        if kind == CITATION:
            cited[t] += c
        elif kind == AUTHORSHIP:
            papers_of[s].append(t)
    scores: dict[str, float] = {}
    for node in graph.nodes:
        if node in papers_of:
            scores[node] = h_index(cited[p] for p in papers_of[node])
        else:
            scores[node] = h_index([cited[node]])
    return CentralityTable("h_index", scores)


def coreness(graph: LabeledGraph) -> CentralityTable:
    """k-shell index by iterative pruning on the simple undirected view.

    The current threshold k starts at 0; every node whose remaining degree
    is <= k is removed and labelled k, repeatedly, before k grows.  Popping
    the minimum-degree node from a heap performs the same removals in a
    valid order.
    """
    keys, adj = _simple_adjacency(graph, undirected=True)
    deg = [len(x) for x in adj]
    heap = [(d, i) for i, d in enumerate(deg)]
    heapq.heapify(heap)
    removed = [False] * len(keys)
    shell = [0] * len(keys)
    k = 0
    while heap:
        d, v = heapq.heappop(heap)
        if removed[v] or d != deg[v]:
            continue
        k = max(k, d)
        removed[v] = True
        shell[v] = k
        for w in adj[v]:
            if not removed[w]:
                deg[w] -= 1
                heapq.heappush(heap, (deg[w], w))
    return CentralityTable("coreness", {key: shell[i] for i, key in enumerate(keys)})


# batch


def compute(graph: LabeledGraph, kind: str, *, workers: int = 1, q: float = DEFAULT_Q,
            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, h: int = DEFAULT_H,
            normalizer: str = "pairs", closeness_mode: str = "strict",
            paths: str = "directed", distinct: bool = False) -> CentralityTable:
    """Dispatch one centrality by name."""
    if kind == "degree":
        return degree(graph, "total", distinct)
    if kind == "in_degree":
        return degree(graph, "in", distinct)
    if kind == "out_degree":
        return degree(graph, "out", distinct)
    if kind == "betweenness":
        return betweenness(graph, workers, normalizer, paths)
    if kind == "closeness":
        return closeness(graph, closeness_mode, workers, paths)
    if kind == "pagerank":
        return pagerank(graph, q, tol, max_iter)
    if kind == "semi_local":
        return semi_local(graph)
    if kind == "volume":
        return volume(graph, h)
    if kind == "h_index":
        return h_index_table(graph)
    if kind == "coreness":
        return coreness(graph)
    raise CentralityError(f"unknown centrality {kind!r}; expected one of {', '.join(KINDS)}")


def all_centralities(
    series: SnapshotSeries | Iterable[tuple[int, LabeledGraph]],
    kinds: Sequence[str],
    workers: int = 1,
    errors: dict[tuple[int, str], Exception] | None = None,
    **params: Any,
) -> dict[tuple[int, str], CentralityTable]:
    """One table per (year, kind).

    A failing item never stops the others.  With an ``errors`` dict the
    failures are recorded there and left out of the result; without one
    the first failure is raised once every item has run.
    """
    out: dict[tuple[int, str], CentralityTable] = {}
    failed: dict[tuple[int, str], Exception] = {} if errors is None else errors
    for year, graph in series:
        for kind in kinds:
            try:
                out[(year, kind)] = compute(graph, kind, workers=workers, **params)
            except CentralityError as exc:
                failed[(year, kind)] = exc
    if errors is None and failed:
        raise next(iter(failed.values()))
    return out
