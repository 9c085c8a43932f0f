"""PC and Conservative PC (CPC) search.

Both share the adjacency phase; they differ in how unshielded triples are
oriented.  PC trusts the single separating set found while removing an
edge.  CPC re-tests every subset of the endpoints' neighbours and marks a
triple as unfaithful (underlined) when the separating sets disagree about
the midpoint.
"""

from __future__ import annotations

import itertools
import time
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

from .citest import IndependenceSource
from .errors import InconsistentStateError
from .graph import (
    ARROW,
    TAIL,
    MixedGraph,
    Triple,
    TripleClass,
    meek_closure,
    unshielded_triples,
)

__all__ = [
    "SepsetMap",
    "SearchConfig",
    "SearchResult",
    "skeleton_search",
    "pc_orient_colliders",
    "cpc_classify_triples",
    "meek_closure",
    "prune_resolved_underlines",
    "run_search",
]

VARIANTS = ("pc", "cpc")
CONFLICT_POLICIES = ("record", "overwrite-last", "prefer-existing")


class SepsetMap:
    """Separating sets recorded when the adjacency phase removes an edge."""

    def __init__(self):
        self._sets: dict[tuple[int, int], frozenset[int]] = {}

    @staticmethod
    def _key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def record(self, a: int, b: int, s) -> None:
        s = frozenset(s)
        if a in s or b in s:
            raise ValueError("a separating set cannot contain its own pair")
        self._sets[self._key(a, b)] = s

    def get(self, a: int, b: int) -> frozenset[int] | None:
        return self._sets.get(self._key(a, b))

    def __getitem__(self, pair: tuple[int, int]) -> frozenset[int]:
        return self._sets[self._key(*pair)]

    def __contains__(self, pair: tuple[int, int]) -> bool:
        return self._key(*pair) in self._sets

    def __len__(self) -> int:
        return len(self._sets)

    def items(self):
        return sorted(self._sets.items())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SepsetMap) and self._sets == other._sets

    def __repr__(self) -> str:
        return f"SepsetMap({dict(self.items())})"


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.05
    max_depth: int | None = None
    variant: str = "cpc"
    conflict_policy: str = "record"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.conflict_policy not in CONFLICT_POLICIES:
            raise ValueError(f"conflict_policy must be one of {CONFLICT_POLICIES}")


@dataclass
class SearchResult:
    graph: MixedGraph
    sepsets: SepsetMap
    triple_log: dict[Triple, TripleClass] = field(default_factory=dict)
    ci_queries_used: int = 0
    elapsed: float = 0.0  # seconds


class _Bound:
    """Queries ``src`` using graph indices, translated through node names."""

    def __init__(self, src: IndependenceSource, names: Sequence[str]):
        self.src = src
        self.to_src = [src.node(n) for n in names]

    def independent(self, x: int, y: int, s) -> bool:
        m = self.to_src
        return self.src.answer(m[x], m[y], [m[v] for v in s]).independent


def _names(src: IndependenceSource, nodes: Sequence[str] | None) -> tuple[str, ...]:
    names = tuple(src.names if nodes is None else nodes)
    if not names:
        raise ValueError("empty node list")
    return names


def skeleton_search(
    src: IndependenceSource,
    nodes: Sequence[str] | None = None,
    cfg: SearchConfig = SearchConfig(),
) -> tuple[MixedGraph, SepsetMap]:
    """Adjacency phase: start complete, remove edges by growing conditioning sets.

    Pairs are visited as (lower index, higher index).  Conditioning sets come
    first from the lower node's current neighbours, then the higher node's,
    each in lexicographic order; a set tested once for a pair at a given depth
    is not retested.
    """
    names = _names(src, nodes)
    q = _Bound(src, names)
    g = MixedGraph.complete(names)
    sep = SepsetMap()
    depth = 0
    while cfg.max_depth is None or depth <= cfg.max_depth:
        any_pair = False
        for x, y in itertools.combinations(g.nodes, 2):
            if not g.is_adjacent(x, y):
                continue
            sides = [sorted(g._adj[x] - {y}), sorted(g._adj[y] - {x})]
            if all(len(side) < depth for side in sides):
                continue
            any_pair = True
            tried = set()
            found = None
            for side in sides:
                for s in itertools.combinations(side, depth):
                    fs = frozenset(s)
                    if fs in tried:
                        continue
                    tried.add(fs)
                    if q.independent(x, y, s):
                        found = fs
                        break
                if found is not None:
                    break
            if found is not None:
                g.remove_edge(x, y)
                sep.record(x, y, found)
        if not any_pair:
            break
        depth += 1
    return g, sep


def _orient_collider(g: MixedGraph, t: Triple, policy: str) -> None:
    a, b, c = t
    if policy == "prefer-existing" and (g.has_arrow_at(b, a) or g.has_arrow_at(b, c)):
        return
    for end in (a, c):
        g.set_mark(end, b, b, ARROW)
        if policy == "overwrite-last":
            g.set_mark(end, b, end, TAIL)


def _sepset_of(sep: SepsetMap, t: Triple) -> frozenset[int]:
    s = sep.get(t.a, t.c)
    if s is None:
        raise InconsistentStateError(f"no separating set recorded for nodes {t.a} and {t.c}")
    return s


def pc_orient_colliders(
    skel: MixedGraph, sep: SepsetMap, conflict_policy: str = "record"
) -> MixedGraph:
    g, _ = _pc_orient(skel, sep, conflict_policy)
    return g


def _pc_orient(skel, sep, policy):
    g = skel.copy()
    log = {}
    for t in sorted(unshielded_triples(skel)):
        if t.b in _sepset_of(sep, t):
            log[t] = TripleClass.NONCOLLIDER
        else:
            log[t] = TripleClass.COLLIDER
            _orient_collider(g, t, policy)
    return g, log


def _subsets(side: Sequence[int], max_size: int | None) -> Iterator[tuple[int, ...]]:
    top = len(side) if max_size is None else min(len(side), max_size)
    for k in range(top + 1):
        yield from itertools.combinations(side, k)


def classify_triple(
    skel: MixedGraph, sep: SepsetMap, q, t: Triple, max_depth: int | None = None
) -> TripleClass:
    """Classify one unshielded triple by sweeping the neighbour subsets of both ends.

    The recorded separating set seeds the witnesses.  The sweep stops once
    separating sets both with and without the midpoint have been seen, as
    the answer can no longer change.
    """
    a, b, c = t
    seeded = _sepset_of(sep, t)
    with_b = b in seeded
    without_b = not with_b
    tried = {seeded}
    for side in (sorted(skel._adj[a] - {c}), sorted(skel._adj[c] - {a})):
        for s in _subsets(side, max_depth):
            if with_b and without_b:
                return TripleClass.UNFAITHFUL
            fs = frozenset(s)
            if fs in tried:
                continue
            tried.add(fs)
            if q.independent(a, c, s):
                if b in fs:
                    with_b = True
                else:
                    without_b = True
    if with_b and without_b:
        return TripleClass.UNFAITHFUL
    return TripleClass.NONCOLLIDER if with_b else TripleClass.COLLIDER


def cpc_classify_triples(
    skel: MixedGraph,
    sep: SepsetMap,
    src: IndependenceSource,
    cfg: SearchConfig = SearchConfig(),
) -> tuple[MixedGraph, dict[Triple, TripleClass]]:
    """Conservative triple classification; colliders oriented, unfaithful underlined."""
    q = _Bound(src, skel.names)
    log = {t: classify_triple(skel, sep, q, t, cfg.max_depth) for t in sorted(unshielded_triples(skel))}
    g = skel.copy()
    for t, cls in log.items():
        if cls is TripleClass.COLLIDER:
            _orient_collider(g, t, cfg.conflict_policy)
        elif cls is TripleClass.UNFAITHFUL:
            g.underlines.add(t)
    return g, log


def prune_resolved_underlines(g: MixedGraph) -> MixedGraph:
    """Drop underlines whose two edges are both directed."""
    out = g.copy()
    for t in g.underlines:
        ab = g.is_directed(t.a, t.b) or g.is_directed(t.b, t.a)
        cb = g.is_directed(t.c, t.b) or g.is_directed(t.b, t.c)
        if ab and cb:
            out.underlines.discard(t)
    return out


def run_search(
    src: IndependenceSource,
    nodes: Sequence[str] | None = None,
    cfg: SearchConfig = SearchConfig(),
) -> SearchResult:
    start_count = src.query_count
    t0 = time.perf_counter()
    skel, sep = skeleton_search(src, nodes, cfg)
    if cfg.variant == "pc":
        g, log = _pc_orient(skel, sep, cfg.conflict_policy)
        g = meek_closure(g)
    else:
        g, log = cpc_classify_triples(skel, sep, src, cfg)
        g = prune_resolved_underlines(meek_closure(g))
    elapsed = time.perf_counter() - t0
    return SearchResult(g, sep, log, src.query_count - start_count, elapsed)
