"""Graph types for causal search: DAGs, patterns and e-patterns.

Nodes are integer indices into a graph's ``names`` tuple.  Every public
function that takes a node also accepts its name.
"""

from __future__ import annotations

import enum
import itertools
from collections.abc import Iterable, Sequence
from typing import NamedTuple, Union

from .errors import CapacityError

Node = Union[int, str]


class Mark(enum.Enum):
    TAIL = "tail"
    ARROW = "arrow"


TAIL = Mark.TAIL
ARROW = Mark.ARROW


class TripleClass(enum.Enum):
    COLLIDER = "collider"
    NONCOLLIDER = "noncollider"
    UNFAITHFUL = "unfaithful"


class Triple(NamedTuple):
    """Unshielded triple ``<a, b, c>`` with midpoint ``b``, stored with a < c."""

    a: int
    b: int
    c: int

    @classmethod
    def make(cls, a: int, b: int, c: int) -> Triple:
        if len({a, b, c}) != 3:
            raise ValueError(f"triple needs three distinct nodes, got {(a, b, c)}")
        return cls(a, b, c) if a < c else cls(c, b, a)

    def label(self, names: Sequence[str]) -> str:
        return f"<{names[self.a]},{names[self.b]},{names[self.c]}>"


def _check_names(names: Iterable[str]) -> tuple[str, ...]:
    names = tuple(str(n) for n in names)
    if len(set(names)) != len(names):
        raise ValueError("node names must be unique")
    for n in names:
        if not n or any(ch in n for ch in ",#\n") or n != n.strip():
            raise ValueError(f"invalid node name {n!r}")
    return names


class _GraphBase:
    names: tuple[str, ...]
    _index: dict[str, int]

    def __len__(self) -> int:
        return len(self.names)

    @property
    def nodes(self) -> range:
        return range(len(self.names))

    def node(self, x: Node) -> int:
        """Resolve a node given by index or name; raise ValueError if unknown."""
        if isinstance(x, str):
            try:
                return self._index[x]
            except KeyError:
                raise ValueError(f"unknown node {x!r}") from None
        if isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < len(self.names):
            raise ValueError(f"unknown node {x!r}")
        return int(x)

    def index(self, name: str) -> int:
        return self.node(name)


class Dag(_GraphBase):
    """Directed acyclic graph; immutable once built."""

    def __init__(self, names: Iterable[str], edges: Iterable[tuple[Node, Node]] = ()):
        self.names = _check_names(names)
        self._index = {n: i for i, n in enumerate(self.names)}
        es = set()
        for p, c in edges:
            p, c = self.node(p), self.node(c)
            if p == c:
                raise ValueError(f"self-loop on {self.names[p]}")
            if (c, p) in es:
                raise ValueError(f"edge {self.names[p]}-{self.names[c]} given in both directions")
            es.add((p, c))
        self.edges: frozenset[tuple[int, int]] = frozenset(es)
        n = len(self.names)
        parents: list[set[int]] = [set() for _ in range(n)]
        children: list[set[int]] = [set() for _ in range(n)]
        for p, c in es:
            parents[c].add(p)
            children[p].add(c)
        self._parents = tuple(frozenset(s) for s in parents)
        self._children = tuple(frozenset(s) for s in children)
        self._adj = tuple(self._parents[i] | self._children[i] for i in range(n))
        self._order = self._toposort()

    def _toposort(self) -> tuple[int, ...]:
        indeg = [len(p) for p in self._parents]
        ready = [i for i in self.nodes if indeg[i] == 0]
        order = []
        while ready:
            ready.sort(reverse=True)
            v = ready.pop()
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.names):
            raise ValueError("graph contains a directed cycle")
        return tuple(order)

    def parents(self, x: Node) -> frozenset[int]:
        return self._parents[self.node(x)]

    def children(self, x: Node) -> frozenset[int]:
        return self._children[self.node(x)]

    def adjacents(self, x: Node) -> frozenset[int]:
        return self._adj[self.node(x)]

    def is_adjacent(self, x: Node, y: Node) -> bool:
        return self.node(y) in self._adj[self.node(x)]

    def has_edge(self, parent: Node, child: Node) -> bool:
        return (self.node(parent), self.node(child)) in self.edges

    def topological_order(self) -> tuple[int, ...]:
        return self._order

    def ancestors(self, xs: Iterable[Node]) -> set[int]:
        """Ancestors of ``xs``, including the members of ``xs`` themselves."""
        out = set()
        stack = [self.node(x) for x in xs]
        while stack:
            v = stack.pop()
            if v in out:
                continue
            out.add(v)
            stack.extend(self._parents[v])
        return out

    def relabel(self, perm: Sequence[int]) -> Dag:
        """Move node ``i`` to position ``perm[i]`` (names travel with nodes)."""
        names = [""] * len(self.names)
        for i, j in enumerate(perm):
            names[j] = self.names[i]
        return Dag(names, [(perm[p], perm[c]) for p, c in self.edges])

    def to_mixed(self) -> MixedGraph:
        g = MixedGraph(self.names)
        for p, c in self.edges:
            g.add_edge(p, c, TAIL, ARROW)
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self.names == other.names and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.names, self.edges))

    def __repr__(self) -> str:
        es = ", ".join(f"{self.names[p]}->{self.names[c]}" for p, c in sorted(self.edges))
        return f"Dag([{', '.join(self.names)}]; {es})"


class MixedGraph(_GraphBase):
    """Pattern / e-pattern: edges with a mark at each endpoint, plus underlines.

    Edges are keyed by ``(i, j)`` with ``i < j``; the value holds the mark at
    ``i`` and the mark at ``j``.  Library operations never mutate their inputs;
    the mutators here are for building graphs.
    """

    def __init__(self, names: Iterable[str]):
        self.names = _check_names(names)
        self._index = {n: i for i, n in enumerate(self.names)}
        self._marks: dict[tuple[int, int], tuple[Mark, Mark]] = {}
        self._adj: list[set[int]] = [set() for _ in self.names]
        self.underlines: set[Triple] = set()

    @classmethod
    def complete(cls, names: Iterable[str]) -> MixedGraph:
        g = cls(names)
        for i, j in itertools.combinations(g.nodes, 2):
            g.add_edge(i, j)
        return g

    def copy(self) -> MixedGraph:
        g = MixedGraph.__new__(MixedGraph)
        g.names = self.names
        g._index = self._index
        g._marks = dict(self._marks)
        g._adj = [set(s) for s in self._adj]
        g.underlines = set(self.underlines)
        return g

    # -- construction -----------------------------------------------------
    def add_edge(self, a: Node, b: Node, mark_a: Mark = TAIL, mark_b: Mark = TAIL) -> None:
        a, b = self.node(a), self.node(b)
        if a == b:
            raise ValueError("self-loop")
        if b in self._adj[a]:
            raise ValueError(f"duplicate edge {self.names[a]}-{self.names[b]}")
        self._marks[(a, b) if a < b else (b, a)] = (mark_a, mark_b) if a < b else (mark_b, mark_a)
        self._adj[a].add(b)
        self._adj[b].add(a)

    def remove_edge(self, a: Node, b: Node) -> None:
        a, b = self.node(a), self.node(b)
        del self._marks[(a, b) if a < b else (b, a)]
        self._adj[a].discard(b)
        self._adj[b].discard(a)

    def set_mark(self, a: Node, b: Node, at: Node, mark: Mark) -> None:
        """Set the mark at endpoint ``at`` of edge a-b."""
        a, b, at = self.node(a), self.node(b), self.node(at)
        key = (a, b) if a < b else (b, a)
        m = self._marks[key]
        if at == key[0]:
            self._marks[key] = (mark, m[1])
        elif at == key[1]:
            self._marks[key] = (m[0], mark)
        else:
            raise ValueError("endpoint not on edge")

    def orient(self, a: Node, b: Node) -> None:
        """Make the edge a-b read ``a --> b``."""
        self.set_mark(a, b, a, TAIL)
        self.set_mark(a, b, b, ARROW)

    # -- queries ----------------------------------------------------------
    def is_adjacent(self, a: Node, b: Node) -> bool:
        return self.node(b) in self._adj[self.node(a)]

    def adjacents(self, x: Node) -> frozenset[int]:
        return frozenset(self._adj[self.node(x)])

    def mark(self, a: Node, b: Node, at: Node) -> Mark | None:
        """Mark at endpoint ``at`` of edge a-b, or None if a, b are not adjacent."""
        a, b, at = self.node(a), self.node(b), self.node(at)
        m = self._marks.get((a, b) if a < b else (b, a))
        if m is None:
            return None
        return m[0] if at == min(a, b) else m[1]

    def _mk(self, a: int, b: int) -> tuple[Mark, Mark] | None:
        # marks as (at a, at b), raw ints, no validation
        if a < b:
            return self._marks.get((a, b))
        m = self._marks.get((b, a))
        return None if m is None else (m[1], m[0])

    def is_directed(self, a: Node, b: Node) -> bool:
        """True iff the graph has ``a --> b``."""
        return self._mk(self.node(a), self.node(b)) == (TAIL, ARROW)

    def is_undirected(self, a: Node, b: Node) -> bool:
        return self._mk(self.node(a), self.node(b)) == (TAIL, TAIL)

    def has_arrow_at(self, a: Node, b: Node) -> bool:
        """True iff edge a-b exists with an arrowhead at ``b``."""
        m = self._mk(self.node(a), self.node(b))
        return m is not None and m[1] is ARROW

    def edges(self) -> list[tuple[int, int, Mark, Mark]]:
        return [(i, j, mi, mj) for (i, j), (mi, mj) in sorted(self._marks.items())]

    def skeleton(self) -> frozenset[tuple[int, int]]:
        return frozenset(self._marks)

    def is_collider(self, t: Triple) -> bool:
        return self.has_arrow_at(t.a, t.b) and self.has_arrow_at(t.c, t.b)

    def relabel(self, perm: Sequence[int]) -> MixedGraph:
        names = [""] * len(self.names)
        for i, j in enumerate(perm):
            names[j] = self.names[i]
        g = MixedGraph(names)
        for (i, j), (mi, mj) in self._marks.items():
            g.add_edge(perm[i], perm[j], mi, mj)
        g.underlines = {Triple.make(perm[t.a], perm[t.b], perm[t.c]) for t in self.underlines}
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return (
            self.names == other.names
            and self._marks == other._marks
            and self.underlines == other.underlines
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return "MixedGraph(" + "; ".join(format_graph(self).strip().splitlines()) + ")"


Graph = Union[Dag, MixedGraph]


# ---------------------------------------------------------------------------
# queries

def adjacents(g: Graph, x: Node) -> frozenset[int]:
    return g.adjacents(x)


def d_separated(g: Dag, x: Node, y: Node, s: Iterable[Node] = ()) -> bool:
    """True iff ``x`` and ``y`` are d-separated by ``s`` in ``g``.

    Reachability over (node, direction) states: "up" means the node was
    entered from one of its children, "down" from one of its parents.
    """
    x, y = g.node(x), g.node(y)
    cond = {g.node(v) for v in s}
    if x == y:
        raise ValueError("x and y must differ")
    if x in cond or y in cond:
        raise ValueError("x and y must not be in the conditioning set")
    anc = g.ancestors(cond)
    parents, children = g._parents, g._children
    seen = set()
    stack = [(x, True)]
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        v, up = state
        if v == y:
            return False
        if up:
            if v in cond:
                continue
            stack.extend((p, True) for p in parents[v])
            stack.extend((c, False) for c in children[v])
        else:
            if v not in cond:
                stack.extend((c, False) for c in children[v])
            if v in anc:
                stack.extend((p, True) for p in parents[v])
    return True


def unshielded_triples(g: Graph) -> set[Triple]:
    out = set()
    for b in g.nodes:
        nb = sorted(g.adjacents(b))
        for a, c in itertools.combinations(nb, 2):
            if not g.is_adjacent(a, c):
                out.add(Triple(a, b, c))
    return out


def is_collider_in_dag(g: Dag, t: Triple) -> bool:
    a, b, c = t
    if not (g.is_adjacent(a, b) and g.is_adjacent(b, c)) or g.is_adjacent(a, c) or a == c:
        raise ValueError(f"{t} is not an unshielded triple of the graph")
    return g.has_edge(a, b) and g.has_edge(c, b)


# ---------------------------------------------------------------------------
# orientation propagation

def meek_closure(g: MixedGraph) -> MixedGraph:
    """Apply Meek rules R1-R3 to a fixpoint and return the new graph.

    Only undirected edges are ever oriented.  Underlined triples never serve
    as the unshielded non-collider premise: R1 is blocked when its triple
    is underlined, R3 when the triple through the apex is.
    """
    g = g.copy()
    while _meek_pass(g):
        pass
    return g


def _meek_pass(g: MixedGraph) -> bool:
    changed = False
    n = len(g)
    for b in range(n):
        for c in sorted(g._adj[b]):
            if g._mk(b, c) != (TAIL, TAIL):
                continue
            if _r1(g, b, c) or _r2(g, b, c) or _r3(g, b, c):
                g.orient(b, c)
                changed = True
    return changed


def _r1(g: MixedGraph, b: int, c: int) -> bool:
    # a --> b --- c, a and c non-adjacent, <a,b,c> not underlined  =>  b --> c
    for a in g._adj[b]:
        if a != c and c not in g._adj[a] and g._mk(a, b) == (TAIL, ARROW):
            if Triple.make(a, b, c) not in g.underlines:
                return True
    return False


def _r2(g: MixedGraph, a: int, c: int) -> bool:
    # a --> b --> c and a --- c  =>  a --> c
    for b in g._adj[a]:
        if b != c and b in g._adj[c]:
            if g._mk(a, b) == (TAIL, ARROW) and g._mk(b, c) == (TAIL, ARROW):
                return True
    return False


def _r3(g: MixedGraph, a: int, b: int) -> bool:
    # a---c, a---d, c-->b, d-->b, c,d non-adjacent, <c,a,d> not underlined  =>  a --> b
    cands = [
        c for c in g._adj[a]
        if c != b and c in g._adj[b]
        and g._mk(a, c) == (TAIL, TAIL) and g._mk(c, b) == (TAIL, ARROW)
    ]
    for c, d in itertools.combinations(sorted(cands), 2):
        if d not in g._adj[c] and Triple.make(c, a, d) not in g.underlines:
            return True
    return False


# ---------------------------------------------------------------------------
# equivalence classes

def dag_to_pattern(g: Dag) -> MixedGraph:
    """The pattern (CPDAG) of ``g``: compelled colliders plus Meek closure."""
    p = MixedGraph(g.names)
    for a, b in sorted(g.edges):
        p.add_edge(a, b)
    for t in sorted(unshielded_triples(g)):
        if g.has_edge(t.a, t.b) and g.has_edge(t.c, t.b):
            p.set_mark(t.a, t.b, t.b, ARROW)
            p.set_mark(t.c, t.b, t.b, ARROW)
    return meek_closure(p)


def represents(e: MixedGraph, g: Dag) -> bool:
    """Whether the DAG ``g`` is among the DAGs the e-pattern ``e`` represents."""
    if e.names != g.names or e.skeleton() != frozenset((min(p, c), max(p, c)) for p, c in g.edges):
        return False
    for a, b, ma, mb in e.edges():
        if (ma, mb) == (ARROW, ARROW):
            return False
        if (ma, mb) == (TAIL, ARROW) and not g.has_edge(a, b):
            return False
        if (ma, mb) == (ARROW, TAIL) and not g.has_edge(b, a):
            return False
    for t in unshielded_triples(g):
        if is_collider_in_dag(g, t) and not (e.is_collider(t) or t in e.underlines):
            return False
    return True


def represented_dags(e: MixedGraph, cap: int = 8) -> set[Dag]:
    """Every DAG represented by the e-pattern ``e`` (pattern if no underlines).

    A represented DAG shares e's adjacencies, keeps e's directed edges, and
    each of its unshielded colliders is a collider or an underlined triple
    of ``e``.  An edge with arrowheads at both ends admits no DAG.
    """
    n = len(e)
    if n > cap:
        raise CapacityError(f"{n} nodes exceeds enumeration cap {cap}")
    fixed: list[tuple[int, int]] = []
    free: list[tuple[int, int]] = []
    for a, b, ma, mb in e.edges():
        if (ma, mb) == (ARROW, ARROW):
            return set()
        if (ma, mb) == (TAIL, ARROW):
            fixed.append((a, b))
        elif (ma, mb) == (ARROW, TAIL):
            fixed.append((b, a))
        else:
            free.append((a, b))

    allowed = {t for t in unshielded_triples(e) if e.is_collider(t)} | set(e.underlines)
    parents: list[set[int]] = [set() for _ in range(n)]
    children: list[set[int]] = [set() for _ in range(n)]
    out: set[Dag] = set()

    def reaches(src: int, dst: int) -> bool:
        stack, seen = [src], set()
        while stack:
            v = stack.pop()
            if v == dst:
                return True
            if v not in seen:
                seen.add(v)
                stack.extend(children[v])
        return False

    def add(p: int, c: int) -> bool:
        if reaches(c, p):
            return False
        for w in parents[c]:
            if not e.is_adjacent(w, p) and Triple.make(w, c, p) not in allowed:
                return False
        parents[c].add(p)
        children[p].add(c)
        return True

    def drop(p: int, c: int) -> None:
        parents[c].discard(p)
        children[p].discard(c)

    for p, c in fixed:
        if not add(p, c):
            return set()

    def rec(k: int) -> None:
        if k == len(free):
            out.add(Dag(e.names, [(p, c) for c in range(n) for p in parents[c]]))
            return
        a, b = free[k]
        for p, c in ((a, b), (b, a)):
            if add(p, c):
                rec(k + 1)
                drop(p, c)

    rec(0)
    return out


# ---------------------------------------------------------------------------
# text format

_EDGE_TOKENS = {"-->": (TAIL, ARROW), "<--": (ARROW, TAIL), "---": (TAIL, TAIL), "<->": (ARROW, ARROW)}


def format_graph(g: Graph) -> str:
    if isinstance(g, Dag):
        g = g.to_mixed()
    names = g.names
    lines = []
    for a, b, ma, mb in g.edges():
        if (ma, mb) == (ARROW, TAIL):
            lines.append((names[b], names[a], f"{names[b]} --> {names[a]}"))
        else:
            tok = {(TAIL, ARROW): "-->", (TAIL, TAIL): "---", (ARROW, ARROW): "<->"}[(ma, mb)]
            lines.append((names[a], names[b], f"{names[a]} {tok} {names[b]}"))
    out = ["nodes: " + ",".join(names)]
    out += [ln for *_, ln in sorted(lines)]
    und = sorted(
        (names[t.a], names[t.b], names[t.c]) for t in g.underlines
    )
    out += [f"underline: {a},{b},{c}" for a, b, c in und]
    return "\n".join(out) + "\n"


def parse_graph(text: str) -> MixedGraph:
    """Parse the line-based graph format into a MixedGraph."""
    names = None
    edges = []
    unders = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("nodes:"):
            if names is not None:
                raise ValueError(f"line {lineno}: duplicate nodes declaration")
            names = [t.strip() for t in line[len("nodes:"):].split(",") if t.strip()]
        elif line.startswith("underline:"):
            parts = [t.strip() for t in line[len("underline:"):].split(",")]
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: underline needs three nodes")
            unders.append((lineno, parts))
        else:
            toks = line.split()
            if len(toks) != 3 or toks[1] not in _EDGE_TOKENS:
                raise ValueError(f"line {lineno}: cannot parse {raw!r}")
            edges.append((lineno, toks[0], toks[2], _EDGE_TOKENS[toks[1]]))
    if names is None:
        raise ValueError("missing 'nodes:' declaration")
    g = MixedGraph(names)
    for lineno, a, b, (ma, mb) in edges:
        try:
            g.add_edge(a, b, ma, mb)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    for lineno, (a, b, c) in unders:
        try:
            t = Triple.make(g.node(a), g.node(b), g.node(c))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if not (g.is_adjacent(t.a, t.b) and g.is_adjacent(t.b, t.c)) or g.is_adjacent(t.a, t.c):
            raise ValueError(f"line {lineno}: underlined triple is not unshielded")
        g.underlines.add(t)
    return g


def parse_dag(text: str) -> Dag:
    g = parse_graph(text)
    if g.underlines:
        raise ValueError("a DAG cannot carry underlines")
    edges = []
    for a, b, ma, mb in g.edges():
        if (ma, mb) == (TAIL, ARROW):
            edges.append((a, b))
        elif (ma, mb) == (ARROW, TAIL):
            edges.append((b, a))
        else:
            raise ValueError(f"edge {g.names[a]}-{g.names[b]} is not directed")
    return Dag(g.names, edges)
