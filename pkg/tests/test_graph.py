import itertools
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpcsearch.errors import CapacityError
from cpcsearch.graph import (
    ARROW,
    TAIL,
    Dag,
    MixedGraph,
    Triple,
    adjacents,
    d_separated,
    dag_to_pattern,
    format_graph,
    is_collider_in_dag,
    meek_closure,
    parse_dag,
    parse_graph,
    represented_dags,
    represents,
    unshielded_triples,
)

import oracles

PROPERTY = settings(max_examples=150, deadline=None)


@st.composite
def dags(draw, min_nodes=2, max_nodes=7):
    n = draw(st.integers(min_nodes, max_nodes))
    order = draw(st.permutations(range(n)))
    pairs = [(order[i], order[j]) for i in range(n) for j in range(i + 1, n)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag(oracles.names(n), [e for e, k in zip(pairs, keep) if k])


def chain():
    return Dag("ABC", [("A", "B"), ("B", "C")])


def collider():
    return Dag("ABC", [("A", "B"), ("C", "B")])


class TestConstruction:
    def test_rejects_cycle(self):
        with pytest.raises(ValueError, match="cycle"):
            Dag("ABC", [("A", "B"), ("B", "C"), ("C", "A")])

    def test_rejects_self_loop_and_two_way_edge(self):
        with pytest.raises(ValueError):
            Dag("AB", [("A", "A")])
        with pytest.raises(ValueError):
            Dag("AB", [("A", "B"), ("B", "A")])

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            Dag(["A", "A"])

    def test_unknown_node(self):
        with pytest.raises(ValueError):
            adjacents(chain(), "Z")
        with pytest.raises(ValueError):
            adjacents(chain(), 3)

    def test_triple_canonical(self):
        assert Triple.make(2, 1, 0) == Triple.make(0, 1, 2) == (0, 1, 2)
        with pytest.raises(ValueError):
            Triple.make(0, 0, 1)


class TestAdjacents:
    def test_chain(self):
        g = chain()
        assert adjacents(g, "B") == {g.node("A"), g.node("C")}

    def test_empty(self):
        assert adjacents(Dag("ABC"), "A") == set()

    def test_against_edge_scan(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            g = oracles.random_dag(rng, 5)
            for x in g.nodes:
                scan = {c for p, c in g.edges if p == x} | {p for p, c in g.edges if c == x}
                assert adjacents(g, x) == scan
                assert adjacents(g.to_mixed(), x) == scan


class TestDSeparation:
    def test_collider(self):
        g = collider()
        assert d_separated(g, "A", "C", [])
        assert not d_separated(g, "A", "C", ["B"])

    def test_chain(self):
        g = chain()
        assert d_separated(g, "A", "C", ["B"])
        assert not d_separated(g, "A", "C", [])

    def test_descendant_of_collider_activates(self):
        g = Dag("ABCD", [("A", "B"), ("C", "B"), ("B", "D")])
        assert not d_separated(g, "A", "C", ["D"])

    @pytest.mark.parametrize("bad", [("A", "A", []), ("A", "C", ["A"]), ("A", "C", ["C"])])
    def test_preconditions(self, bad):
        with pytest.raises(ValueError):
            d_separated(chain(), *bad)

    def test_random_six_node_against_paths(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            g = oracles.random_dag(rng, 6)
            for x, y in itertools.combinations(g.nodes, 2):
                rest = [v for v in g.nodes if v not in (x, y)]
                for k in range(3):
                    for s in itertools.combinations(rest, k):
                        assert d_separated(g, x, y, s) == oracles.dsep_by_paths(g, x, y, s)

    @given(dags())
    @PROPERTY
    def test_symmetric(self, g):
        for x, y in itertools.combinations(g.nodes, 2):
            rest = [v for v in g.nodes if v not in (x, y)]
            for s in itertools.combinations(rest, min(2, len(rest))):
                assert d_separated(g, x, y, s) == d_separated(g, y, x, s)

    @given(dags(max_nodes=7))
    @settings(max_examples=60, deadline=None)
    def test_matches_paths_up_to_seven(self, g):
        po = oracles.PathOracle(g)
        for x, y in itertools.combinations(g.nodes, 2):
            rest = [v for v in g.nodes if v not in (x, y)]
            for k in range(len(rest) + 1):
                for s in itertools.combinations(rest, k):
                    assert d_separated(g, x, y, s) == po.separated(x, y, s)

    @given(dags(max_nodes=7))
    @settings(max_examples=60, deadline=None)
    def test_adjacency_iff_never_separated(self, g):
        for x, y in itertools.combinations(g.nodes, 2):
            rest = [v for v in g.nodes if v not in (x, y)]
            separable = any(
                d_separated(g, x, y, s)
                for k in range(len(rest) + 1)
                for s in itertools.combinations(rest, k)
            )
            assert g.is_adjacent(x, y) != separable


class TestTriples:
    def test_chain(self):
        assert unshielded_triples(chain()) == {Triple(0, 1, 2)}

    def test_complete(self):
        assert unshielded_triples(Dag("ABC", [("A", "B"), ("B", "C"), ("A", "C")])) == set()

    def test_star(self):
        g = Dag("ABCDE", [("A", "B"), ("C", "B"), ("D", "B"), ("E", "B")])
        ts = unshielded_triples(g)
        assert len(ts) == 6
        assert all(t.b == g.node("B") for t in ts)

    def test_collider_in_dag(self):
        assert is_collider_in_dag(collider(), Triple(0, 1, 2))
        assert not is_collider_in_dag(chain(), Triple(0, 1, 2))
        with pytest.raises(ValueError):
            is_collider_in_dag(chain(), Triple(0, 2, 1))

    @given(dags(min_nodes=3, max_nodes=7))
    @settings(max_examples=60, deadline=None)
    def test_collider_iff_separators_exclude_midpoint(self, g):
        for t in unshielded_triples(g):
            rest = [v for v in g.nodes if v not in (t.a, t.c)]
            seps = [
                set(s)
                for k in range(len(rest) + 1)
                for s in itertools.combinations(rest, k)
                if d_separated(g, t.a, t.c, s)
            ]
            assert seps
            if is_collider_in_dag(g, t):
                assert all(t.b not in s for s in seps)
            else:
                assert all(t.b in s for s in seps)


class TestPattern:
    def test_collider_compelled(self):
        p = dag_to_pattern(collider())
        assert p.is_directed("A", "B") and p.is_directed("C", "B")

    def test_chain_undirected(self):
        p = dag_to_pattern(chain())
        assert p.is_undirected("A", "B") and p.is_undirected("B", "C")
        assert not p.underlines

    def test_equal_patterns_iff_same_dseparation(self):
        groups = defaultdict(list)
        pats = {}
        for g in oracles.all_labeled_dags(4):
            groups[oracles.dsep_fingerprint(g)].append(g)
            pats[g] = format_graph(dag_to_pattern(g))
        for members in groups.values():
            assert len({pats[g] for g in members}) == 1
        reps = {fp: pats[ms[0]] for fp, ms in groups.items()}
        assert len(set(reps.values())) == len(reps)

    @given(dags(max_nodes=6), st.randoms(use_true_random=False))
    @settings(max_examples=80, deadline=None)
    def test_relabel_commutes(self, g, rnd):
        perm = list(range(len(g)))
        rnd.shuffle(perm)
        assert dag_to_pattern(g.relabel(perm)) == dag_to_pattern(g).relabel(perm)

    @given(dags(max_nodes=6))
    @settings(max_examples=80, deadline=None)
    def test_represented_class(self, g):
        p = dag_to_pattern(g)
        members = represented_dags(p)
        assert g in members
        fp = oracles.dsep_fingerprint(g)
        assert all(oracles.dsep_fingerprint(m) == fp for m in members)

    def test_pattern_is_meek_fixpoint(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            p = dag_to_pattern(oracles.random_dag(rng, 7))
            assert meek_closure(p) == p


class TestRepresented:
    def test_underlined_chain_has_four(self):
        e = parse_graph("nodes: A,B,C\nA --- B\nB --- C\nunderline: A,B,C\n")
        got = {format_graph(g) for g in represented_dags(e)}
        want = {
            format_graph(Dag("ABC", es))
            for es in (
                [("A", "B"), ("B", "C")],
                [("B", "A"), ("B", "C")],
                [("B", "A"), ("C", "B")],
                [("A", "B"), ("C", "B")],
            )
        }
        assert got == want

    def test_fully_oriented(self):
        e = collider().to_mixed()
        assert represented_dags(e) == {collider()}

    def test_plain_chain_pattern(self):
        e = parse_graph("nodes: A,B,C\nA --- B\nB --- C\n")
        got = represented_dags(e)
        assert got == oracles.brute_represented(e)
        assert len(got) == 3

    def test_conflict_edge_represents_nothing(self):
        e = parse_graph("nodes: A,B\nA <-> B\n")
        assert represented_dags(e) == set()

    def test_cap(self):
        with pytest.raises(CapacityError):
            represented_dags(MixedGraph(oracles.names(9)))

    def test_random_epatterns_against_brute_force(self):
        rng = np.random.default_rng(8)
        for _ in range(60):
            g = oracles.random_dag(rng, 5)
            e = dag_to_pattern(g)
            ts = sorted(unshielded_triples(e))
            for t in ts:
                if rng.random() < 0.4:
                    e.underlines.add(t)
            for a, b, ma, mb in e.edges():
                if (ma, mb) != (TAIL, TAIL) and rng.random() < 0.2:
                    e.set_mark(a, b, a, TAIL)
                    e.set_mark(a, b, b, TAIL)
            want = oracles.brute_represented(e)
            assert represented_dags(e) == want
            for m in oracles.all_labeled_dags(5)[:200]:
                m = Dag(e.names, m.edges)
                assert represents(e, m) == (m in want)


class TestTextFormat:
    def test_round_trip(self):
        text = (
            "# comment\n"
            "underline: A,B,C\n"
            "B --- C\n"
            "nodes: A,B,C,D\n"
            "D <-> C\n"
            "B <-- A\n"
        )
        g = parse_graph(text)
        out = format_graph(g)
        assert out == "nodes: A,B,C,D\nA --> B\nB --- C\nC <-> D\nunderline: A,B,C\n"
        assert parse_graph(out) == g

    def test_dag_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            g = oracles.random_dag(rng, 6)
            assert parse_dag(format_graph(g)) == g

    @pytest.mark.parametrize(
        "text",
        [
            "A --> B\n",
            "nodes: A,B\nA --> C\n",
            "nodes: A,B\nA ==> B\n",
            "nodes: A,B,C\nA --- B\nB --- C\nA --- C\nunderline: A,B,C\n",
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            parse_graph(text)

    def test_dag_rejects_undirected_and_cycles(self):
        with pytest.raises(ValueError):
            parse_dag("nodes: A,B\nA --- B\n")
        with pytest.raises(ValueError, match="cycle"):
            parse_dag("nodes: A,B,C\nA --> B\nB --> C\nC --> A\n")
