import itertools
import math
import threading

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpcsearch.citest import (
    CiQuery,
    DSeparationOracle,
    FactTable,
    FisherZTest,
    GaussianDataset,
    fisher_z,
    fisher_z_test,
    normal_cdf,
    oracle_answer,
    partial_correlation,
    table_answer,
)
from cpcsearch.errors import DegenerateCovarianceError, DegreesOfFreedomError
from cpcsearch.graph import Dag, d_separated
from cpcsearch.simulate import GraphSpec, random_dag, random_sem, simulate_data

import oracles

mpmath.mp.dps = 50


def mp_two_sided(stat):
    return float(2 * (1 - mpmath.ncdf(mpmath.mpf(stat))))


def dataset(corr, n=1000, names=None):
    corr = np.asarray(corr, dtype=float)
    return GaussianDataset(n, names or oracles.names(len(corr)), corr)


class TestOracle:
    def test_collider(self):
        g = Dag("ABC", [("A", "B"), ("C", "B")])
        assert oracle_answer(g, "A", "C", []).independent
        d = oracle_answer(g, "A", "C", ["B"])
        assert not d.independent and d.p_value is None and d.statistic is None

    def test_delegates_to_dseparation(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            g = oracles.random_dag(rng, 6)
            src = DSeparationOracle(g)
            for x, y in itertools.combinations(g.nodes, 2):
                rest = [v for v in g.nodes if v not in (x, y)]
                for k in range(3):
                    for s in itertools.combinations(rest, k):
                        assert src.independent(x, y, s) == d_separated(g, x, y, s)
                        assert src.independent(y, x, s) == src.independent(x, y, s)

    def test_bad_query(self):
        src = DSeparationOracle(Dag("AB"))
        with pytest.raises(ValueError):
            src.answer("A", "Z")
        with pytest.raises(ValueError):
            src.answer("A", "B", ["A"])

    def test_query_count_is_thread_safe(self):
        g = Dag("ABCD", [("A", "B"), ("B", "C")])
        src = DSeparationOracle(g)

        def work():
            for _ in range(500):
                src.answer("A", "C", ["B"])

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert src.query_count == 4000


class TestFactTable:
    def table(self):
        return FactTable("ABC", [("A", "C", []), ("A", "C", ["B"])])

    def test_listed_fact(self):
        assert table_answer(self.table(), "A", "C", []).independent

    def test_absent_fact_is_dependent(self):
        assert not table_answer(self.table(), "A", "B", []).independent

    def test_symmetric(self):
        assert table_answer(self.table(), "C", "A", ["B"]).independent

    def test_parse_and_format(self):
        text = "A _||_ C |\nC _||_ A | B   # same pair\n\n"
        t = FactTable.parse(text, names="ABC")
        assert t.independencies == self.table().independencies
        assert FactTable.parse(t.format(), names="ABC").independencies == t.independencies

    def test_parse_names_in_order_of_appearance(self):
        t = FactTable.parse("X _||_ Z | Y1,Y2\n")
        assert t.names == ("X", "Z", "Y1", "Y2")
        assert t.independent("Z", "X", ["Y2", "Y1"])

    @pytest.mark.parametrize("bad", ["A _|_ C |", "A _||_ C", "_||_ C |"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            FactTable.parse(bad, names="ABC")

    def test_query_canonical(self):
        assert CiQuery.make(2, 0, [1]) == CiQuery.make(0, 2, [1])


class TestNormalCdf:
    @pytest.mark.parametrize("x", np.linspace(-8, 8, 65))
    def test_grid(self, x):
        assert abs(normal_cdf(x) - float(mpmath.ncdf(x))) <= 1e-10

    def test_published_values(self):
        assert normal_cdf(0.0) == 0.5
        assert abs(normal_cdf(1.959964) - 0.975) <= 1e-6
        assert abs(normal_cdf(1.0) - 0.8413447460685429) <= 1e-12

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert abs(normal_cdf(-x) - (1 - normal_cdf(x))) <= 1e-15


class TestPartialCorrelation:
    def test_marginal(self):
        assert partial_correlation(dataset([[1, 0.5], [0.5, 1]]), 0, 1, []) == pytest.approx(0.5, abs=1e-15)

    def test_chain_screened_off(self):
        # A -> B -> C, unit coefficients and noises: var = 1, 2, 3
        cov = np.array([[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 3.0]])
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)
        d = dataset(corr)
        assert corr[0, 2] == pytest.approx(corr[0, 1] * corr[1, 2], abs=1e-15)
        assert partial_correlation(d, 0, 2, []) == pytest.approx(1 / math.sqrt(3), abs=1e-12)
        assert abs(partial_correlation(d, 0, 2, [1])) < 1e-12

    def test_against_recursion_corpus(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(25):
            c = oracles.random_corr(rng, 5)
            d = dataset(c)
            for x, y in itertools.combinations(range(5), 2):
                rest = [v for v in range(5) if v not in (x, y)]
                for k in range(4):
                    for s in itertools.combinations(rest, k):
                        got = partial_correlation(d, x, y, s)
                        for order in itertools.permutations(s):
                            worst = max(worst, abs(got - oracles.recursive_partial_corr(c, x, y, order)))
        assert worst <= 1e-10

    def test_singular(self):
        c = np.array([[1.0, 1.0, 0.2], [1.0, 1.0, 0.2], [0.2, 0.2, 1.0]])
        with pytest.raises(DegenerateCovarianceError):
            partial_correlation(dataset(c), 0, 2, [1])


class TestFisherZ:
    def test_zero_correlation(self):
        d = dataset(np.eye(3))
        res = fisher_z_test(d, 0, 1, [], 0.999)
        assert res.statistic == 0 and res.p_value == 1.0 and res.independent

    def test_reference_value(self):
        stat, p = fisher_z(0.1, 1000, 0)
        assert abs(stat - math.sqrt(997) * 0.5 * math.log(1.1 / 0.9)) <= 1e-9
        assert stat == pytest.approx(3.168, abs=5e-4)
        assert abs(p - mp_two_sided(stat)) <= 1e-12
        assert p == pytest.approx(0.0015, abs=5e-5)
        d = dataset([[1, 0.1], [0.1, 1]])
        assert not fisher_z_test(d, 0, 1, [], 0.05).independent

    def test_boundary_resolves_dependent(self):
        q = float(mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf("0.95")))  # Phi^-1(0.975)
        r = math.tanh(q / math.sqrt(1000 - 1 - 3))
        c = np.array([[1, r, 0], [r, 1, 0], [0, 0, 1]])
        d = dataset(c)
        res = fisher_z_test(d, 0, 1, [2], 0.05)
        assert res.statistic == pytest.approx(q, abs=1e-9)
        assert res.p_value == pytest.approx(0.05, abs=1e-9)
        # alpha equal to the p-value itself: a tie, which must read as dependent
        assert not fisher_z_test(d, 0, 1, [2], res.p_value).independent
        assert FisherZTest(d, res.p_value * (1 - 1e-9)).independent(0, 1, [2])

    def test_degrees_of_freedom(self):
        d = dataset(np.eye(5), n=5)
        with pytest.raises(DegreesOfFreedomError):
            fisher_z_test(d, 0, 1, [2, 3], 0.05)
        fisher_z_test(d, 0, 1, [2], 0.05)

    @given(
        st.integers(0, 2**32 - 1),
        st.lists(st.floats(0.01, 100.0), min_size=4, max_size=4),
    )
    @settings(max_examples=40, deadline=None)
    def test_scale_invariant(self, seed, scales):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((200, 4)) @ rng.standard_normal((4, 4))
        a = GaussianDataset.from_samples(x)
        b = GaussianDataset.from_samples(x * np.array(scales))
        ta, tb = FisherZTest(a), FisherZTest(b)
        for i, j in itertools.combinations(range(4), 2):
            rest = [v for v in range(4) if v not in (i, j)]
            for k in range(3):
                for s in itertools.combinations(rest, k):
                    da, db = ta.answer(i, j, s), tb.answer(i, j, s)
                    assert abs(da.p_value - db.p_value) < 1e-8
                    if abs(da.p_value - 0.05) > 1e-6:
                        assert da.independent == db.independent

    def test_error_rate_falls_with_sample_size(self):
        rates = {n: [] for n in (100, 1000, 10000)}
        for seed in range(8):
            dag = random_dag(GraphSpec(6, 6), seed)
            sem = random_sem(dag, seed)
            # strong coefficients only, so the model is faithful in practice
            sem.coefficients = {e: math.copysign(max(abs(w), 0.5), w) for e, w in sem.coefficients.items()}
            oracle = DSeparationOracle(dag)
            queries = [
                (x, y, s)
                for x, y in itertools.combinations(range(6), 2)
                for k in range(2)
                for s in itertools.combinations([v for v in range(6) if v not in (x, y)], k)
            ]
            for n in rates:
                src = FisherZTest(simulate_data(sem, n, 1000 + seed))
                wrong = sum(src.independent(*q) != oracle.independent(*q) for q in queries)
                rates[n].append(wrong / len(queries))
        means = [np.mean(rates[n]) for n in (100, 1000, 10000)]
        assert means[0] >= means[1] >= means[2]


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianDataset(10, ("A", "B"), np.array([[1, 2], [2, 1]]))
        with pytest.raises(ValueError):
            GaussianDataset(10, ("A", "B"), np.array([[1, 0.5], [0.4, 1]]))
        with pytest.raises(ValueError):
            GaussianDataset(10, ("A", "B", "C"), np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]]))

    def test_constant_column(self):
        with pytest.raises(DegenerateCovarianceError):
            GaussianDataset.from_samples(np.c_[np.arange(5.0), np.ones(5)])

    def test_csv_and_correlation_files(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((50, 3))
        path = tmp_path / "d.csv"
        path.write_text("P,Q,R\n" + "\n".join(",".join(repr(float(v)) for v in row) for row in x) + "\n")
        d = GaussianDataset.read_csv(path)
        assert d.names == ("P", "Q", "R") and d.sample_count == 50
        assert np.allclose(d.correlation, np.corrcoef(x, rowvar=False))
        cpath = tmp_path / "d.corr"
        cpath.write_text(d.write_correlation())
        d2 = GaussianDataset.read_correlation(cpath)
        assert d2.sample_count == 50 and d2.names == d.names
        assert np.array_equal(d2.correlation, d.correlation)
