"""Error accounting against the true pattern, and the benchmark driver."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .citest import FisherZTest, IndependenceSource
from .errors import CapacityError, DegenerateCovarianceError, DegreesOfFreedomError, InconsistentStateError
from .graph import MixedGraph, Triple, TripleClass, dag_to_pattern, unshielded_triples
from .search import SearchConfig, run_search
from .simulate import GraphSpec, random_dag, random_sem, simulate_data

log = logging.getLogger(__name__)

DENSITIES = ("sparser", "denser")
ALGORITHMS = ("pc", "cpc")


def _check_same_nodes(truth: MixedGraph, output: MixedGraph) -> None:
    if truth.names != output.names:
        raise ValueError("graphs are over different node lists")


def count_arrow_errors(truth: MixedGraph, output: MixedGraph) -> tuple[int, int]:
    """(fp, fn) over arrowheads, one check per edge endpoint."""
    _check_same_nodes(truth, output)
    fp = fn = 0
    for a, b in truth.skeleton() | output.skeleton():
        for u, v in ((a, b), (b, a)):
            t, o = truth.has_arrow_at(u, v), output.has_arrow_at(u, v)
            fn += t and not o
            fp += o and not t
    return fp, fn


def count_adjacency_errors(truth: MixedGraph, output: MixedGraph) -> tuple[int, int]:
    _check_same_nodes(truth, output)
    t, o = truth.skeleton(), output.skeleton()
    return len(o - t), len(t - o)


def triple_classes(g: MixedGraph) -> dict[Triple, TripleClass]:
    out = {}
    for t in unshielded_triples(g):
        if t in g.underlines:
            out[t] = TripleClass.UNFAITHFUL
        elif g.is_collider(t):
            out[t] = TripleClass.COLLIDER
        else:
            out[t] = TripleClass.NONCOLLIDER
    return out


def count_triple_errors(truth: MixedGraph, output: MixedGraph) -> tuple[int, int, int, int]:
    """(collider_fp, collider_fn, noncollider_fp, noncollider_fn).

    Underlined output triples count toward none of the four.
    """
    _check_same_nodes(truth, output)
    tc, oc = triple_classes(truth), triple_classes(output)
    counts = []
    for kind in (TripleClass.COLLIDER, TripleClass.NONCOLLIDER):
        fp = sum(1 for t, c in oc.items() if c is kind and tc.get(t) is not kind)
        fn = sum(
            1 for t, c in tc.items()
            if c is kind and oc.get(t) is not kind and oc.get(t) is not TripleClass.UNFAITHFUL
        )
        counts += [fp, fn]
    return tuple(counts)


def percent_unfaithful(output: MixedGraph) -> float:
    total = len(unshielded_triples(output))
    return len(output.underlines) / total if total else 0.0


@dataclass
class ErrorCounts:
    arrow_fp: int = 0
    arrow_fn: int = 0
    adjacency_fp: int = 0
    adjacency_fn: int = 0
    collider_fp: int = 0
    collider_fn: int = 0
    noncollider_fp: int = 0
    noncollider_fn: int = 0
    unfaithful_count: int = 0
    unshielded_total: int = 0
    elapsed: float = 0.0  # seconds

    @property
    def percent_unfaithful(self) -> float:
        return self.unfaithful_count / self.unshielded_total if self.unshielded_total else 0.0


def compare(truth: MixedGraph, output: MixedGraph, elapsed: float = 0.0) -> ErrorCounts:
    afp, afn = count_arrow_errors(truth, output)
    jfp, jfn = count_adjacency_errors(truth, output)
    cfp, cfn, nfp, nfn = count_triple_errors(truth, output)
    return ErrorCounts(
        afp, afn, jfp, jfn, cfp, cfn, nfp, nfn,
        unfaithful_count=len(output.underlines),
        unshielded_total=len(unshielded_triples(output)),
        elapsed=elapsed,
    )


# ---------------------------------------------------------------------------
# SGS-style exhaustive triple classification (test oracle)

SGS_NODE_CAP = 10


def sgs_triple_oracle(src: IndependenceSource, nodes: Sequence[str], t: Triple) -> TripleClass:
    """Classify ``t`` by testing a and c against every subset of the other nodes."""
    if len(nodes) > SGS_NODE_CAP:
        raise CapacityError(f"{len(nodes)} nodes exceeds the SGS cap of {SGS_NODE_CAP}")
    m = [src.node(n) for n in nodes]
    rest = [v for v in range(len(nodes)) if v not in (t.a, t.c)]
    with_b = without_b = False
    for k in range(len(rest) + 1):
        for s in itertools.combinations(rest, k):
            if src.answer(m[t.a], m[t.c], [m[v] for v in s]).independent:
                if t.b in s:
                    with_b = True
                else:
                    without_b = True
    if not (with_b or without_b):
        raise InconsistentStateError("endpoints of the triple are never independent")
    if with_b and without_b:
        return TripleClass.UNFAITHFUL
    return TripleClass.NONCOLLIDER if with_b else TripleClass.COLLIDER


# ---------------------------------------------------------------------------
# benchmark

@dataclass(frozen=True)
class BenchmarkConfig:
    dimensions: tuple[int, ...]
    density: str = "sparser"
    replicates: int = 5
    sample_size: int = 1000
    alpha: float = 0.05
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        if not self.dimensions or any(d < 1 for d in self.dimensions):
            raise ValueError("dimensions must be positive")
        if self.density not in DENSITIES:
            raise ValueError(f"density must be one of {DENSITIES}")
        if self.replicates < 1 or self.sample_size < 4:
            raise ValueError("need replicates >= 1 and sample_size >= 4")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class BenchmarkRecord:
    dimension: int
    density: str
    replicate: int
    algorithm: str
    counts: ErrorCounts = field(default_factory=ErrorCounts)
    failed: bool = False


def replicate_seeds(base_seed: int, density: str, dimension: int, replicate: int) -> tuple[int, int, int]:
    """Independent (dag, sem, data) seeds derived from the base seed."""
    ss = np.random.SeedSequence([base_seed, DENSITIES.index(density), dimension, replicate])
    return tuple(int(v) for v in ss.generate_state(3, dtype=np.uint64))


def run_replicate(cfg: BenchmarkConfig, dimension: int, replicate: int) -> list[BenchmarkRecord]:
    dag_seed, sem_seed, data_seed = replicate_seeds(cfg.base_seed, cfg.density, dimension, replicate)
    dag = random_dag(GraphSpec.for_density(dimension, cfg.density), dag_seed)
    truth = dag_to_pattern(dag)
    records = []
    try:
        data = simulate_data(random_sem(dag, sem_seed), cfg.sample_size, data_seed)
        for alg in ALGORITHMS:
            src = FisherZTest(data, cfg.alpha)
            res = run_search(src, None, SearchConfig(alpha=cfg.alpha, variant=alg))
            records.append(BenchmarkRecord(
                dimension, cfg.density, replicate, alg, compare(truth, res.graph, res.elapsed)
            ))
    except (DegenerateCovarianceError, DegreesOfFreedomError) as exc:
        log.warning("replicate d=%d r=%d failed: %s", dimension, replicate, exc)
        return [BenchmarkRecord(dimension, cfg.density, replicate, alg, failed=True) for alg in ALGORITHMS]
    return records


def run_benchmark(cfg: BenchmarkConfig) -> list[BenchmarkRecord]:
    records = []
    for d in cfg.dimensions:
        for r in range(cfg.replicates):
            records.extend(run_replicate(cfg, d, r))
    return records


_COUNT_FIELDS = [f.name for f in fields(ErrorCounts)]


@dataclass
class AggregateRow:
    dimension: int
    density: str
    algorithm: str
    means: dict[str, float]
    succeeded: int
    failed: int
    percent_unfaithful: float


def aggregate(records: Iterable[BenchmarkRecord]) -> list[AggregateRow]:
    """Means of every count, grouped by (dimension, density, algorithm).

    Failed replicates are excluded from the means and reported as a count.
    ``percent_unfaithful`` is the mean of the per-replicate percentages.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple, list[BenchmarkRecord]] = defaultdict(list)
    for r in records:
        groups[(r.dimension, DENSITIES.index(r.density), ALGORITHMS.index(r.algorithm))].append(r)
    rows = []
    for (d, dens, alg), rs in sorted(groups.items()):
        ok = [r for r in rs if not r.failed]
        if ok:
            means = {f: float(np.mean([getattr(r.counts, f) for r in ok])) for f in _COUNT_FIELDS}
            pct = float(np.mean([r.counts.percent_unfaithful for r in ok]))
        else:
            means = {f: math.nan for f in _COUNT_FIELDS}
            pct = math.nan
        rows.append(AggregateRow(d, DENSITIES[dens], ALGORITHMS[alg], means, len(ok), len(rs) - len(ok), pct))
    return rows


# ---------------------------------------------------------------------------
# CSV output

RECORD_HEADER = [
    "dimension", "density", "algorithm", "replicate",
    "arrow_fp", "arrow_fn", "adj_fp", "adj_fn",
    "collider_fp", "collider_fn", "noncollider_fp", "noncollider_fn",
    "unfaithful", "unshielded_total", "elapsed_ms", "failed",
]
AGGREGATE_HEADER = [h for h in RECORD_HEADER if h != "replicate"]

_CSV_FIELDS = [
    "arrow_fp", "arrow_fn", "adjacency_fp", "adjacency_fn",
    "collider_fp", "collider_fn", "noncollider_fp", "noncollider_fn",
    "unfaithful_count", "unshielded_total",
]


def records_csv(records: Iterable[BenchmarkRecord], timing: bool = False) -> str:
    """Per-replicate CSV.  Without ``timing`` the elapsed column is left blank
    so that the file depends only on the configuration and seed."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    key = lambda r: (r.dimension, DENSITIES.index(r.density), ALGORITHMS.index(r.algorithm), r.replicate)
    for r in sorted(records, key=key):
        if r.failed:
            vals = [""] * len(_CSV_FIELDS) + [""]
        else:
            c = asdict(r.counts)
            vals = [c[f] for f in _CSV_FIELDS]
            vals.append(f"{r.counts.elapsed * 1000:.3f}" if timing else "")
        w.writerow([r.dimension, r.density, r.algorithm, r.replicate, *vals, int(r.failed)])
    return buf.getvalue()


def aggregate_csv(rows: Iterable[AggregateRow], timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for row in rows:
        vals = ["" if math.isnan(row.means[f]) else f"{row.means[f]:.4f}" for f in _CSV_FIELDS]
        el = row.means["elapsed"]
        vals.append(f"{el * 1000:.4f}" if timing and not math.isnan(el) else "")
        w.writerow([row.dimension, row.density, row.algorithm, *vals, row.failed])
    return buf.getvalue()
