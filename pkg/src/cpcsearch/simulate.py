"""Random DAGs, linear-Gaussian SEMs and forward sampling.

All randomness goes through numpy's ``default_rng`` (PCG64) seeded with the
caller's 64-bit seed, so every generator is a pure function of its inputs.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np

from .citest import GaussianDataset
from .graph import Dag, format_graph, parse_dag

STRONG_RANGE = (0.5, 1.5)
WEAK_BOUND = 0.001
WEAK_PROB = 0.05
MAX_DEGREE = 10


@dataclass(frozen=True)
class GraphSpec:
    dimension: int
    max_edges: int
    max_degree: int = MAX_DEGREE

    def __post_init__(self):
        if self.dimension < 1 or self.max_edges < 0 or self.max_degree < 1:
            raise ValueError(f"invalid graph spec {self}")

    @classmethod
    def for_density(cls, dimension: int, density: str) -> GraphSpec:
        """``sparser`` allows at most d edges, ``denser`` at most 2d."""
        factor = {"sparser": 1, "denser": 2}.get(density)
        if factor is None:
            raise ValueError(f"unknown density {density!r}")
        return cls(dimension, factor * dimension, MAX_DEGREE)


def node_names(d: int) -> list[str]:
    return [f"X{i + 1}" for i in range(d)]


def random_dag(spec: GraphSpec, seed: int, method: str = "markov", steps: int | None = None) -> Dag:
    """Random DAG with at most ``max_edges`` edges and degrees <= ``max_degree``.

    ``method="markov"`` (default) runs the add/remove-edge Markov chain whose
    stationary law is uniform over all DAGs meeting both caps; ``steps``
    defaults to ``max(2000, 20 * d * d)``.  ``method="order"`` is the cheaper
    order-based approximation, see :func:`random_dag_ordered`.
    """
    if method == "order":
        return random_dag_ordered(spec, seed)
    if method != "markov":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    d = spec.dimension
    cap = min(spec.max_edges, d * (d - 1) // 2)
    if d < 2 or cap == 0:
        return Dag(node_names(d), [])
    if steps is None:
        steps = max(2000, 20 * d * d)
    children: list[set[int]] = [set() for _ in range(d)]
    degree = [0] * d
    n_edges = 0
    pairs = rng.integers(0, d, size=(steps, 2))
    # proposals with i == j are lazy steps; they keep the chain aperiodic
    for i, j in pairs.tolist():
        if i == j:
            continue
        if j in children[i]:
            children[i].discard(j)
            degree[i] -= 1
            degree[j] -= 1
            n_edges -= 1
        elif (
            n_edges < cap
            and degree[i] < spec.max_degree
            and degree[j] < spec.max_degree
            and i not in children[j]
            and not _reaches(children, j, i)
        ):
            children[i].add(j)
            degree[i] += 1
            degree[j] += 1
            n_edges += 1
    return Dag(node_names(d), [(p, c) for p in range(d) for c in children[p]])


def _reaches(children: list[set[int]], src: int, dst: int) -> bool:
    stack, seen = [src], {src}
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for c in children[v]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def random_dag_ordered(spec: GraphSpec, seed: int) -> Dag:
    """Order-based approximation to a uniform capped DAG.

    A random permutation fixes the causal order, the edge count is uniform
    on ``0..max_edges``, and edges are drawn as uniform order-respecting
    pairs.  Draws that duplicate an edge or break the degree cap are
    rejected; after ``10 * max_edges`` rejections the graph is returned
    with fewer edges.
    """
    rng = np.random.default_rng(seed)
    d = spec.dimension
    cap = min(spec.max_edges, d * (d - 1) // 2)
    order = rng.permutation(d)
    target = int(rng.integers(0, cap + 1))
    edges: set[tuple[int, int]] = set()
    degree = [0] * d
    rejects = 0
    while len(edges) < target and rejects < 10 * spec.max_edges:
        i, j = sorted(int(v) for v in rng.choice(d, size=2, replace=False))
        p, c = int(order[i]), int(order[j])
        if (p, c) in edges or degree[p] >= spec.max_degree or degree[c] >= spec.max_degree:
            rejects += 1
            continue
        edges.add((p, c))
        degree[p] += 1
        degree[c] += 1
    return Dag(node_names(d), edges)


@dataclass
class Sem:
    """Linear SEM: each node is a weighted sum of its parents plus Gaussian noise."""

    dag: Dag
    coefficients: dict[tuple[int, int], float]
    noise_std: list[float]

    def __post_init__(self):
        if set(self.coefficients) != set(self.dag.edges):
            raise ValueError("coefficients must cover exactly the DAG's edges")
        if len(self.noise_std) != len(self.dag) or any(s <= 0 for s in self.noise_std):
            raise ValueError("need one strictly positive noise std per node")

    def coefficient_matrix(self) -> np.ndarray:
        """``B[child, parent]`` = edge coefficient."""
        b = np.zeros((len(self.dag), len(self.dag)))
        for (p, c), w in self.coefficients.items():
            b[c, p] = w
        return b


def draw_coefficient(rng: np.random.Generator) -> float:
    if rng.random() < WEAK_PROB:
        return float(rng.uniform(-WEAK_BOUND, WEAK_BOUND))
    lo, hi = STRONG_RANGE
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * float(rng.uniform(lo, hi))


def random_sem(g: Dag, seed: int) -> Sem:
    rng = np.random.default_rng(seed)
    coefs = {e: draw_coefficient(rng) for e in sorted(g.edges)}
    return Sem(g, coefs, [1.0] * len(g))


def sample_sem(m: Sem, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. rows drawn by forward substitution in topological order."""
    rng = np.random.default_rng(seed)
    p = len(m.dag)
    x = np.zeros((n, p))
    noise = rng.standard_normal((n, p))
    for v in m.dag.topological_order():
        col = m.noise_std[v] * noise[:, v]
        for u in sorted(m.dag.parents(v)):
            col = col + m.coefficients[(u, v)] * x[:, u]
        x[:, v] = col
    return x


def simulate_data(m: Sem, n: int, seed: int) -> GaussianDataset:
    if n < 4:
        raise ValueError("need at least 4 samples")
    return GaussianDataset.from_samples(sample_sem(m, n, seed), m.dag.names)


def population_correlation(m: Sem) -> np.ndarray:
    p = len(m.dag)
    b = m.coefficient_matrix()
    order = list(m.dag.topological_order())
    # strictly lower triangular in causal order, so I - B is unit triangular
    assert not np.triu(b[np.ix_(order, order)]).any()
    inv = np.linalg.inv(np.eye(p) - b)
    cov = inv @ np.diag(np.square(m.noise_std)) @ inv.T
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr


# ---------------------------------------------------------------------------
# file formats

def format_sem(m: Sem) -> str:
    names = m.dag.names
    out = [format_graph(m.dag).rstrip("\n")]
    for (p, c) in sorted(m.coefficients, key=lambda e: (names[e[0]], names[e[1]])):
        out.append(f"coef: {names[p]}->{names[c]} = {m.coefficients[(p, c)]!r}")
    for v, s in enumerate(m.noise_std):
        out.append(f"noise: {names[v]} = {s!r}")
    return "\n".join(out) + "\n"


_COEF = re.compile(r"^coef:\s*(\S+?)\s*->\s*(\S+)\s*=\s*(\S+)$")
_NOISE = re.compile(r"^noise:\s*(\S+)\s*=\s*(\S+)$")


def parse_sem(text: str) -> Sem:
    graph_lines, coefs, noise = [], [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line.startswith("coef:"):
            mt = _COEF.match(line)
            if not mt:
                raise ValueError(f"cannot parse {raw!r}")
            coefs.append((mt[1], mt[2], float(mt[3])))
        elif line.startswith("noise:"):
            mt = _NOISE.match(line)
            if not mt:
                raise ValueError(f"cannot parse {raw!r}")
            noise.append((mt[1], float(mt[2])))
        else:
            graph_lines.append(raw)
    dag = parse_dag("\n".join(graph_lines))
    std = [1.0] * len(dag)
    for name, s in noise:
        std[dag.node(name)] = s
    return Sem(dag, {(dag.node(a), dag.node(b)): w for a, b, w in coefs}, std)


def format_csv(data: np.ndarray, names) -> str:
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in data:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
