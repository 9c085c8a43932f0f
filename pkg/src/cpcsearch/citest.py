"""Conditional-independence sources.

Three interchangeable sources answer "is x independent of y given s?":
the exact d-separation oracle, the Fisher-Z partial-correlation test on
Gaussian data, and an explicit table of independence facts.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DegenerateCovarianceError, DegreesOfFreedomError
from .graph import Dag, Node, d_separated

_PIVOT_MIN = 1e-12
_CLAMP = 1.0 - 1e-12


class CiQuery(NamedTuple):
    x: int
    y: int
    s: frozenset[int]

    @classmethod
    def make(cls, x: int, y: int, s: Iterable[int] = ()) -> CiQuery:
        s = frozenset(s)
        if x == y:
            raise ValueError("x and y must differ")
        if x in s or y in s:
            raise ValueError("x and y must not be in the conditioning set")
        return cls(x, y, s) if x < y else cls(y, x, s)


@dataclass(frozen=True)
class CiDecision:
    independent: bool
    p_value: float | None = None
    statistic: float | None = None


class IndependenceSource:
    """Base class: subclasses implement ``_answer`` on a canonical query.

    ``query_count`` is incremented (thread-safely) on every call to ``answer``.
    """

    names: tuple[str, ...]

    def __init__(self, names: Sequence[str]):
        self.names = tuple(names)
        self._index = {n: i for i, n in enumerate(self.names)}
        self._lock = threading.Lock()
        self._count = 0

    @property
    def query_count(self) -> int:
        return self._count

    def node(self, x: Node) -> int:
        if isinstance(x, str):
            try:
                return self._index[x]
            except KeyError:
                raise ValueError(f"unknown variable {x!r}") from None
        if not 0 <= x < len(self.names):
            raise ValueError(f"unknown variable {x!r}")
        return int(x)

    def answer(self, x: Node, y: Node, s: Iterable[Node] = ()) -> CiDecision:
        q = CiQuery.make(self.node(x), self.node(y), (self.node(v) for v in s))
        with self._lock:
            self._count += 1
        return self._answer(q)

    def independent(self, x: Node, y: Node, s: Iterable[Node] = ()) -> bool:
        return self.answer(x, y, s).independent

    def _answer(self, q: CiQuery) -> CiDecision:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# d-separation oracle

class DSeparationOracle(IndependenceSource):
    """Perfect CI oracle: independence is d-separation in a known DAG."""

    def __init__(self, dag: Dag):
        super().__init__(dag.names)
        self.dag = dag

    def _answer(self, q: CiQuery) -> CiDecision:
        return CiDecision(d_separated(self.dag, q.x, q.y, q.s))


def oracle_answer(g: Dag, x: Node, y: Node, s: Iterable[Node] = ()) -> CiDecision:
    return DSeparationOracle(g).answer(x, y, s)


# ---------------------------------------------------------------------------
# fact table

class FactTable(IndependenceSource):
    """Explicit set of independence facts; anything not listed is dependent."""

    def __init__(self, names: Sequence[str], facts: Iterable[tuple[Node, Node, Iterable[Node]]] = ()):
        super().__init__(names)
        self.independencies: set[CiQuery] = set()
        for x, y, s in facts:
            self.add(x, y, s)

    def add(self, x: Node, y: Node, s: Iterable[Node] = ()) -> None:
        self.independencies.add(CiQuery.make(self.node(x), self.node(y), (self.node(v) for v in s)))

    def _answer(self, q: CiQuery) -> CiDecision:
        return CiDecision(q in self.independencies)

    @classmethod
    def parse(cls, text: str, names: Sequence[str] | None = None) -> FactTable:
        """Parse lines of the form ``A _||_ C | B1,B2`` (empty set allowed).

        Without ``names``, variables are numbered in order of first appearance.
        """
        facts = []
        seen: list[str] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            x, sep, rest = line.partition("_||_")
            y, bar, cond = rest.partition("|")
            x, y = x.strip(), y.strip()
            if not sep or not bar or not x or not y or " " in x or " " in y:
                raise ValueError(f"line {lineno}: cannot parse {raw!r}")
            s = [v.strip() for v in cond.split(",") if v.strip()]
            for v in (x, y, *s):
                if v not in seen:
                    seen.append(v)
            facts.append((x, y, s))
        table = cls(names if names is not None else seen)
        for x, y, s in facts:
            table.add(x, y, s)
        return table

    def format(self) -> str:
        lines = []
        for q in sorted(self.independencies, key=lambda q: (q.x, q.y, len(q.s), sorted(q.s))):
            cond = ",".join(self.names[v] for v in sorted(q.s))
            lines.append(f"{self.names[q.x]} _||_ {self.names[q.y]} | {cond}".rstrip())
        return "\n".join(lines) + "\n"


def table_answer(t: FactTable, x: Node, y: Node, s: Iterable[Node] = ()) -> CiDecision:
    return t.answer(x, y, s)


# ---------------------------------------------------------------------------
# Gaussian data and the Fisher-Z test

def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass
class GaussianDataset:
    """Sufficient statistics for Fisher-Z testing: sample size and correlations."""

    sample_count: int
    names: tuple[str, ...]
    correlation: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.names = tuple(self.names)
        c = np.asarray(self.correlation, dtype=float)
        p = len(self.names)
        if c.shape != (p, p):
            raise ValueError(f"correlation matrix shape {c.shape} does not match {p} variables")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")
        if not np.allclose(c, c.T, atol=1e-10) or not np.allclose(np.diag(c), 1.0, atol=1e-10):
            raise ValueError("correlation matrix must be symmetric with unit diagonal")
        if np.any(np.abs(c) > 1.0 + 1e-10):
            raise ValueError("correlations must lie in [-1, 1]")
        if p and np.linalg.eigvalsh(c).min() < -1e-8:
            raise ValueError("correlation matrix is not positive semidefinite")
        self.correlation = c

    @classmethod
    def from_samples(cls, data: np.ndarray, names: Sequence[str] | None = None) -> GaussianDataset:
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ValueError("samples must be a 2-d array (rows x variables)")
        n, p = data.shape
        if names is None:
            names = [f"X{i + 1}" for i in range(p)]
        if n < 2:
            raise ValueError("need at least two samples")
        sd = data.std(axis=0)
        if np.any(sd == 0):
            bad = [names[i] for i in np.flatnonzero(sd == 0)]
            raise DegenerateCovarianceError(f"zero variance in {', '.join(bad)}")
        corr = np.corrcoef(data, rowvar=False).reshape(p, p)
        corr = (corr + corr.T) / 2
        np.fill_diagonal(corr, 1.0)
        return cls(n, tuple(names), np.clip(corr, -1.0, 1.0))

    @classmethod
    def read_csv(cls, path) -> GaussianDataset:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        rows = [r for r in rows if r and any(c.strip() for c in r)]
        if len(rows) < 2:
            raise ValueError(f"{path}: need a header row and at least one sample")
        names = [c.strip() for c in rows[0]]
        try:
            data = np.array([[float(c) for c in r] for r in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
        if data.shape[1] != len(names):
            raise ValueError(f"{path}: ragged rows")
        return cls.from_samples(data, names)

    @classmethod
    def read_correlation(cls, path) -> GaussianDataset:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or not lines[0].startswith("n:"):
            raise ValueError(f"{path}: first line must be 'n: <samples>'")
        n = int(lines[0][2:].strip())
        names = [t.strip() for t in lines[1].replace(",", " ").split()]
        rows = [[float(t) for t in ln.replace(",", " ").split()] for ln in lines[2:]]
        return cls(n, tuple(names), np.array(rows))

    def write_correlation(self) -> str:
        buf = io.StringIO()
        buf.write(f"n: {self.sample_count}\n")
        buf.write(",".join(self.names) + "\n")
        for row in self.correlation:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def partial_correlation(d: GaussianDataset, x: int, y: int, s: Iterable[int] = ()) -> float:
    """Partial correlation of x and y given s via the precision matrix."""
    s = sorted(set(s))
    if x == y or x in s or y in s:
        raise ValueError("ill-formed query")
    idx = [x, y, *s]
    sub = d.correlation[np.ix_(idx, idx)]
    try:
        chol = scipy.linalg.cholesky(sub, lower=True)
    except np.linalg.LinAlgError:
        raise DegenerateCovarianceError(f"singular correlation submatrix over {idx}") from None
    if np.min(np.diag(chol)) ** 2 < _PIVOT_MIN:
        raise DegenerateCovarianceError(f"singular correlation submatrix over {idx}")
    prec = scipy.linalg.cho_solve((chol, True), np.eye(len(idx)))
    r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
    return min(1.0, max(-1.0, r))


def fisher_z(r: float, n: int, k: int) -> tuple[float, float]:
    """(statistic, two-sided p-value) for partial correlation ``r`` with |s| = k."""
    dof = n - k - 3
    if dof < 1:
        raise DegreesOfFreedomError(f"{n} samples cannot support a conditioning set of size {k}")
    r = min(_CLAMP, max(-_CLAMP, r))
    z = 0.5 * math.log((1 + r) / (1 - r))
    stat = math.sqrt(dof) * abs(z)
    # erfc(t/sqrt 2) == 2 * (1 - Phi(t)), without the cancellation
    return stat, math.erfc(stat / math.sqrt(2.0))


def fisher_z_test(d: GaussianDataset, x: int, y: int, s: Iterable[int], alpha: float) -> CiDecision:
    s = frozenset(s)
    stat, p = fisher_z(partial_correlation(d, x, y, s), d.sample_count, len(s))
    # p == alpha counts as dependent
    return CiDecision(p > alpha, p, stat)


class FisherZTest(IndependenceSource):
    def __init__(self, data: GaussianDataset, alpha: float = 0.05):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        super().__init__(data.names)
        self.data = data
        self.alpha = alpha

    def _answer(self, q: CiQuery) -> CiDecision:
        return fisher_z_test(self.data, q.x, q.y, q.s, self.alpha)
