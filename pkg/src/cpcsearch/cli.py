"""Command-line entry point: ``cpcsearch {discover,simulate,benchmark,oracle-check}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import evaluate
from .citest import DSeparationOracle, FisherZTest, GaussianDataset
from .errors import DegenerateCovarianceError, DegreesOfFreedomError
from .graph import ARROW, dag_to_pattern, format_graph, parse_dag, represents
from .search import SearchConfig, run_search
from .simulate import GraphSpec, format_csv, format_sem, random_dag, random_sem, sample_sem

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
REPRESENT_CAP = 8


class UsageError(Exception):
    pass


def parse_range(text: str) -> list[int]:
    """``5..100:5`` (inclusive when aligned), ``5..25``, ``5,10,20`` or ``7``."""
    try:
        if ".." in text:
            lo, _, rest = text.partition("..")
            hi, _, step = rest.partition(":")
            lo, hi, step = int(lo), int(hi), int(step or 1)
            if step < 1 or hi < lo:
                raise ValueError
            vals = list(range(lo, hi + 1, step))
        else:
            vals = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; expected start..end:step") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; values must be positive")
    return vals


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def load_dataset(path: str) -> GaussianDataset:
    head = _read_text(path).lstrip()
    try:
        if head.startswith("n:"):
            return GaussianDataset.read_correlation(path)
        return GaussianDataset.read_csv(path)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _summary(g, res) -> str:
    edges = g.edges()
    arrows = sum((ma is ARROW) + (mb is ARROW) for _, _, ma, mb in edges)
    return (
        f"edges: {len(edges)}\narrowheads: {arrows}\nunderlines: {len(g.underlines)}\n"
        f"ci queries: {res.ci_queries_used}\nelapsed: {res.elapsed * 1000:.1f} ms"
    )


def cmd_discover(args) -> int:
    data = load_dataset(args.data)
    cfg = SearchConfig(alpha=args.alpha, max_depth=args.max_depth, variant=args.algorithm)
    res = run_search(FisherZTest(data, args.alpha), None, cfg)
    if args.out:
        _write(args.out, format_graph(res.graph))
    else:
        sys.stdout.write(format_graph(res.graph))
    print(_summary(res.graph, res))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.n < 4:
        raise UsageError("--n must be at least 4")
    if args.dimension < 1:
        raise UsageError("--dimension must be positive")
    dag_seed, sem_seed, data_seed = evaluate.replicate_seeds(args.seed, args.density, args.dimension, 0)
    dag = random_dag(GraphSpec.for_density(args.dimension, args.density), dag_seed)
    sem = random_sem(dag, sem_seed)
    data = sample_sem(sem, args.n, data_seed)
    _write(f"{args.out_prefix}.dag", format_graph(dag))
    _write(f"{args.out_prefix}.sem", format_sem(sem))
    _write(f"{args.out_prefix}.csv", format_csv(data, dag.names))
    print(f"wrote {args.out_prefix}.dag/.sem/.csv: {len(dag)} nodes, {len(dag.edges)} edges, {args.n} rows")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.replicates < 1 or args.n < 4:
        raise UsageError("--replicates must be >= 1 and --n >= 4")
    densities = evaluate.DENSITIES if args.density == "both" else (args.density,)
    records = []
    for dens in densities:
        cfg = evaluate.BenchmarkConfig(
            dimensions=tuple(args.dims), density=dens, replicates=args.replicates,
            sample_size=args.n, alpha=args.alpha, base_seed=args.seed,
        )
        records += evaluate.run_benchmark(cfg)
    rows = evaluate.aggregate(records)
    _write(args.out, evaluate.records_csv(records, timing=args.timing))
    if args.aggregate:
        _write(args.aggregate, evaluate.aggregate_csv(rows, timing=args.timing))
    n_failed = sum(r.failed for r in records)
    print(f"{len(records)} records ({n_failed} failed), {len(rows)} aggregate rows")
    for row in rows:
        m = row.means
        line = (
            f"d={row.dimension:<4d} {row.density:<8s} {row.algorithm:<4s}"
            f" arrow_fp={m['arrow_fp']:.2f} arrow_fn={m['arrow_fn']:.2f}"
            f" adj_fp={m['adjacency_fp']:.2f} adj_fn={m['adjacency_fn']:.2f}"
        )
        if row.algorithm == "cpc":
            line += f" unfaithful={row.percent_unfaithful:.3f}"
        if args.timing:
            line += f" elapsed={m['elapsed'] * 1000:.1f}ms"
        print(line)
    if any(row.succeeded == 0 for row in rows):
        print("error: some cells have no successful replicate", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    try:
        dag = parse_dag(_read_text(args.dag))
    except ValueError as exc:
        raise UsageError(f"{args.dag}: {exc}") from None
    res = run_search(DSeparationOracle(dag), None, SearchConfig(variant=args.algorithm))
    if args.out:
        _write(args.out, format_graph(res.graph))
    else:
        sys.stdout.write(format_graph(res.graph))
    match = res.graph == dag_to_pattern(dag)
    rep = str(represents(res.graph, dag)).lower() if len(dag) <= REPRESENT_CAP else "skipped"
    print(f"pattern match: {str(match).lower()}; represents truth: {rep}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpcsearch", description="PC / Conservative PC causal search")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("discover", help="run PC or CPC on a data file with Fisher-Z tests")
    d.add_argument("data", help="CSV (header row of names) or correlation file ('n: <samples>' first)")
    d.add_argument("--algorithm", choices=("pc", "cpc"), default="cpc")
    d.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    d.add_argument("--max-depth", type=int, default=None, help="cap on conditioning-set size")
    d.add_argument("--out", help="output graph file (default: stdout)")
    d.set_defaults(func=cmd_discover)

    s = sub.add_parser("simulate", help="draw a random DAG, SEM and Gaussian data set")
    s.add_argument("--dimension", type=int, required=True, help="number of variables")
    s.add_argument("--density", choices=evaluate.DENSITIES, default="sparser",
                   help="sparser: at most d edges; denser: at most 2d")
    s.add_argument("--n", type=int, default=1000, help="sample size (default 1000)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-prefix", required=True, help="writes PREFIX.dag, PREFIX.sem, PREFIX.csv")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="PC vs CPC accuracy/runtime over random models")
    b.add_argument("--dims", type=parse_range, default=parse_range("5..100:5"),
                   help="dimensions as start..end:step (default 5..100:5)")
    b.add_argument("--density", choices=(*evaluate.DENSITIES, "both"), default="both")
    b.add_argument("--replicates", type=int, default=5)
    b.add_argument("--n", type=int, default=1000, help="sample size per data set")
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--seed", type=int, default=0, help="base seed")
    b.add_argument("--out", default="benchmark.csv", help="per-replicate CSV")
    b.add_argument("--aggregate", help="per-dimension means CSV")
    b.add_argument("--timing", action="store_true",
                   help="fill elapsed_ms columns (makes output run-dependent)")
    b.set_defaults(func=cmd_benchmark)

    o = sub.add_parser("oracle-check", help="run a search with the d-separation oracle of a DAG")
    o.add_argument("--dag", required=True, help="DAG in graph text format")
    o.add_argument("--algorithm", choices=("pc", "cpc"), default="cpc")
    o.add_argument("--out", help="output graph file (default: stdout)")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if hasattr(args, "alpha") and not 0 < args.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegreesOfFreedomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateCovarianceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
