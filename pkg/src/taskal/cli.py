"""Command line entry point: ``taskal {select,simulate,project,report}``.

Failures print a single line ``error kind=<Kind> message="<text>"`` on
stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import FormatError, TaskalError
from .pool import PoolState, load_embeddings, load_index_list, save_index_list
from .samplers import KINDS, ScoreVector, StrategySpec, bvsb_scores, select

log = logging.getLogger("taskal")


def load_scores(path) -> ScoreVector:
    """Per-id uncertainty input: ``id,score`` margins or ``id,p0,...`` probabilities."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        rows = [(lineno, rec) for lineno, rec in enumerate(reader, start=2) if rec]
    margins = header == ["id", "score"]
    probs = (len(header) >= 3 and header[0] == "id"
             and header[1:] == [f"p{k}" for k in range(len(header) - 1)])
    if not (margins or probs):
        raise FormatError("malformed header, expected id,score or id,p0,p1,...", row=1)
    ids, vals = [], []
    for lineno, rec in rows:
        if len(rec) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(rec)}", row=lineno)
        try:
            ids.append(int(rec[0]))
            vals.append([float(c) for c in rec[1:]])
        except ValueError as exc:
            raise FormatError(str(exc), row=lineno) from None
    if margins:
        return ScoreVector(ids, [v[0] for v in vals])
    return bvsb_scores(np.array(vals, dtype=np.float64).reshape(len(vals), len(header) - 1), ids=ids)


def cmd_select(args) -> int:
    emb = load_embeddings(args.embeddings)
    labelled = load_index_list(args.labelled) if args.labelled else []
    pool = PoolState.from_ids(emb.ids, labelled)
    spec = StrategySpec(args.strategy, args.budget, gamma=args.gamma,
                        pca_dims=args.pca_dims, seed=args.seed)
    scores = load_scores(args.scores) if args.scores else None
    picks = select(spec, pool, Z=emb, scores=scores, features=emb)
    save_index_list(picks, args.out)
    log.info("selected %d ids with %s -> %s", len(picks), spec.name, args.out)
    return 0


def cmd_simulate(args) -> int:
    config = harness.load_config(args.config)
    records = harness.run_al_loop(config)
    harness.write_records(records, args.out)
    log.info("wrote %d records -> %s", len(records), args.out)
    return 0


def cmd_project(args) -> int:
    emb = load_embeddings(args.embeddings)
    labelled = load_index_list(args.labelled) if args.labelled else []
    selected = load_index_list(args.selected) if args.selected else []
    pool = PoolState.from_ids(emb.ids, labelled, [i for i in selected if i not in set(labelled)])
    points = harness.export_projection(emb, pool, selected)
    harness.write_projection(points, args.out)
    if not args.no_figure:
        from .plotting import plot_projection
        plot_projection(points, Path(args.out).with_suffix(".png"))
    return 0


def cmd_report(args) -> int:
    records = harness.read_records(args.inp)
    rows = harness.report(records, denominator=args.denominator)
    src = Path(args.inp)
    out = Path(args.out) if args.out else src.with_name(f"{src.stem}_summary.csv")
    harness.write_summary(rows, out)
    print(harness.format_summary(rows))
    if rows and not args.no_figures:
        from .plotting import plot_learning_curves
        for path in plot_learning_curves(rows, out.with_suffix("")):
            log.info("figure -> %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskal", description="Task-aware active-learning sampling and simulation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="pick the next batch to annotate")
    p.add_argument("--embeddings", required=True, help="embedding file (CSV or EMBD binary)")
    p.add_argument("--labelled", help="index list of already-labelled ids")
    p.add_argument("--strategy", required=True, choices=KINDS)
    p.add_argument("--budget", required=True, type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--pca-dims", type=int)
    p.add_argument("--scores", help="CSV of id,score margins or id,p0,... probabilities")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="run a seeded active-learning experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="results CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("project", help="2-D PCA view of a pool with selection status")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labelled")
    p.add_argument("--selected")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("report", help="summarise a results CSV over seeds")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", help="summary CSV (default: <in>_summary.csv)")
    p.add_argument("--denominator", type=int,
                   help="total example count used to turn labelled counts into fractions")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TaskalError, OSError) as exc:
        message = str(exc).replace("\n", " ").replace('"', "'")
        print(f'error kind={type(exc).__name__} message="{message}"', file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
