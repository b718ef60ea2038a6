"""Command-line pipeline: preprocess -> dissim -> cluster -> reallocate ->
explain -> fingerprint.  Every command writes its artifacts plus a
manifest.json into the run directory.

Exit codes: 0 success, 1 user/config error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import dpmm, explain, hier, indices, preprocess, realloc, viz
from .io import (
    RunManifest,
    UserError,
    read_dissimilarity_csv,
    read_feature_csv,
    read_kinds_config,
    read_partition_csv,
    read_percentile_csv,
    write_dissimilarity_csv,
    write_feature_csv,
    write_merge_tree,
    write_partition_csv,
    write_percentile_csv,
)


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("PEERGROUP_RUN_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_standardized_table(path):
    """Read a table previously written by `preprocess` (already scaled)."""
    table = read_feature_csv(path)
    table.standardized = True
    return table


def cmd_preprocess(args):
    out = _out_dir(args)
    manifest = RunManifest("preprocess", {
        "input": args.input, "kinds": args.kinds,
        "vif_threshold": args.vif_threshold,
    })
    manifest.add_input(args.input)
    kinds = {}
    if args.kinds:
        manifest.add_input(args.kinds)
        kinds = read_kinds_config(args.kinds)
    table = read_feature_csv(args.input, kinds)
    try:
        table = preprocess.transform_table(table)
        table = preprocess.standardize(table)
        table, trace = preprocess.vif_prune(table, args.vif_threshold)
    except ValueError as exc:
        raise UserError(str(exc))
    pct = preprocess.percentile_table(table)

    std_path = out / "standardized.csv"
    write_feature_csv(std_path, table)
    trace_path = out / "vif_trace.txt"
    lines = [f"removed\t{name}\tVIF={vif:.4f}" for name, vif in trace.removed]
    lines += [f"note\t{note}" for note in trace.notes]
    lines.append(f"retained\t{','.join(table.names)}")
    trace_path.write_text("\n".join(lines) + "\n")
    pct_path = out / "percentiles.csv"
    write_percentile_csv(pct_path, pct)
    for p in (std_path, trace_path, pct_path):
        manifest.add_output(p)
    manifest.write(out)
    print(f"preprocess: {table.n} rows, {table.d} variables retained "
          f"({len(trace.removed)} removed) -> {out}")


def cmd_dissim(args):
    out = _out_dir(args)
    table = _read_standardized_table(args.table)
    want_diag = args.diagnostics or (not args.euclidean and args.chains >= 2
                                     and not args.no_diagnostics)
    if args.diagnostics and (args.euclidean or args.chains < 2):
        raise UserError("diagnostics require at least 2 sampled chains")
    manifest = RunManifest("dissim", {
        "table": args.table, "euclidean": args.euclidean,
        "iterations": args.iterations, "burn_in": args.burn_in,
        "thin": args.thin, "chains": args.chains,
    }, seeds={"seed": args.seed})
    manifest.add_input(args.table)

    if args.euclidean:
        dm = dpmm.euclidean_dissimilarity(table)
    else:
        config = dpmm.DpmmConfig(iterations=args.iterations,
                                 burn_in=args.burn_in, thin=args.thin,
                                 chains=args.chains, seed=args.seed)
        try:
            config.validate()
        except ValueError as exc:
            raise UserError(str(exc))
        results = dpmm.run_dpmm(table, config)
        dm = dpmm.posterior_dissimilarity(results)
        if want_diag:
            report = dpmm.chain_agreement(results)
            diag_path = out / "diagnostics.txt"
            diag_path.write_text(_format_diagnostics(report))
            series_path = out / "diagnostics_series.csv"
            _write_diag_series(series_path, report, results)
            manifest.add_output(diag_path)
            manifest.add_output(series_path)
    pdm_path = out / "pdm.csv"
    write_dissimilarity_csv(pdm_path, dm)
    manifest.add_output(pdm_path)
    manifest.write(out)
    print(f"dissim: {dm.kind} matrix for {dm.n} observations -> {pdm_path}")


def _format_diagnostics(report) -> str:
    lines = [f"chain agreement (flag threshold {report.threshold})"]
    for pair in sorted(report.pair_max_abs_diff):
        lines.append(
            f"chains {pair[0]}/{pair[1]}: max|dPDM|="
            f"{report.pair_max_abs_diff[pair]:.6f} "
            f"corr={report.pair_correlation[pair]:.6f}"
        )
    for name, diag in (("alpha", report.alpha),
                       ("log_posterior", report.log_posterior)):
        means = ", ".join(f"{m:.4f}" for m in diag.means)
        acs = ", ".join(f"{a:.4f}" for a in diag.lag1_autocorr)
        lines.append(f"{name}: means=[{means}] lag1_autocorr=[{acs}] "
                     f"between/within={diag.between_within_ratio:.6f}")
    lines.append(f"flagged: {report.flagged}")
    return "\n".join(lines) + "\n"


def _write_diag_series(path, report, results):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "chain_a", "chain_b", "x", "y"])
        for (a, b), (xa, xb) in sorted(report.scatter_series.items()):
            for x, y in zip(xa, xb):
                writer.writerow(["pdm_pair", a, b,
                                 format(x, ".6f"), format(y, ".6f")])
        for c, r in enumerate(results):
            for t, v in enumerate(r.alpha_trace):
                writer.writerow(["alpha", c, "", t, format(v, ".6f")])


def cmd_cluster(args):
    out = _out_dir(args)
    dm = read_dissimilarity_csv(args.dissimilarity)
    manifest = RunManifest("cluster", {
        "dissimilarity": args.dissimilarity, "method": args.method,
        "cap": args.cap, "linkage": args.linkage, "index": args.index,
        "k": args.k,
    }, seeds={"seed": args.seed})
    manifest.add_input(args.dissimilarity)
    tree = None
    try:
        if args.method == "kirigami1":
            if args.cap is None:
                raise UserError("kirigami1 requires --cap")
            part = hier.kirigami1(dm.d, args.linkage, args.index, args.cap,
                                  ids=dm.ids)
            tree = hier.agglomerate(dm.d, args.linkage, ids=dm.ids)
        elif args.method == "kirigami2":
            if args.cap is None:
                raise UserError("kirigami2 requires --cap")
            part, tree = hier.kirigami2(dm.d, args.linkage, args.index,
                                        args.cap, ids=dm.ids)
        elif args.method == "pam":
            if args.k is None:
                raise UserError("pam requires --k")
            part = hier.pam(dm.d, args.k, seed=args.seed, ids=dm.ids)
        else:
            raise UserError(f"unknown method {args.method!r}")
    except ValueError as exc:
        raise UserError(str(exc))
    part_path = out / "partition.csv"
    write_partition_csv(part_path, part)
    manifest.add_output(part_path)
    if tree is not None:
        tree_path = out / "tree.txt"
        write_merge_tree(tree_path, tree)
        manifest.add_output(tree_path)
    report_path = out / "indices.csv"
    _write_index_report(report_path, dm.d, part, args)
    manifest.add_output(report_path)
    manifest.write(out)
    print(f"cluster: {part.k} clusters, sizes {part.sizes.tolist()} -> {part_path}")


def _write_index_report(path, d, part, args):
    try:
        report = indices.index_report(d, part.labels)
        row = [args.method, args.linkage, args.cap, report.k,
               format(report.asw, ".6f"), format(report.ch, ".6f"),
               format(report.pearson_gamma, ".6f")]
    except ValueError:
        row = [args.method, args.linkage, args.cap, part.k, "", "", ""]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "linkage", "cap", "k", "asw", "ch", "pg"])
        writer.writerow(row)


def cmd_reallocate(args):
    out = _out_dir(args)
    dm = read_dissimilarity_csv(args.dissimilarity)
    previous = read_partition_csv(args.previous)
    if previous.ids != dm.ids:
        raise UserError("previous partition ids do not match the matrix")
    steps = int(round(0.95 / args.grid_step)) + 1
    grid = [round(i * args.grid_step, 10) for i in range(steps)
            if i * args.grid_step <= 0.95 + 1e-12]
    try:
        config = realloc.ReallocConfig(cap=args.cap, linkage=args.linkage,
                                       index=args.index, p_grid=grid,
                                       pcr_min=args.pcr_min)
        curve = realloc.tradeoff_grid(dm.d, previous, config)
    except ValueError as exc:
        raise UserError(str(exc))
    manifest = RunManifest("reallocate", {
        "dissimilarity": args.dissimilarity, "previous": args.previous,
        "pcr_min": args.pcr_min, "grid_step": args.grid_step,
        "cap": args.cap, "linkage": args.linkage, "index": args.index,
    })
    manifest.add_input(args.dissimilarity)
    manifest.add_input(args.previous)

    parts_dir = out / "partitions"
    parts_dir.mkdir(exist_ok=True)
    rows = []
    for row in curve:
        ppath = ""
        if row.partition is not None:
            ppath = parts_dir / f"partition_p{row.p:.2f}.csv"
            write_partition_csv(ppath, row.partition)
            manifest.add_output(ppath)
        rows.append(row)
    curve_path = out / "tradeoff.csv"
    with curve_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "pcr", "index", "k", "reallocated", "partition"])
        for row in rows:
            writer.writerow([
                format(row.p, ".2f"),
                "" if np.isnan(row.pcr) else format(row.pcr, ".6f"),
                "" if np.isnan(row.index_value) else format(row.index_value, ".6f"),
                row.k, row.reallocated,
                # path relative to the run directory keeps reruns
                # byte-identical regardless of where they land
                "" if row.partition is None
                else f"partitions/partition_p{row.p:.2f}.csv",
            ])
    manifest.add_output(curve_path)

    try:
        chosen = realloc.select_stable(curve, args.pcr_min)
    except ValueError as exc:
        manifest.write(out)
        raise UserError(str(exc))
    chosen_path = out / "chosen_partition.csv"
    write_partition_csv(chosen_path, chosen.partition)
    summary_path = out / "summary.txt"
    summary_path.write_text(
        f"chosen p={chosen.p:.2f}\n"
        f"PCR={chosen.pcr:.6f} (floor {args.pcr_min})\n"
        f"{args.index} index={chosen.index_value:.6f}\n"
        f"clusters={chosen.k}\n"
        f"reallocated observations={chosen.reallocated}\n"
    )
    ok = [r for r in rows if r.error is None]
    svg_path = out / "tradeoff.svg"
    svg_path.write_text(viz.render_curves(
        [{"label": f"{args.index} vs PCR",
          "x": [r.pcr for r in ok], "y": [r.index_value for r in ok]}],
        guidelines=[
            {"orientation": "v", "value": chosen.pcr, "style": "dashed"},
            {"orientation": "h", "value": chosen.index_value, "style": "dashed"},
        ],
        xlabel="PCR", ylabel=f"{args.index} index",
    ))
    for p in (chosen_path, summary_path, svg_path):
        manifest.add_output(p)
    manifest.write(out)
    print(f"reallocate: chose p={chosen.p:.2f} "
          f"(PCR={chosen.pcr:.3f}, {args.index}={chosen.index_value:.3f})")


def cmd_explain(args):
    out = _out_dir(args)
    table = _read_standardized_table(args.table)
    part = read_partition_csv(args.partition)
    if part.ids != table.ids:
        raise UserError("partition ids do not match the table")
    manifest = RunManifest("explain", {
        "table": args.table, "partition": args.partition, "pairs": args.pairs,
    }, seeds={"seed": args.seed})
    manifest.add_input(args.table)
    manifest.add_input(args.partition)

    pca_res = explain.pca(table)
    pca_path = out / "pca_scores.csv"
    with pca_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"pc{j + 1}" for j in range(table.d)])
        for i, oid in enumerate(table.ids):
            writer.writerow([oid] + [format(v, ".6f") for v in pca_res.scores[i]])
    manifest.add_output(pca_path)

    try:
        report = explain.rf_importance(table, part, seed=args.seed)
    except ValueError as exc:
        raise UserError(str(exc))
    imp_path = out / "importance.csv"
    _write_importance(imp_path, report)
    manifest.add_output(imp_path)

    disc_rows = []
    if part.k == 2:
        disc_rows.append(("1-2", explain.discriminate(table, part)))
    if args.pairs and part.k > 2:
        from dataclasses import replace

        pair_reports = explain.pairwise_importance(table, part, seed=args.seed)
        for (a, b), rep in sorted(pair_reports.items()):
            ppath = out / f"importance_pair_{a}_{b}.csv"
            _write_importance(ppath, rep)
            manifest.add_output(ppath)
            mask = (part.labels == a) | (part.labels == b)
            idx = np.nonzero(mask)[0]
            sub = replace(table, ids=[table.ids[i] for i in idx],
                          values=table.values[idx])
            disc_rows.append(
                (f"{a}-{b}", explain.discriminate(sub, part.labels[idx]))
            )
    if disc_rows:
        disc_path = out / "discrimination.csv"
        with disc_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair", "lda_accuracy", "md_accuracy",
                             "qda_accuracy", "shrinkage"])
            for name, rep in disc_rows:
                writer.writerow([name, format(rep.lda_accuracy, ".4f"),
                                 format(rep.md_accuracy, ".4f"),
                                 format(rep.qda_accuracy, ".4f"),
                                 rep.shrinkage_applied])
        manifest.add_output(disc_path)
    manifest.write(out)
    print(f"explain: importance over {table.d} variables "
          f"({report.trees_used} trees, stability {report.stability:.3f}) -> {out}")


def _write_importance(path, report):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "importance", "kind", "trees", "stable"])
        for name, value in report.ranking:
            writer.writerow([name, format(value, ".6f"),
                             report.importance_kind, report.trees_used,
                             report.stable])


def cmd_fingerprint(args):
    out = _out_dir(args)
    pct = read_percentile_csv(args.percentiles)
    part = read_partition_csv(args.partition)
    if pct.ids != part.ids:
        raise UserError("percentile table ids do not match the partition")
    manifest = RunManifest("fingerprint", {
        "percentiles": args.percentiles, "partition": args.partition,
        "top_k": args.top_k, "highlight": args.highlight,
    }, seeds={"seed": args.seed})
    manifest.add_input(args.percentiles)
    manifest.add_input(args.partition)

    variables = list(pct.names)
    if args.top_k is not None:
        if args.table is None:
            raise UserError("--top-k requires --table to rank variables")
        manifest.add_input(args.table)
        table = _read_standardized_table(args.table)
        if table.ids != part.ids:
            raise UserError("table ids do not match the partition")
        report = explain.rf_importance(table, part, seed=args.seed)
        ranked = [name for name, _ in report.ranking if name in pct.names]
        variables = ranked[: args.top_k]
    try:
        table_fp = viz.fingerprint_table(pct, part, variables,
                                         highlight=args.highlight)
    except ValueError as exc:
        raise UserError(str(exc))
    svg_path = out / "fingerprint.svg"
    svg_path.write_text(viz.render_fingerprint(table_fp))
    csv_path = out / "fingerprint.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "variable", "bin", "proportion"])
        for ci, c in enumerate(table_fp.clusters):
            for vi, v in enumerate(table_fp.variables):
                for b in range(5):
                    writer.writerow([c, v, b + 1,
                                     format(table_fp.proportions[ci, vi, b],
                                            ".6f")])
    manifest.add_output(svg_path)
    manifest.add_output(csv_path)
    manifest.write(out)
    print(f"fingerprint: {len(variables)} variables x "
          f"{len(table_fp.clusters)} clusters -> {svg_path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peergroup",
        description="Business-constrained peer-group clustering pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="transform, scale and VIF-prune")
    p.add_argument("input", help="input CSV (id + numeric columns)")
    p.add_argument("--kinds", help="name=kind config file")
    p.add_argument("--vif-threshold", type=float, default=10.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("dissim", help="posterior or Euclidean dissimilarities")
    p.add_argument("table", help="standardized feature CSV")
    p.add_argument("--euclidean", action="store_true")
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diagnostics", action="store_true",
                   help="force convergence diagnostics")
    p.add_argument("--no-diagnostics", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dissim)

    p = sub.add_parser("cluster", help="constrained or baseline clustering")
    p.add_argument("dissimilarity", help="dissimilarity CSV")
    p.add_argument("--method", choices=["kirigami1", "kirigami2", "pam"],
                   required=True)
    p.add_argument("--cap", type=int)
    p.add_argument("--linkage", choices=list(hier.LINKAGE_METHODS),
                   default="average")
    p.add_argument("--index", choices=list(indices.INDEX_NAMES), default="ch")
    p.add_argument("--k", type=int, help="cluster count (pam only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("reallocate", help="stability-constrained update")
    p.add_argument("dissimilarity", help="new-period dissimilarity CSV")
    p.add_argument("previous", help="previous partition CSV")
    p.add_argument("--pcr-min", type=float, default=0.90)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--cap", type=int, required=True)
    p.add_argument("--linkage", choices=list(hier.LINKAGE_METHODS),
                   default="ward")
    p.add_argument("--index", choices=list(indices.INDEX_NAMES), default="ch")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reallocate)

    p = sub.add_parser("explain", help="variable importance and discrimination")
    p.add_argument("table", help="standardized feature CSV")
    p.add_argument("partition", help="partition CSV")
    p.add_argument("--pairs", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("fingerprint", help="quintile fingerprint plot")
    p.add_argument("percentiles", help="percentile CSV from preprocess")
    p.add_argument("partition", help="partition CSV")
    p.add_argument("--top-k", type=int)
    p.add_argument("--table", help="standardized CSV (needed for --top-k)")
    p.add_argument("--highlight", help="observation id to mark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fingerprint)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
