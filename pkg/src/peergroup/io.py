"""CSV/text readers and writers for the pipeline artifacts, plus the run
manifest.  All writers use deterministic formatting so reruns with the same
seeds produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .dpmm import DissimilarityMatrix
from .hier import MergeTree, Partition
from .preprocess import FeatureTable, PercentileTable, VariableSpec


class UserError(ValueError):
    """Bad input or configuration supplied by the caller (exit code 1)."""


def read_feature_csv(path, kinds=None) -> FeatureTable:
    """Read a feature CSV: header row, first column ``id``, numeric body.

    ``kinds`` maps variable name to kind; unnamed variables default to
    continuous.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UserError(f"{path}: empty file")
        if not header or header[0] != "id":
            raise UserError(f"{path}:1: first column must be 'id'")
        names = header[1:]
        if not names:
            raise UserError(f"{path}:1: no variable columns")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise UserError(
                    f"{path}:{lineno}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            if row[0] in ids:
                raise UserError(f"{path}:{lineno}: duplicate id {row[0]!r}")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise UserError(f"{path}:{lineno}: {exc}")
    kinds = kinds or {}
    unknown = set(kinds) - set(names)
    if unknown:
        raise UserError(
            f"kinds config names unknown variable(s): {', '.join(sorted(unknown))}"
        )
    specs = [VariableSpec(n, kinds.get(n, "continuous")) for n in names]
    try:
        return FeatureTable(ids=ids, specs=specs, values=np.array(rows))
    except ValueError as exc:
        raise UserError(f"{path}: {exc}")


def read_kinds_config(path) -> dict[str, str]:
    """Plain-text variable kinds: one ``name=kind`` pair per line."""
    from .preprocess import VARIABLE_KINDS

    out = {}
    path = Path(path)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UserError(f"{path}:{lineno}: expected 'name=kind'")
        name, kind = (part.strip() for part in line.split("=", 1))
        if kind not in VARIABLE_KINDS:
            raise UserError(
                f"{path}:{lineno}: unknown kind token {kind!r}; "
                f"expected one of {VARIABLE_KINDS}"
            )
        out[name] = kind
    return out


def write_feature_csv(path, table: FeatureTable):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + table.names)
        for i, oid in enumerate(table.ids):
            writer.writerow([oid] + [repr(float(v)) for v in table.values[i]])


def write_dissimilarity_csv(path, dm: DissimilarityMatrix):
    """Symmetric matrix, first row/column ids, 6 decimal places."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + dm.ids)
        for i, oid in enumerate(dm.ids):
            writer.writerow([oid] + [format(v, ".6f") for v in dm.d[i]])


def read_dissimilarity_csv(path) -> DissimilarityMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids = header[1:]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise UserError(f"{path}:{lineno}: ragged row")
            rows.append([float(v) for v in row[1:]])
    d = np.array(rows)
    kind = "posterior" if d.min() >= 0.0 and d.max() <= 1.0 else "metric"
    try:
        return DissimilarityMatrix(ids=ids, d=d, kind=kind)
    except ValueError as exc:
        raise UserError(f"{path}: {exc}")


def write_partition_csv(path, partition: Partition):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "cluster"])
        for oid, label in zip(partition.ids, partition.labels):
            writer.writerow([oid, int(label)])


def read_partition_csv(path) -> Partition:
    path = Path(path)
    ids, labels = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            labels.append(int(row[1]))
    try:
        return Partition(ids=ids, labels=np.array(labels))
    except ValueError as exc:
        raise UserError(f"{path}: {exc}")


def write_merge_tree(path, tree: MergeTree):
    """One merge per row: left, right, height, size (hclust encoding)."""
    lines = ["left\tright\theight\tsize"]
    for left, right, height, size in tree.merges:
        lines.append(f"{left}\t{right}\t{repr(height)}\t{size}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_percentile_csv(path, pt: PercentileTable):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["id"] + [f"u:{n}" for n in pt.names] + [f"bin:{n}" for n in pt.names]
        writer.writerow(header)
        for i, oid in enumerate(pt.ids):
            writer.writerow(
                [oid]
                + [format(v, ".6f") for v in pt.u[i]]
                + [int(b) for b in pt.bins[i]]
            )


def read_percentile_csv(path) -> PercentileTable:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = [h[2:] for h in header[1:] if h.startswith("u:")]
        ids, us, bins = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            us.append([float(v) for v in row[1:1 + len(names)]])
            bins.append([int(v) for v in row[1 + len(names):1 + 2 * len(names)]])
    return PercentileTable(ids=ids, names=names, u=np.array(us),
                           bins=np.array(bins))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


class RunManifest:
    """Records inputs, configuration, seeds and outputs of one CLI run."""

    def __init__(self, command: str, config: dict, seeds: dict | None = None):
        self.data = {
            "command": command,
            "config": config,
            "seeds": seeds or {},
            "inputs": {},
            "outputs": [],
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }

    def add_input(self, path):
        self.data["inputs"][str(path)] = sha256_file(path)

    def add_output(self, path):
        self.data["outputs"].append(str(path))

    def write(self, out_dir):
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path
