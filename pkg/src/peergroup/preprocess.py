"""Variable transforms, standardization, VIF pruning and percentile tables.

Turns raw per-organisation columns into the transformed, centred and scaled
matrix consumed by the clustering stages, and produces rank-based percentile
(PIT) representations used for the non-technical visualisations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

VARIABLE_KINDS = ("continuous", "proportion", "skewed_positive")


@dataclass(frozen=True)
class VariableSpec:
    """A named column and the transform family it requires."""

    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in VARIABLE_KINDS:
            raise ValueError(
                f"unknown variable kind {self.kind!r} for {self.name!r}; "
                f"expected one of {VARIABLE_KINDS}"
            )


@dataclass
class FeatureTable:
    """Per-organisation continuous data with ids and variable specs.

    ``values`` is an (n, d) float array with no missing values.  When
    ``standardized`` is true, ``centers``/``scales`` hold the per-column
    parameters so the original scale can be recovered.
    """

    ids: list[str]
    specs: list[VariableSpec]
    values: np.ndarray
    standardized: bool = False
    centers: np.ndarray | None = None
    scales: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n, d = self.values.shape
        if len(self.ids) != n:
            raise ValueError("ids length does not match number of rows")
        if len(self.specs) != d:
            raise ValueError("specs length does not match number of columns")
        if n < 2:
            raise ValueError("at least 2 observations are required")
        if d < 1:
            raise ValueError("at least 1 variable is required")
        if len(set(self.ids)) != n:
            dupes = sorted({i for i in self.ids if self.ids.count(i) > 1})
            raise ValueError(f"duplicate id(s): {', '.join(dupes)}")
        names = [s.name for s in self.specs]
        if len(set(names)) != d:
            raise ValueError("variable names must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values contain missing or non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


@dataclass
class PercentileTable:
    """Rank-percentile (PIT) values and quintile bins per variable."""

    ids: list[str]
    names: list[str]
    u: np.ndarray
    bins: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.bins = np.asarray(self.bins, dtype=int)
        if self.u.shape != self.bins.shape:
            raise ValueError("u and bins must have the same shape")
        if not np.all((self.u > 0.0) & (self.u < 1.0)):
            raise ValueError("percentile values must lie strictly in (0,1)")
        if not np.all((self.bins >= 1) & (self.bins <= 5)):
            raise ValueError("bins must be in 1..5")


QUINTILE_DESCRIPTORS = {
    1: "lowest 0-20%",
    2: "low 20-40%",
    3: "middle 40-60%",
    4: "high 60-80%",
    5: "highest 80-100%",
}


def transform_variable(values, kind, n=None, name=None):
    """Map a raw column onto the continuous scale.

    Proportions are logit-transformed after shifting exact 0/1 to 1/(2n)
    and 1 - 1/(2n); positive skewed variables are log-transformed;
    continuous variables pass through unchanged.
    """
    values = np.asarray(values, dtype=float)
    label = name or "variable"
    if n is None:
        n = len(values)
    if kind == "continuous":
        return values.copy()
    if kind == "proportion":
        bad = np.nonzero((values < 0.0) | (values > 1.0))[0]
        if bad.size:
            raise ValueError(
                f"{label}: proportion value {values[bad[0]]!r} at row "
                f"{bad[0]} outside [0,1]"
            )
        eps = 1.0 / (2.0 * n)
        shifted = np.where(values == 0.0, eps, values)
        shifted = np.where(shifted == 1.0, 1.0 - eps, shifted)
        return np.log(shifted / (1.0 - shifted))
    if kind == "skewed_positive":
        bad = np.nonzero(values <= 0.0)[0]
        if bad.size:
            raise ValueError(
                f"{label}: non-positive value {values[bad[0]]!r} at row "
                f"{bad[0]} cannot be log-transformed"
            )
        return np.log(values)
    raise ValueError(f"unknown variable kind {kind!r}")


def transform_table(table: FeatureTable) -> FeatureTable:
    """Apply each column's kind-specific transform."""
    cols = [
        transform_variable(table.values[:, j], spec.kind, table.n, spec.name)
        for j, spec in enumerate(table.specs)
    ]
    return replace(table, values=np.column_stack(cols))


def standardize(table: FeatureTable) -> FeatureTable:
    """Centre each column by its mean and scale by its sample sd (n-1)."""
    if table.standardized:
        raise ValueError("table is already standardized")
    centers = table.values.mean(axis=0)
    scales = table.values.std(axis=0, ddof=1)
    zero = np.nonzero(scales == 0.0)[0]
    if zero.size:
        raise ValueError(
            f"zero-variance column {table.specs[zero[0]].name!r}; "
            "drop it before standardizing"
        )
    values = (table.values - centers) / scales
    return replace(
        table, values=values, standardized=True, centers=centers, scales=scales
    )


def unstandardize(table: FeatureTable) -> FeatureTable:
    """Invert :func:`standardize` using the stored centre/scale parameters."""
    if not table.standardized:
        raise ValueError("table is not standardized")
    values = table.values * table.scales + table.centers
    return replace(
        table, values=values, standardized=False, centers=None, scales=None
    )


@dataclass
class VifTrace:
    """Removal history from :func:`vif_prune`."""

    removed: list[tuple[str, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _vif_values(X: np.ndarray) -> np.ndarray:
    """VIF_j = 1/(1-R^2_j) for each column regressed on the others."""
    n, d = X.shape
    vifs = np.empty(d)
    for j in range(d):
        y = X[:, j]
        others = np.delete(X, j, axis=1)
        A = np.column_stack([np.ones(n), others])
        coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        sst = np.sum((y - y.mean()) ** 2)
        if sst == 0.0:
            vifs[j] = math.inf
            continue
        r2 = 1.0 - np.sum(resid**2) / sst
        if r2 >= 1.0 - 1e-12:
            vifs[j] = math.inf
        else:
            vifs[j] = 1.0 / (1.0 - r2)
    return vifs


def vif_prune(table: FeatureTable, threshold: float = 10.0):
    """Iteratively drop the largest-VIF column while it exceeds ``threshold``.

    Exactly collinear columns get infinite VIF and are removed first; ties
    break by dropping the latest column, so the earliest of a duplicated
    pair survives.  Stops (with a note) rather than pruning below 3
    variables.
    """
    if not table.standardized:
        raise ValueError("vif_prune requires a standardized table")
    if threshold <= 1.0:
        raise ValueError("VIF threshold must exceed 1")
    trace = VifTrace()
    keep = list(range(table.d))
    while True:
        if len(keep) < 3:
            trace.notes.append(
                "stopped: fewer than 3 variables remain, no further pruning"
            )
            break
        vifs = _vif_values(table.values[:, keep])
        worst = int(np.flatnonzero(vifs == vifs.max())[-1])
        if not vifs[worst] > threshold:
            break
        trace.removed.append((table.specs[keep[worst]].name, float(vifs[worst])))
        del keep[worst]
    pruned = replace(
        table,
        specs=[table.specs[j] for j in keep],
        values=table.values[:, keep],
        centers=None if table.centers is None else table.centers[keep],
        scales=None if table.scales is None else table.scales[keep],
    )
    return pruned, trace


def pit(values) -> np.ndarray:
    """Rank-based probability inverse transform: u_i = (r_i - 0.5)/n.

    Ties receive the average rank of their tie group, so the output is
    strictly inside (0, 1).
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 1:
        raise ValueError("pit requires at least one value")
    ranks = rankdata(values, method="average")
    return (ranks - 0.5) / n


def quintile_bin(u) -> np.ndarray:
    """Assign rank-based quintile labels 1..5 with near-equal bin sizes.

    An observation with (average) rank r among n gets bin
    floor((r - 1) * 5 / n) + 1, so for tie-free input the bin counts differ
    by at most one.  A totally tied column degenerates to bin 3 everywhere
    and raises a warning.
    """
    u = np.asarray(u, dtype=float)
    n = len(u)
    if np.all(u == u[0]):
        warnings.warn(
            "all observations tied; assigning every observation to bin 3",
            stacklevel=2,
        )
        return np.full(n, 3, dtype=int)
    ranks = rankdata(u, method="average")
    bins = np.floor((ranks - 1.0) * 5.0 / n).astype(int) + 1
    return np.clip(bins, 1, 5)


def percentile_table(table: FeatureTable) -> PercentileTable:
    """PIT values and quintile bins for every variable in the table."""
    u = np.column_stack([pit(table.values[:, j]) for j in range(table.d)])
    bins = np.column_stack([quintile_bin(u[:, j]) for j in range(table.d)])
    return PercentileTable(ids=list(table.ids), names=table.names, u=u, bins=bins)
