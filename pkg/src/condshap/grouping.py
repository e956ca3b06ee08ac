"""Feature grouping for dependent features.

Rank dependence (Kendall's tau without tie correction) feeds a dissimilarity
matrix 1 - |tau|, complete-linkage agglomeration builds the dendrogram, and a
Kelley-Gardner-Sutcliffe-style penalty picks the cut.  Group Shapley values
are the sums of their members' values, which preserves efficiency exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coalitions import Explanation
from .errors import DiagnosticWarning
from .samplers import TrainingMatrix


def kendall_tau_naive(xj: np.ndarray, xk: np.ndarray) -> float:
    """Definitional O(n^2) tau: mean of sign products over ordered pairs."""
    xj = np.asarray(xj, float).reshape(-1)
    xk = np.asarray(xk, float).reshape(-1)
    n = xj.shape[0]
    if n < 2 or xk.shape[0] != n:
        raise ValueError("need two equal-length vectors with n >= 2")
    sj = np.sign(xj[:, None] - xj[None, :])
    sk = np.sign(xk[:, None] - xk[None, :])
    return float(np.sum(sj * sk) / (n * (n - 1)))


def _merge_count_inversions(values: np.ndarray) -> int:
    """Strict inversions (values[i] > values[j] for i < j) by merge sort."""
    values = list(values)
    n = len(values)
    buf = [0.0] * n
    count = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if values[i] <= values[j]:
                    buf[k] = values[i]
                    i += 1
                else:
                    buf[k] = values[j]
                    count += mid - i
                    j += 1
                k += 1
            while i < mid:
                buf[k] = values[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = values[j]
                j += 1
                k += 1
            values[lo:hi] = buf[lo:hi]
        width *= 2
    return count


def _tie_pairs(values: np.ndarray) -> int:
    _, counts = np.unique(values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(xj: np.ndarray, xk: np.ndarray) -> float:
    """Kendall's tau (no tie correction) in O(n log n).

    Equals the definitional sum with sign(0) = 0: ties in either variable
    contribute nothing and the denominator stays n(n-1).
    """
    xj = np.asarray(xj, float).reshape(-1)
    xk = np.asarray(xk, float).reshape(-1)
    n = xj.shape[0]
    if n < 2 or xk.shape[0] != n:
        raise ValueError("need two equal-length vectors with n >= 2")
    order = np.lexsort((xk, xj))
    yj, yk = xj[order], xk[order]
    discordant = _merge_count_inversions(yk)
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xj)
    n2 = _tie_pairs(xk)
    both = np.rec.fromarrays([xj, xk])
    n3 = _tie_pairs(both)
    concordant = n0 - n1 - n2 + n3 - discordant
    return (concordant - discordant) / n0


@dataclass
class DissimilarityMatrix:
    """Entries 1 - |tau|; zero diagonal by definition."""

    d: np.ndarray
    column_names: tuple[str, ...]

    @property
    def m(self) -> int:
        return self.d.shape[0]


def dissimilarity(train: TrainingMatrix) -> DissimilarityMatrix:
    """Pairwise 1 - |tau| over the training columns.

    A constant column has undefined rank correlation; its entries are set to
    the maximal dissimilarity 1 with a diagnostic.
    """
    data = train.data
    n, m = data.shape
    if n < 2:
        raise ValueError("need at least two rows")
    constant = [j for j in range(m) if np.ptp(data[:, j]) == 0.0]
    if constant:
        warnings.warn(
            f"constant column(s) {tuple(constant)}: tau undefined, "
            "dissimilarity set to 1",
            DiagnosticWarning,
            stacklevel=2,
        )
    d = np.zeros((m, m))
    for j in range(m):
        for k in range(j + 1, m):
            if j in constant or k in constant:
                d[j, k] = d[k, j] = 1.0
                continue
            tau = kendall_tau(data[:, j], data[:, k])
            d[j, k] = d[k, j] = 1.0 - abs(tau)
    return DissimilarityMatrix(d=np.clip(d, 0.0, 1.0), column_names=train.column_names)


@dataclass
class Dendrogram:
    """Merge sequence (a, b, height) with scipy-style cluster indexing.

    Original features are clusters 0..m-1; merge t creates cluster m+t.
    """

    m: int
    merges: list[tuple[int, int, float]]
    leaf_labels: tuple[str, ...]

    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])

    def members(self, cluster: int) -> tuple[int, ...]:
        """Leaf indices under a cluster id, in leaf order."""
        if cluster < self.m:
            return (cluster,)
        a, b, _ = self.merges[cluster - self.m]
        return self.members(a) + self.members(b)

    def leaf_order(self) -> tuple[int, ...]:
        if not self.merges:
            return tuple(range(self.m))
        return self.members(self.m + len(self.merges) - 1)

    def cut(self, n_clusters: int) -> list[tuple[int, ...]]:
        """Partition into n_clusters groups by undoing the last merges."""
        if not (1 <= n_clusters <= self.m):
            raise ValueError(f"cannot cut {self.m} leaves into {n_clusters} clusters")
        active = [self.m + len(self.merges) - 1] if self.merges else list(range(self.m))
        while len(active) < n_clusters:
            # Split the most recent merge among active clusters.
            splittable = max(c for c in active if c >= self.m)
            a, b, _ = self.merges[splittable - self.m]
            active.remove(splittable)
            active.extend([a, b])
        groups = [tuple(sorted(self.members(c))) for c in active]
        return sorted(groups, key=lambda g: g[0])


def complete_linkage(dmatrix: DissimilarityMatrix) -> Dendrogram:
    """Agglomerate by the maximum pairwise dissimilarity between clusters.

    Ties break on the smallest cluster ids, making the merge order
    deterministic; merge heights are non-decreasing.
    """
    m = dmatrix.m
    dist: dict[tuple[int, int], float] = {}
    for j in range(m):
        for k in range(j + 1, m):
            dist[(j, k)] = float(dmatrix.d[j, k])
    active = list(range(m))
    merges: list[tuple[int, int, float]] = []
    next_id = m
    while len(active) > 1:
        best = None
        for i, a in enumerate(active):
            for b in active[i + 1 :]:
                key = (min(a, b), max(a, b))
                cand = (dist[key], key)
                if best is None or cand < best:
                    best = cand
        height, (a, b) = best
        merges.append((a, b, height))
        active.remove(a)
        active.remove(b)
        for c in active:
            da = dist[(min(a, c), max(a, c))]
            db = dist[(min(b, c), max(b, c))]
            dist[(min(next_id, c), max(next_id, c))] = max(da, db)
        active.append(next_id)
        next_id += 1
    return Dendrogram(m=m, merges=merges, leaf_labels=dmatrix.column_names)


@dataclass
class ClusterAssignment:
    """A partition of the features with labels in dendrogram leaf order."""

    groups: list[tuple[int, ...]]
    labels: list[str]
    column_names: tuple[str, ...]
    penalty_table: list[dict] = field(default_factory=list)
    alpha: float = 1.0

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group_members(self) -> dict[str, tuple[str, ...]]:
        return {
            label: tuple(self.column_names[j] for j in group)
            for label, group in zip(self.labels, self.groups)
        }

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "groups": [
                {"label": label, "members": list(group), "member_names": list(names)}
                for (label, group), names in zip(
                    zip(self.labels, self.groups), self.group_members().values()
                )
            ],
            "penalty_table": self.penalty_table,
        }


def _mean_within(d: np.ndarray, group: tuple[int, ...]) -> float | None:
    if len(group) < 2:
        return None
    idx = list(group)
    sub = d[np.ix_(idx, idx)]
    s = len(idx)
    return float(np.sum(np.triu(sub, 1)) / (s * (s - 1) / 2))


def _order_groups(groups: list[tuple[int, ...]], dendrogram: Dendrogram) -> list[tuple[int, ...]]:
    position = {leaf: i for i, leaf in enumerate(dendrogram.leaf_order())}
    return sorted(groups, key=lambda g: min(position[j] for j in g))


def kgs_cut(
    dendrogram: Dendrogram,
    alpha: float = 1.0,
    dmatrix: DissimilarityMatrix | None = None,
) -> ClusterAssignment:
    """Cut by minimizing the Kelley-Gardner-Sutcliffe penalty.

    For each level with c clusters (2 <= c <= m-1) the penalty is the average
    within-cluster mean pairwise dissimilarity, min-max rescaled across levels
    onto [1, m-2], plus alpha * c.  The full per-level table is returned so
    the cut can be audited or overridden.  Degenerate trees (every merge at
    height zero) collapse to a single cluster; m < 3 has no level to scan and
    returns its only nontrivial cut.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    m = dendrogram.m
    if dmatrix is None:
        raise ValueError("kgs_cut needs the dissimilarity matrix for spreads")
    d = dmatrix.d

    def finish(groups: list[tuple[int, ...]], table: list[dict]) -> ClusterAssignment:
        ordered = _order_groups(groups, dendrogram)
        labels = [f"g{i + 1}" for i in range(len(ordered))]
        return ClusterAssignment(
            groups=ordered,
            labels=labels,
            column_names=dendrogram.leaf_labels,
            penalty_table=table,
            alpha=alpha,
        )

    if m == 1:
        return finish([(0,)], [])
    if float(np.max(dendrogram.heights())) == 0.0:
        # No structure to cut: all features are mutually indistinguishable.
        return finish([dendrogram.cut(1)[0]], [])
    if m == 2:
        return finish(dendrogram.cut(2), [])

    levels = list(range(2, m))  # cluster counts considered by the penalty
    spreads = []
    partitions = []
    for c in levels:
        groups = dendrogram.cut(c)
        partitions.append(groups)
        within = [w for g in groups if (w := _mean_within(d, g)) is not None]
        spreads.append(float(np.mean(within)) if within else 0.0)
    spreads = np.array(spreads)
    lo, hi = float(spreads.min()), float(spreads.max())
    if hi > lo:
        scaled = 1.0 + (m - 3.0) * (spreads - lo) / (hi - lo)
    else:
        scaled = np.ones_like(spreads)
    penalties = scaled + alpha * np.array(levels, float)
    table = [
        {
            "n_clusters": int(c),
            "spread": float(s),
            "scaled_spread": float(z),
            "penalty": float(p),
        }
        for c, s, z, p in zip(levels, spreads, scaled, penalties)
    ]
    best = int(np.argmin(penalties))
    return finish(partitions[best], table)


@dataclass
class GroupExplanation:
    """Per-group Shapley sums plus the waterfall display order."""

    phi0: float
    group_phi: np.ndarray
    labels: list[str]
    prediction: float
    waterfall_order: list[str]


def aggregate_shapley(
    explanation: Explanation, assignment: ClusterAssignment
) -> GroupExplanation:
    """Sum member Shapley values per group; efficiency is preserved exactly."""
    m = explanation.phi.shape[0]
    covered = sorted(j for g in assignment.groups for j in g)
    if covered != list(range(m)):
        raise ValueError(
            f"cluster assignment does not partition the {m} features: {assignment.groups}"
        )
    group_phi = np.array(
        [float(explanation.phi[list(g)].sum()) for g in assignment.groups]
    )
    order = np.argsort(-np.abs(group_phi), kind="stable")
    return GroupExplanation(
        phi0=explanation.phi0,
        group_phi=group_phi,
        labels=list(assignment.labels),
        prediction=explanation.prediction,
        waterfall_order=[assignment.labels[i] for i in order],
    )
