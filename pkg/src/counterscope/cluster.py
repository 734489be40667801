"""Clustering of normalised daily profiles.

Two routes: k-means on Euclidean distance with silhouette-based choice of k,
and agglomerative Ward linkage over Spearman rank-correlation dissimilarity.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import comb
from scipy.stats import rankdata

from .calendar import DayType
from .profile import ProfileSet, normalize_profile

log = logging.getLogger(__name__)

RowKey = tuple[str, int, DayType, int]


@dataclass
class FeatureMatrix:
    keys: list[RowKey]
    X: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def daytypes(self) -> list[DayType]:
        return [k[2] for k in self.keys]


def feature_matrix(ps: ProfileSet, period: int = 5, normalize: bool = True) -> FeatureMatrix:
    """One row per (counter, direction, day type) for a single period, in percent of daily traffic.

    All-zero profiles cannot be normalised and are skipped with a warning.
    """
    if period not in ps.mode.periods:
        raise KeyError(f"period {period} not in {ps.mode.value} profiles")
    keys, rows = [], []
    for key in ps.keys():
        p = ps.profile(key, period)
        if normalize:
            if not p.sum() > 0:
                log.warning("skipping degenerate profile %s dir %d %s", key[0], key[1], key[2].value)
                continue
            p = normalize_profile(p)
        keys.append((key[0], key[1], key[2], period))
        rows.append(p)
    X = np.array(rows, dtype=float).reshape(len(rows), 24)
    return FeatureMatrix(keys, X)


@dataclass
class ClusterModel:
    method: str
    k: int
    labels: np.ndarray
    centroids: np.ndarray | None = None
    inertia: float | None = None
    silhouette: float | None = None
    dendrogram: "Dendrogram | None" = None
    n_iter: int = 0


# --------------------------------------------------------------------------- k-means


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(1))
    return X[centers].copy()


def wcss(X: np.ndarray, labels: np.ndarray) -> float:
    """Within-cluster sum of squared Euclidean distances to cluster means."""
    total = 0.0
    for c in np.unique(labels):
        members = X[labels == c]
        total += float(((members - members.mean(0)) ** 2).sum())
    return total


def _means(X: np.ndarray, labels: np.ndarray, k: int, fallback: np.ndarray) -> np.ndarray:
    out = fallback.copy()
    for c in range(k):
        members = labels == c
        if members.any():
            out[c] = X[members].mean(0)
    return out


def _hartigan(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Single-point moves that strictly lower WCSS, until none is left.

    Lloyd stops at any Voronoi fixpoint; this pass also accounts for the
    centroid shift a move causes, which gets small inputs out of poor local
    optima. A partition stable under these moves is still a Lloyd fixpoint.
    """
    k = len(centroids)
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k).astype(float)
    cent = _means(X, labels, k, centroids)
    moved = True
    while moved:
        moved = False
        for i in range(len(X)):
            a = labels[i]
            if sizes[a] <= 1:
                continue
            d = ((cent - X[i]) ** 2).sum(1)
            leave = sizes[a] / (sizes[a] - 1) * d[a]
            join = sizes / (sizes + 1) * d  # an empty cluster costs nothing to join
            join[a] = np.inf
            b = int(np.argmin(join))
            # relative margin keeps float noise from cycling
            if join[b] < leave * (1 - 1e-12) - 1e-12:
                cent[a] = (cent[a] * sizes[a] - X[i]) / (sizes[a] - 1)
                cent[b] = (cent[b] * sizes[b] + X[i]) / (sizes[b] + 1)
                sizes[a] -= 1
                sizes[b] += 1
                labels[i] = b
                moved = True
    return labels


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    centroids = _kmeanspp(X, k, rng)
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(X, centroids), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = X[members].mean(0)
        empty = [c for c in range(k) if not (labels == c).any()]
        for c in empty:
            # re-seed at the point farthest from its current centroid
            far = ((X - centroids[labels]) ** 2).sum(1)
            idx = int(np.argmax(far))
            centroids[c] = X[idx]
            labels[idx] = c
    labels = _hartigan(X, labels, centroids)
    centroids = _means(X, labels, k, centroids)
    return labels, centroids, wcss(X, labels), it


def kmeans(X, k: int, seed: int = 42, restarts: int = 10, max_iter: int = 300, n_jobs: int = 1) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeds, polished by single-point moves; best of ``restarts`` by WCSS.

    Restart ``i`` draws from the i-th child of ``SeedSequence(seed)``, so the
    result does not depend on ``n_jobs``.
    """
    X = np.asarray(X, dtype=float)
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must be between 1 and the number of rows ({len(X)})")
    seeds = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        return _lloyd(X, k, np.random.default_rng(ss), max_iter)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(ss) for ss in seeds]
    best = min(range(restarts), key=lambda i: (results[i][2], i))
    labels, centroids, inertia, n_iter = results[best]
    return ClusterModel("kmeans", k, labels, centroids=centroids, inertia=inertia, n_iter=n_iter)


def silhouette(X, labels) -> float:
    """Mean silhouette over rows with Euclidean distance; singletons and a=b=0 score 0."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    D = cdist(X, X)
    onehot = labels[:, None] == clusters[None, :]
    sizes = onehot.sum(0)
    sums = D @ onehot
    own = np.searchsorted(clusters, labels)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(len(X)), own] / np.maximum(own_size - 1, 1), 0.0)
    mean_other = sums / sizes
    mean_other[np.arange(len(X)), own] = np.inf
    b = mean_other.min(1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(len(X)), where=denom > 0)
    s[own_size == 1] = 0.0
    return float(s.mean())


def select_k(X, k_range: Sequence[int] = range(2, 11), seed: int = 42, restarts: int = 10, n_jobs: int = 1):
    """Run k-means for each k; return (best k, {k: silhouette}, {k: model}). Ties go to the smaller k."""
    X = np.asarray(X, dtype=float)
    ks = list(k_range)
    if not ks or min(ks) < 2 or max(ks) > len(X):
        raise ValueError(f"k range must lie within [2, {len(X)}]")
    scores, models = {}, {}
    for k in ks:
        model = kmeans(X, k, seed=seed, restarts=restarts, n_jobs=n_jobs)
        model.silhouette = silhouette(X, model.labels)
        scores[k], models[k] = model.silhouette, model
    best = max(ks, key=lambda k: (scores[k], -k))
    return best, scores, models


# --------------------------------------------------------------------------- Spearman + Ward


class DegenerateRowError(ValueError):
    pass


def spearman_distance_matrix(X, names: Sequence | None = None) -> np.ndarray:
    """1 - Spearman rho between rows (average ranks for ties); values in [0, 2]."""
    X = np.asarray(X, dtype=float)
    for i, row in enumerate(X):
        if np.ptp(row) == 0:
            label = names[i] if names is not None else i
            raise DegenerateRowError(f"constant row {label}: Spearman correlation undefined")
    R = rankdata(X, axis=1)
    R = R - R.mean(1, keepdims=True)
    R = R / np.sqrt((R * R).sum(1, keepdims=True))
    rho = np.clip(R @ R.T, -1.0, 1.0)
    D = 1.0 - rho
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class Dendrogram:
    """Merge list in the usual linkage layout: leaves are 0..n-1, merge i creates node n+i."""

    n_leaves: int
    # rows of (left, right, height, size)
    merges: list[tuple[int, int, float, int]] = field(default_factory=list)

    def heights(self) -> np.ndarray:
        return np.array([m[2] for m in self.merges])


def ward_hclust(D) -> Dendrogram:
    """Ward linkage by Lance-Williams updates on squared dissimilarities.

    Among equally close pairs, the one whose clusters have the smallest
    member indices merges first.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise ValueError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(D)) > 1e-12):
        raise ValueError("distance matrix has a non-zero diagonal")
    tree = Dendrogram(n)
    if n < 2:
        return tree
    # slot i holds the cluster whose smallest member is i
    d2 = D * D
    np.fill_diagonal(d2, np.inf)
    active = np.ones(n, dtype=bool)
    size = np.ones(n, dtype=np.int64)
    node = np.arange(n)
    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], d2, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        height = float(np.sqrt(max(d2[i, j], 0.0)))
        ni, nj = size[i], size[j]
        left, right = sorted((int(node[i]), int(node[j])))
        tree.merges.append((left, right, height, int(ni + nj)))
        nk = size
        upd = ((ni + nk) * d2[i] + (nj + nk) * d2[j] - nk * d2[i, j]) / (ni + nj + nk)
        d2[i, :] = upd
        d2[:, i] = upd
        d2[i, i] = np.inf
        active[j] = False
        d2[j, :] = np.inf
        d2[:, j] = np.inf
        size[i] = ni + nj
        node[i] = n + step
    return tree


def cut_dendrogram(tree: Dendrogram, k: int) -> np.ndarray:
    """Labels for exactly k clusters (the last k-1 merges undone), numbered by smallest member."""
    n = tree.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and {n}")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step, (left, right, _, _) in enumerate(tree.merges[: n - k]):
        parent[find(left)] = n + step
        parent[find(right)] = n + step
    roots = [find(i) for i in range(n)]
    dense: dict[int, int] = {}
    return np.array([dense.setdefault(r, len(dense)) for r in roots])


def ward_spearman(fm: FeatureMatrix, k: int) -> ClusterModel:
    D = spearman_distance_matrix(fm.X, names=[f"{c}/{d}/{t.value}" for c, d, t, _ in fm.keys])
    tree = ward_hclust(D)
    return ClusterModel("ward_spearman", k, cut_dendrogram(tree, k), dendrogram=tree)


# --------------------------------------------------------------------------- characterisation


@dataclass
class ClusterProfile:
    cluster: int
    size: int
    mean: np.ndarray
    std: np.ndarray
    weekend_pct: float
    workday_pct: float


def cluster_profiles(X, labels, daytypes: Sequence[DayType]) -> list[ClusterProfile]:
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    weekend = np.array([d is DayType.WEEKEND for d in daytypes])
    out = []
    for c in np.unique(labels):
        m = labels == c
        rows = X[m]
        std = rows.std(0, ddof=1) if len(rows) > 1 else np.zeros(X.shape[1])
        wk = 100.0 * weekend[m].sum() / m.sum()
        out.append(ClusterProfile(int(c), int(m.sum()), rows.mean(0), std, float(wk), float(100.0 - wk)))
    return out


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings."""
    a, b = np.asarray(a), np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(1), 2).sum()
    sum_b = comb(table.sum(0), 2).sum()
    total = comb(len(a), 2)
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def write_dendrogram_csv(tree: Dendrogram, stream: IO[str], header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write("step,left,right,height,size\n")
    for step, (left, right, h, size) in enumerate(tree.merges):
        stream.write(f"{step},{left},{right},{h:.9f},{size}\n")
