"""One-dimensional k-means with elbow selection, used to turn continuous
operational attributes (assigned trips, unassigned trips, waiting time) into
ordinal levels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ArityError, DomainError, InfeasibleKError

# Above this many points the exact dynamic program (O(k n^2) memory-light but
# O(n^2) time per k) is skipped and only seeded Lloyd restarts are used.
EXACT_LIMIT = 2000


@dataclass(frozen=True)
class ClusterResult:
    k: int
    centroids: tuple[float, ...]
    boundaries: tuple[float, ...]
    wcss: float
    assignments: tuple[int, ...]
    wcss_trace: tuple[float, ...] = ()


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum: ties go to the lower index.
    return np.argmin(np.abs(x[:, None] - centroids[None, :]), axis=1)


def _wcss(x, labels, centroids) -> float:
    return float(np.sum((x - centroids[labels]) ** 2))


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            break
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    centers = np.unique(centers)
    if len(centers) < k:
        # Fill with distinct values not yet used, spread over the range.
        rest = np.setdiff1d(np.unique(x), centers)
        extra = rest[np.linspace(0, len(rest) - 1, k - len(centers)).astype(int)]
        centers = np.sort(np.concatenate([centers, extra]))
    return np.sort(centers)


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    labels = _assign(x, centroids)
    trace = [_wcss(x, labels, centroids)]
    for _ in range(max_iter):
        new_centroids = centroids.copy()
        for j in range(len(centroids)):
            members = x[labels == j]
            if len(members):
                new_centroids[j] = members.mean()
        new_labels = _assign(x, new_centroids)
        centroids = new_centroids
        trace.append(_wcss(x, new_labels, centroids))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, trace


def _optimal_partition(sorted_x: np.ndarray, k: int) -> np.ndarray:
    """Globally optimal contiguous k-partition of sorted data by dynamic
    programming; returns the k cluster means."""
    n = len(sorted_x)
    s1 = np.concatenate([[0.0], np.cumsum(sorted_x)])
    s2 = np.concatenate([[0.0], np.cumsum(sorted_x ** 2)])

    def cost(i, j):  # SSE of sorted_x[i:j], vectorized over i or j
        m = j - i
        return s2[j] - s2[i] - (s1[j] - s1[i]) ** 2 / m

    best = cost(np.zeros(n, dtype=int), np.arange(1, n + 1))  # best[j-1]: first j points, 1 cluster
    back = np.zeros((k, n), dtype=int)
    for m in range(1, k):
        new = np.full(n, np.inf)
        for j in range(m + 1, n + 1):
            i = np.arange(m, j)
            cand = best[i - 1] + cost(i, np.full_like(i, j))
            t = int(np.argmin(cand))
            new[j - 1] = cand[t]
            back[m, j - 1] = i[t]
        best = new
    # Recover split points.
    cuts = [n]
    j = n
    for m in range(k - 1, 0, -1):
        j = back[m, j - 1]
        cuts.append(j)
    cuts.append(0)
    cuts = cuts[::-1]
    return np.array([sorted_x[a:b].mean() for a, b in zip(cuts[:-1], cuts[1:])])


def kmeans_1d(values: Sequence[float], k: int, seed: int = 0, n_init: int = 10) -> ClusterResult:
    """Cluster scalar data into ``k`` groups.

    Lloyd iterations run until the assignment reaches a fixpoint, started from
    ``n_init`` seeded k-means++ initializations and, for samples up to
    ``EXACT_LIMIT`` points, from the exact optimal contiguous partition. The
    lowest within-cluster sum of squares wins.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise DomainError("kmeans_1d needs a nonempty 1-D sample")
    if k < 1:
        raise DomainError("k must be positive")
    distinct = len(np.unique(x))
    if k > distinct:
        raise InfeasibleKError(f"k={k} exceeds the {distinct} distinct values")

    rng = np.random.default_rng(seed)
    starts = [_kmeanspp(x, k, rng) for _ in range(n_init)]
    if len(x) <= EXACT_LIMIT:
        starts.insert(0, _optimal_partition(np.sort(x), k))

    best = None
    for start in starts:
        centroids, labels, trace = _lloyd(x, start)
        score = trace[-1]
        if best is None or score < best[0] - 1e-12 * max(1.0, abs(score)):
            best = (score, centroids, labels, trace)
    _, centroids, labels, trace = best

    # Relabel so centroids increase (equal centroids cannot occur: each
    # Lloyd cluster keeps distinct members).
    order = np.argsort(centroids, kind="stable")
    centroids = centroids[order]
    labels = _assign(x, centroids)
    wcss = _wcss(x, labels, centroids)
    boundaries = tuple(float(b) for b in (centroids[:-1] + centroids[1:]) / 2)
    return ClusterResult(k, tuple(float(c) for c in centroids), boundaries, wcss,
                         tuple(int(a) for a in labels), tuple(trace))


class ElbowResult(NamedTuple):
    k: int
    curve: list[tuple[int, float]]
    truncated: bool


def elbow_select(values: Sequence[float], k_max: int, seed: int = 0) -> ElbowResult:
    """Pick the number of clusters at the sharpest bend of the WCSS curve.

    The bend at k is scored by the second difference
    ``wcss(k-1) - 2 wcss(k) + wcss(k+1)`` divided by ``wcss(k)``, over
    ``2 <= k <= k_max - 1``. The division makes the score scale-free; without
    it the raw second difference favours k = 2 for equally spaced clusters.
    A curve that reaches zero picks the first k where it does; a constant
    sample picks k = 1.
    """
    if k_max < 2:
        raise DomainError("k_max must be at least 2")
    x = np.asarray(values, dtype=float)
    distinct = len(np.unique(x))
    top = min(k_max, distinct)
    truncated = top < k_max
    curve = [(k, kmeans_1d(x, k, seed).wcss) for k in range(1, top + 1)]
    w = [c for _, c in curve]
    scale = max(w[0], 1e-300)
    if w[0] <= 0:
        return ElbowResult(1, curve, truncated)
    for k in range(2, len(w) + 1):
        if w[k - 1] <= 1e-12 * scale:
            return ElbowResult(k, curve, truncated)
    if len(w) < 3:
        return ElbowResult(len(w), curve, truncated)
    scores = {k: (w[k - 2] - 2 * w[k - 1] + w[k]) / w[k - 1] for k in range(2, len(w))}
    best = max(scores, key=lambda k: (scores[k], -k))
    return ElbowResult(best, curve, truncated)


def bin_by_clusters(values: Sequence[float], result: ClusterResult, labels: Sequence[str]) -> list[str]:
    """Map each value to the label of its cluster; a value equal to a
    boundary falls in the lower cluster."""
    if len(labels) != result.k:
        raise ArityError(f"{len(labels)} labels for {result.k} clusters")
    bounds = np.asarray(result.boundaries, dtype=float)
    idx = np.searchsorted(bounds, np.asarray(values, dtype=float), side="left")
    return [labels[i] for i in idx]
