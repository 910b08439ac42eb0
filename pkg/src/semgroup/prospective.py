"""Collection of candidate (prospective) groups and their models.

For the neighborhood touched by the incoming task, randomized threshold
clusterings vote on promising cluster counts via the silhouette score, and
k-means runs at those counts contribute candidate member sets. Each
candidate set is stored once, bound to a model initialized from its closest
ancestor in the repository, so a later refinement can retrieve a model that
was adapted to the member tasks while they were current.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import sequential_grouping
from .core import GroupingConfig, Partition
from .models import GroupModel


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def silhouette_score(points: np.ndarray, partition: Partition,
                     pdist: np.ndarray | None = None) -> float | None:
    """Mean silhouette over points; singleton-cluster points score 0.

    Returns None (undefined) when the partition has a single cluster; the
    caller treats that as minus infinity during count selection.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n != len(partition):
        raise ValueError("points and partition lengths differ")
    if n < 2:
        raise ValueError("silhouette needs at least 2 points")
    if partition.num_clusters == 1:
        return None
    if pdist is None:
        pdist = pairwise_distances(points)
    labels = np.asarray(partition.labels)
    k = partition.num_clusters
    sizes = np.bincount(labels, minlength=k)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    cluster_sums = pdist @ onehot                      # (n, k)
    own_sum = cluster_sums[np.arange(n), labels]
    mean_other = cluster_sums / sizes[None, :]
    mean_other[np.arange(n), labels] = np.inf
    b = mean_other.min(axis=1)
    own_size = sizes[labels]
    scores = np.zeros(n)
    multi = own_size > 1                               # singletons score 0
    a = own_sum[multi] / (own_size[multi] - 1)
    bm = b[multi]
    scores[multi] = (bm - a) / np.maximum(a, bm)
    return float(scores.mean())


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 100, tol: float = 1e-6,
           return_inertia: bool = False):
    """Lloyd's algorithm with k-means++ seeding and farthest-point repair
    for empty clusters; returns a canonical partition."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")
    centers = _kmeanspp(points, k, rng)
    inertia_trace = []
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        # repair empty clusters by reseeding at the farthest point
        for c in range(k):
            if not np.any(labels == c):
                far = int(np.argmax(d2[np.arange(n), labels]))
                centers[c] = points[far]
                labels[far] = c
        inertia = float(((points - centers[labels]) ** 2).sum())
        assert inertia <= prev_inertia + 1e-9, "Lloyd objective increased"
        prev_inertia = inertia
        inertia_trace.append(inertia)
        new_centers = centers.copy()
        for c in range(k):
            new_centers[c] = points[labels == c].mean(axis=0)
        move = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if move < tol:
            break
    part = Partition.canonical(labels.tolist())
    if return_inertia:
        return part, inertia_trace
    return part


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[int(rng.integers(n))]]
    while len(centers) < k:
        d2 = np.min(
            ((points[:, None, :] - np.stack(centers)[None, :, :]) ** 2).sum(axis=2),
            axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(points[int(rng.integers(n))])
            continue
        probs = d2 / total
        centers.append(points[int(rng.choice(n, p=probs))])
    return np.stack(centers)


def random_threshold_clustering(points: np.ndarray, threshold: float,
                                rng: np.random.Generator) -> Partition:
    """Sequential threshold grouping over a uniformly random ordering of the
    points; labels are reported in the original point order."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n == 0:
        raise ValueError("no points")
    order = rng.permutation(n)
    permuted = sequential_grouping(points[order], threshold)
    labels = np.zeros(n, dtype=int)
    labels[order] = permuted.labels
    return Partition.canonical(labels.tolist())


def representative_counts(points: np.ndarray, config: GroupingConfig,
                          rng: np.random.Generator) -> list[int]:
    """Up to eta cluster counts ranked by average silhouette over r_iters
    randomized threshold clusterings; falls back to [1] when the silhouette
    is undefined (fewer than 3 points, or only single-cluster outcomes)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 3:
        return [1]
    pdist = pairwise_distances(points)
    records: dict[int, list[float]] = {}
    for _ in range(config.r_iters):
        part = random_threshold_clustering(points, config.radius, rng)
        score = silhouette_score(points, part, pdist)
        if score is not None:
            records.setdefault(part.num_clusters, []).append(score)
    if not records:
        return [1]
    averages = {k: float(np.mean(v)) for k, v in records.items()}
    ranked = sorted(averages, key=lambda k: (-averages[k], k))
    return sorted(ranked[:config.eta])


@dataclass
class ProspectiveRepository:
    """Deduplicated candidate member sets, each bound to a GroupModel."""

    entries: dict[frozenset[int], GroupModel] = field(default_factory=dict)
    by_neighborhood: dict[int, set[frozenset[int]]] = field(default_factory=dict)
    per_neighborhood_cap: int | None = None
    _touch: dict[frozenset[int], int] = field(default_factory=dict)
    _clock: int = 0

    def __contains__(self, member_set: frozenset[int]) -> bool:
        return frozenset(member_set) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, member_set) -> GroupModel:
        ms = frozenset(member_set)
        self._clock += 1
        self._touch[ms] = self._clock
        return self.entries[ms]

    def set_model(self, member_set, model: GroupModel) -> None:
        ms = frozenset(member_set)
        if ms not in self.entries:
            raise KeyError(f"no entry for {sorted(ms)}")
        self.entries[ms] = model

    def lineage_model(self, member_set: frozenset[int], current_task: int,
                      scratch) -> GroupModel:
        """Model init for a new member set: copy the model of the set minus
        the current task when present, otherwise of the maximal-Jaccard
        overlapping entry, otherwise build from scratch."""
        parent = frozenset(member_set - {current_task})
        if parent and parent in self.entries:
            return self.entries[parent].copy()
        best, best_j = None, 0.0
        for ms in sorted(self.entries, key=lambda s: sorted(s)):
            j = len(ms & member_set) / len(ms | member_set)
            if j > best_j:
                best, best_j = ms, j
        if best is not None:
            return self.entries[best].copy()
        return scratch()

    def ensure(self, member_set, neighborhood_id: int, current_task: int,
               scratch) -> tuple[GroupModel, bool]:
        """Insert a member set if absent; returns (model, was_new)."""
        ms = frozenset(member_set)
        if not ms:
            raise ValueError("empty member set")
        self._clock += 1
        self._touch[ms] = self._clock
        nb = self.by_neighborhood.setdefault(neighborhood_id, set())
        if ms in self.entries:
            nb.add(ms)
            return self.entries[ms], False
        model = self.lineage_model(ms, current_task, scratch)
        self.entries[ms] = model
        nb.add(ms)
        self._evict(neighborhood_id)
        return model, True

    def _evict(self, neighborhood_id: int) -> None:
        cap = self.per_neighborhood_cap
        if cap is None:
            return
        nb = self.by_neighborhood[neighborhood_id]
        while len(nb) > cap:
            oldest = min(nb, key=lambda s: self._touch.get(s, 0))
            nb.discard(oldest)
            self.entries.pop(oldest, None)
            self._touch.pop(oldest, None)

    def entries_containing(self, task_id: int) -> list[frozenset[int]]:
        return sorted((ms for ms in self.entries if task_id in ms),
                      key=lambda s: sorted(s))


def collect_prospective(member_ids: list[int], points: np.ndarray,
                        repo: ProspectiveRepository, current_task: int,
                        neighborhood_id: int, config: GroupingConfig,
                        rng: np.random.Generator, scratch) -> list[frozenset[int]]:
    """Run the silhouette-guided k-means sweep over one neighborhood and
    union the resulting clusters into the repository.

    member_ids and points are aligned; returns the member sets that were
    new to the repository. Models for new sets containing the current task
    are initialized here via lineage; their adaptation to the current task
    is the caller's tuning step.
    """
    points = np.asarray(points, dtype=float)
    if current_task not in member_ids:
        raise ValueError("current task must belong to the neighborhood")
    counts = representative_counts(points, config, rng)
    new_sets: list[frozenset[int]] = []
    for _ in range(config.r_iters):
        for k in counts:
            part = kmeans(points, min(k, len(member_ids)), rng)
            for ms in part.member_sets(member_ids):
                _, was_new = repo.ensure(ms, neighborhood_id, current_task, scratch)
                if was_new:
                    new_sets.append(ms)
    return new_sets
