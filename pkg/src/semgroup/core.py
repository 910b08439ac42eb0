"""Shared domain types: group statistics, distance geometry, partitions.

Groups and neighborhoods keep incremental statistics (member count, vector
sum, sum of squared norms) so that the spread of a group, and the spread it
would have after adding one more point, are both O(d) to evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def centroid(members: np.ndarray) -> np.ndarray:
    """Componentwise mean of a (n, d) stack of vectors."""
    members = np.asarray(members, dtype=float)
    if members.ndim != 2 or members.shape[0] == 0:
        raise ValueError("empty group")
    return members.mean(axis=0)


def avg_distance(members: np.ndarray) -> float:
    """Root mean squared Euclidean distance of the members to their centroid."""
    members = np.asarray(members, dtype=float)
    c = centroid(members)
    return float(np.sqrt(np.mean(np.sum((members - c) ** 2, axis=1))))


def _spread_from_sums(n: int, vec_sum: np.ndarray, sq_sum: float) -> float:
    # delta^2 = sq_sum/n - ||centroid||^2; clamp tiny negative cancellation
    c = vec_sum / n
    d2 = sq_sum / n - float(c @ c)
    if d2 < 0.0:
        if d2 < -1e-12:
            raise FloatingPointError(f"spread cancellation out of bounds: {d2}")
        d2 = 0.0
    return float(np.sqrt(d2))


@dataclass
class GroupStats:
    """A group (or neighborhood) of tasks with cached sufficient statistics."""

    group_id: int
    members: list[int] = field(default_factory=list)
    vec_sum: np.ndarray | None = None
    sq_sum: float = 0.0

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def member_set(self) -> frozenset[int]:
        return frozenset(self.members)

    def centroid(self) -> np.ndarray:
        if not self.members:
            raise ValueError("empty group")
        return self.vec_sum / len(self.members)

    def spread(self) -> float:
        """Current average distance to centroid, from cached sums."""
        if not self.members:
            raise ValueError("empty group")
        return _spread_from_sums(len(self.members), self.vec_sum, self.sq_sum)

    def trial_spread(self, candidate: np.ndarray) -> float:
        """Average distance the group would have after absorbing candidate."""
        candidate = np.asarray(candidate, dtype=float)
        if not self.members:
            return 0.0
        vec = self.vec_sum + candidate
        sq = self.sq_sum + float(candidate @ candidate)
        return _spread_from_sums(len(self.members) + 1, vec, sq)

    def add(self, task_id: int, semantic: np.ndarray) -> None:
        semantic = np.asarray(semantic, dtype=float)
        if self.vec_sum is None:
            self.vec_sum = semantic.copy()
        else:
            self.vec_sum = self.vec_sum + semantic
        self.sq_sum += float(semantic @ semantic)
        self.members.append(task_id)


def trial_distance(group: GroupStats, candidate: np.ndarray) -> float:
    """Spread of ``group`` with ``candidate`` added, in O(d)."""
    return group.trial_spread(candidate)


@dataclass
class GroupingConfig:
    """Thresholds and search budgets for the grouping pipeline."""

    radius: float = 0.4        # group assignment threshold
    gamma: float = 1.5         # neighborhood threshold scale (> 1)
    kappa: int = 100           # permutation sample size for refinement
    r_iters: int = 100         # clustering iterations for candidate collection
    eta: int = 2               # representative cluster counts kept

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if self.kappa <= 0 or self.r_iters <= 0 or self.eta <= 0:
            raise ValueError("kappa, r_iters and eta must be positive")

    @property
    def neighborhood_radius(self) -> float:
        return self.gamma * self.radius


@dataclass
class TaskRecord:
    """One task of the stream: an id, its semantic vector, a dataset handle."""

    task_id: int
    semantic: np.ndarray
    dataset: object = None


class GroupingState:
    """Mutable grouping of a task stream into groups nested in neighborhoods.

    Only the stream driver mutates an instance; ids are assigned in creation
    order and never reused.
    """

    def __init__(self, config: GroupingConfig):
        self.config = config
        self.groups: dict[int, GroupStats] = {}
        self.neighborhoods: dict[int, GroupStats] = {}
        self.group_of: dict[int, int] = {}
        self.neighborhood_of: dict[int, int] = {}
        self.semantics: dict[int, np.ndarray] = {}
        self._next_group_id = 0
        self._next_neighborhood_id = 0

    def new_group(self) -> GroupStats:
        g = GroupStats(self._next_group_id)
        self.groups[g.group_id] = g
        self._next_group_id += 1
        return g

    def new_neighborhood(self) -> GroupStats:
        n = GroupStats(self._next_neighborhood_id)
        self.neighborhoods[n.group_id] = n
        self._next_neighborhood_id += 1
        return n

    def remove_group(self, group_id: int) -> GroupStats:
        g = self.groups.pop(group_id)
        for t in g.members:
            self.group_of.pop(t, None)
        return g

    def groups_in_neighborhood(self, neighborhood_id: int) -> list[GroupStats]:
        nb_members = self.neighborhoods[neighborhood_id].member_set
        return [
            g for g in self.groups.values()
            if g.members and g.member_set <= nb_members
        ]

    def group_count(self) -> int:
        return len(self.groups)

    def partition(self) -> "Partition":
        """Current group labels over task ids 0..T-1 (canonical form)."""
        tasks = sorted(self.group_of)
        return Partition.canonical([self.group_of[t] for t in tasks])

    def check_invariants(self, tol: float = 1e-9) -> None:
        """Recompute every group/neighborhood spread directly and verify
        radius safety, nesting and unique assignment."""
        assigned = sorted(self.group_of)
        if assigned != sorted(self.neighborhood_of):
            raise AssertionError("group/neighborhood assignments out of sync")
        seen: set[int] = set()
        for g in self.groups.values():
            if not g.members:
                raise AssertionError(f"group {g.group_id} is empty")
            overlap = seen.intersection(g.members)
            if overlap:
                raise AssertionError(f"tasks in two groups: {sorted(overlap)}")
            seen.update(g.members)
            pts = np.stack([self.semantics[t] for t in g.members])
            if avg_distance(pts) > self.config.radius + tol:
                raise AssertionError(
                    f"group {g.group_id} spread {avg_distance(pts):.6f} "
                    f"exceeds radius {self.config.radius}")
            nb_ids = {self.neighborhood_of[t] for t in g.members}
            if len(nb_ids) != 1:
                raise AssertionError(
                    f"group {g.group_id} spans neighborhoods {sorted(nb_ids)}")
        if seen != set(assigned):
            raise AssertionError("group membership and group_of disagree")
        limit = self.config.neighborhood_radius
        for nb in self.neighborhoods.values():
            pts = np.stack([self.semantics[t] for t in nb.members])
            if avg_distance(pts) > limit + tol:
                raise AssertionError(
                    f"neighborhood {nb.group_id} spread exceeds {limit}")


class Partition:
    """Cluster labels over a fixed item ordering, kept in canonical form:
    labels are 0..k-1 in order of first appearance."""

    __slots__ = ("labels",)

    def __init__(self, labels):
        labels = list(labels)
        if not labels:
            raise ValueError("empty partition")
        self.labels = labels

    @staticmethod
    def canonical(labels) -> "Partition":
        remap: dict = {}
        out = []
        for lab in labels:
            if lab not in remap:
                remap[lab] = len(remap)
            out.append(remap[lab])
        return Partition(out)

    @property
    def num_clusters(self) -> int:
        return max(self.labels) + 1

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"Partition({self.labels})"

    def clusters(self) -> list[list[int]]:
        """Item indices per cluster, by cluster id."""
        out: list[list[int]] = [[] for _ in range(self.num_clusters)]
        for i, lab in enumerate(self.labels):
            out[lab].append(i)
        return out

    def member_sets(self, items) -> list[frozenset]:
        """Clusters mapped through an item list (e.g. task ids)."""
        items = list(items)
        if len(items) != len(self.labels):
            raise ValueError("item list does not match partition length")
        return [frozenset(items[i] for i in idx) for idx in self.clusters()]
