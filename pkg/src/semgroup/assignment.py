"""Online assignment of tasks to groups and neighborhoods.

A task joins the candidate group whose trial spread is smallest, provided
that spread stays within the threshold; otherwise it starts a new group.
Group assignment is scoped to the task's neighborhood so groups always nest
inside neighborhoods (an unscoped mode is kept for comparison).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GroupingState, GroupStats, Partition, TaskRecord


@dataclass(frozen=True)
class AssignmentOutcome:
    kind: str                 # "created_new" | "joined_existing"
    group_id: int
    trial_delta: float        # best trial spread examined; inf when none


def _assign(candidates: list[GroupStats], semantic: np.ndarray,
            threshold: float) -> tuple[GroupStats | None, float]:
    """Pick the argmin-trial candidate under the threshold, or None.

    Ties break toward the lowest group id; candidates must already be in
    id order. Strict '>' starts a new group, equality joins.
    """
    best: GroupStats | None = None
    best_delta = math.inf
    for g in candidates:
        delta = g.trial_spread(semantic)
        if delta < best_delta:
            best, best_delta = g, delta
    if best is None or best_delta > threshold:
        return None, best_delta
    return best, best_delta


def assign_neighborhood(state: GroupingState, task: TaskRecord) -> AssignmentOutcome:
    """Assign a task to a neighborhood at threshold gamma*R (global scope)."""
    if task.task_id in state.neighborhood_of:
        raise ValueError(f"task {task.task_id} already assigned")
    semantic = np.asarray(task.semantic, dtype=float)
    cands = [state.neighborhoods[i] for i in sorted(state.neighborhoods)]
    chosen, delta = _assign(cands, semantic, state.config.neighborhood_radius)
    if chosen is None:
        chosen = state.new_neighborhood()
        kind = "created_new"
    else:
        kind = "joined_existing"
    chosen.add(task.task_id, semantic)
    state.neighborhood_of[task.task_id] = chosen.group_id
    state.semantics.setdefault(task.task_id, semantic)
    return AssignmentOutcome(kind, chosen.group_id, delta)


def assign_task(state: GroupingState, task: TaskRecord,
                scoped: bool = True) -> AssignmentOutcome:
    """Assign a task to a semantic group at threshold R.

    With scoping (the default), only groups lying inside the task's
    neighborhood are candidates; the neighborhood must have been assigned
    first. Unscoped mode considers every group.
    """
    if task.task_id in state.group_of:
        raise ValueError(f"task {task.task_id} already assigned")
    semantic = np.asarray(task.semantic, dtype=float)
    if scoped:
        if task.task_id not in state.neighborhood_of:
            raise ValueError("scoped assignment requires a neighborhood first")
        nb = state.neighborhood_of[task.task_id]
        cands = sorted(state.groups_in_neighborhood(nb), key=lambda g: g.group_id)
    else:
        cands = [state.groups[i] for i in sorted(state.groups)]
    chosen, delta = _assign(cands, semantic, state.config.radius)
    if chosen is None:
        chosen = state.new_group()
        kind = "created_new"
    else:
        kind = "joined_existing"
    chosen.add(task.task_id, semantic)
    state.group_of[task.task_id] = chosen.group_id
    state.semantics.setdefault(task.task_id, semantic)
    return AssignmentOutcome(kind, chosen.group_id, delta)


def sequential_grouping(ordered: np.ndarray, threshold: float) -> Partition:
    """Run the assignment rule over vectors in the given order (no scoping).

    Pure function used both by refinement simulation and by the randomized
    clustering subroutine; returns cluster labels aligned with the input
    order, in canonical form. Group statistics are kept in flat arrays so
    the per-point trial spreads are one vectorized evaluation.
    """
    ordered = np.asarray(ordered, dtype=float)
    if ordered.ndim != 2 or ordered.shape[0] == 0:
        raise ValueError("need a nonempty (n, d) array")
    n, dim = ordered.shape
    sums = np.zeros((n, dim))
    sqs = np.zeros(n)
    counts = np.zeros(n)
    num_groups = 0
    labels = np.zeros(n, dtype=int)
    for i in range(n):
        vec = ordered[i]
        vv = float(vec @ vec)
        target = num_groups
        if num_groups:
            m = counts[:num_groups] + 1.0
            cent = (sums[:num_groups] + vec) / m[:, None]
            d2 = (sqs[:num_groups] + vv) / m - np.sum(cent * cent, axis=1)
            trials = np.sqrt(np.maximum(d2, 0.0))
            best = int(np.argmin(trials))   # first minimum: lowest group id
            if trials[best] <= threshold:
                target = best
        if target == num_groups:
            num_groups += 1
        sums[target] += vec
        sqs[target] += vv
        counts[target] += 1.0
        labels[i] = target
    return Partition.canonical(labels.tolist())


def sequential_grouping_batch(ordered: np.ndarray, threshold: float) -> np.ndarray:
    """sequential_grouping over a batch of orderings at once.

    ordered has shape (batch, n, d); returns integer labels (batch, n),
    already canonical because group ids are assigned in creation order.
    Used by the refinement search, where hundreds to thousands of
    candidate task orders are replayed.
    """
    ordered = np.asarray(ordered, dtype=float)
    if ordered.ndim != 3 or ordered.shape[1] == 0:
        raise ValueError("need a nonempty (batch, n, d) array")
    batch, n, dim = ordered.shape
    rows = np.arange(batch)
    sums = np.zeros((batch, n, dim))
    sqs = np.zeros((batch, n))
    counts = np.zeros((batch, n))
    num_groups = np.zeros(batch, dtype=int)
    labels = np.zeros((batch, n), dtype=int)
    slot = np.arange(n)
    for i in range(n):
        x = ordered[:, i, :]
        xx = np.sum(x * x, axis=1)
        m = counts + 1.0
        cent = (sums + x[:, None, :]) / m[:, :, None]
        d2 = (sqs + xx[:, None]) / m - np.sum(cent * cent, axis=2)
        trials = np.sqrt(np.maximum(d2, 0.0))
        trials[slot[None, :] >= num_groups[:, None]] = np.inf
        best = np.argmin(trials, axis=1)
        join = trials[rows, best] <= threshold
        target = np.where(join, best, num_groups)
        labels[:, i] = target
        sums[rows, target] += x
        sqs[rows, target] += xx
        counts[rows, target] += 1.0
        num_groups = num_groups + (~join)
    return labels
