"""Permutation-simulated refinement of groups within one neighborhood.

Candidate task orders are replayed through the sequential assignment rule;
a candidate is feasible only if every group it produces exists in the
prospective repository (so a trained model can be retrieved). The feasible
candidate with the fewest groups replaces the current groups when it is a
strict reduction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .assignment import sequential_grouping_batch
from .core import GroupingState, Partition
from .models import avg_merge
from .prospective import ProspectiveRepository


@dataclass(frozen=True)
class RefinementResult:
    performed: bool
    old_group_count: int
    new_group_count: int
    winning_order: tuple[int, ...] | None = None


def _candidate_orders(member_ids: list[int], kappa: int,
                      rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Distinct candidate orders: the arrival order first, then either all
    permutations (when few) or seeded draws without replacement."""
    n = len(member_ids)
    total = math.factorial(n)
    budget = min(kappa, total)
    original = tuple(member_ids)
    out = [original]
    seen = {original}
    if total <= max(kappa, 1):
        for perm in itertools.permutations(member_ids):
            if len(out) >= budget:
                break
            if perm not in seen:
                seen.add(perm)
                out.append(perm)
        return out
    while len(out) < budget:
        perm = tuple(int(member_ids[i]) for i in rng.permutation(n))
        if perm not in seen:
            seen.add(perm)
            out.append(perm)
    return out


def _best_feasible(orders: list[tuple[int, ...]], semantics: dict,
                   radius: float, repo: ProspectiveRepository | None,
                   member_ids: list[int]) -> tuple[list[int], Partition] | None:
    """Scan candidate orders (batch-evaluated) for the feasible grouping
    with the fewest groups; first encountered wins ties."""
    vec = {t: np.asarray(semantics[t], dtype=float) for t in member_ids}
    pts = np.stack([np.stack([vec[t] for t in order]) for order in orders])
    labels = sequential_grouping_batch(pts, radius)
    counts = labels.max(axis=1) + 1
    # stable count-order scan: the first feasible candidate found has the
    # minimal feasible count, and ties keep the sampling order
    for idx in np.argsort(counts, kind="stable"):
        order = orders[idx]
        part = Partition(labels[idx].tolist())
        if _feasible(part, order, repo):
            return list(order), _relabel_to(order, part, member_ids)
    return None


def _feasible(partition: Partition, order: tuple[int, ...],
              repo: ProspectiveRepository | None) -> bool:
    if repo is None:
        return True
    return all(ms in repo for ms in partition.member_sets(order))


def _relabel_to(order: tuple[int, ...], partition: Partition,
                member_ids: list[int]) -> Partition:
    """Re-express a partition over ``order`` in the arrival order of
    ``member_ids``."""
    label_of = {task: partition.labels[i] for i, task in enumerate(order)}
    return Partition.canonical([label_of[t] for t in member_ids])


def find_minimum_group_order(member_ids: list[int], semantics: dict,
                             radius: float, repo: ProspectiveRepository | None,
                             kappa: int, rng: np.random.Generator
                             ) -> tuple[list[int], Partition] | None:
    """Feasible task order with the fewest groups under sequential
    assignment at the given radius, or None when no candidate is feasible.

    member_ids must be in arrival order; ties keep the first candidate
    encountered under the deterministic sampling order.
    """
    if not member_ids:
        raise ValueError("empty neighborhood")
    orders = _candidate_orders(member_ids, kappa, rng)
    return _best_feasible(orders, semantics, radius, repo, member_ids)


def exhaustive_min_groups(member_ids: list[int], semantics: dict,
                          radius: float,
                          repo: ProspectiveRepository | None
                          ) -> Partition | None:
    """Brute-force oracle: exact minimum feasible group count over all
    orders of at most 8 tasks."""
    if len(member_ids) > 8:
        raise ValueError("oracle size bound: |N| must be at most 8")
    if not member_ids:
        raise ValueError("empty neighborhood")
    orders = list(itertools.permutations(member_ids))
    best = _best_feasible(orders, semantics, radius, repo, list(member_ids))
    return None if best is None else best[1]


def is_reduced(candidate: Partition, state: GroupingState,
               neighborhood_id: int) -> bool:
    """Whether the candidate has strictly fewer groups than the current
    state groups covering this neighborhood."""
    nb = state.neighborhoods[neighborhood_id]
    if len(candidate) != nb.size:
        raise ValueError("candidate does not cover the neighborhood")
    current = len(state.groups_in_neighborhood(neighborhood_id))
    return candidate.num_clusters < current


def apply_refinement(state: GroupingState, neighborhood_id: int,
                     candidate: Partition, repo: ProspectiveRepository,
                     current_task: int,
                     model_source: str = "repository",
                     winning_order: list[int] | None = None) -> RefinementResult:
    """Replace the neighborhood's groups with the candidate grouping.

    Every candidate group must already exist in the repository; with
    model_source="average" the repository models are overwritten by the
    mean of the replaced groups' models that overlap each new group
    (the averaging ablation). Adapting the current task's group model is
    the caller's tuning step.
    """
    nb = state.neighborhoods[neighborhood_id]
    member_ids = list(nb.members)
    if len(candidate) != len(member_ids):
        raise ValueError("candidate does not cover the neighborhood")
    new_sets = candidate.member_sets(member_ids)
    missing = [ms for ms in new_sets if ms not in repo]
    if missing:
        raise KeyError(f"no repository model for {sorted(missing[0])}")

    old_groups = state.groups_in_neighborhood(neighborhood_id)
    old_count = len(old_groups)
    old_models = {g.group_id: repo.get(g.member_set) for g in old_groups}

    if model_source == "average":
        for ms in new_sets:
            overlapping = [old_models[g.group_id] for g in old_groups
                           if g.member_set & ms]
            repo.set_model(ms, avg_merge(overlapping))
    elif model_source != "repository":
        raise ValueError(f"unknown model source {model_source!r}")

    for g in old_groups:
        state.remove_group(g.group_id)
    for ms in new_sets:
        group = state.new_group()
        for t in sorted(ms):
            group.add(t, state.semantics[t])
            state.group_of[t] = group.group_id
    order = tuple(winning_order) if winning_order is not None else tuple(member_ids)
    return RefinementResult(True, old_count, len(new_sets), order)
