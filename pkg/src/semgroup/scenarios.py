"""Seeded synthetic task-stream generators for the three shift regimes.

Tasks are Gaussian class blobs in input space. Each semantic owns a hidden
center direction and a fixed block of class labels; an occurrence of a
semantic resamples instances around a jittered copy of its center, so
recurring tasks look like fresh draws from the same underlying dataset.
Class offsets are centered within each semantic's class block, which makes
the mean input of a task equal to its planted semantic (times a scale), the
signal the warm-up learner recovers.

Every clean stream ships with a separation certificate recomputed from the
planted semantics: same-semantic pair spread within the grouping radius,
cross-semantic pair spread beyond it. Generation retries with a fresh
substream when the certificate fails.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import avg_distance
from .warmup import TaskDataset

CERTIFICATE_ATTEMPTS = 10


@dataclass(frozen=True)
class ScenarioConfig:
    num_semantics: int = 5
    recurrences: int = 1
    overlap_percent: float = 0.0
    classes_per_task: int = 3
    instances_per_class: int = 30
    input_dim: int = 32
    center_separation: float = 4.0    # multiple of radius, between centers
    within_spread: float = 0.1        # typical norm of the per-task jitter
    radius: float = 0.4               # grouping radius the certificate is checked against
    semantic_scale: float = 2.0       # weight of the semantic direction in inputs
    class_scale: float = 1.5          # norm of per-class mean offsets
    noise_scale: float = 0.6          # per-component instance noise
    heldout_fraction: float = 0.2
    min_center_gap: float = 1.4       # pairwise distance floor between unit center directions
    center_layout: str = "spread"     # or "clustered": all centers near min_center_gap apart
    outlier_rate: float = 0.0         # fraction of occurrences pushed far off-center
    outlier_gap: float = 1.0          # normalized distance of outlier occurrences
    interleave: str = "random"        # or "adversarial": round-robin, outliers first
    similar_fraction: float = 0.5     # overlap regime: share of non-donor tasks made similar
    seed: int = 0

    def __post_init__(self):
        if self.num_semantics < 1 or self.recurrences < 1:
            raise ValueError("num_semantics and recurrences must be >= 1")
        if not 0.0 <= self.overlap_percent <= 100.0:
            raise ValueError("overlap_percent must lie in [0, 100]")
        if self.classes_per_task < 2:
            raise ValueError("need at least 2 classes per task")
        if self.interleave not in ("random", "adversarial"):
            raise ValueError(f"unknown interleave {self.interleave!r}")
        if self.center_layout not in ("spread", "clustered"):
            raise ValueError(f"unknown center layout {self.center_layout!r}")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ValueError("heldout_fraction must lie in [0, 1)")


@dataclass
class ScenarioStream:
    tasks: list[TaskDataset]
    true_semantic: list[int]
    planted: np.ndarray               # (T, m) hidden per-task semantics
    centers: np.ndarray               # (C, m) hidden per-semantic centers
    certificate: dict
    config: ScenarioConfig

    def __len__(self) -> int:
        return len(self.tasks)


def _sample_centers(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Hidden center directions scaled so the planted pairwise separation is
    at least center_separation * radius.

    "spread" draws directions on the unit sphere with a pairwise gap floor;
    "clustered" places all directions close to the gap (a cone around a
    base direction), so the whole family shares one neighborhood. Several
    unit vectors cannot all be far apart, so the radius scales up as needed
    rather than the gap scaling down.
    """
    m, c = cfg.input_dim, cfg.num_semantics
    gap = cfg.min_center_gap
    rho = max(1.0, cfg.center_separation * cfg.radius / gap)
    if cfg.center_layout == "clustered" and c > 1:
        # u_j = normalize(u0 + w_j) with w_j orthogonal to u0 gives pairwise
        # distance ~ sqrt(2) * w / sqrt(1 + w^2)
        ratio = gap / np.sqrt(2.0)
        if ratio >= 1.0:
            raise RuntimeError("clustered layout needs min_center_gap < sqrt(2)")
        w = ratio / np.sqrt(1.0 - ratio * ratio)
        base = rng.normal(size=m)
        base /= np.linalg.norm(base)
        dirs = []
        for _ in range(c):
            v = rng.normal(size=m)
            v -= (v @ base) * base
            v *= w / np.linalg.norm(v)
            u = base + v
            dirs.append(u / np.linalg.norm(u))
        return rho * np.stack(dirs)
    dirs = []
    budget = 2000 * c
    while len(dirs) < c:
        if budget <= 0:
            raise RuntimeError("could not place semantic centers at the requested gap")
        budget -= 1
        u = rng.normal(size=m)
        u /= np.linalg.norm(u)
        if all(np.linalg.norm(u - v) >= gap for v in dirs):
            dirs.append(u)
    return rho * np.stack(dirs)


def _class_offsets(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Mean offsets for every class label, centered within each semantic's
    class block so a task's mean input carries only its semantic."""
    total = cfg.num_semantics * cfg.classes_per_task
    raw = rng.normal(size=(total, cfg.input_dim))
    raw *= cfg.class_scale / np.linalg.norm(raw, axis=1, keepdims=True)
    for s in range(cfg.num_semantics):
        block = slice(s * cfg.classes_per_task, (s + 1) * cfg.classes_per_task)
        raw[block] -= raw[block].mean(axis=0)
    return raw


def _jitter(center: np.ndarray, spread: float, rng: np.random.Generator) -> np.ndarray:
    m = center.shape[0]
    return center + spread * rng.normal(size=m) / np.sqrt(m)


def _outlier_point(center: np.ndarray, gap: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Point whose normalized direction sits ~gap away from the center's."""
    rho = np.linalg.norm(center)
    cos_a = 1.0 - gap * gap / 2.0
    cos_a = min(max(cos_a, -0.99), 0.999)
    w = rho * np.sqrt(1.0 / cos_a**2 - 1.0) if cos_a > 0 else 3.0 * rho
    direction = rng.normal(size=center.shape[0])
    direction -= direction @ center / (rho * rho) * center
    direction /= np.linalg.norm(direction)
    return center + w * direction


def _make_task(planted: np.ndarray, labels: np.ndarray, offsets: np.ndarray,
               cfg: ScenarioConfig, rng: np.random.Generator,
               donor_pool: tuple[np.ndarray, np.ndarray] | None = None,
               donor_share: float = 0.0) -> TaskDataset:
    """Instances around the planted semantic; optionally mixes in a share of
    instances drawn from a donor semantic's pool."""
    per_class = cfg.instances_per_class
    xs, ys = [], []
    for lab in labels:
        x = (cfg.semantic_scale * planted[None, :] + offsets[lab][None, :]
             + cfg.noise_scale * rng.normal(size=(per_class, cfg.input_dim)))
        xs.append(x)
        ys.append(np.full(per_class, lab, dtype=int))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if donor_pool is not None and donor_share > 0.0:
        n = len(y)
        take = int(round(donor_share * n))
        if take:
            dx, dy = donor_pool
            pick = rng.integers(len(dy), size=take)
            swap = rng.permutation(n)[:take]
            x[swap] = dx[pick]
            y[swap] = dy[pick]
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    heldout = np.zeros(len(y), dtype=bool)
    heldout[rng.permutation(len(y))[: int(round(cfg.heldout_fraction * len(y)))]] = True
    return TaskDataset(x, y, heldout)


def _schedule(cfg: ScenarioConfig, rng: np.random.Generator) -> list[tuple[int, bool]]:
    """Arrival order of (semantic id, is_outlier) occurrence slots.

    The stream repeats the task block: round i holds each semantic's i-th
    occurrence, randomly ordered within the round ("random") or in fixed
    round-robin order with outlier occurrences first ("adversarial").
    """
    c, r = cfg.num_semantics, cfg.recurrences
    outliers_per_sem = int(round(cfg.outlier_rate * r))
    per_sem = []
    for s in range(c):
        mine = [(s, occ < outliers_per_sem) for occ in range(r)]
        if cfg.interleave == "random":
            mine = [mine[i] for i in rng.permutation(r)]
        per_sem.append(mine)
    out: list[tuple[int, bool]] = []
    for rnd in range(r):
        idx = np.arange(c) if cfg.interleave == "adversarial" else rng.permutation(c)
        out.extend(per_sem[s][rnd] for s in idx)
    return out


def _certificate(planted: np.ndarray, true_semantic: list[int],
                 outlier_flags: list[bool], cfg: ScenarioConfig) -> dict:
    """Pairwise spread audit of the planted semantics."""
    same_max = 0.0
    cross_min = float("inf")
    outlier_max = 0.0
    T = len(true_semantic)
    for i in range(T):
        for j in range(i + 1, T):
            delta = avg_distance(np.stack([planted[i], planted[j]]))
            if true_semantic[i] == true_semantic[j]:
                if outlier_flags[i] or outlier_flags[j]:
                    outlier_max = max(outlier_max, delta)
                else:
                    same_max = max(same_max, delta)
            else:
                cross_min = min(cross_min, delta)
    ok = same_max <= cfg.radius and (cross_min > cfg.radius or cross_min == float("inf"))
    return {
        "same_semantic_max_delta": same_max,
        "cross_semantic_min_delta": None if cross_min == float("inf") else cross_min,
        "outlier_pair_max_delta": outlier_max,
        "radius": cfg.radius,
        "ok": bool(ok),
    }


def _generate(cfg: ScenarioConfig, seed: int) -> ScenarioStream:
    last_cert = None
    for attempt in range(CERTIFICATE_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt, 0x5EED])
        centers = _sample_centers(cfg, rng)
        offsets = _class_offsets(cfg, rng)
        slots = _schedule(cfg, rng)
        planted, tasks, truth, outlier_flags = [], [], [], []
        for sem, is_outlier in slots:
            if is_outlier:
                point = _outlier_point(centers[sem], cfg.outlier_gap, rng)
                point = _jitter(point, cfg.within_spread, rng)
            else:
                point = _jitter(centers[sem], cfg.within_spread, rng)
            labels = np.arange(sem * cfg.classes_per_task,
                               (sem + 1) * cfg.classes_per_task)
            tasks.append(_make_task(point, labels, offsets, cfg, rng))
            planted.append(point)
            truth.append(sem)
            outlier_flags.append(is_outlier)
        planted = np.stack(planted)
        cert = _certificate(planted, truth, outlier_flags, cfg)
        last_cert = cert
        if cert["ok"]:
            return ScenarioStream(tasks, truth, planted, centers, cert, cfg)
    raise RuntimeError(f"separation certificate failed: {last_cert}")


def gen_uniform_mild(config: ScenarioConfig, seed: int | None = None,
                     num_tasks: int | None = None) -> ScenarioStream:
    """All tasks drawn around one semantic center; expected outcome is a
    single group."""
    cfg = replace(config, num_semantics=1, overlap_percent=0.0,
                  outlier_rate=0.0,
                  recurrences=num_tasks or max(config.recurrences, 2))
    return _generate(cfg, config.seed if seed is None else seed)


def gen_uniform_abrupt(num_tasks: int, config: ScenarioConfig,
                       seed: int | None = None) -> ScenarioStream:
    """Mutually distant semantics, one task each."""
    if num_tasks < 2:
        raise ValueError("need at least 2 tasks")
    cfg = replace(config, num_semantics=num_tasks, recurrences=1,
                  overlap_percent=0.0, outlier_rate=0.0)
    return _generate(cfg, config.seed if seed is None else seed)


def gen_recurrence(num_semantics: int, recurrences: int,
                   config: ScenarioConfig,
                   seed: int | None = None) -> ScenarioStream:
    """num_semantics * recurrences tasks; each semantic recurs exactly
    recurrences times with resampled instances and jittered semantics."""
    if num_semantics < 2 or recurrences < 1:
        raise ValueError("need num_semantics >= 2 and recurrences >= 1")
    cfg = replace(config, num_semantics=num_semantics,
                  recurrences=recurrences, overlap_percent=0.0)
    return _generate(cfg, config.seed if seed is None else seed)


def gen_overlap(overlap_percent: float, config: ScenarioConfig,
                seed: int | None = None) -> ScenarioStream:
    """One task per semantic; designated similar tasks draw a share of
    their instances from the donor semantic (semantic 0).

    Ground truth labels similar tasks by the donor when the share is at
    least half, by their own semantic otherwise.
    """
    if not 0.0 <= overlap_percent <= 100.0:
        raise ValueError("overlap share must lie in [0, 100]")
    cfg = replace(config, overlap_percent=overlap_percent, recurrences=1,
                  outlier_rate=0.0, interleave="random")
    seed = config.seed if seed is None else seed
    share = overlap_percent / 100.0

    last_error = None
    for attempt in range(CERTIFICATE_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt, 0x51AB])
        centers = _sample_centers(cfg, rng)
        offsets = _class_offsets(cfg, rng)
        c = cfg.num_semantics
        num_similar = int(round(cfg.similar_fraction * (c - 1)))
        similar = set(range(c - num_similar, c)) if num_similar else set()

        donor_labels = np.arange(cfg.classes_per_task)
        donor_planted = _jitter(centers[0], cfg.within_spread, rng)
        donor_task = _make_task(donor_planted, donor_labels, offsets, cfg, rng)
        donor_pool = (donor_task.x.copy(), donor_task.y.copy())

        tasks, planted, truth = [donor_task], [donor_planted], [0]
        for sem in range(1, c):
            labels = np.arange(sem * cfg.classes_per_task,
                               (sem + 1) * cfg.classes_per_task)
            if sem in similar:
                point = (1.0 - share) * _jitter(centers[sem], cfg.within_spread, rng) \
                    + share * donor_planted
                tasks.append(_make_task(point, labels, offsets, cfg, rng,
                                        donor_pool=donor_pool, donor_share=share))
                truth.append(0 if share >= 0.5 else sem)
            else:
                point = _jitter(centers[sem], cfg.within_spread, rng)
                tasks.append(_make_task(point, labels, offsets, cfg, rng))
                truth.append(sem)
            planted.append(point)
        planted = np.stack(planted)
        flags = [False] * len(truth)
        cert = _certificate(planted, truth, flags, cfg)
        # the blend geometry only separates cleanly at the extremes; record
        # the audit but enforce it only when it is attainable
        attainable = share in (0.0, 1.0) or not similar
        if cert["ok"] or not attainable:
            return ScenarioStream(tasks, list(truth), planted, centers, cert, cfg)
        last_error = cert
    raise RuntimeError(f"separation certificate failed: {last_error}")


def save_stream(stream: ScenarioStream, path: str | Path,
                sidecar_path: str | Path | None = None) -> Path:
    """Stream to JSON lines (one task per line); hidden truth goes to a
    sidecar file so the pipeline cannot read it by accident."""
    path = Path(path)
    sidecar = Path(sidecar_path) if sidecar_path else path.with_suffix(".truth.json")
    with path.open("w") as fh:
        for t, task in enumerate(stream.tasks):
            fh.write(json.dumps({
                "task": t,
                "x": task.x.tolist(),
                "y": task.y.tolist(),
                "heldout": task.heldout.astype(int).tolist(),
            }, sort_keys=True))
            fh.write("\n")
    with sidecar.open("w") as fh:
        json.dump({
            "true_semantic": stream.true_semantic,
            "planted": stream.planted.tolist(),
            "centers": stream.centers.tolist(),
            "certificate": stream.certificate,
            "config": asdict(stream.config),
        }, fh, sort_keys=True, indent=1)
    return sidecar


def load_stream(path: str | Path,
                sidecar_path: str | Path | None = None) -> ScenarioStream:
    path = Path(path)
    tasks = []
    with path.open() as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            tasks.append(TaskDataset(
                np.asarray(rec["x"], dtype=float),
                np.asarray(rec["y"], dtype=int),
                np.asarray(rec["heldout"], dtype=bool)))
    sidecar = Path(sidecar_path) if sidecar_path else path.with_suffix(".truth.json")
    truth, planted, centers, cert, cfg = [], None, None, {}, None
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        truth = list(meta["true_semantic"])
        planted = np.asarray(meta["planted"], dtype=float)
        centers = np.asarray(meta["centers"], dtype=float)
        cert = meta["certificate"]
        cfg = ScenarioConfig(**meta["config"])
    if cfg is None:
        cfg = ScenarioConfig(input_dim=tasks[0].x.shape[1])
    if planted is None:
        planted = np.zeros((len(tasks), tasks[0].x.shape[1]))
        centers = np.zeros((0, tasks[0].x.shape[1]))
    return ScenarioStream(tasks, truth, planted, centers, cert, cfg)
