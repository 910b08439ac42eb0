"""Prompt/key models per group, group-conditioned tuning and inference.

Tuning draws one (prompt, key) pair uniformly per gradient step from the
set of models bound to the current task, and jointly trains the shared
classifier with rows masked to the classes of the current task. Inference
routes an instance to the group whose key is nearest its backbone feature
and classifies the prompted feature over all registered classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .warmup import (
    PROMPT_INIT_NOISE,
    PROMPT_TOKENS,
    ToyBackbone,
    TaskDataset,
    WarmupPrompt,
    backbone_feature,
    key_distance,
    softmax_cross_entropy,
    _key_distance_grad,
)

POLICIES = ("universal", "specific", "adaptive", "no_refine", "avg_merge")


@dataclass
class GroupModel:
    """Prompt parameters plus key vector for one (prospective) group."""

    prompt: np.ndarray              # (p, d) tokens
    key: np.ndarray                 # (d,)
    trained_on: set[int] = field(default_factory=set)

    def copy(self) -> "GroupModel":
        return GroupModel(self.prompt.copy(), self.key.copy(),
                          set(self.trained_on))

    def pooled_prompt(self) -> np.ndarray:
        return self.prompt.mean(axis=0)


def scratch_model(dataset: TaskDataset, backbone: ToyBackbone,
                  seed: int) -> GroupModel:
    """Fresh model for a group with no usable lineage: prompt tokens and key
    start at the task's mean backbone feature, like warm-up initialization."""
    rng = np.random.default_rng(seed)
    mean_feature = backbone_feature(backbone, dataset.train_x).mean(axis=0)
    tokens = mean_feature[None, :] + PROMPT_INIT_NOISE * rng.normal(
        size=(PROMPT_TOKENS, backbone.feature_dim))
    return GroupModel(tokens, mean_feature.copy())


class SharedClassifier:
    """Linear classifier over prompted features with lazily grown rows."""

    def __init__(self, feature_dim: int):
        self.feature_dim = feature_dim
        self.class_rows: dict[int, int] = {}
        self.weights = np.zeros((0, feature_dim))
        self.bias = np.zeros(0)

    @property
    def num_classes(self) -> int:
        return len(self.class_rows)

    def ensure_classes(self, labels) -> None:
        for lab in sorted(int(v) for v in set(labels)):
            if lab not in self.class_rows:
                self.class_rows[lab] = len(self.class_rows)
                self.weights = np.vstack([self.weights, np.zeros(self.feature_dim)])
                self.bias = np.append(self.bias, 0.0)

    def rows_for(self, labels) -> np.ndarray:
        return np.array([self.class_rows[int(v)] for v in labels], dtype=int)

    def labels_by_row(self) -> np.ndarray:
        out = np.zeros(self.num_classes, dtype=int)
        for lab, row in self.class_rows.items():
            out[row] = lab
        return out


@dataclass
class TuningConfig:
    epochs: int = 20
    learning_rate: float = 0.05
    lambda_key: float = 0.1
    seed: int = 0
    distance: str = "sqeuclidean"

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs and learning_rate must be positive")
        if self.distance not in ("sqeuclidean", "cosine"):
            raise ValueError(f"unknown distance {self.distance!r}")


def tuning_loss_and_grads(model: GroupModel, weights: np.ndarray,
                          bias: np.ndarray, features: np.ndarray,
                          y_idx: np.ndarray, lambda_key: float,
                          distance: str = "sqeuclidean"):
    """Loss and gradients of one sampled-model gradient step.

    weights/bias are the classifier rows for the classes of the current
    task; y_idx indexes into those rows.
    """
    p = model.prompt.shape[0]
    h = features + model.pooled_prompt()
    logits = h @ weights.T + bias
    ce, residual = softmax_cross_entropy(logits, y_idx)
    loss = ce + float(lambda_key * np.mean(
        key_distance(features, model.key, distance)))
    g_w = residual.T @ h
    g_b = residual.sum(axis=0)
    g_pooled = weights.T @ g_b
    g_tokens = np.tile(g_pooled / p, (p, 1))
    g_key = lambda_key * _key_distance_grad(features, model.key, distance)
    return loss, g_tokens, g_key, g_w, g_b


def tune(theta: list[GroupModel], dataset: TaskDataset,
         classifier: SharedClassifier, backbone: ToyBackbone,
         config: TuningConfig, task_id: int | None = None,
         rng: np.random.Generator | None = None) -> list[float]:
    """Train the models of theta and the shared classifier on one task.

    Runs config.epochs full-batch gradient steps; each step samples one
    (prompt, key) pair uniformly from theta and updates it together with
    the classifier. The softmax spans every class registered so far, so
    rows of earlier tasks compete as negatives; classes never seen have no
    rows and are thereby masked out. Returns the per-step losses.
    """
    if not theta:
        raise ValueError("empty model set")
    x, y = dataset.train_x, dataset.train_y
    if len(y) == 0:
        raise ValueError("empty dataset")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    features = backbone_feature(backbone, x)
    classifier.ensure_classes(y)
    y_idx = classifier.rows_for(y)

    lr = config.learning_rate
    losses = []
    for _ in range(config.epochs):
        model = theta[int(rng.integers(len(theta)))]
        loss, g_tok, g_key, g_w, g_b = tuning_loss_and_grads(
            model, classifier.weights, classifier.bias, features, y_idx,
            config.lambda_key, config.distance)
        losses.append(loss)
        model.prompt = model.prompt - lr * g_tok
        model.key = model.key - lr * g_key
        classifier.weights = classifier.weights - lr * g_w
        classifier.bias = classifier.bias - lr * g_b
    if task_id is not None:
        for model in theta:
            model.trained_on.add(task_id)
    return losses


def infer_group(models: list[GroupModel], feature: np.ndarray,
                distance: str = "sqeuclidean") -> int:
    """Index of the model whose key is nearest the feature; ties go to the
    lowest index."""
    if not models:
        raise ValueError("no models")
    keys = np.stack([m.key for m in models])
    feature = np.asarray(feature, dtype=float)
    if distance == "sqeuclidean":
        d = np.sum((keys - feature) ** 2, axis=1)
    else:
        d = 1.0 - (keys @ feature) / (
            np.linalg.norm(keys, axis=1) * np.linalg.norm(feature))
    return int(np.argmin(d))


def predict(x: np.ndarray, models: list[GroupModel],
            classifier: SharedClassifier, backbone: ToyBackbone,
            distance: str = "sqeuclidean") -> int:
    """Classify one instance: route to the nearest-key group, then argmax
    the shared classifier over the prompted feature."""
    if not models:
        raise ValueError("no active groups")
    if classifier.num_classes == 0:
        raise ValueError("classifier has no registered classes")
    f = backbone_feature(backbone, x)
    g = infer_group(models, f, distance)
    h = f + models[g].pooled_prompt()
    logits = classifier.weights @ h + classifier.bias
    return int(classifier.labels_by_row()[int(np.argmax(logits))])


def predict_batch(x: np.ndarray, models: list[GroupModel],
                  classifier: SharedClassifier, backbone: ToyBackbone,
                  distance: str = "sqeuclidean") -> np.ndarray:
    """Vectorized predict over a batch of instances."""
    if not models:
        raise ValueError("no active groups")
    feats = backbone_feature(backbone, np.asarray(x, dtype=float))
    keys = np.stack([m.key for m in models])
    if distance == "sqeuclidean":
        d = ((feats[:, None, :] - keys[None, :, :]) ** 2).sum(axis=2)
    else:
        d = 1.0 - (feats @ keys.T) / (
            np.linalg.norm(feats, axis=1)[:, None]
            * np.linalg.norm(keys, axis=1)[None, :])
    routed = np.argmin(d, axis=1)
    pooled = np.stack([m.pooled_prompt() for m in models])
    h = feats + pooled[routed]
    logits = h @ classifier.weights.T + classifier.bias
    return classifier.labels_by_row()[np.argmax(logits, axis=1)]


def avg_merge(models: list[GroupModel]) -> GroupModel:
    """Merge models by componentwise averaging of prompts and keys."""
    if not models:
        raise ValueError("no models to merge")
    prompt = np.mean([m.prompt for m in models], axis=0)
    key = np.mean([m.key for m in models], axis=0)
    trained = set()
    for m in models:
        trained |= m.trained_on
    return GroupModel(prompt, key, trained)


@dataclass(frozen=True)
class PolicySpec:
    """Behavior flags of one grouping policy."""

    name: str
    forced_groups: str | None      # None | "single" | "per_task"
    collect_candidates: bool
    refine: bool
    refined_model_source: str      # "repository" | "average"
    tune_scope: str                # "containing" | "own_group"


def make_baseline(policy: str) -> PolicySpec:
    if policy == "universal":
        return PolicySpec(policy, "single", False, False, "repository", "own_group")
    if policy == "specific":
        return PolicySpec(policy, "per_task", False, False, "repository", "own_group")
    if policy == "adaptive":
        return PolicySpec(policy, None, True, True, "repository", "containing")
    if policy == "no_refine":
        return PolicySpec(policy, None, False, False, "repository", "own_group")
    if policy == "avg_merge":
        return PolicySpec(policy, None, True, True, "average", "own_group")
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
