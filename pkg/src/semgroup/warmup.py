"""Toy backbone and warm-up training that produces task semantics.

The backbone is a frozen, seeded linear map with orthonormal columns; a
prompt contributes an additive shift equal to its token average. Warm-up
runs full-batch gradient descent on the cross-entropy of a task-local
linear head over prompted features, plus a weighted distance between the
instance features and a learnable key. The task's semantic vector is the
l2-normalized token average of the trained prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROMPT_TOKENS = 4
PROMPT_INIT_NOISE = 0.02


@dataclass(frozen=True)
class ToyBackbone:
    """Frozen feature extractor: f(x) = x @ projection."""

    projection: np.ndarray     # (input_dim, feature_dim), orthonormal columns
    input_dim: int
    feature_dim: int


def make_backbone(input_dim: int, feature_dim: int, seed: int) -> ToyBackbone:
    if feature_dim > input_dim:
        raise ValueError("feature_dim cannot exceed input_dim")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(input_dim, input_dim))
    q, _ = np.linalg.qr(raw)
    proj = np.ascontiguousarray(q[:, :feature_dim])
    proj.setflags(write=False)
    return ToyBackbone(proj, input_dim, feature_dim)


@dataclass
class TaskDataset:
    """Instances of one task plus a fixed held-out evaluation mask."""

    x: np.ndarray                      # (n, input_dim)
    y: np.ndarray                      # (n,) integer class labels
    heldout: np.ndarray | None = None  # (n,) bool; None means all training

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.x.ndim != 2 or self.x.shape[0] == 0:
            raise ValueError("dataset needs a nonempty (n, m) input array")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("labels must align with instances")
        if self.heldout is None:
            self.heldout = np.zeros(len(self.y), dtype=bool)
        else:
            self.heldout = np.asarray(self.heldout, dtype=bool)

    @property
    def class_set(self) -> set[int]:
        return set(int(v) for v in np.unique(self.y))

    @property
    def train_x(self) -> np.ndarray:
        return self.x[~self.heldout]

    @property
    def train_y(self) -> np.ndarray:
        return self.y[~self.heldout]

    @property
    def heldout_x(self) -> np.ndarray:
        return self.x[self.heldout]

    @property
    def heldout_y(self) -> np.ndarray:
        return self.y[self.heldout]


@dataclass
class WarmupConfig:
    iterations: int = 150
    learning_rate: float = 0.05
    lambda_key: float = 0.1
    seed: int = 0
    distance: str = "sqeuclidean"   # or "cosine"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.distance not in ("sqeuclidean", "cosine"):
            raise ValueError(f"unknown distance {self.distance!r}")


@dataclass
class WarmupPrompt:
    tokens: np.ndarray     # (p, feature_dim)

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=float)
        if self.tokens.ndim != 2:
            raise ValueError("prompt tokens must be a (p, d) matrix")
        if not np.all(np.isfinite(self.tokens)):
            raise ValueError("prompt tokens must be finite")

    def pooled(self) -> np.ndarray:
        return self.tokens.mean(axis=0)


def backbone_feature(backbone: ToyBackbone, x: np.ndarray) -> np.ndarray:
    """Frozen feature of one input vector or a batch of them."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != backbone.input_dim:
        raise ValueError(
            f"input dim {x.shape[-1]} does not match backbone {backbone.input_dim}")
    return x @ backbone.projection


def prompted_feature(backbone: ToyBackbone, prompt: WarmupPrompt,
                     x: np.ndarray) -> np.ndarray:
    """Backbone feature shifted by the prompt's token average."""
    return backbone_feature(backbone, x) + prompt.pooled()


def extract_semantic(prompt: WarmupPrompt) -> np.ndarray:
    """l2-normalized token average of a prompt."""
    pooled = prompt.pooled()
    norm = np.linalg.norm(pooled)
    if norm < 1e-12:
        raise ValueError("degenerate prompt")
    return pooled / norm


def key_distance(features: np.ndarray, key: np.ndarray, distance: str) -> np.ndarray:
    """Per-instance distance between features (n, d) and a key (d,)."""
    if distance == "sqeuclidean":
        diff = features - key
        return np.sum(diff * diff, axis=1)
    if distance == "cosine":
        kn = np.linalg.norm(key)
        fn = np.linalg.norm(features, axis=1)
        return 1.0 - (features @ key) / (fn * kn)
    raise ValueError(f"unknown distance {distance!r}")


def _key_distance_grad(features: np.ndarray, key: np.ndarray,
                       distance: str) -> np.ndarray:
    """Gradient wrt the key of the mean per-instance distance."""
    n = features.shape[0]
    if distance == "sqeuclidean":
        return 2.0 * (key - features.mean(axis=0))
    kn = np.linalg.norm(key)
    fn = np.linalg.norm(features, axis=1)
    cos = (features @ key) / (fn * kn)
    # d/dk of -cos: -(f/(|f||k|) - cos * k/|k|^2), averaged
    grads = -(features / (fn[:, None] * kn) - np.outer(cos, key) / kn**2)
    return grads.sum(axis=0) / n


def softmax_cross_entropy(logits: np.ndarray, y_idx: np.ndarray):
    """Mean CE and the per-instance logit residual (softmax - onehot) / n."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(shifted)
    probs = expl / expl.sum(axis=1, keepdims=True)
    ce = float(-np.mean(np.log(probs[np.arange(n), y_idx] + 1e-300)))
    residual = probs.copy()
    residual[np.arange(n), y_idx] -= 1.0
    return ce, residual / n


def warmup_loss_and_grads(tokens: np.ndarray, key: np.ndarray,
                          head_w: np.ndarray, head_b: np.ndarray,
                          features: np.ndarray, y_idx: np.ndarray,
                          lambda_key: float, distance: str = "sqeuclidean"):
    """Warm-up loss with analytic gradients for every parameter block.

    features are precomputed backbone features (n, d); y_idx are class
    indices into the rows of head_w.
    """
    p = tokens.shape[0]
    pooled = tokens.mean(axis=0)
    h = features + pooled
    logits = h @ head_w.T + head_b
    ce, residual = softmax_cross_entropy(logits, y_idx)
    key_term = float(lambda_key * np.mean(key_distance(features, key, distance)))
    loss = ce + key_term

    g_w = residual.T @ h
    g_b = residual.sum(axis=0)
    g_pooled = head_w.T @ g_b          # shared shift acts like a bias through W
    g_tokens = np.tile(g_pooled / p, (p, 1))
    g_key = lambda_key * _key_distance_grad(features, key, distance)
    return loss, g_tokens, g_key, g_w, g_b


@dataclass
class WarmupResult:
    prompt: WarmupPrompt
    key: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    losses: list[float] = field(default_factory=list)


def run_warmup(dataset: TaskDataset, backbone: ToyBackbone,
               config: WarmupConfig) -> WarmupResult:
    """Full-batch gradient descent on the warm-up objective.

    Deterministic given the config seed. The prompt tokens start at the
    mean backbone feature of the task (plus small seeded noise) and the key
    starts at that mean exactly, so both begin near their data statistics.
    """
    x, y = dataset.train_x, dataset.train_y
    if len(y) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    features = backbone_feature(backbone, x)
    mean_feature = features.mean(axis=0)

    tokens = mean_feature[None, :] + PROMPT_INIT_NOISE * rng.normal(
        size=(PROMPT_TOKENS, backbone.feature_dim))
    key = mean_feature.copy()
    classes = np.unique(y)
    y_idx = np.searchsorted(classes, y)
    head_w = np.zeros((len(classes), backbone.feature_dim))
    head_b = np.zeros(len(classes))

    losses = []
    lr = config.learning_rate
    for _ in range(config.iterations):
        loss, g_tok, g_key, g_w, g_b = warmup_loss_and_grads(
            tokens, key, head_w, head_b, features, y_idx,
            config.lambda_key, config.distance)
        losses.append(loss)
        tokens = tokens - lr * g_tok
        key = key - lr * g_key
        head_w = head_w - lr * g_w
        head_b = head_b - lr * g_b
    return WarmupResult(WarmupPrompt(tokens), key, head_w, head_b, losses)


def warmup_train(dataset: TaskDataset, backbone: ToyBackbone,
                 config: WarmupConfig) -> tuple[WarmupPrompt, np.ndarray]:
    """Train and return the warm-up prompt and key (the task-local head is
    discarded)."""
    res = run_warmup(dataset, backbone, config)
    return res.prompt, res.key
