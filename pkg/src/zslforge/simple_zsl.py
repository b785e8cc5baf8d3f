"""Joint-embedding ZSL model with a multi-class hinge loss.

Images and class descriptions are mapped into a shared space by two affine
projections; the score of class ``i`` for image ``x`` is the dot product
``(W_x x + b_x) . (W_t t_i + b_t)``. Training minimizes, per sample,

    sum_{i != y} max(0, m - s_y + s_i)

averaged over the batch. Inference ranks candidate classes by the same
score.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .numeric import Adam, as_rng, init_bias, init_linear, top_k

PARAM_NAMES = ("W_x", "b_x", "W_t", "b_t")


@dataclass
class SimpleZslConfig:
    d_embed: int = 128
    margin: float = 1.0
    batch_size: int = 32
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.d_embed < 1 or self.batch_size < 1:
            raise ValueError("d_embed and batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimpleZslParams:
    W_x: np.ndarray
    b_x: np.ndarray
    W_t: np.ndarray
    b_t: np.ndarray

    @classmethod
    def init(cls, d_embed: int, d_img: int, d_aux: int, seed_or_rng=None) -> "SimpleZslParams":
        rng = as_rng(seed_or_rng)
        return cls(init_linear(d_embed, d_img, rng), init_bias(d_embed),
                   init_linear(d_embed, d_aux, rng), init_bias(d_embed))

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "SimpleZslParams":
        return SimpleZslParams(*(getattr(self, k).copy() for k in PARAM_NAMES))

    @property
    def d_img(self):
        return self.W_x.shape[1]

    @property
    def d_aux(self):
        return self.W_t.shape[1]


@dataclass
class TrainResult:
    params: SimpleZslParams
    history: list[float] = field(default_factory=list)
    val_top5: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def project(params: SimpleZslParams, vectors, side: str = "image") -> np.ndarray:
    """Affine projection into the joint space; works on one vector or a batch."""
    if side == "image":
        W, b = params.W_x, params.b_x
    elif side == "aux":
        W, b = params.W_t, params.b_t
    else:
        raise ValueError(f"side must be 'image' or 'aux', not {side!r}")
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != W.shape[1]:
        raise ValueError(f"{side} vector has dim {v.shape[-1]}, expected {W.shape[1]}")
    return v @ W.T + b


def hinge_loss(scores, y: int, margin: float) -> float:
    s = np.asarray(scores, dtype=np.float64)
    terms = np.maximum(0.0, margin - s[y] + s)
    terms[y] = 0.0
    return float(terms.sum())


def loss_and_grad(params: SimpleZslParams, images, labels, aux, margin: float):
    """Batch-mean hinge loss and gradients for all four parameters.

    ``labels`` index rows of ``aux``. Hinge terms that are exactly zero get
    a zero subgradient.
    """
    x = np.asarray(images, dtype=np.float64)
    t = np.asarray(aux, dtype=np.float64)
    y = np.asarray(labels)
    n_cls = t.shape[0]
    if y.size and (y.min() < 0 or y.max() >= n_cls):
        raise IndexError(f"label out of range for {n_cls} classes")
    B = x.shape[0]
    rows = np.arange(B)

    E = x @ params.W_x.T + params.b_x
    P = t @ params.W_t.T + params.b_t
    S = E @ P.T
    H = margin - S[rows, y][:, None] + S
    H[rows, y] = 0.0
    active = (H > 0).astype(np.float64)
    loss = float(np.maximum(H, 0.0).sum() / B)

    dS = active / B
    dS[rows, y] = -active.sum(axis=1) / B
    dE = dS @ P
    dP = dS.T @ E
    grads = {
        "W_x": dE.T @ x,
        "b_x": dE.sum(axis=0),
        "W_t": dP.T @ t,
        "b_t": dP.sum(axis=0),
    }
    return loss, grads


def scores(params: SimpleZslParams, images, aux) -> np.ndarray:
    return project(params, images, "image") @ project(params, aux, "aux").T


def predict(params: SimpleZslParams, image, aux, k: int = 1, ids=None):
    """Top-k candidate classes for one image (or a batch) by descending score.

    Returns row indices into ``aux``, or the matching entries of ``ids``.
    """
    if hasattr(aux, "data") and hasattr(aux, "ids"):
        ids = aux.ids if ids is None else ids
        aux = aux.data
    idx = top_k(scores(params, image, aux), k)
    if ids is None:
        return idx
    return np.asarray(ids, dtype=object)[idx]


def train(config: SimpleZslConfig, aux, images, labels, val=None) -> TrainResult:
    """Fit the projections with Adam on shuffled minibatches.

    ``aux`` holds one row per seen class; ``labels`` index into it. ``val``
    is an optional ``(images, labels, aux)`` triple for unseen validation
    classes; when given, the parameters of the epoch with the best val
    top-5 accuracy are returned.
    """
    x = np.asarray(images, dtype=np.float64)
    t = np.asarray(aux, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    params = SimpleZslParams.init(config.d_embed, x.shape[1], t.shape[1], rng)
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    result = TrainResult(params.copy())
    best = -1.0
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            b = order[start:start + config.batch_size]
            loss, grads = loss_and_grad(params, x[b], y[b], t, config.margin)
            opt.step(params.as_dict(), grads)
            total += loss * len(b)
        result.history.append(total / n)
        if val is not None:
            vx, vy, vt = val
            acc = _mean_per_class_topk(params, vx, vy, vt, min(5, len(vt)))
            result.val_top5.append(acc)
            if acc > best:
                best = acc
                result.best_epoch = epoch
                result.params = params.copy()
    if val is None:
        result.params = params
    return result


def _mean_per_class_topk(params, images, labels, aux, k) -> float:
    pred = top_k(scores(params, images, aux), k)
    labels = np.asarray(labels)
    hit = (pred == labels[:, None]).any(axis=1)
    return float(np.mean([hit[labels == c].mean() for c in np.unique(labels)]))
