"""Initialization, Adam/AMSGrad, warm-up schedules and a finite-difference oracle.

Parameters are plain ``dict[str, np.ndarray]`` of float64 arrays; gradients
are dicts with the same keys. Training code is float64 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def init_linear(rows: int, cols: int, seed_or_rng=None) -> np.ndarray:
    """Xavier-uniform ``rows x cols`` weight matrix."""
    if rows < 1 or cols < 1:
        raise ValueError(f"invalid shape ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return as_rng(seed_or_rng).uniform(-bound, bound, size=(rows, cols))


def init_bias(n: int) -> np.ndarray:
    return np.zeros(n)


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores along the last axis.

    Ties go to the lower index.
    """
    scores = np.asarray(scores)
    n = scores.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} candidates")
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


class Adam:
    """Adam with bias correction; ``amsgrad=True`` keeps the running max of v.

    Second moments follow the usual convention of dividing the max-tracked
    estimate by the same bias correction as plain Adam.
    """

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, amsgrad=False):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.amsgrad = amsgrad
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.v_max: dict[str, np.ndarray] = {}

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "amsgrad": self.amsgrad}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
                if self.amsgrad:
                    self.v_max[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.amsgrad:
                np.maximum(self.v_max[name], v, out=self.v_max[name])
                v = self.v_max[name]
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class WarmupSchedule:
    factor: float
    start_epoch: int
    end_epoch: int

    def __post_init__(self):
        if self.factor < 0:
            raise ValueError("warm-up factor must be >= 0")
        if self.end_epoch <= self.start_epoch:
            raise ValueError("end_epoch must exceed start_epoch")

    def __call__(self, epoch) -> float:
        return warmup_weight(self, epoch)


def warmup_weight(schedule: WarmupSchedule, epoch) -> float:
    frac = (epoch - schedule.start_epoch) / (schedule.end_epoch - schedule.start_epoch)
    return schedule.factor * min(max(frac, 0.0), 1.0)


def finite_diff_grad(loss_fn: Callable, params, eps: float = 1e-5):
    """Central-difference gradient of ``loss_fn`` at ``params``.

    ``params`` is a single array or a dict of arrays; ``loss_fn`` takes the
    same structure. Arrays are perturbed in place and restored.
    """
    if isinstance(params, dict):
        return {k: _fd_one(lambda _: loss_fn(params), params[k], eps) for k in params}
    return _fd_one(loss_fn, params, eps)


def _fd_one(fn, arr, eps):
    if np.ndim(arr) == 0:
        x0 = float(arr)
        return (fn(x0 + eps) - fn(x0 - eps)) / (2 * eps)
    grad = np.zeros(arr.shape, dtype=np.float64)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + eps
        fp = fn(arr)
        arr[idx] = orig - eps
        fm = fn(arr)
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-5) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
