"""Random hyperparameter search.

Continuous values are sampled uniformly in log space; some take a fixed
value with a given probability instead. Each trial gets its own seed
(``seed ^ trial_id``), so the configs and the ranking do not depend on
whether trials run one after another or concurrently.
"""

from __future__ import annotations

import json
import logging
import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .cada_vae import CadaVaeConfig
from .simple_zsl import SimpleZslConfig

log = logging.getLogger(__name__)

SIZES = (32, 128, 256, 512, 1024)


# -- search space ---------------------------------------------------------------


@dataclass(frozen=True)
class Categorical:
    options: tuple

    def __post_init__(self):
        if not self.options:
            raise ValueError("categorical set must be non-empty")

    def sample(self, rng: np.random.Generator):
        return self.options[int(rng.integers(len(self.options)))]

    def contains(self, value) -> bool:
        return value in self.options


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError(f"need 0 < lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng: np.random.Generator) -> float:
        return sample_log_uniform(self.lo, self.hi, rng)

    def contains(self, value) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class Mixture:
    """``value`` with probability ``p``, otherwise a draw from ``other``."""

    p: float
    value: object
    other: LogUniform

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")

    def sample(self, rng: np.random.Generator):
        if rng.random() < self.p:
            return self.value
        return self.other.sample(rng)

    def contains(self, value) -> bool:
        return value == self.value or self.other.contains(value)


def sample_log_uniform(lo: float, hi: float, rng: np.random.Generator) -> float:
    if lo <= 0 or hi <= 0:
        raise ValueError("log-uniform bounds must be positive")
    if lo > hi:
        raise ValueError("lo must be <= hi")
    if lo == hi:
        return float(lo)
    # clip guards against exp(log(x)) rounding a hair outside the interval
    return float(min(max(math.exp(rng.uniform(math.log(lo), math.log(hi))), lo), hi))


SIMPLE_SPACE: dict[str, object] = {
    "batch_size": Categorical(SIZES),
    "d_embed": Categorical(SIZES),
    "margin": Mixture(0.5, 1.0, LogUniform(0.1, 100.0)),
    "beta1": Categorical((0.5, 0.9)),
    "learning_rate": LogUniform(3e-5, 1e-2),
}

_CADA_ENCODERS = ((1560, 1560), (2048, 1024), (1560,), (1024, 512))

CADA_SPACE: dict[str, object] = {
    "batch_size": Categorical(SIZES),
    "latent_dim": Categorical(SIZES),
    "img_encoder": Categorical(_CADA_ENCODERS),
    "img_decoder": Categorical(((1660,), (1024, 2048), (1560,), (512,))),
    "aux_encoder": Categorical(_CADA_ENCODERS),
    "aux_decoder": Categorical(((1660,), (1024, 2048), (1560,), (2048,), (512,))),
    "beta_factor": Mixture(0.3, "fixed", LogUniform(0.1, 30.0)),
    "cross_recon_factor": LogUniform(0.25, 50.0),
    "dist_align_factor": LogUniform(0.25, 100.0),
}


def _draw(space: Mapping[str, object], rng: np.random.Generator) -> dict:
    # fields are drawn in declaration order so a seed fixes the whole config
    out = {}
    for name, spec in space.items():
        v = spec.sample(rng)
        out[name] = int(v) if isinstance(v, (int, np.integer)) and not isinstance(v, bool) else v
    return out


def sample_simple_config(rng, **fixed) -> SimpleZslConfig:
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    d = _draw(SIMPLE_SPACE, rng)
    d["margin"] = float(d["margin"])
    d["beta1"] = float(d["beta1"])
    d.update(fixed)
    return SimpleZslConfig(**d)


def sample_cada_config(rng, **fixed) -> CadaVaeConfig:
    """Sampled CADA-VAE config; the remaining fields keep their fixed defaults.

    A fixed beta means ``beta = 1`` with no warm-up.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    d = _draw(CADA_SPACE, rng)
    if d["beta_factor"] == "fixed":
        d["beta_factor"], d["beta_fixed"] = 1.0, True
    else:
        d["beta_fixed"] = False
    d.update(fixed)
    return CadaVaeConfig(**d)


SAMPLERS: dict[str, Callable] = {"simple": sample_simple_config, "cada": sample_cada_config}


# -- running trials -------------------------------------------------------------


@dataclass
class RunRecord:
    trial_id: int
    seed: int
    config: dict
    status: str = "pending"  # "ok" | "failed"
    history: list = field(default_factory=list)
    val_top1: float | None = None
    val_top5: float | None = None
    error: str | None = None
    wall_time: float = 0.0
    rank: int | None = None

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "trial_id": self.trial_id,
            "seed": self.seed,
            "rank": self.rank,
            "status": self.status,
            "config": self.config,
            "val_top1": self.val_top1,
            "val_top5": self.val_top5,
            "history": self.history,
            "error": self.error,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def rank_key(r: RunRecord):
    ok = r.status == "ok"
    return (not ok, -(r.val_top5 or 0.0) if ok else 0.0, -(r.val_top1 or 0.0) if ok else 0.0,
            r.trial_id)


def _run_trial(trial_id: int, seed: int, sampler, trainer, evaluator) -> RunRecord:
    trial_seed = seed ^ trial_id
    rng = np.random.default_rng(trial_seed)
    config = sampler(rng, seed=trial_seed)
    rec = RunRecord(trial_id, trial_seed, config.to_dict())
    t0 = time.perf_counter()
    try:
        model, history = trainer(config)
        top1, top5 = evaluator(model)
        rec.history = [h if isinstance(h, dict) else float(h) for h in history]
        rec.val_top1, rec.val_top5 = float(top1), float(top5)
        rec.status = "ok"
    except Exception as e:  # noqa: BLE001 - a failed trial must not end the search
        rec.status = "failed"
        rec.error = f"{type(e).__name__}: {e}"
        log.warning("trial %d failed\n%s", trial_id, traceback.format_exc())
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_search(space: str | Callable, n_trials: int, trainer: Callable, evaluator: Callable,
               seed: int = 0, run_dir=None, parallel: int = 1) -> list[RunRecord]:
    """Run ``n_trials`` sampled configs and rank them.

    ``space`` is ``"simple"``, ``"cada"`` or a sampler ``(rng, seed=...) ->
    config``. ``trainer(config)`` returns ``(model, history)`` and
    ``evaluator(model)`` returns val ``(top1, top5)``. Records come back best
    first: val top-5 descending, then top-1, then trial id; failed trials
    last. With ``run_dir`` every record is written to its own JSON file and an
    ``index.tsv`` summary is added.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sampler = SAMPLERS[space] if isinstance(space, str) else space
    out = Path(run_dir) if run_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def one(i):
        rec = _run_trial(i, seed, sampler, trainer, evaluator)
        if out is not None:
            _write_record(out, rec)
        return rec

    if parallel > 1:
        with ThreadPoolExecutor(parallel) as pool:
            records = list(pool.map(one, range(n_trials)))
    else:
        records = [one(i) for i in range(n_trials)]

    records.sort(key=rank_key)
    for r, rec in enumerate(records, 1):
        rec.rank = r
    if out is not None:
        for rec in records:
            _write_record(out, rec)
        write_index(records, out / "index.tsv")
    return records


def _write_record(out: Path, rec: RunRecord) -> None:
    # wall time lives in index.tsv only, so replays give identical JSON
    (out / f"trial_{rec.trial_id:04d}.json").write_text(
        json.dumps(rec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_index(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("rank\ttrial\tval_top5\tval_top1\tstatus\twall_time\n")
        for r in records:
            f.write(f"{r.rank}\t{r.trial_id}\t{r.val_top5}\t{r.val_top1}\t{r.status}\t"
                    f"{r.wall_time:.3f}\n")
