"""Synthetic ZSL data with a known linear link between images and descriptions.

Each class ``c`` gets a prototype ``p_c ~ N(0, I)``. Its description vector
is ``A p_c`` and its image samples are ``B p_c + noise``, with ``A`` and
``B`` fixed random matrices. By default the maps are random semi-orthogonal
matrices (orthonormal columns or rows), so they preserve the geometry of the
prototypes; ``map_kind="gaussian"`` draws entries from ``N(0, 1/d_proto)``
instead, which gives badly conditioned square maps. Because both modalities
are linear in the prototype, a linear joint embedding can separate unseen
classes as well as the noise allows.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import (ClassRecord, ClassRegistry, FeatureMatrix, Split, write_class_registry,
                     write_feature_matrix, write_split)

WNID_BASE = 90_000_000


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 20
    n_seen: int = 15
    d_proto: int = 16
    d_img: int = 32
    d_aux: int = 16
    samples_per_class: int = 100
    noise_scale: float = 0.05
    seed: int = 0
    identity_image_map: bool = False
    map_kind: str = "orthogonal"

    def __post_init__(self):
        if not 0 < self.n_seen < self.n_classes:
            raise ValueError("need 0 < n_seen < n_classes")
        if min(self.d_proto, self.d_img, self.d_aux, self.samples_per_class) < 1:
            raise ValueError("dimensions and samples_per_class must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if self.map_kind not in ("orthogonal", "gaussian"):
            raise ValueError(f"unknown map_kind {self.map_kind!r}")
        if self.identity_image_map and self.d_img != self.d_proto:
            raise ValueError("identity_image_map needs d_img == d_proto")

    def to_dict(self):
        return asdict(self)


@dataclass
class SyntheticBundle:
    spec: SyntheticSpec
    registry: ClassRegistry
    train: Split
    test: Split
    images: FeatureMatrix
    aux: FeatureMatrix
    prototypes: np.ndarray
    image_map: np.ndarray
    aux_map: np.ndarray

    def image_rows(self, split: Split) -> tuple[np.ndarray, np.ndarray]:
        """Image features of a split and labels indexing ``split.wnids``."""
        pos = {w: i for i, w in enumerate(split.wnids)}
        labels = self.images.labels()
        keep = [i for i, w in enumerate(labels) if w in pos]
        return (self.images.data[keep].astype(np.float64),
                np.array([pos[labels[i]] for i in keep], dtype=np.int64))


def wnid_for(c: int) -> str:
    return f"n{WNID_BASE + c:08d}"


def random_map(rows: int, cols: int, kind: str, rng: np.random.Generator) -> np.ndarray:
    if kind == "gaussian":
        return rng.standard_normal((rows, cols)) / np.sqrt(cols)
    n = max(rows, cols)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q *= np.sign(np.diag(r))
    return q[:rows, :cols]


def generate(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticBundle:
    rng = np.random.default_rng(spec.seed)
    K = spec.n_classes
    protos = rng.standard_normal((K, spec.d_proto))
    A = random_map(spec.d_aux, spec.d_proto, spec.map_kind, rng)
    if spec.identity_image_map:
        Bm = np.eye(spec.d_proto)
    else:
        Bm = random_map(spec.d_img, spec.d_proto, spec.map_kind, rng)
    n = spec.samples_per_class
    noise = rng.standard_normal((K * n, spec.d_img))
    images = np.repeat(protos @ Bm.T, n, axis=0) + spec.noise_scale * noise

    wnids = [wnid_for(c) for c in range(K)]
    registry = ClassRegistry.from_records(
        ClassRecord(w, (f"class {c}",), f"synthetic class {c}") for c, w in enumerate(wnids))
    sample_ids = [f"{w}#{i}" for w in wnids for i in range(n)]
    return SyntheticBundle(
        spec=spec,
        registry=registry,
        train=Split("train", tuple(wnids[:spec.n_seen])),
        test=Split("custom", tuple(wnids[spec.n_seen:])),
        images=FeatureMatrix(sample_ids, images.astype(np.float32)),
        aux=FeatureMatrix(wnids, (protos @ A.T).astype(np.float32)),
        prototypes=protos,
        image_map=Bm,
        aux_map=A,
    )


def write_bundle(bundle: SyntheticBundle, out_dir) -> dict[str, Path]:
    """Write the bundle in the regular on-disk formats; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "registry": out / "registry.tsv",
        "train": out / "train.txt",
        "test": out / "test.txt",
        "images": out / "images.zslf",
        "aux": out / "aux.zslf",
    }
    write_class_registry(bundle.registry, paths["registry"])
    write_split(bundle.train, paths["train"])
    write_split(bundle.test, paths["test"])
    write_feature_matrix(bundle.images, paths["images"])
    write_feature_matrix(bundle.aux, paths["aux"])
    return paths
