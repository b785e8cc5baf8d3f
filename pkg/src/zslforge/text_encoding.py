"""Class descriptions to fixed-size vectors.

Two routes produce one vector per article:

* bag of embeddings: tokenize the text and average the word vectors of
  in-vocabulary tokens (:class:`BagOfEmbeddings`);
* chunk features: per-chunk vectors computed elsewhere by a transformer
  over overlapping token windows (:func:`plan_chunks`) are averaged
  (:class:`ChunkFeatures`).

Article vectors of one class are then aggregated (mean by default, sum as
the alternative page aggregation).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import ArticleStore, ClassRegistry, FeatureMatrix

log = logging.getLogger(__name__)

_SPLIT_RE = re.compile(r"[^0-9a-z]+")
AGGREGATION_MODES = ("mean", "sum")
TEXT_SOURCES = ("articles", "names", "gloss", "names_gloss")


class EncodingError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [t for t in _SPLIT_RE.split(text.lower()) if t]


@dataclass
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __contains__(self, token):
        return token in self.vectors

    def __len__(self):
        return len(self.vectors)


def load_embedding_table(path, vocab: set[str] | None = None) -> EmbeddingTable:
    """Read a GloVe-style text file: ``token v1 ... vd`` per line.

    ``vocab`` restricts loading to the given tokens, which keeps memory flat
    for large distribution files. Tokens are lowercased; the first occurrence
    of a token wins.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            tok = parts[0].lower()
            if dim is None:
                dim = len(parts) - 1
            elif len(parts) - 1 != dim:
                raise EncodingError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
            if tok in vectors or (vocab is not None and tok not in vocab):
                continue
            vectors[tok] = np.array(parts[1:], dtype=np.float64)
    if dim is None:
        raise EncodingError(f"{path}: empty embedding table")
    return EmbeddingTable(vectors, dim)


def encode_tokens(table: EmbeddingTable, tokens: Sequence[str]) -> tuple[np.ndarray, int]:
    """Mean embedding of in-vocabulary tokens and how many there were.

    All-OOV input gives the zero vector and a count of 0.
    """
    vecs = [table.vectors[t] for t in tokens if t in table.vectors]
    if not vecs:
        return np.zeros(table.dim), 0
    return np.mean(vecs, axis=0), len(vecs)


@dataclass(frozen=True)
class ChunkPlan:
    window: int
    overlap: int
    spans: tuple[tuple[int, int], ...]

    @property
    def stride(self) -> int:
        return self.window - self.overlap


def plan_chunks(n_tokens: int, window: int = 256, overlap: int = 50) -> ChunkPlan:
    """Overlapping windows covering ``[0, n_tokens)``; the last may be short."""
    if window <= overlap or overlap < 0:
        raise ValueError(f"need window > overlap >= 0, got {window}/{overlap}")
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    stride = window - overlap
    spans = []
    start = 0
    while True:
        end = min(start + window, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            break
        start += stride
    return ChunkPlan(window, overlap, tuple(spans))


def chunk_tokens(tokens: Sequence[str], window: int = 256, overlap: int = 50) -> list[list[str]]:
    return [list(tokens[a:b]) for a, b in plan_chunks(len(tokens), window, overlap).spans]


def aggregate_chunk_features(vectors: Sequence[np.ndarray], mode: str = "mean") -> np.ndarray:
    if len(vectors) == 0:
        raise EncodingError("nothing to aggregate")
    if mode not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    return stacked.mean(axis=0) if mode == "mean" else stacked.sum(axis=0)


@dataclass
class EncodedClass:
    wnid: str
    vector: np.ndarray
    source: str  # "bag_of_embeddings" | "chunk_features"
    n_articles: int
    n_tokens_in_vocab: int
    degenerate: bool = False


class BagOfEmbeddings:
    source = "bag_of_embeddings"

    def __init__(self, table: EmbeddingTable, page_aggregation: str = "mean"):
        self.table = table
        self.page_aggregation = page_aggregation

    @property
    def dim(self):
        return self.table.dim

    def encode_text(self, text: str) -> tuple[np.ndarray, int]:
        return encode_tokens(self.table, tokenize(text))

    def encode_article(self, wnid: str, title: str, text: str) -> tuple[np.ndarray, int]:
        return self.encode_text(text)


class ChunkFeatures:
    """Per-chunk vectors keyed ``wnid#title#chunk_index`` in a feature matrix.

    Chunk vectors of an article are averaged, then articles are aggregated
    with ``page_aggregation``.
    """

    source = "chunk_features"

    def __init__(self, chunks: FeatureMatrix, page_aggregation: str = "mean"):
        self.page_aggregation = page_aggregation
        self._dim = chunks.dim
        grouped: dict[tuple[str, str], list[tuple[int, int]]] = {}
        for row, cid in enumerate(chunks.ids):
            try:
                wnid, rest = cid.split("#", 1)
                title, idx = rest.rsplit("#", 1)
                idx = int(idx)
            except ValueError:
                raise EncodingError(f"bad chunk id {cid!r}, want wnid#title#index") from None
            grouped.setdefault((wnid, title), []).append((idx, row))
        self._rows = {k: [r for _, r in sorted(v)] for k, v in grouped.items()}
        self._data = np.asarray(chunks.data, dtype=np.float64)

    @property
    def dim(self):
        return self._dim

    def titles(self, wnid: str) -> list[str]:
        return [t for (w, t) in self._rows if w == wnid]

    def encode_article(self, wnid: str, title: str, text: str | None = None) -> tuple[np.ndarray, int]:
        rows = self._rows.get((wnid, title))
        if not rows:
            return np.zeros(self._dim), 0
        return aggregate_chunk_features(self._data[rows], "mean"), len(rows)


def encode_class(wnid: str, articles: Sequence[tuple[str, str]], encoder) -> EncodedClass:
    """Encode every article of one class and aggregate them.

    Articles contributing nothing (zero in-vocabulary tokens, or no chunks)
    are left out of the aggregate; if none contribute the class is rejected.
    """
    if not articles:
        raise EncodingError(f"{wnid}: no articles")
    vecs = []
    n_tok = 0
    for title, text in articles:
        v, n = encoder.encode_article(wnid, title, text)
        if n == 0:
            log.warning("%s/%s: no usable tokens", wnid, title)
            continue
        vecs.append(v)
        n_tok += n
    if not vecs:
        raise EncodingError(f"{wnid}: no article produced any in-vocabulary token")
    vec = aggregate_chunk_features(vecs, encoder.page_aggregation)
    degenerate = not np.any(vec)
    if degenerate:
        log.warning("%s: encoded to the zero vector", wnid)
    return EncodedClass(wnid, vec, encoder.source, len(vecs), n_tok, degenerate)


def class_text(registry: ClassRegistry, wnid: str, source: str) -> str:
    """Class names, gloss, or both as a single string."""
    rec = registry[wnid]
    if source == "names":
        return " ".join(rec.phrases)
    if source == "gloss":
        return rec.gloss
    if source == "names_gloss":
        return " ".join(rec.phrases) + " " + rec.gloss
    raise ValueError(f"unknown text source {source!r}")


def encode_split(
    registry: ClassRegistry,
    articles: ArticleStore | Mapping,
    encoder,
    wnids: Sequence[str],
    allow_skip: bool = False,
    text: str = "articles",
) -> tuple[FeatureMatrix, list[dict]]:
    """Encode every listed class; returns the matrix and a skip report.

    With ``allow_skip`` unencodable classes are dropped and listed in the
    report, otherwise the first one raises.
    """
    if text not in TEXT_SOURCES:
        raise ValueError(f"unknown text source {text!r}")
    ids, rows, skipped = [], [], []
    for wnid in wnids:
        try:
            if text == "articles":
                arts = list(articles.get(wnid, ()))
                if not arts and isinstance(encoder, ChunkFeatures):
                    arts = [(t, "") for t in encoder.titles(wnid)]
                enc = encode_class(wnid, arts, encoder)
                vec = enc.vector
            else:
                if not isinstance(encoder, BagOfEmbeddings):
                    raise EncodingError("names/gloss encoding needs an embedding table")
                vec, n = encoder.encode_text(class_text(registry, wnid, text))
                if n == 0:
                    raise EncodingError(f"{wnid}: no in-vocabulary token in {text}")
        except EncodingError as e:
            if not allow_skip:
                raise
            skipped.append({"wnid": wnid, "reason": str(e)})
            continue
        ids.append(wnid)
        rows.append(vec)
    data = np.stack(rows) if rows else np.zeros((0, encoder.dim))
    return FeatureMatrix(ids, data), skipped
