"""Loading, writing and validating the dataset artifacts.

Everything the models consume lives in a handful of small files:

* a class registry (TSV): ``wnid, phrases, gloss, parents, article titles``
* split files: one wnid per line
* feature matrices in the ZSLF binary format plus an ``.ids`` sidecar
* articles as JSONL, one object per class
* an optional ``child<TAB>parent`` hierarchy TSV

ZSLF layout (all integers little-endian)::

    offset  size      field
    0       4         magic b"ZSLF"
    4       4         u32 version (1)
    8       4         u32 n (rows)
    12      4         u32 dim
    16      n*dim*4   f32 payload, row-major
    ...     4         u32 CRC32 of the payload bytes

Parse-level corruption raises :class:`CorpusError`. Consistency problems
between otherwise well-formed files are collected by :func:`validate_bundle`
instead of raised.
"""

from __future__ import annotations

import json
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

WNID_RE = re.compile(r"^n\d{8}$")
ZSLF_MAGIC = b"ZSLF"
ZSLF_VERSION = 1
SPLIT_NAMES = ("train", "val", "mp500", "custom")

_HEADER = struct.Struct("<4sIII")
_CRC = struct.Struct("<I")


class CorpusError(ValueError):
    """A dataset file could not be parsed or violates its format."""


@dataclass(frozen=True)
class ClassRecord:
    wnid: str
    phrases: tuple[str, ...]
    gloss: str = ""
    parents: tuple[str, ...] = ()
    article_titles: tuple[str, ...] = ()

    def __post_init__(self):
        if not WNID_RE.match(self.wnid):
            raise CorpusError(f"malformed wnid {self.wnid!r}")
        if not self.phrases:
            raise CorpusError(f"{self.wnid}: empty phrase list")
        if len(set(self.parents)) != len(self.parents):
            raise CorpusError(f"{self.wnid}: duplicate parent")
        if self.wnid in self.parents:
            raise CorpusError(f"{self.wnid}: lists itself as parent")


@dataclass(frozen=True)
class ClassRegistry:
    records: Mapping[str, ClassRecord]
    order: tuple[str, ...]

    def __post_init__(self):
        if len(self.order) != len(self.records) or set(self.order) != set(self.records):
            raise CorpusError("registry order is not a permutation of its records")

    def __len__(self):
        return len(self.order)

    def __contains__(self, wnid):
        return wnid in self.records

    def __getitem__(self, wnid) -> ClassRecord:
        return self.records[wnid]

    def __iter__(self):
        return (self.records[w] for w in self.order)

    @classmethod
    def from_records(cls, records: Iterable[ClassRecord]) -> "ClassRegistry":
        recs = {}
        order = []
        for r in records:
            if r.wnid in recs:
                raise CorpusError(f"duplicate wnid {r.wnid}")
            recs[r.wnid] = r
            order.append(r.wnid)
        return cls(recs, tuple(order))

    @property
    def external_parents(self) -> set[str]:
        """Parent wnids referenced by some record but absent from the registry."""
        return {p for r in self.records.values() for p in r.parents if p not in self.records}

    def with_titles(self, titles: Mapping[str, Sequence[str]]) -> "ClassRegistry":
        recs = dict(self.records)
        for wnid, ts in titles.items():
            r = recs[wnid]
            recs[wnid] = ClassRecord(r.wnid, r.phrases, r.gloss, r.parents, tuple(ts))
        return ClassRegistry(recs, self.order)


@dataclass(frozen=True)
class Split:
    name: str
    wnids: tuple[str, ...]

    def __len__(self):
        return len(self.wnids)

    def __iter__(self):
        return iter(self.wnids)


@dataclass
class FeatureMatrix:
    """``data[i]`` is the feature vector of ``ids[i]``."""

    ids: list[str]
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise CorpusError(f"feature data must be 2-D, got shape {self.data.shape}")
        if len(self.ids) != self.data.shape[0]:
            raise CorpusError(f"{len(self.ids)} ids for {self.data.shape[0]} rows")

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return len(self.ids)

    def index(self) -> dict[str, int]:
        return {k: i for i, k in enumerate(self.ids)}

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        """Rows for ``ids`` in the given order."""
        idx = self.index()
        missing = [i for i in ids if i not in idx]
        if missing:
            raise KeyError(f"no feature row for {missing[0]!r} ({len(missing)} missing)")
        return self.data[[idx[i] for i in ids]]

    def labels(self) -> list[str]:
        """Class wnid of every row, read from ``wnid#index`` sample ids."""
        return [i.split("#", 1)[0] for i in self.ids]


ArticleStore = dict  # wnid -> list[(title, text)]


@dataclass
class ValidationReport:
    missing_aux: list[str] = field(default_factory=list)
    missing_articles: list[str] = field(default_factory=list)
    missing_images: list[str] = field(default_factory=list)
    dim_mismatches: list[str] = field(default_factory=list)
    split_overlaps: list[tuple[str, str, str]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not any(
            (self.missing_aux, self.missing_articles, self.missing_images,
             self.dim_mismatches, self.split_overlaps)
        )

    def __bool__(self):
        return not self.is_empty()

    def to_dict(self) -> dict:
        return {
            "missing_aux": list(self.missing_aux),
            "missing_articles": list(self.missing_articles),
            "missing_images": list(self.missing_images),
            "dim_mismatches": list(self.dim_mismatches),
            "split_overlaps": [list(t) for t in self.split_overlaps],
        }


# -- registry -----------------------------------------------------------------


def parse_registry_line(line: str, lineno: int) -> ClassRecord:
    cols = line.rstrip("\n").split("\t")
    if len(cols) > 5:
        raise CorpusError(f"line {lineno}: expected at most 5 columns, got {len(cols)}")
    cols += [""] * (5 - len(cols))
    wnid, phrases, gloss, parents, titles = cols
    try:
        return ClassRecord(
            wnid=wnid,
            phrases=tuple(p.strip() for p in phrases.split("|") if p.strip()),
            gloss=gloss,
            parents=tuple(parents.split()),
            article_titles=tuple(t for t in titles.split("|") if t),
        )
    except CorpusError as e:
        raise CorpusError(f"line {lineno}: {e}") from None


def load_class_registry(path) -> ClassRegistry:
    records: dict[str, ClassRecord] = {}
    seen_at: dict[str, int] = {}
    order = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip() or line.startswith("#"):
                continue
            rec = parse_registry_line(line, lineno)
            if rec.wnid in records:
                raise CorpusError(
                    f"duplicate wnid {rec.wnid} on lines {seen_at[rec.wnid]} and {lineno}"
                )
            records[rec.wnid] = rec
            seen_at[rec.wnid] = lineno
            order.append(rec.wnid)
    return ClassRegistry(records, tuple(order))


def write_class_registry(registry: ClassRegistry, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in registry:
            f.write("\t".join([
                r.wnid, "|".join(r.phrases), r.gloss,
                " ".join(r.parents), "|".join(r.article_titles),
            ]) + "\n")


def load_hierarchy(path) -> dict[str, list[str]]:
    """Read a ``child<TAB>parent`` TSV into a child -> parents map."""
    parents: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 2 or not all(WNID_RE.match(c) for c in cols):
                raise CorpusError(f"line {lineno}: expected 'child<TAB>parent' wnids")
            child, parent = cols
            ps = parents.setdefault(child, [])
            if parent not in ps:
                ps.append(parent)
    return parents


# -- splits -------------------------------------------------------------------


def load_split(path, registry: ClassRegistry | None = None, name: str | None = None) -> Split:
    if name is None:
        stem = Path(path).stem
        name = stem if stem in SPLIT_NAMES else "custom"
    wnids = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            w = line.strip()
            if not w:
                continue
            if w in seen:
                raise CorpusError(f"line {lineno}: duplicate wnid {w}")
            if registry is not None and w not in registry:
                raise CorpusError(f"line {lineno}: unknown wnid {w}")
            seen.add(w)
            wnids.append(w)
    return Split(name, tuple(wnids))


def write_split(split: Split | Sequence[str], path) -> None:
    wnids = split.wnids if isinstance(split, Split) else split
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(w + "\n" for w in wnids)


# -- feature matrices ---------------------------------------------------------


def ids_path(path) -> Path:
    return Path(str(path) + ".ids")


def write_feature_matrix(fm: FeatureMatrix, path) -> None:
    data = np.ascontiguousarray(fm.data, dtype="<f4")
    n, dim = data.shape
    payload = data.tobytes()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(ZSLF_MAGIC, ZSLF_VERSION, n, dim))
        f.write(payload)
        f.write(_CRC.pack(zlib.crc32(payload)))
    with open(ids_path(path), "w", encoding="utf-8", newline="\n") as f:
        f.writelines(i + "\n" for i in fm.ids)


def load_feature_matrix(path, ids_file=None) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorpusError(f"{path}: truncated header")
    magic, version, n, dim = _HEADER.unpack_from(raw)
    if magic != ZSLF_MAGIC:
        raise CorpusError(f"{path}: bad magic {magic!r}")
    if version != ZSLF_VERSION:
        raise CorpusError(f"{path}: unsupported version {version}")
    size = n * dim * 4
    end = _HEADER.size + size
    if len(raw) < end + _CRC.size:
        raise CorpusError(
            f"{path}: truncated payload ({len(raw) - _HEADER.size} bytes for {n}x{dim} f32 + crc)"
        )
    payload = raw[_HEADER.size:end]
    (crc,) = _CRC.unpack_from(raw, end)
    if crc != zlib.crc32(payload):
        raise CorpusError(f"{path}: payload checksum mismatch")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, dim).astype(np.float32)
    bad = ~np.isfinite(data).all(axis=1)
    if bad.any():
        raise CorpusError(f"{path}: non-finite value in row {int(np.flatnonzero(bad)[0])}")

    ids_file = ids_path(path) if ids_file is None else Path(ids_file)
    if ids_file.exists():
        ids = ids_file.read_text(encoding="utf-8").split("\n")
        if ids and ids[-1] == "":
            ids.pop()
    elif n == 0:
        ids = []
    else:
        raise CorpusError(f"{path}: missing ids sidecar {ids_file}")
    if len(ids) != n:
        raise CorpusError(f"{ids_file}: {len(ids)} ids for {n} rows")
    return FeatureMatrix(ids, data)


# -- articles -----------------------------------------------------------------


def load_articles(path) -> ArticleStore:
    store: ArticleStore = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                wnid = obj["wnid"]
                arts = [(a["title"], a["text"]) for a in obj["articles"]]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CorpusError(f"line {lineno}: bad article record ({e})") from None
            if wnid in store:
                raise CorpusError(f"line {lineno}: duplicate wnid {wnid}")
            titles = [t for t, _ in arts]
            if len(set(titles)) != len(titles):
                raise CorpusError(f"line {lineno}: duplicate title for {wnid}")
            for t, text in arts:
                if not " ".join(text.split()):
                    raise CorpusError(f"line {lineno}: empty text for {wnid}/{t}")
            store[wnid] = arts
    return store


def write_articles(store: ArticleStore, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for wnid, arts in store.items():
            obj = {"wnid": wnid, "articles": [{"title": t, "text": x} for t, x in arts]}
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


# -- validation ---------------------------------------------------------------


def validate_bundle(
    registry: ClassRegistry,
    splits: Sequence[Split],
    image_feats: FeatureMatrix | None = None,
    aux_feats: FeatureMatrix | None = None,
    articles: ArticleStore | None = None,
    image_dim: int | None = None,
    aux_dim: int | None = None,
) -> ValidationReport:
    """Cross-check loaded artifacts. Never raises on inconsistency.

    Classes are checked in split order (registry order when no splits are
    given); ``None`` inputs are skipped.
    """
    report = ValidationReport()
    if splits:
        classes = list(dict.fromkeys(w for s in splits for w in s.wnids))
    else:
        classes = list(registry.order)

    for i, a in enumerate(splits):
        for b in splits[i + 1:]:
            for w in sorted(set(a.wnids) & set(b.wnids)):
                report.split_overlaps.append((a.name, b.name, w))

    if aux_feats is not None:
        have = set(aux_feats.ids)
        report.missing_aux = [w for w in classes if w not in have]
        if aux_dim is not None and aux_feats.dim != aux_dim:
            report.dim_mismatches.append(f"aux: expected {aux_dim}, got {aux_feats.dim}")
    if image_feats is not None:
        have = set(image_feats.labels())
        report.missing_images = [w for w in classes if w not in have]
        if image_dim is not None and image_feats.dim != image_dim:
            report.dim_mismatches.append(f"image: expected {image_dim}, got {image_feats.dim}")
    if articles is not None:
        report.missing_articles = [w for w in classes if not articles.get(w)]
    return report
