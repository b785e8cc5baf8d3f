"""Metrics and evaluation protocols.

Mean per-class top-k accuracy, adjustment for classes the model could not
be evaluated on, row-normalized confusion matrices, category partitions
from the class hierarchy, training-set exclusion experiments, overlap-based
test subsets, and description length vs accuracy.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .corpus import ArticleStore, ClassRegistry, Split
from .numeric import as_rng

REMAINING = "remaining"


class HierarchyCycleError(ValueError):
    pass


# -- accuracy -------------------------------------------------------------------


@dataclass
class EvalReport:
    class_order: list[str]
    ks: list[int]
    per_class_topk: dict[int, dict[str, float]]
    mean_topk: dict[int, float]
    n_samples: dict[str, int]
    n_present: int
    n_total: int
    adjusted_mean_topk: dict[int, float]
    empty_classes: list[str] = field(default_factory=list)
    confusion: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "mean_topk": {str(k): self.mean_topk[k] for k in self.ks},
            "adjusted_mean_topk": {str(k): self.adjusted_mean_topk[k] for k in self.ks},
            "n_present": self.n_present,
            "n_total": self.n_total,
            "empty_classes": list(self.empty_classes),
            "class_order": list(self.class_order),
            "n_samples": {c: self.n_samples[c] for c in self.class_order},
            "per_class_topk": {
                str(k): {c: self.per_class_topk[k][c] for c in self.class_order
                         if c in self.per_class_topk[k]}
                for k in self.ks
            },
            "confusion": None if self.confusion is None else self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def with_total(self, n_total: int) -> "EvalReport":
        """Copy with the missing-class adjustment recomputed for ``n_total``."""
        adjusted = {k: adjust_for_missing(self.mean_topk[k], self.n_present, n_total)
                    for k in self.ks}
        return EvalReport(self.class_order, self.ks, self.per_class_topk, self.mean_topk,
                          self.n_samples, self.n_present, n_total, adjusted,
                          self.empty_classes, self.confusion)


def per_class_topk(predictions, labels, ks: Sequence[int] = (1, 5),
                   class_order: Sequence | None = None, n_total: int | None = None) -> EvalReport:
    """Per-class and mean top-k accuracy.

    ``predictions`` holds one ranked candidate list per sample (best first,
    at least ``max(ks)`` long); ``labels`` the true class of each sample.
    The mean is unweighted over classes with at least one sample; classes in
    ``class_order`` without samples are reported in ``empty_classes``.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("empty prediction set")
    preds = [list(p) for p in predictions]
    if len(preds) != len(labels):
        raise ValueError(f"{len(preds)} predictions for {len(labels)} labels")
    kmax = max(ks)
    if any(len(p) < kmax for p in preds):
        raise ValueError(f"every prediction needs at least {kmax} ranked entries")
    if class_order is None:
        class_order = list(dict.fromkeys(labels))
    class_order = list(class_order)

    counts = defaultdict(int)
    hits = {k: defaultdict(int) for k in ks}
    for p, y in zip(preds, labels):
        counts[y] += 1
        try:
            rank = p.index(y)
        except ValueError:
            continue
        for k in ks:
            if rank < k:
                hits[k][y] += 1

    unknown = [c for c in counts if c not in set(class_order)]
    if unknown:
        raise ValueError(f"label {unknown[0]!r} not among evaluable classes")
    present = [c for c in class_order if counts[c] > 0]
    per = {k: {c: hits[k][c] / counts[c] for c in present} for k in ks}
    # exact rational mean, rounded once: independent of class order
    mean = {k: float(sum(Fraction(hits[k][c], counts[c]) for c in present) / len(present))
            for k in ks}
    n_present = len(present)
    n_total = n_present if n_total is None else n_total
    return EvalReport(
        class_order=[str(c) for c in class_order],
        ks=list(ks),
        per_class_topk={k: {str(c): v for c, v in per[k].items()} for k in ks},
        mean_topk=mean,
        n_samples={str(c): counts[c] for c in class_order},
        n_present=n_present,
        n_total=n_total,
        adjusted_mean_topk={k: adjust_for_missing(mean[k], n_present, n_total) for k in ks},
        empty_classes=[str(c) for c in class_order if counts[c] == 0],
    )


def evaluate_ranked(ranked, labels, class_ids: Sequence[str], ks: Sequence[int] = (1, 5),
                    n_total: int | None = None) -> EvalReport:
    """Report with confusion matrix from ranked class indices (one row per sample)."""
    ids = np.asarray(class_ids, dtype=object)
    ranked = np.asarray(ranked)
    pred_ids = [list(row) for row in ids[ranked]]
    true_ids = list(ids[np.asarray(labels)])
    report = per_class_topk(pred_ids, true_ids, ks, class_ids, n_total)
    report.confusion = confusion_matrix([p[0] for p in pred_ids], true_ids, class_ids)
    return report


def adjust_for_missing(mean_present: float, n_present: int, n_total: int) -> float:
    """Mean accuracy over ``n_total`` classes, counting absent ones as 0."""
    if n_total <= 0:
        raise ValueError("n_total must be positive")
    if n_present > n_total:
        raise ValueError("n_present exceeds n_total")
    return mean_present * n_present / n_total


def confusion_matrix(predicted, labels, class_order: Sequence) -> np.ndarray:
    """Row-normalized confusion: entry (i, j) is the share of class i predicted as j."""
    pos = {c: i for i, c in enumerate(class_order)}
    K = len(pos)
    cm = np.zeros((K, K))
    for p, y in zip(predicted, labels):
        cm[pos[y], pos[p]] += 1
    rows = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)


def write_confusion_csv(cm: np.ndarray, class_order: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["true\\pred", *class_order])
        for c, row in zip(class_order, cm):
            w.writerow([c, *(repr(float(v)) for v in row)])


# -- hierarchy and categories ---------------------------------------------------


def parent_map(registry: ClassRegistry,
               extra: Mapping[str, Sequence[str]] | None = None) -> dict[str, list[str]]:
    parents = {r.wnid: list(r.parents) for r in registry}
    for child, ps in (extra or {}).items():
        cur = parents.setdefault(child, [])
        cur.extend(p for p in ps if p not in cur)
    return parents


def ancestors(wnid: str, parents: Mapping[str, Sequence[str]]) -> set[str]:
    """All ancestors of ``wnid`` (excluding itself); raises on cycles."""
    out: set[str] = set()
    done: set[str] = set()

    def visit(node, path):
        for p in parents.get(node, ()):
            if p in path:
                raise HierarchyCycleError(f"cycle through {p}")
            out.add(p)
            if p not in done:
                visit(p, path | {p})
        done.add(node)

    visit(wnid, {wnid})
    return out


@dataclass
class CategoryPartition:
    groups: dict[str, set[str]]

    def group_of(self, wnid: str) -> str:
        for name, members in self.groups.items():
            if wnid in members:
                return name
        return REMAINING

    def sizes(self, wnids: Sequence[str] | None = None) -> dict[str, int]:
        if wnids is None:
            return {g: len(m) for g, m in self.groups.items()}
        out = {g: 0 for g in self.groups}
        for w in wnids:
            out[self.group_of(w)] = out.get(self.group_of(w), 0) + 1
        return out


def partition_by_category(registry: ClassRegistry, roots: Mapping[str, Sequence[str] | str],
                          extra_parents: Mapping[str, Sequence[str]] | None = None,
                          wnids: Sequence[str] | None = None) -> CategoryPartition:
    """Assign classes to named groups by ancestry; the rest go to ``remaining``.

    A class belongs to a group if the group's root is the class itself or one
    of its ancestors. The first listed group wins when several match.
    """
    parents = parent_map(registry, extra_parents)
    root_sets = {g: {r} if isinstance(r, str) else set(r) for g, r in roots.items()}
    if REMAINING in root_sets:
        raise ValueError(f"{REMAINING!r} is reserved")
    groups: dict[str, set[str]] = {g: set() for g in root_sets}
    groups[REMAINING] = set()
    for w in (registry.order if wnids is None else wnids):
        lineage = ancestors(w, parents) | {w}
        for g, rs in root_sets.items():
            if lineage & rs:
                groups[g].add(w)
                break
        else:
            groups[REMAINING].add(w)
    return CategoryPartition(groups)


def exclusion_split(train: Split | Sequence[str], partition: CategoryPartition, group: str,
                    mode: str = "group", count: int | None = None, seed=0) -> Split:
    """Training split with a category (or a matched random set) removed.

    ``group`` mode drops every member of ``group``. ``random_matched`` drops
    ``count`` classes (default: as many as ``group`` has in the split) drawn
    uniformly from the classes outside ``group``.
    """
    wnids = list(train.wnids if isinstance(train, Split) else train)
    name = train.name if isinstance(train, Split) else "custom"
    if group not in partition.groups:
        raise KeyError(f"unknown group {group!r}")
    members = partition.groups[group]
    in_group = [w for w in wnids if w in members]
    if mode == "group":
        drop = set(in_group)
    elif mode == "random_matched":
        pool = [w for w in wnids if w not in members]
        n = len(in_group) if count is None else count
        if n > len(pool):
            raise ValueError(f"cannot drop {n} classes from a pool of {len(pool)}")
        idx = as_rng(seed).choice(len(pool), size=n, replace=False)
        drop = {pool[i] for i in idx}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Split(name, tuple(w for w in wnids if w not in drop))


# -- overlap subsets ------------------------------------------------------------


def normalize_phrase(s: str) -> str:
    return " ".join(s.lower().split())


OVERLAP_SUBSETS = ("no_matching_articles", "same_articles", "any_article_overlap",
                   "class_name_overlap", "same_articles_or_class_name")


def overlap_subsets(registry: ClassRegistry, train: Sequence[str],
                    test: Sequence[str]) -> dict[str, list[str]]:
    """Test classes left after dropping those similar to training classes.

    * ``no_matching_articles``: drop classes without any matched article
    * ``same_articles``: drop classes whose article set equals a train class's
    * ``any_article_overlap``: drop classes sharing any article with train
    * ``class_name_overlap``: drop classes sharing a whole phrase with train
    * ``same_articles_or_class_name``: drop the union of the two criteria above
    """
    train_sets = {frozenset(registry[w].article_titles) for w in train}
    train_sets.discard(frozenset())
    train_titles = {t for w in train for t in registry[w].article_titles}
    train_phrases = {normalize_phrase(p) for w in train for p in registry[w].phrases}

    def same(w):
        s = frozenset(registry[w].article_titles)
        return bool(s) and s in train_sets

    def any_overlap(w):
        return any(t in train_titles for t in registry[w].article_titles)

    def names(w):
        return any(normalize_phrase(p) in train_phrases for p in registry[w].phrases)

    test = list(test)
    return {
        "no_matching_articles": [w for w in test if registry[w].article_titles],
        "same_articles": [w for w in test if not same(w)],
        "any_article_overlap": [w for w in test if not any_overlap(w)],
        "class_name_overlap": [w for w in test if not names(w)],
        "same_articles_or_class_name": [w for w in test if not (same(w) or names(w))],
    }


# -- text length ----------------------------------------------------------------


@dataclass
class LengthRow:
    wnid: str
    group: str
    log10_chars: float
    accuracy: float


@dataclass
class Correlation:
    r: float
    n: int
    degenerate: bool = False


def pearson(xs, ys) -> Correlation:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return Correlation(0.0, int(x.size), True)
    return Correlation(float(np.corrcoef(x, y)[0, 1]), int(x.size))


def length_vs_accuracy(accuracy: Mapping[str, float], articles: ArticleStore,
                       partition: CategoryPartition | None = None):
    """``log10`` of the summed article length of each class against its accuracy.

    Returns the rows (in ``accuracy`` order) and a Pearson correlation per
    group plus ``"all"``.
    """
    rows = []
    for w, acc in accuracy.items():
        chars = sum(len(text) for _, text in articles.get(w, ()))
        if chars == 0:
            raise ValueError(f"{w}: no article text")
        group = partition.group_of(w) if partition is not None else "all"
        rows.append(LengthRow(w, group, math.log10(chars), float(acc)))
    corr = {"all": pearson([r.log10_chars for r in rows], [r.accuracy for r in rows])}
    for g in dict.fromkeys(r.group for r in rows):
        if g == "all":
            continue
        sel = [r for r in rows if r.group == g]
        corr[g] = pearson([r.log10_chars for r in sel], [r.accuracy for r in sel])
    return rows, corr


def write_length_tsv(rows: Sequence[LengthRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("wnid\tgroup\tlog10_chars\ttop5_acc\n")
        for r in rows:
            f.write(f"{r.wnid}\t{r.group}\t{r.log10_chars!r}\t{r.accuracy!r}\n")
