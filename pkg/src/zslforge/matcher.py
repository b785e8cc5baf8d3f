"""Propose class-to-article correspondences for manual review.

A candidate page is scored as

    score = 0.7 * phrase_similarity + 0.3 * ancestor_agreement

where phrase similarity is 1 for an exact normalized match with one of the
class phrases and an edit-based ratio otherwise, and ancestor agreement is
the Jaccard overlap between the tokens of the class's ancestor phrases and
the tokens of the page's categories and title disambiguator. Matches are
only marked ``auto`` when they clear a threshold with a clear margin over
the runner-up; everything else goes to a human.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from difflib import SequenceMatcher
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import ClassRecord, ClassRegistry, CorpusError

PHRASE_WEIGHT = 0.7
ANCESTOR_WEIGHT = 0.3
DEFAULT_THRESHOLD = 0.75
DEFAULT_MARGIN = 0.2
ACCEPTED_STATUSES = ("auto", "accepted")
REVIEW_COLUMNS = ("wnid", "phrases", "titles", "score", "status")

_PAREN_RE = re.compile(r"\(([^()]*)\)")
_TOKEN_RE = re.compile(r"[^0-9a-z]+")
STOPWORDS = frozenset({"a", "an", "and", "by", "for", "in", "of", "on", "or", "the", "to", "with"})


@dataclass(frozen=True)
class NormalizedTitle:
    base: str
    disambiguator: str = ""


def _collapse(s: str) -> str:
    return " ".join(s.replace("_", " ").lower().split())


def normalize_title(s: str) -> NormalizedTitle:
    """Lowercased title with parenthetical disambiguators split off.

    ``"Sorrel_(horse)"`` gives base ``"sorrel"`` and disambiguator ``"horse"``.
    """
    dis = [_collapse(m) for m in _PAREN_RE.findall(s)]
    base = _collapse(_PAREN_RE.sub(" ", s).replace("(", " ").replace(")", " "))
    return NormalizedTitle(base, " ".join(d for d in dis if d))


def _fold(t: str) -> str:
    # crude plural folding so "Insects" agrees with "insect"
    if len(t) > 4 and t.endswith("ies"):
        return t[:-3] + "y"
    if len(t) > 3 and t.endswith("s") and not t.endswith("ss"):
        return t[:-1]
    return t


def tokens(s: str) -> set[str]:
    return {_fold(t) for t in _TOKEN_RE.split(s.lower()) if t and t not in STOPWORDS}


# -- title index ----------------------------------------------------------------


@dataclass
class TitleEntry:
    title: str
    redirect: str | None
    categories: tuple[str, ...]


@dataclass
class TitleIndex:
    entries: dict[str, TitleEntry]
    broken_redirects: list[str] = field(default_factory=list)
    _by_token: dict[str, set[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for title, e in self.entries.items():
            for tok in tokens(normalize_title(title).base):
                self._by_token.setdefault(tok, set()).add(title)
        self.broken_redirects = sorted(t for t in self.entries if self.resolve(t) is None)

    def __len__(self):
        return len(self.entries)

    def resolve(self, title: str) -> str | None:
        """Follow redirects to a content page; ``None`` for cycles or dangling targets."""
        seen = set()
        while title in self.entries and self.entries[title].redirect:
            if title in seen:
                return None
            seen.add(title)
            title = self.entries[title].redirect
        return title if title in self.entries else None

    def titles_sharing_token(self, words: Iterable[str]) -> set[str]:
        out: set[str] = set()
        for w in words:
            out |= self._by_token.get(w, set())
        return out


def load_title_index(path) -> TitleIndex:
    """Read ``title<TAB>redirect_target_or_-<TAB>;-joined categories``."""
    entries: dict[str, TitleEntry] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            title, redirect, cats = parts
            if title in entries:
                raise CorpusError(f"{path}:{lineno}: duplicate title {title!r}")
            entries[title] = TitleEntry(
                title, None if redirect in ("", "-") else redirect,
                tuple(c for c in cats.split(";") if c))
    return TitleIndex(entries)


# -- scoring --------------------------------------------------------------------


@dataclass
class MatchCandidate:
    wnid: str
    title: str
    score: float
    phrase: str
    phrase_similarity: float
    ancestor_agreement: float
    agreeing_tokens: tuple[str, ...] = ()
    via_redirect: str | None = None


def phrase_similarity(phrase: str, title_base: str) -> float:
    a, b = _collapse(phrase), title_base
    if a == b:
        return 1.0
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def ancestor_tokens(record: ClassRecord, registry: ClassRegistry | None = None,
                    names: Mapping[str, Sequence[str]] | None = None,
                    parents: Mapping[str, Sequence[str]] | None = None) -> set[str]:
    """Tokens of every ancestor phrase of ``record``.

    Ancestor phrases come from ``names`` (wnid -> phrases, e.g. from a full
    WordNet dump) falling back to the registry. ``parents`` extends the
    registry's own parent links.
    """
    def phrases_of(w):
        if names and w in names:
            return names[w]
        if registry is not None and w in registry:
            return registry[w].phrases
        return ()

    def parents_of(w):
        ps = list(parents.get(w, ())) if parents else []
        if registry is not None and w in registry:
            ps += [p for p in registry[w].parents if p not in ps]
        elif w == record.wnid:
            ps += [p for p in record.parents if p not in ps]
        return ps

    out: set[str] = set()
    seen = {record.wnid}
    stack = list(parents_of(record.wnid))
    while stack:
        w = stack.pop()
        if w in seen:
            continue
        seen.add(w)
        for p in phrases_of(w):
            out |= tokens(p)
        stack.extend(parents_of(w))
    return out


def candidate_matches(record: ClassRecord, index: TitleIndex,
                      lineage: set[str] | None = None) -> list[MatchCandidate]:
    """Scored candidate pages for one class, best first.

    Only titles sharing at least one token with a class phrase are scored.
    Redirects are resolved; several titles resolving to the same page keep
    the best score. ``lineage`` is the class's ancestor token set (see
    :func:`ancestor_tokens`).
    """
    if len(index) == 0:
        raise ValueError("empty title index")
    lineage = set() if lineage is None else set(lineage)
    phrase_toks = set().union(*(tokens(p) for p in record.phrases))
    best: dict[str, MatchCandidate] = {}
    for title in sorted(index.titles_sharing_token(phrase_toks)):
        target = index.resolve(title)
        if target is None:
            continue
        norm = normalize_title(title)
        sim, phrase = max((phrase_similarity(p, norm.base), p) for p in record.phrases)
        page = index.entries[target]
        page_toks = tokens(normalize_title(target).disambiguator) | tokens(norm.disambiguator)
        for c in page.categories:
            page_toks |= tokens(c)
        agree = jaccard(lineage, page_toks)
        cand = MatchCandidate(
            record.wnid, target, PHRASE_WEIGHT * sim + ANCESTOR_WEIGHT * agree, phrase, sim, agree,
            tuple(sorted(lineage & page_toks)), title if title != target else None)
        prev = best.get(target)
        if prev is None or cand.score > prev.score:
            best[target] = cand
    return sorted(best.values(), key=lambda c: (-c.score, c.title))


# -- review file ----------------------------------------------------------------


@dataclass
class ReviewRow:
    wnid: str
    phrases: tuple[str, ...]
    titles: tuple[str, ...]
    score: float
    status: str


def decide(candidates: Sequence[MatchCandidate], threshold: float = DEFAULT_THRESHOLD,
           margin: float = DEFAULT_MARGIN) -> str:
    if not candidates:
        return "review"
    top = candidates[0].score
    runner_up = candidates[1].score if len(candidates) > 1 else 0.0
    return "auto" if top >= threshold and top - runner_up >= margin else "review"


def review_rows(registry: ClassRegistry, candidates: Mapping[str, Sequence[MatchCandidate]],
                threshold: float = DEFAULT_THRESHOLD, margin: float = DEFAULT_MARGIN,
                wnids: Sequence[str] | None = None) -> list[ReviewRow]:
    rows = []
    for w in (registry.order if wnids is None else wnids):
        cands = candidates.get(w, [])
        rows.append(ReviewRow(
            w, tuple(registry[w].phrases), (cands[0].title,) if cands else (),
            cands[0].score if cands else 0.0, decide(cands, threshold, margin)))
    return rows


def emit_review_file(rows: Sequence[ReviewRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE,
                       escapechar="\\")
        w.writerow(REVIEW_COLUMNS)
        for r in rows:
            w.writerow([r.wnid, "|".join(r.phrases), "|".join(r.titles), repr(float(r.score)),
                        r.status])


def read_review_file(path) -> list[ReviewRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\")
        header = next(reader, None)
        if header is None or tuple(header) != REVIEW_COLUMNS:
            raise CorpusError(f"{path}: expected header {'/'.join(REVIEW_COLUMNS)}")
        for lineno, parts in enumerate(reader, 2):
            if len(parts) != len(REVIEW_COLUMNS):
                raise CorpusError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            wnid, phrases, titles, score, status = parts
            rows.append(ReviewRow(
                wnid, tuple(p for p in phrases.split("|") if p),
                tuple(t for t in titles.split("|") if t), float(score), status.strip()))
    return rows


def accepted_titles(rows: Iterable[ReviewRow]) -> dict[str, tuple[str, ...]]:
    """Titles of rows marked ``auto`` or ``accepted`` by a reviewer."""
    return {r.wnid: r.titles for r in rows if r.status in ACCEPTED_STATUSES and r.titles}


def ingest_review_file(path, registry: ClassRegistry) -> ClassRegistry:
    """Registry with article titles replaced by the accepted review rows."""
    rows = read_review_file(path)
    unknown = [r.wnid for r in rows if r.wnid not in registry]
    if unknown:
        raise CorpusError(f"{path}: unknown wnid {unknown[0]}")
    return registry.with_titles(accepted_titles(rows))


def match_registry(registry: ClassRegistry, index: TitleIndex,
                   names: Mapping[str, Sequence[str]] | None = None,
                   parents: Mapping[str, Sequence[str]] | None = None) -> dict[str, list[MatchCandidate]]:
    return {r.wnid: candidate_matches(r, index, ancestor_tokens(r, registry, names, parents))
            for r in registry}


def write_review(registry, candidates, path, threshold=DEFAULT_THRESHOLD, margin=DEFAULT_MARGIN):
    rows = review_rows(registry, candidates, threshold, margin)
    emit_review_file(rows, Path(path))
    return rows
