# coding: utf-8

# # Proposing article matches
#
# Each class is compared with every title sharing a word with one of its
# phrases. The score mixes phrase similarity (0.7) with agreement between the
# class's ancestors and the page's categories (0.3). Only confident,
# well-separated matches are marked ``auto``; the rest wait for a person.

import sys
import tempfile
from pathlib import Path

from zslforge import matcher
from zslforge.corpus import load_class_registry, load_hierarchy

root = Path(__file__).resolve().parents[1] / "tests" / "data" / "matcher"
registry = load_class_registry(root / "registry.tsv")
index = matcher.load_title_index(root / "titles.tsv")
names = {}
for line in (root / "synset_names.tsv").read_text().splitlines():
    wnid, phrases = line.split("\t")
    names[wnid] = phrases.split("|")
parents = load_hierarchy(root / "hierarchy.tsv")


# ## Sorrel, the horse and the herb

cands = matcher.match_registry(registry, index, names, parents)
for wnid in ("n02389026", "n12765115"):
    print(wnid, registry[wnid].phrases[0])
    for c in cands[wnid][:3]:
        print("   %-22s %.3f  agree=%s" % (c.title, c.score, ",".join(c.agreeing_tokens)))


# ## The review file
#
# A reviewer edits the status column (``accepted`` keeps a proposal) and the
# file is read back into the registry.

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "review.tsv"
    rows = matcher.write_review(registry, cands, path)
    sys.stdout.write("".join(path.read_text().splitlines(True)[:6]))
    updated = matcher.ingest_review_file(path, registry)
print(sum(r.status == "auto" for r in rows), "of", len(rows), "classes matched automatically")
print("with titles after ingest:", sum(bool(r.article_titles) for r in updated))
