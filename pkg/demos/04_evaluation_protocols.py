# coding: utf-8

# # Evaluation protocols
#
# Mean per-class accuracy weighs every class equally. When some test classes
# cannot be evaluated (no matched article, say), the mean over the rest can
# be rescaled as if those classes scored zero.

from zslforge import evaluation as ev
from zslforge.corpus import ClassRecord, ClassRegistry

print("51.63%% on 489 classes is %.2f%% on 500" % (100 * ev.adjust_for_missing(0.5163, 489, 500)))

report = ev.per_class_topk([["A"], ["A"], ["A"]], ["A", "A", "B"], ks=(1,), class_order=["A", "B"])
print("class A 2/2, class B 0/1 -> mean", report.mean_topk[1])


# ## Categories and exclusion
#
# Classes are grouped by their ancestors. Removing a whole group from the
# training classes, versus an equally sized random set, shows how much the
# model relies on related seen classes.

w = "n{:08d}".format
records = [ClassRecord(w(1), ("animal",)), ClassRecord(w(2), ("plant",))]
records += [ClassRecord(w(10 + i), ("beast %d" % i,), parents=(w(1),)) for i in range(4)]
records += [ClassRecord(w(20 + i), ("herb %d" % i,), parents=(w(2),)) for i in range(3)]
records += [ClassRecord(w(30 + i), ("tool %d" % i,)) for i in range(5)]
registry = ClassRegistry.from_records(records)
leaves = [r.wnid for r in records[2:]]
part = ev.partition_by_category(registry, {"animals": w(1), "plants": w(2)}, wnids=leaves)
print("group sizes:", part.sizes(leaves))
print("without animals:", len(ev.exclusion_split(leaves, part, "animals").wnids), "classes")
print("random matched:", ev.exclusion_split(leaves, part, "animals", "random_matched", seed=1).wnids)


# ## Overlap subsets
#
# A test class that shares an article with a training class is easy. The
# wagon wheel here shares the "Wheel" article, so it is dropped by the
# article-overlap criterion.

reg = ClassRegistry.from_records([
    ClassRecord(w(1), ("wheel",), article_titles=("Wheel",)),
    ClassRecord(w(2), ("wagon wheel",), article_titles=("Wheel",)),
    ClassRecord(w(3), ("okapi",), article_titles=("Okapi",)),
])
for name, kept in ev.overlap_subsets(reg, [w(1)], [w(2), w(3)]).items():
    print("%-28s %s" % (name, kept))
