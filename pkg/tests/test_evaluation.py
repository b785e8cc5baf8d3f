import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zslforge.corpus import ClassRecord, ClassRegistry, Split
from zslforge.evaluation import (HierarchyCycleError, adjust_for_missing, ancestors,
                                 confusion_matrix, evaluate_ranked, exclusion_split,
                                 length_vs_accuracy, overlap_subsets, partition_by_category,
                                 pearson, per_class_topk, write_confusion_csv, write_length_tsv)

from oracles import brute_topk, random_instance


def w(i):
    return f"n{i:08d}"


class TestTopk:
    def test_example(self):
        r = per_class_topk([["A"], ["A"], ["A"]], ["A", "A", "B"], ks=(1,), class_order=["A", "B"])
        assert r.mean_topk[1] == 0.5 and r.per_class_topk[1] == {"A": 1.0, "B": 0.0}

    def test_all_correct(self):
        r = per_class_topk([[0, 1, 2], [1, 0, 2], [2, 0, 1]], [0, 1, 2], ks=(1, 2, 3))
        assert all(v == 1.0 for v in r.mean_topk.values())

    def test_empty_class_flagged(self):
        r = per_class_topk([["A", "B"]], ["A"], ks=(1,), class_order=["A", "B", "C"])
        assert r.empty_classes == ["B", "C"] and r.n_present == 1

    def test_three_class_fixture(self):
        preds = [[0, 1, 2], [1, 0, 2], [2, 1, 0], [1, 2, 0], [0, 2, 1], [2, 0, 1]]
        labels = [0, 0, 1, 1, 2, 2]
        r = per_class_topk(preds, labels, ks=(1, 2))
        for k in (1, 2):
            mean, per = brute_topk(preds, labels, k)
            assert r.mean_topk[k] == mean
            assert r.per_class_topk[k] == {str(c): v for c, v in per.items()}

    def test_random_instances_match_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            preds, labels, ks, _ = random_instance(rng)
            r = per_class_topk(preds, labels, ks)
            for k in ks:
                assert r.mean_topk[k] == brute_topk(preds, labels, k)[0]

    def test_errors(self):
        with pytest.raises(ValueError, match="empty"):
            per_class_topk([], [])
        with pytest.raises(ValueError):
            per_class_topk([["A"]], ["A", "B"])
        with pytest.raises(ValueError, match="at least"):
            per_class_topk([["A"]], ["A"], ks=(1, 5))
        with pytest.raises(ValueError, match="not among"):
            per_class_topk([["B"]], ["B"], ks=(1,), class_order=["A"])

    def test_duplication_invariance(self):
        preds = [[0, 1], [1, 0], [1, 0]]
        labels = [0, 1, 1]
        a = per_class_topk(preds, labels, ks=(1,))
        b = per_class_topk(preds + [preds[0]] * 4, labels + [0] * 4, ks=(1,))
        assert a.mean_topk == b.mean_topk

    def test_report_json_deterministic(self):
        ranked = np.array([[0, 1], [1, 0], [0, 1]])
        r1 = evaluate_ranked(ranked, [0, 1, 1], ["a", "b"], ks=(1, 2))
        r2 = evaluate_ranked(ranked, [0, 1, 1], ["a", "b"], ks=(1, 2))
        assert r1.to_json() == r2.to_json()
        d = json.loads(r1.to_json())
        assert d["mean_topk"] == {"1": 0.75, "2": 1.0}
        assert d["confusion"] == [[1.0, 0.0], [0.5, 0.5]]


class TestAdjust:
    def test_489_of_500(self):
        assert 100 * adjust_for_missing(0.5163, 489, 500) == pytest.approx(50.49, abs=0.02)

    def test_trivial(self):
        assert adjust_for_missing(0.7, 10, 10) == 0.7
        assert adjust_for_missing(0.0, 3, 10) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            adjust_for_missing(0.5, 0, 0)
        with pytest.raises(ValueError):
            adjust_for_missing(0.5, 11, 10)

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 500), st.integers(0, 500))
    def test_linear(self, a, b, n_total, extra):
        n_present = max(n_total - extra, 0)
        lhs = adjust_for_missing(a + b, n_present, n_total)
        assert lhs == pytest.approx(adjust_for_missing(a, n_present, n_total)
                                    + adjust_for_missing(b, n_present, n_total))

    def test_with_total(self):
        r = per_class_topk([["A"], ["B"]], ["A", "A"], ks=(1,), class_order=["A", "B"])
        assert r.with_total(4).adjusted_mean_topk[1] == 0.5 * 1 / 4


class TestConfusion:
    def test_identity_and_e_j(self):
        np.testing.assert_array_equal(confusion_matrix([0, 1, 2], [0, 1, 2], [0, 1, 2]), np.eye(3))
        cm = confusion_matrix([2, 2, 1], [0, 0, 1], [0, 1, 2])
        np.testing.assert_array_equal(cm[0], [0, 0, 1])
        np.testing.assert_array_equal(cm[2], [0, 0, 0])

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            K = int(rng.integers(1, 8))
            y = rng.integers(0, K, 30)
            p = rng.integers(0, K, 30)
            cm = confusion_matrix(p, y, range(K))
            sums = cm.sum(1)
            present = np.bincount(y, minlength=K) > 0
            assert np.all(np.abs(sums[present] - 1) <= 1e-12) and np.all(sums[~present] == 0)

    def test_csv(self, tmp_path):
        write_confusion_csv(np.eye(2), ["a", "b"], tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text().splitlines() == [
            "true\\pred,a,b", "a,1.0,0.0", "b,0.0,1.0"]


def tree_registry():
    # 1 animal root, 2 plant root; 10..19 under 1, 20..24 under 2 (via 3), 30.. orphans
    recs = [ClassRecord(w(1), ("animal",)), ClassRecord(w(2), ("plant",)),
            ClassRecord(w(3), ("flower",), parents=(w(2),))]
    recs += [ClassRecord(w(i), (f"beast {i}",), parents=(w(1),)) for i in range(10, 20)]
    recs += [ClassRecord(w(i), (f"bloom {i}",), parents=(w(3),)) for i in range(20, 25)]
    recs += [ClassRecord(w(i), (f"thing {i}",)) for i in range(30, 36)]
    return ClassRegistry.from_records(recs)


class TestPartition:
    def test_groups(self):
        reg = tree_registry()
        part = partition_by_category(reg, {"animals": w(1), "plants": [w(2)]})
        assert part.group_of(w(12)) == "animals"
        assert part.group_of(w(21)) == "plants"
        assert part.group_of(w(31)) == "remaining"
        leaves = [w(i) for i in [*range(10, 25), *range(30, 36)]]
        assert part.sizes(leaves) == {"animals": 10, "plants": 5, "remaining": 6}
        groups = list(part.groups.values())
        assert all(not (a & b) for i, a in enumerate(groups) for b in groups[i + 1:])

    def test_first_group_wins_and_extra_parents(self):
        reg = tree_registry()
        part = partition_by_category(reg, {"plants": w(2), "animals": w(1)},
                                     extra_parents={w(11): [w(3)]})
        assert part.group_of(w(11)) == "plants"

    def test_cycle(self):
        with pytest.raises(HierarchyCycleError):
            ancestors("a", {"a": ["b"], "b": ["c"], "c": ["a"]})
        assert ancestors("a", {"a": ["b", "c"], "b": ["d"], "c": ["d"]}) == {"b", "c", "d"}


class TestExclusion:
    def setup_method(self):
        members = {f"a{i}" for i in range(398)}
        from zslforge.evaluation import CategoryPartition
        self.part = CategoryPartition({"animals": members, "remaining": set()})
        self.train = Split("train", tuple(sorted(members) + [f"o{i}" for i in range(602)]))

    def test_group(self):
        s = exclusion_split(self.train, self.part, "animals")
        assert len(s.wnids) == 602 and all(x.startswith("o") for x in s.wnids)

    def test_random_matched(self):
        s = exclusion_split(self.train, self.part, "animals", "random_matched", seed=3)
        assert len(s.wnids) == 602 and sum(x.startswith("a") for x in s.wnids) == 398
        assert s == exclusion_split(self.train, self.part, "animals", "random_matched", seed=3)

    def test_zero_and_errors(self):
        s = exclusion_split(self.train, self.part, "animals", "random_matched", count=0)
        assert s.wnids == self.train.wnids
        with pytest.raises(ValueError):
            exclusion_split(self.train, self.part, "animals", "random_matched", count=603)
        with pytest.raises(KeyError):
            exclusion_split(self.train, self.part, "fungi")


def overlap_registry():
    recs = [
        ClassRecord(w(1), ("wheel",), article_titles=("Wheel",)),
        ClassRecord(w(2), ("bell",), article_titles=("Bell",)),
        ClassRecord(w(3), ("car mirror",), article_titles=("Wing mirror", "Rear-view mirror")),
        ClassRecord(w(10), ("wagon wheel",), article_titles=("Wheel",)),
        ClassRecord(w(11), ("doorbell", "bell"), article_titles=("Doorbell",)),
        ClassRecord(w(12), ("side mirror",), article_titles=("Wing mirror",)),
        ClassRecord(w(13), ("okapi",)),
        ClassRecord(w(14), ("zebra",), article_titles=("Zebra",)),
    ]
    return ClassRegistry.from_records(recs)


class TestOverlap:
    def test_subsets(self):
        reg = overlap_registry()
        train = [w(1), w(2), w(3)]
        test = [w(i) for i in range(10, 15)]
        s = overlap_subsets(reg, train, test)
        assert s["no_matching_articles"] == [w(10), w(11), w(12), w(14)]
        assert s["same_articles"] == [w(11), w(12), w(13), w(14)]
        assert s["any_article_overlap"] == [w(11), w(13), w(14)]
        assert s["class_name_overlap"] == [w(10), w(12), w(13), w(14)]
        assert s["same_articles_or_class_name"] == [w(12), w(13), w(14)]

    def test_disjoint(self):
        reg = overlap_registry()
        s = overlap_subsets(reg, [w(1)], [w(14)])
        assert all(v == [w(14)] for v in s.values())

    def test_monotone(self):
        rng = np.random.default_rng(0)
        titles = ["T0", "T1", "T2", "T3"]
        for _ in range(50):
            recs = [ClassRecord(w(i), (f"p{rng.integers(4)}",),
                                article_titles=tuple(sorted(set(rng.choice(titles, rng.integers(0, 3))))))
                    for i in range(12)]
            reg = ClassRegistry.from_records(recs)
            train, test = [r.wnid for r in recs[:6]], [r.wnid for r in recs[6:]]
            s = overlap_subsets(reg, train, test)
            dropped_a = set(test) - set(s["same_articles"])
            dropped_b = set(test) - set(s["any_article_overlap"])
            assert dropped_a <= dropped_b


class TestLengths:
    def test_examples(self, tmp_path):
        arts = {w(1): [("A", "x" * 1000)], w(2): [("B", "y" * 400), ("C", "z" * 600)],
                w(3): [("D", "q" * 10)]}
        rows, corr = length_vs_accuracy({w(1): 0.5, w(2): 0.5, w(3): 0.5}, arts)
        assert rows[0].log10_chars == 3.0 and rows[1].log10_chars == 3.0
        assert corr["all"].r == 0.0 and corr["all"].degenerate
        write_length_tsv(rows, tmp_path / "l.tsv")
        lines = (tmp_path / "l.tsv").read_text().splitlines()
        assert lines[0] == "wnid\tgroup\tlog10_chars\ttop5_acc" and len(lines) == 4

    def test_grouped_and_error(self):
        reg = tree_registry()
        part = partition_by_category(reg, {"animals": w(1)})
        arts = {w(i): [("t", "a" * (10 * i))] for i in (10, 11, 30, 31)}
        rows, corr = length_vs_accuracy({w(10): 0.1, w(11): 0.9, w(30): 0.2, w(31): 0.4}, arts, part)
        assert set(corr) == {"all", "animals", "remaining"}
        assert corr["animals"].r == pytest.approx(1.0)
        with pytest.raises(ValueError):
            length_vs_accuracy({w(40): 1.0}, {w(40): [("e", "")]})

    def test_pearson(self):
        assert pearson([1, 2, 3], [2, 4, 6]).r == pytest.approx(1.0)
        assert math.isclose(pearson([1, 2, 3], [3, 2, 1]).r, -1.0)
        assert pearson([1], [1]).degenerate
