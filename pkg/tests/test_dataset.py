"""Manifest parsing, corpus statistics, agreement metrics, and splitting."""

import json
import warnings
from random import Random

import pytest

from memescan.dataset import (AnnotatorScore, MemeRecord, annotator_summary,
                              compute_stats, fleiss_kappa, load_manifest,
                              resolve_patches, save_manifest, split,
                              stats_csv_rows, stats_table)
from memescan.encoders import EmbeddingSequence, save_embeddings
from memescan.errors import (DegenerateAgreementError, ManifestError,
                             ValidationError)
from memescan.heads import Category
from memescan.matrix import Matrix


def make_record(i=0, category=Category.KITCHEN, text_kind="Different",
                label=True):
    caption = "" if text_kind == "Image" else f"caption {i}"
    overlay = "" if text_kind == "Image" else f"overlay {i}"
    return MemeRecord(id=f"m-{i}", category=category, text_kind=text_kind,
                      caption=caption, overlay=overlay,
                      image_ref=f"ref-{i}", misogyny_label=label)


def record_line(**overrides):
    obj = {"id": "m-1", "category": "Kitchen", "text_kind": "Different",
           "caption": "a", "overlay": "b", "image_ref": "r",
           "misogyny_label": True}
    obj.update(overrides)
    return json.dumps(obj)


class TestManifest:
    def test_round_trip(self, tmp_path):
        records = [make_record(i, c, k)
                   for i, (c, k) in enumerate(
                       [(Category.KITCHEN, "Different"),
                        (Category.WORKING, "Same"),
                        (Category.OTHER, "Image")])]
        path = tmp_path / "m.jsonl"
        save_manifest(path, records)
        back = load_manifest(path)
        assert back == records

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(record_line() + "\n{not json\n")
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(record_line(extra=1) + "\n")
        with pytest.raises(ManifestError, match="unknown keys.*extra"):
            load_manifest(path)

    def test_missing_key_rejected(self, tmp_path):
        obj = json.loads(record_line())
        del obj["caption"]
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ManifestError, match="missing keys.*caption"):
            load_manifest(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(record_line() + "\n" + record_line() + "\n")
        with pytest.raises(ManifestError, match="duplicate id"):
            load_manifest(path)

    def test_image_kind_with_text_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(record_line(text_kind="Image") + "\n")
        with pytest.raises(ManifestError, match="Image"):
            load_manifest(path)

    def test_unknown_category_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(record_line(category="Garage") + "\n")
        with pytest.raises(ManifestError, match="category"):
            load_manifest(path)

    def test_text_property_joins_caption_and_overlay(self):
        r = make_record(1)
        assert r.text == "caption 1 overlay 1"
        img = make_record(2, text_kind="Image")
        assert img.text == ""


class TestStats:
    def test_counts_and_proportions(self):
        records = ([make_record(i, Category.KITCHEN, "Different")
                    for i in range(3)]
                   + [make_record(10 + i, Category.WORKING, "Image")
                      for i in range(1)])
        stats = compute_stats(records)
        assert stats.total == 4
        kitchen = stats.per_category[0]
        assert kitchen.category == Category.KITCHEN
        assert (kitchen.count, kitchen.different, kitchen.same,
                kitchen.image) == (3, 3, 0, 0)
        assert kitchen.proportion == 0.75
        assert stats.per_category[1].proportion == 0.25

    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="empty manifest"):
            compute_stats([])

    def test_table_and_csv_agree(self):
        records = [make_record(i, Category.SHOPPING, "Same")
                   for i in range(2)]
        stats = compute_stats(records)
        table = stats_table(stats)
        rows = stats_csv_rows(stats)
        assert rows[0] == ["category", "count", "different", "same", "image",
                           "proportion"]
        for row in rows[1:]:
            assert row[0] in table
            assert str(row[1]) in table
            assert row[5] in table


class TestFleissKappa:
    def test_unanimous_is_exactly_one(self):
        # unanimous but using more than one category overall
        assert fleiss_kappa([[3, 0], [0, 3], [3, 0]]) == 1.0

    def test_hand_worked_case(self):
        # independent step-by-step evaluation of the published formula
        ratings = [[2, 1], [1, 2]]
        n = 3
        p_i = [((2 * 2 + 1 * 1) - n) / (n * (n - 1)),
               ((1 * 1 + 2 * 2) - n) / (n * (n - 1))]
        p_bar = sum(p_i) / 2
        p_j = [(2 + 1) / 6, (1 + 2) / 6]
        p_bar_e = sum(p * p for p in p_j)
        want = (p_bar - p_bar_e) / (1 - p_bar_e)
        assert abs(want - (-1 / 3)) < 1e-12
        assert abs(fleiss_kappa(ratings) - want) < 1e-9

    def test_degenerate_single_category(self):
        with pytest.raises(DegenerateAgreementError):
            fleiss_kappa([[3, 0], [3, 0]])

    def test_item_permutation_invariance(self):
        rng = Random(0)
        ratings = [[2, 1, 0], [0, 2, 1], [1, 1, 1], [0, 0, 3], [3, 0, 0]]
        base = fleiss_kappa(ratings)
        for _ in range(100):
            shuffled = list(ratings)
            rng.shuffle(shuffled)
            assert abs(fleiss_kappa(shuffled) - base) < 1e-12

    def test_row_sum_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="row sums"):
            fleiss_kappa([[2, 1], [2, 2]])

    def test_single_rater_rejected(self):
        with pytest.raises(ValidationError):
            fleiss_kappa([[1, 0], [0, 1]])


class TestAnnotatorSummary:
    # published annotation-quality rows: (accuracy, consistency, kappa)
    ROWS = [(4.7, 4.5, 0.82), (4.6, 4.6, 0.79), (4.8, 4.7, 0.84)]

    def test_averages(self):
        summary = annotator_summary(self.ROWS)
        assert abs(summary.averages.accuracy - 4.7) <= 0.05
        assert abs(summary.averages.consistency - 4.6) <= 0.05
        assert abs(summary.averages.kappa - 0.82) <= 0.05

    def test_score_range_validation(self):
        with pytest.raises(ValidationError):
            annotator_summary([(5.5, 4.0, 0.5)])
        with pytest.raises(ValidationError):
            annotator_summary([(4.0, 4.0, 1.2)])
        with pytest.raises(ValidationError):
            annotator_summary([])

    def test_accepts_dataclass_rows(self):
        summary = annotator_summary([AnnotatorScore(4.0, 4.0, 0.5)])
        assert summary.averages.kappa == 0.5


class TestSplit:
    def build(self, per_category=9):
        records = []
        i = 0
        for cat in (Category.KITCHEN, Category.WORKING, Category.OTHER):
            for _ in range(per_category):
                records.append(make_record(i, cat))
                i += 1
        return records

    def test_partition_properties(self):
        records = self.build()
        train, test = split(records, seed=1, train_fraction=2 / 3)
        assert len(train) + len(test) == len(records)
        assert {r.id for r in train} | {r.id for r in test} == \
            {r.id for r in records}
        assert not ({r.id for r in train} & {r.id for r in test})

    def test_stratification(self):
        records = self.build(per_category=9)
        train, _ = split(records, seed=1, train_fraction=2 / 3)
        per_cat = {}
        for r in train:
            per_cat[r.category] = per_cat.get(r.category, 0) + 1
        assert all(v == 6 for v in per_cat.values())

    def test_deterministic(self):
        records = self.build()
        a = split(records, seed=5, train_fraction=0.5)
        b = split(records, seed=5, train_fraction=0.5)
        assert [r.id for r in a[0]] == [r.id for r in b[0]]
        c = split(records, seed=6, train_fraction=0.5)
        assert [r.id for r in a[0]] != [r.id for r in c[0]]

    def test_tiny_category_warns_and_goes_to_train(self):
        records = self.build(per_category=4)
        records.append(make_record(99, Category.SHOPPING))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            train, test = split(records, seed=1, train_fraction=0.5)
        assert any("Shopping" in str(w.message) for w in caught)
        assert any(r.id == "m-99" for r in train)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValidationError):
            split(self.build(), seed=1, train_fraction=1.0)


class TestResolvePatches:
    def test_loads_existing_embedding_file(self, tmp_path):
        rng = Random(1)
        grid = Matrix.uniform(3, 4, 1.0, rng)
        (tmp_path / "p").mkdir()
        save_embeddings(tmp_path / "p" / "x.mme", EmbeddingSequence(grid))
        r = make_record(0)
        r.image_ref = "p/x.mme"
        got = resolve_patches(r, raw_dim=4, base_dir=tmp_path)
        assert got == grid

    def test_dim_mismatch_rejected(self, tmp_path):
        rng = Random(2)
        save_embeddings(tmp_path / "x.mme",
                        EmbeddingSequence(Matrix.uniform(3, 4, 1.0, rng)))
        r = make_record(0)
        r.image_ref = "x.mme"
        with pytest.raises(ValidationError, match="patch dim"):
            resolve_patches(r, raw_dim=8, base_dir=tmp_path)

    def test_fallback_is_deterministic_per_ref(self):
        a = resolve_patches(make_record(0), raw_dim=4, n_patches=3)
        b = resolve_patches(make_record(0), raw_dim=4, n_patches=3)
        c = resolve_patches(make_record(1), raw_dim=4, n_patches=3)
        assert a == b
        assert a != c
        assert a.shape == (3, 4)
