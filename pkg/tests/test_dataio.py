import numpy as np
import pytest

from langrec.dataio import (
    EmbeddingSet,
    ParseError,
    balance_weights,
    generate_trials,
    load_embeddings,
    per_language_means,
    save_embeddings,
    split_holdout,
)


def make_set(rows):
    """rows: list of (sample_id, language, dataset, vector)."""
    ids, langs, sets, vecs = zip(*rows)
    return EmbeddingSet(ids, langs, sets, np.array(vecs, dtype=float))


class TestEmbeddingSet:
    def test_basic_invariants(self):
        es = make_set([("a", "x", "d", [1.0, 2.0]), ("b", "y", "d", [3.0, 4.0])])
        assert es.dim == 2 and len(es) == 2
        assert es.language_inventory() == ("x", "y")

    def test_duplicate_id_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            make_set([("a", "x", "d", [1.0]), ("a", "y", "d", [2.0])])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            make_set([("a", "x", "d", [np.nan])])

    def test_vectors_read_only(self):
        es = make_set([("a", "x", "d", [1.0, 2.0])])
        with pytest.raises(ValueError):
            es.vectors[0, 0] = 9.0


class TestEmbTsv:
    def test_two_rows(self, tmp_path):
        p = tmp_path / "e.tsv"
        p.write_text("#dim=3\na\tx\td\t1 2 3\nb\ty\td\t4 5 6\n")
        es = load_embeddings(p)
        assert len(es) == 2 and es.dim == 3
        assert np.allclose(es.vectors[1], [4, 5, 6])

    def test_dimension_mismatch_names_line(self, tmp_path):
        p = tmp_path / "e.tsv"
        p.write_text("#dim=3\na\tx\td\t1 2 3\nb\ty\td\t4 5 6 7\n")
        with pytest.raises(ParseError, match="dimension mismatch at line 3"):
            load_embeddings(p)

    def test_header_only_is_empty_set(self, tmp_path):
        p = tmp_path / "e.tsv"
        p.write_text("#dim=3\n")
        with pytest.raises(ParseError, match="empty set"):
            load_embeddings(p)

    def test_non_numeric_names_line(self, tmp_path):
        p = tmp_path / "e.tsv"
        p.write_text("#dim=2\na\tx\td\t1 oops\n")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings(p)

    def test_duplicate_id_names_line(self, tmp_path):
        p = tmp_path / "e.tsv"
        p.write_text("#dim=1\na\tx\td\t1\na\tx\td\t2\n")
        with pytest.raises(ParseError, match="line 3"):
            load_embeddings(p)

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        es = EmbeddingSet(
            [f"s{i}" for i in range(20)],
            ["lang_a" if i % 2 else "lang_b" for i in range(20)],
            ["d0"] * 20,
            rng.standard_normal((20, 5)) * np.pi,
        )
        p = tmp_path / "rt.tsv"
        save_embeddings(es, p)
        loaded = load_embeddings(p)
        assert loaded == es  # bit-exact vectors via 17 significant digits

    def test_unicode_labels_preserved(self, tmp_path):
        es = make_set([("a", "español", "dät", [1.5])])
        p = tmp_path / "u.tsv"
        save_embeddings(es, p)
        loaded = load_embeddings(p)
        assert loaded.languages == ("español",)
        assert loaded.datasets == ("dät",)

    def test_save_empty_rejected(self, tmp_path):
        es = EmbeddingSet([], [], [], np.empty((0, 3)))
        with pytest.raises(ValueError, match="empty"):
            save_embeddings(es, tmp_path / "x.tsv")


class TestGenerateTrials:
    def test_counts_and_targets(self):
        es = make_set(
            [("1", "a", "d", [0.0]), ("2", "a", "d", [1.0]), ("3", "b", "d", [2.0])]
        )
        ts = generate_trials(es, ["a", "b"])
        assert len(ts) == 6
        assert ts.n_target == 3

    def test_out_of_set_only_nontargets(self):
        es = make_set([("1", "c", "d", [0.0])])
        ts = generate_trials(es, ["a", "b"])
        assert len(ts) == 2 and ts.n_target == 0

    def test_single_detector_single_target(self):
        es = make_set([("1", "a", "d", [0.0])])
        ts = generate_trials(es, ["a"])
        assert len(ts) == 1 and ts.n_target == 1

    def test_trial_count_identity_random(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(1, 30))
            langs = [f"l{rng.integers(0, 5)}" for _ in range(n)]
            es = EmbeddingSet(
                [f"s{i}" for i in range(n)], langs, ["d"] * n, rng.standard_normal((n, 2))
            )
            dets = [f"l{i}" for i in range(3)]
            ts = generate_trials(es, dets)
            assert len(ts) == n * len(dets)
            assert ts.n_target == sum(1 for l in langs if l in dets)


class TestSplitHoldout:
    def _big_set(self):
        rng = np.random.default_rng(0)
        rows = []
        for lang in ("a", "b"):
            for i in range(100):
                rows.append((f"{lang}{i}", lang, "d0", rng.standard_normal(2)))
        return make_set(rows)

    def test_fraction_per_language(self):
        train, held = split_holdout(self._big_set(), 0.1, seed=1)
        held_langs = list(held.languages)
        assert held_langs.count("a") == 10 and held_langs.count("b") == 10

    def test_deterministic(self):
        es = self._big_set()
        t1, h1 = split_holdout(es, 0.25, seed=42)
        t2, h2 = split_holdout(es, 0.25, seed=42)
        assert t1 == t2 and h1 == h2

    def test_partition(self):
        es = self._big_set()
        train, held = split_holdout(es, 0.3, seed=5)
        assert set(train.sample_ids) | set(held.sample_ids) == set(es.sample_ids)
        assert not set(train.sample_ids) & set(held.sample_ids)

    def test_floor_rule_three_samples(self):
        es = make_set([(f"s{i}", "a", "d", [float(i)]) for i in range(3)])
        train, held = split_holdout(es, 0.5, seed=0)
        assert len(train) == 2 and len(held) == 1

    def test_singleton_group_goes_to_train(self, caplog):
        es = make_set(
            [("a0", "a", "d", [0.0]), ("b0", "b", "d", [1.0]), ("b1", "b", "d", [2.0])]
        )
        with caplog.at_level("WARNING"):
            train, held = split_holdout(es, 0.5, seed=0)
        assert "a0" in train.sample_ids
        assert any("single sample" in r.message for r in caplog.records)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            split_holdout(self._big_set(), 1.0, seed=0)


class TestPerLanguageMeans:
    def test_plain_mean(self):
        es = make_set([("1", "a", "d", [0.0, 0.0]), ("2", "a", "d", [2.0, 0.0])])
        means = per_language_means(es)
        assert np.allclose(means["a"], [1.0, 0.0])

    def test_weighted_mean(self):
        es = make_set([("1", "a", "d", [0.0, 0.0]), ("2", "a", "d", [2.0, 0.0])])
        means = per_language_means(es, weights=np.array([1.0, 3.0]))
        assert np.allclose(means["a"], [1.5, 0.0])

    def test_missing_language(self):
        es = make_set([("1", "a", "d", [0.0])])
        with pytest.raises(ValueError, match="no samples"):
            per_language_means(es, languages=["b"])


class TestBalanceWeights:
    def test_group_of_four(self):
        es = make_set([(f"s{i}", "a", "d", [0.0]) for i in range(4)])
        assert np.allclose(balance_weights(es), 0.25)

    def test_two_groups(self):
        es = make_set(
            [("1", "a", "d", [0.0]), ("2", "b", "d", [0.0]), ("3", "b", "d", [0.0])]
        )
        assert np.allclose(balance_weights(es), [1.0, 0.5, 0.5])

    def test_single_record(self):
        es = make_set([("1", "a", "d", [0.0])])
        assert np.allclose(balance_weights(es), [1.0])
