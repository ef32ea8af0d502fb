import json
from collections import Counter

import pytest

from conftest import make_example
from sattext.sat_corpus import (
    DATASET_PRESETS,
    BatchStream,
    LabeledBatch,
    SplitSet,
    TaskSpec,
    Vocab,
    batch_streams,
    load_jsonl,
    make_splits,
    sample_labeled,
    tokenize,
)
from sattext.sat_defs import PAD_ID, UNK_ID
from sattext.sat_errors import ConfigurationError, DataError, DegenerateInputError, LoadError, SamplingError, UsageError


def _pool(counts):
    """``counts[k]`` labeled examples of class k with unique uids."""
    return [
        make_example(f"class{k} doc{i} word{i % 7}", label=k, uid=f"p{k}-{i}")
        for k, n in enumerate(counts)
        for i in range(n)
    ]


def _write_jsonl(path, rows):
    path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows), encoding="utf-8")
    return path


class TestTokenize:
    def test_basic(self):
        assert tokenize("The cat sat.") == ["the", "cat", "sat"]

    def test_double_space(self):
        assert tokenize("A  B") == ["a", "b"]

    def test_inner_apostrophe_kept(self):
        assert tokenize("Don't stop") == ["don't", "stop"]

    def test_only_punctuation(self):
        with pytest.raises(DegenerateInputError):
            tokenize(" ... !! ")


class TestLoadJsonl:
    def test_labels_by_first_appearance(self, tmp_path):
        path = _write_jsonl(
            tmp_path / "train.jsonl",
            [{"text": "hello world", "label": "pos"}, {"text": "bad day", "label": "neg"}, {"text": "no label here"}],
        )
        examples, task = load_jsonl(path)
        assert task.class_names == ("pos", "neg")
        assert [ex.label for ex in examples] == [0, 1, None]
        assert examples[0].uid == "train.jsonl:1"
        assert examples[2].words == ("no", "label", "here")

    def test_malformed_line_is_named(self, tmp_path):
        rows = [{"text": f"doc {i}", "label": "a" if i % 2 else "b"} for i in range(100)]
        rows[41] = "{not json"
        path = _write_jsonl(tmp_path / "bad.jsonl", rows)
        with pytest.raises(LoadError, match=":42:"):
            load_jsonl(path)

    def test_unknown_label_with_fixed_task(self, tmp_path):
        path = _write_jsonl(tmp_path / "test.jsonl", [{"text": "x y", "label": "other"}])
        with pytest.raises(LoadError, match="unknown label"):
            load_jsonl(path, TaskSpec(("pos", "neg")))

    def test_empty_text(self, tmp_path):
        path = _write_jsonl(tmp_path / "e.jsonl", [{"text": "fine", "label": "a"}, {"text": "?!", "label": "b"}])
        with pytest.raises(LoadError, match=":2:"):
            load_jsonl(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError):
            load_jsonl(tmp_path / "absent.jsonl")


class TestTaskAndVocab:
    def test_task_needs_two_unique_classes(self):
        with pytest.raises(DataError):
            TaskSpec(("only",))
        with pytest.raises(DataError):
            TaskSpec(("a", "a"))
        assert TaskSpec(("a", "b", "c")).c == 3

    def test_reserved_ids_and_unk(self):
        vocab = Vocab.build([make_example("b a b c")])
        assert vocab.itos[:2] == ["<pad>", "<unk>"]
        assert vocab.stoi["<pad>"] == PAD_ID
        assert vocab.itos[2] == "b"
        assert vocab.encode(["a", "zzz"]) == (vocab.stoi["a"], UNK_ID)

    def test_round_trip(self):
        vocab = Vocab.build([make_example("the quick brown fox jumps")])
        for word in ("the", "quick", "brown", "fox", "jumps"):
            assert vocab.decode(vocab.encode([word])) == (word,)
            assert vocab.stoi[vocab.itos[vocab.stoi[word]]] == vocab.stoi[word]


class TestSampling:
    def test_ag_news_setting(self):
        labeled = sample_labeled(_pool([30, 30, 30, 30]), n_c=10, seed=0)
        assert len(labeled) == 40
        assert Counter(ex.label for ex in labeled) == {0: 10, 1: 10, 2: 10, 3: 10}

    def test_yahoo_setting(self):
        labeled = sample_labeled(_pool([25] * 10), n_c=20, seed=3)
        assert len(labeled) == 200
        assert set(Counter(ex.label for ex in labeled).values()) == {20}

    def test_empty_class(self):
        task = TaskSpec(("a", "b"))
        with pytest.raises(SamplingError, match="'b'"):
            sample_labeled(_pool([5]), n_c=1, seed=0, task=task)

    def test_pool_without_labels(self):
        pool = [make_example(f"doc {i}", uid=f"u{i}") for i in range(5)]
        with pytest.raises(SamplingError, match="no labeled examples"):
            sample_labeled(pool, n_c=1, seed=0)

    def test_deterministic(self):
        pool = _pool([20, 20, 20])
        assert sample_labeled(pool, 5, seed=11) == sample_labeled(pool, 5, seed=11)
        assert sample_labeled(pool, 5, seed=11) != sample_labeled(pool, 5, seed=12)

    def test_class_balance_for_all_sizes(self):
        pool = _pool([15, 15])
        for n_c in range(1, 16):
            counts = Counter(ex.label for ex in sample_labeled(pool, n_c, seed=n_c))
            assert counts == {0: n_c, 1: n_c}


class TestMakeSplits:
    def test_sizes_and_disjointness(self):
        task = TaskSpec(("a", "b", "c"))
        pool, test = _pool([40, 40, 40]), [make_example("held out", label=0, uid="t-1")]
        split = make_splits(pool, test, task, n_c=5, seed=0, n_unlabeled_per_class=20, n_dev_per_class=10)
        assert len(split.labeled) == 15
        assert len(split.dev) == 30
        assert len(split.unlabeled) == 60
        assert all(ex.label is None for ex in split.unlabeled)
        uids = [ex.uid for part in (split.labeled, split.unlabeled, split.dev, split.test) for ex in part]
        assert len(uids) == len(set(uids))

    def test_zero_unlabeled_means_all_remaining(self):
        task = TaskSpec(("a", "b"))
        split = make_splits(_pool([12, 12]), [], task, n_c=2, seed=0, n_dev_per_class=3)
        assert len(split.unlabeled) == 2 * (12 - 2 - 3)

    def test_explicit_dev_and_extra_unlabeled(self):
        task = TaskSpec(("a", "b"))
        dev = [make_example("dev doc", label=1, uid="d-1")]
        extra = [make_example("extra doc", uid="x-1")]
        split = make_splits(_pool([6, 6]), [], task, n_c=2, seed=0, dev=dev, extra_unlabeled=extra)
        assert split.dev == tuple(dev)
        assert split.unlabeled[-1].uid == "x-1"

    def test_overlapping_splits_rejected(self):
        ex = make_example("same doc", label=0, uid="u-1")
        with pytest.raises(DataError):
            SplitSet((ex,), (), (), (ex,))

    def test_presets(self):
        assert DATASET_PRESETS["ag_news"] == {"n_unlabeled_per_class": 5000, "n_dev_per_class": 2000}
        assert DATASET_PRESETS["imdb"]["n_dev_per_class"] == 1000


class TestBatchStreams:
    def _split(self, n_labeled, n_unlabeled):
        labeled = tuple(make_example(f"lab {i}", label=i % 2, uid=f"l{i}") for i in range(n_labeled))
        unlabeled = tuple(make_example(f"unl {i}", uid=f"u{i}") for i in range(n_unlabeled))
        return SplitSet(labeled, unlabeled, (), ())

    def test_batch_sizes(self):
        stream = batch_streams(self._split(10, 200), batch_size=32, mu=3, seed=0)
        assert stream.steps_per_epoch == 2
        for labeled, unlabeled in stream:
            assert len(labeled) == 32
            assert len(unlabeled) == 96

    def test_epoch_length(self):
        steps = list(batch_streams(self._split(6, 8), batch_size=4, mu=1, seed=0))
        assert len(steps) == 2
        seen = [ex.uid for _, unl in steps for ex in unl.examples]
        assert sorted(seen) == sorted(f"u{i}" for i in range(8))

    def test_deterministic(self):
        split = self._split(5, 30)
        uids = lambda s: [[ex.uid for ex in lab.examples + unl.examples] for lab, unl in s]
        assert uids(batch_streams(split, 3, 2, seed=4)) == uids(batch_streams(split, 3, 2, seed=4))

    def test_labeled_pool_cycles(self):
        stream = BatchStream(self._split(3, 40), batch_size=2, mu=1, seed=0)
        labeled = [ex.uid for lab, _ in stream for ex in lab.examples]
        # 20 steps x 2 = 40 draws over a pool of 3: each full pass covers all three
        for start in range(0, 39, 3):
            assert sorted(labeled[start:start + 3]) == ["l0", "l1", "l2"]

    def test_unlabeled_pool_too_small(self):
        with pytest.raises(ConfigurationError):
            batch_streams(self._split(4, 10), batch_size=4, mu=3, seed=0)

    def test_unlabeled_in_labeled_batch(self):
        batch = LabeledBatch((make_example("no label"),))
        with pytest.raises(UsageError):
            batch.labels
