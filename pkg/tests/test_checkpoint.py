"""Checkpoint containers: bitwise round-trips, hash guards, cache compatibility."""

import numpy as np
import pytest

from tlanet import checkpoint as CK
from tlanet import models as M
from tlanet import text as TXT
from tlanet import wisdomnet as W
from tlanet import tensor as T


def make_vocab():
    return TXT.build_vocab([["alpha", "beta", "gamma", "delta"]], max_size=20)


def make_model(vocab, kind="lstm", seed=3):
    cfg = M.ClassifierConfig(vocab_size=vocab.size, embed_dim=4, hidden_size=4,
                             num_layers=1, dropout=0.0, num_classes=3, max_len=5,
                             seed=seed, head_hidden=4)
    return M.build_model(kind, cfg), cfg


def make_head(dim=4, classes=3, seed=0):
    rng = np.random.default_rng(seed)
    return W.WisdomNetHead(
        T.Tensor(rng.uniform(-1, 1, (classes, dim)), requires_grad=True),
        T.Tensor(rng.uniform(-1, 1, classes), requires_grad=True),
        0.5,
    )


class TestContainer:
    def test_round_trip_meta_and_arrays(self, tmp_path):
        path = tmp_path / "box.bin"
        arrays = [("a", np.arange(6.0).reshape(2, 3)), ("b", np.array([1, 2, 3]))]
        CK.save_container(path, CK.MODEL_MAGIC, {"note": "hi"}, arrays)
        meta, loaded = CK.load_container(path, CK.MODEL_MAGIC)
        assert meta == {"note": "hi"}
        assert np.array_equal(loaded["a"], arrays[0][1])
        assert loaded["b"].dtype.kind == "i"

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "box.bin"
        CK.save_container(path, CK.MODEL_MAGIC, {}, [])
        with pytest.raises(CK.ArtifactMismatch, match="TLAD"):
            CK.load_container(path, CK.DATASET_MAGIC)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "box.bin"
        CK.save_container(path, CK.MODEL_MAGIC, {}, [("x", np.ones(4))])
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(Exception):
            CK.load_container(path, CK.MODEL_MAGIC)

    def test_duplicate_names_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="duplicate"):
            CK.save_container(tmp_path / "d.bin", CK.MODEL_MAGIC, {},
                              [("x", np.ones(1)), ("x", np.ones(1))])


class TestModelCheckpoint:
    def test_bitwise_round_trip(self, tmp_path):
        vocab = make_vocab()
        model, cfg = make_model(vocab)
        head = make_head()
        p1 = tmp_path / "one.tlac"
        CK.save_checkpoint(p1, "lstm", cfg, vocab, model, head, extras={"epochs_trained": 3})
        bundle = CK.load_checkpoint(p1)
        p2 = tmp_path / "two.tlac"
        CK.save_checkpoint(p2, bundle.kind, bundle.config, bundle.vocab, bundle.model,
                           bundle.head, extras=bundle.meta["extras"])
        assert p1.read_bytes() == p2.read_bytes()

    def test_parameters_restored_exactly(self, tmp_path):
        vocab = make_vocab()
        model, cfg = make_model(vocab, kind="tla-net")
        head = make_head()
        path = tmp_path / "m.tlac"
        CK.save_checkpoint(path, "tla-net", cfg, vocab, model, head)
        bundle = CK.load_checkpoint(path)
        for (name_a, t_a), (name_b, t_b) in zip(model.named_tensors(),
                                                bundle.model.named_tensors()):
            assert name_a == name_b
            assert np.array_equal(t_a.values, t_b.values)
        assert bundle.head.threshold == 0.5
        assert np.array_equal(bundle.head.weights.array, head.weights.array)

    def test_same_predictions_after_reload(self, tmp_path):
        vocab = make_vocab()
        model, cfg = make_model(vocab, kind="lstm-ae", seed=9)
        path = tmp_path / "ae.tlac"
        CK.save_checkpoint(path, "lstm-ae", cfg, vocab, model, make_head())
        bundle = CK.load_checkpoint(path)
        ids = [2, 3, 4]
        a = model.predict(ids)
        b = bundle.model.predict(ids)
        assert np.array_equal(a.probs, b.probs)
        assert a.recon_loss == b.recon_loss

    def test_vocab_hash_guard(self, tmp_path):
        vocab = make_vocab()
        model, cfg = make_model(vocab)
        path = tmp_path / "m.tlac"
        CK.save_checkpoint(path, "lstm", cfg, vocab, model, None)
        data = bytearray(path.read_bytes())
        needle = b'"alpha"'
        pos = data.rfind(needle)  # the id_to_token entry, not the counts key
        data[pos:pos + len(needle)] = b'"alpho"'
        path.write_bytes(bytes(data))
        with pytest.raises(CK.ArtifactMismatch, match="hash"):
            CK.load_checkpoint(path)

    def test_word2vec_checkpoint(self, tmp_path):
        from tlanet.word2vec import Word2VecModel
        vocab = make_vocab()
        counts = np.array([float(vocab.count_of(i)) for i in range(vocab.size)])
        model = Word2VecModel.init(vocab.size, 4, counts, negatives=3, seed=1)
        cfg = M.ClassifierConfig(vocab_size=vocab.size, embed_dim=4, max_len=5)
        path = tmp_path / "w2v.tlac"
        CK.save_checkpoint(path, "word2vec-features", cfg, vocab, model, make_head())
        bundle = CK.load_checkpoint(path)
        assert np.array_equal(bundle.model.w_in, model.w_in)
        assert np.array_equal(bundle.model.sampling, model.sampling)
        assert bundle.model.negatives == 3


class TestDatasetCache:
    def test_round_trip_and_hash(self, tmp_path):
        vocab = make_vocab()
        tokens = np.array([[2, 3, 0], [4, 5, 2]])
        labels = np.array([0, 2])
        path = tmp_path / "cache.tlad"
        CK.save_dataset_cache(path, vocab, "english", tokens, labels, ["a", "b"])
        cache = CK.load_dataset_cache(path)
        assert cache.vocab_hash == vocab.content_hash()
        assert cache.language == "english"
        assert np.array_equal(cache.tokens, tokens)
        assert np.array_equal(cache.labels, labels)
        assert cache.example_ids == ["a", "b"]

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        vocab = make_vocab()
        path = tmp_path / "cache.tlad"
        CK.save_dataset_cache(path, vocab, "english", np.zeros((1, 2), dtype=np.int64),
                              np.zeros(1, dtype=np.int64), ["x"])
        assert [p.name for p in tmp_path.iterdir()] == ["cache.tlad"]
