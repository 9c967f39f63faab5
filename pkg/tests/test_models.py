"""Model-level behavior: the classifiers, the meta-learner, and the training loop."""

import numpy as np
import pytest

from tlanet import models as M
from tlanet import optim
from tlanet import tensor as T
from tlanet import text as TXT
from tlanet.gradcheck import check_gradients
from tlanet.synthetic import synthetic_examples


def small_config(**overrides):
    base = dict(vocab_size=10, embed_dim=4, hidden_size=4, num_layers=1, dropout=0.0,
                num_classes=3, max_len=5, seed=3, head_hidden=4)
    base.update(overrides)
    return M.ClassifierConfig(**base)


def zero_tensors(tensors):
    for t in tensors:
        t.values[:] = 0.0


class TestLstmClassifier:
    def test_zero_trunk_gives_softmax_of_bias(self):
        model = M.LstmClassifier(small_config())
        zero_tensors(model.trunk.tensors())
        model.head.bias.values[:] = [1.0, 0.0, -1.0]
        a = model.predict([2, 3, 4]).probs
        b = model.predict([5, 6, 7, 8]).probs
        expected = np.exp(np.array([1.0, 0.0, -1.0]) - 1.0)
        expected /= expected.sum()
        assert np.allclose(a, expected, atol=1e-12)
        assert np.allclose(a, b, atol=1e-15)

    def test_output_is_three_way_distribution(self):
        model = M.LstmClassifier(small_config())
        out = model.predict([2, 5, 7])
        assert out.probs.shape == (3,)
        assert abs(out.probs.sum() - 1.0) <= 1e-9
        assert out.recon_loss is None

    def test_empty_input_rejected(self):
        model = M.LstmClassifier(small_config())
        with pytest.raises(ValueError):
            model.predict([])

    def test_end_to_end_gradient(self):
        model = M.LstmClassifier(small_config())
        tokens = np.array([[2, 4, 6, 8]])

        def loss_fn():
            out = model.forward_batch(tokens)
            return model.training_loss(out, [1])

        assert check_gradients(loss_fn, [t for _, t in model.named_tensors()]) <= 1e-4


class TestBiLstmClassifier:
    def test_zero_params_uniform_from_bias(self):
        model = M.BiLstmClassifier(small_config())
        zero_tensors(model.fwd.tensors())
        zero_tensors(model.bwd.tensors())
        out = model.predict([2, 3])
        assert np.allclose(out.probs, 1.0 / 3.0, atol=1e-12)

    def test_reversed_input_with_swapped_directions(self):
        # swapping the direction stacks and the matching halves of the head
        # weights must leave the class probabilities bit-identical
        model = M.BiLstmClassifier(small_config(seed=11))
        tokens = [2, 7, 3, 9, 4]
        baseline = model.predict(tokens).probs

        model.fwd, model.bwd = model.bwd, model.fwd
        w = model.head.weights.array
        h = model.cfg.hidden_size
        swapped = np.concatenate([w[:, h:], w[:, :h]], axis=1)
        model.head.weights.values[:] = swapped.reshape(-1)
        mirrored = model.predict(list(reversed(tokens))).probs
        assert np.array_equal(baseline, mirrored)

    def test_gradient(self):
        model = M.BiLstmClassifier(small_config(hidden_size=3))
        tokens = np.array([[2, 4, 6]])

        def loss_fn():
            return model.training_loss(model.forward_batch(tokens), [0])

        assert check_gradients(loss_fn, [t for _, t in model.named_tensors()]) <= 1e-4


class TestLstmAutoencoder:
    def test_output_shapes_and_distribution(self):
        model = M.LstmAutoencoder(small_config())
        out = model.forward_batch(np.array([[2, 3, 4, 5]]))
        assert len(out.recon_steps) == 4
        assert out.recon_steps[0].shape == (1, 4)
        assert abs(out.probs.array.sum() - 1.0) <= 1e-9
        assert out.recon_loss is not None

    def test_overfit_single_sample_reconstruction(self):
        model = M.LstmAutoencoder(small_config(hidden_size=8, seed=5))
        tokens = np.array([[2, 5, 7]])
        adam = optim.Adam([t for _, t in model.named_tensors()], learning_rate=0.01)
        final = None
        for step in range(400):
            _, final = M.train_step(model, adam, tokens, [1], recon_weight=1.0,
                                    step_index=step)
        assert final <= 1e-3

    def test_bce_reconstruction_mode(self):
        model = M.LstmAutoencoder(small_config(recon_mode="bce"))
        out = model.forward_batch(np.array([[2, 3, 4]]))
        assert out.recon_steps[0].shape == (1, 10)  # vocab-sized sigmoid rows
        assert out.recon_loss.item() > 0.0
        probs = out.recon_steps[0].array
        assert ((probs > 0.0) & (probs < 1.0)).all()


class TestMetaLearner:
    def test_identical_inputs_convex_combination_is_input(self):
        rng = np.random.default_rng(21)
        params = M.MetaLearnerParams.init(4, rng)
        x = T.Tensor(rng.uniform(-1, 1, (2, 4)))
        fusion = M.meta_learner_combine(params, [x, x, x])
        assert np.allclose(fusion.convex.array, x.array, atol=1e-12)

    def test_attention_weights_sum_to_one(self):
        rng = np.random.default_rng(22)
        params = M.MetaLearnerParams.init(3, rng)
        inputs = [T.Tensor(rng.uniform(-2, 2, (4, 3))) for _ in range(3)]
        fusion = M.meta_learner_combine(params, inputs)
        sums = fusion.attention.array.sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-12)
        assert (fusion.attention.array >= 0.0).all()

    def test_zero_scoring_vector_gives_uniform_weights(self):
        rng = np.random.default_rng(23)
        params = M.MetaLearnerParams.init(3, rng)
        params.score.values[:] = 0.0
        inputs = [T.Tensor(rng.uniform(-2, 2, (2, 3))) for _ in range(3)]
        fusion = M.meta_learner_combine(params, inputs)
        assert np.allclose(fusion.attention.array, 1.0 / 3.0, atol=1e-15)

    def test_wrong_arity_and_width(self):
        rng = np.random.default_rng(24)
        params = M.MetaLearnerParams.init(3, rng)
        x = T.Tensor(np.zeros((1, 3)))
        with pytest.raises(T.ShapeError, match="exactly 3"):
            M.meta_learner_combine(params, [x, x])
        y = T.Tensor(np.zeros((1, 4)))
        with pytest.raises(T.ShapeError, match="widths"):
            M.meta_learner_combine(params, [x, x, y])


class TestTlaNet:
    def test_shapes_and_normalization(self):
        model = M.TlaNet(small_config())
        out = model.forward_batch(np.array([[2, 3, 4]]))
        assert abs(out.probs.array.sum() - 1.0) <= 1e-9
        assert len(out.recon_steps) == 3
        assert out.recon_steps[0].shape == (1, 4)
        assert out.features.shape == (1, 4)

    def test_identical_encoders_fuse_to_single_encoding(self):
        model = M.TlaNet(small_config(seed=8))
        for k in (1, 2):
            for src, dst in ((model.enc_stage1[0], model.enc_stage1[k]),
                             (model.enc_stage2[0], model.enc_stage2[k])):
                for a, b in zip(src.tensors(), dst.tensors()):
                    b.values[:] = a.values
        ids = np.array([[2, 5, 7]])
        seq = model._embed_steps(ids)
        encodings = [model._encode(k, seq, False, None) for k in range(3)]
        for e in encodings[1:]:
            assert np.allclose(e.array, encodings[0].array, atol=1e-15)
        fusion = M.meta_learner_combine(model.enc_meta, encodings)
        assert np.allclose(fusion.convex.array, encodings[0].array, atol=1e-12)

    def test_class_tap_options(self):
        fused = M.TlaNet(small_config(class_tap="fused"))
        recon = M.TlaNet(small_config(class_tap="reconstruction"))
        tokens = np.array([[2, 3, 4]])
        a = fused.forward_batch(tokens).probs.array
        b = recon.forward_batch(tokens).probs.array
        assert a.shape == b.shape == (1, 3)

    def test_dropout_encoder_views_change_training_forward(self):
        model = M.TlaNet(small_config(encoder_views="dropout", dropout=0.5))
        tokens = np.array([[2, 3, 4]])
        plain = model.forward_batch(tokens, training=False).probs.array
        rng = np.random.default_rng(0)
        dropped = model.forward_batch(tokens, training=True, rng=rng).probs.array
        assert not np.allclose(plain, dropped)

    def test_full_network_gradient(self):
        cfg = small_config(embed_dim=3, hidden_size=2, head_hidden=3, vocab_size=8)
        model = M.TlaNet(cfg)
        tokens = np.array([[2, 4, 7]])

        def loss_fn():
            return model.training_loss(model.forward_batch(tokens), [1])

        assert check_gradients(loss_fn, [t for _, t in model.named_tensors()]) <= 1e-3


class TestTraining:
    def corpus(self):
        exs = synthetic_examples("train")
        vocab = TXT.build_vocab((TXT.tokenize(e.text) for e in exs), 200, 1)
        return TXT.encode_dataset(vocab, exs, 12) + (vocab,)

    def test_lambda_zero_reports_recon_without_training_it(self):
        tokens = np.array([[2, 3, 4], [5, 6, 7]])
        labels = [0, 1]
        model = M.TlaNet(small_config())
        adam = optim.Adam([t for _, t in model.named_tensors()], learning_rate=0.001)
        cl, rl = M.train_step(model, adam, tokens, labels, recon_weight=0.0)
        assert rl > 0.0
        assert np.isfinite(cl)

    def test_loss_decreases_on_fixed_batch(self):
        tokens, labels, _ = self.corpus()
        sel = np.arange(0, 60, 3)
        model = M.TlaNet(small_config(vocab_size=80, embed_dim=8, hidden_size=8,
                                      max_len=12, head_hidden=8, seed=1))
        adam = optim.Adam([t for _, t in model.named_tensors()], learning_rate=0.003)
        losses = []
        for step in range(50):
            cl, rl = M.train_step(model, adam, tokens[sel], labels[sel],
                                  recon_weight=0.5, step_index=step)
            losses.append(cl + 0.5 * rl)
        assert losses[-1] < losses[0]

    def test_identical_seeds_identical_traces(self):
        tokens, labels, _ = self.corpus()

        def run():
            model = M.TlaNet(small_config(vocab_size=80, embed_dim=6, hidden_size=6,
                                          max_len=12, head_hidden=6, seed=2, dropout=0.1))
            adam = optim.Adam([t for _, t in model.named_tensors()], learning_rate=0.003)
            trace = M.fit(model, adam, tokens, labels, epochs=3, batch_size=16,
                          recon_weight=0.5, seed=9)
            return trace, [t.values.copy() for _, t in model.named_tensors()]

        trace_a, params_a = run()
        trace_b, params_b = run()
        assert trace_a == trace_b
        for a, b in zip(params_a, params_b):
            assert np.array_equal(a, b)

    def test_divergence_reports_step(self):
        model = M.LstmClassifier(small_config())
        model.embedding.table.values[:] = np.nan
        adam = optim.Adam([t for _, t in model.named_tensors()])
        with pytest.raises(optim.TrainingDivergence, match="step 17"):
            M.train_step(model, adam, np.array([[2, 3]]), [0], step_index=17)

    def test_probabilities_valid_on_random_inputs(self):
        rng = np.random.default_rng(31)
        for kind in ("lstm", "bilstm", "lstm-ae", "tla-net"):
            model = M.build_model(kind, small_config())
            for _ in range(5):
                length = int(rng.integers(1, 6))
                ids = rng.integers(0, 10, length)
                probs = model.predict(ids).probs
                assert (probs >= 0.0).all()
                assert abs(probs.sum() - 1.0) <= 1e-9

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown model kind"):
            M.build_model("transformer", small_config())

    def test_predict_with_rejection_attaches_decision(self):
        from tlanet import wisdomnet as W
        model = M.LstmClassifier(small_config())
        rng = np.random.default_rng(41)
        head = W.WisdomNetHead(
            T.Tensor(rng.uniform(-1, 1, (3, model.feature_dim))),
            T.Tensor(np.zeros(3)))
        accepted = M.predict_with_rejection(model, head, [2, 3, 4], theta=0.0)
        assert accepted.decision in (0, 1, 2)
        refused = M.predict_with_rejection(model, head, [2, 3, 4], theta=1.0)
        assert W.is_rejected(refused.decision)
