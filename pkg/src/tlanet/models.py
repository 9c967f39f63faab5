"""The sequence classifiers: LSTM, BiLSTM, LSTM-autoencoder, and TLA-Net.

TLA-Net runs three stacked LSTM encoders in parallel (each one a stage-1
stack, a repeat vector, and a stage-2 stack), fuses their final states
through an attention meta-learner, mirrors the structure through three
parallel decoders, fuses those stepwise, and reconstructs the embedded
input. Classification reads the fused representation through a small
fully connected network; a rejection head attaches to its penultimate
activations.

All forward passes are batch-first: token ids arrive as an (examples,
steps) integer matrix and sequences flow through the layers as time-major
lists of (examples, width) tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import layers as L
from . import optim
from . import tensor as T
from .tensor import ShapeError, Tensor

MODEL_KINDS = ("lstm", "bilstm", "lstm-ae", "word2vec-features", "tla-net")


@dataclass
class ClassifierConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden_size: int = 128
    num_layers: int = 3
    dropout: float = 0.2
    num_classes: int = 3
    max_len: int = 128
    seed: int = 0
    head_hidden: int = 32
    recon_mode: str = "mse"  # or "bce": sigmoid reconstruction of one-hot token rows
    class_tap: str = "fused"  # or "reconstruction": classify the mean decoded step
    encoder_views: str = "shared"  # or "dropout": each encoder sees its own dropped view

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.hidden_size < 1 or self.embed_dim < 1 or self.num_layers < 1:
            raise ValueError("hidden_size, embed_dim and num_layers must be >= 1")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.recon_mode not in ("mse", "bce"):
            raise ValueError(f"recon_mode must be mse or bce, got {self.recon_mode!r}")
        if self.class_tap not in ("fused", "reconstruction"):
            raise ValueError(f"class_tap must be fused or reconstruction, got {self.class_tap!r}")
        if self.encoder_views not in ("shared", "dropout"):
            raise ValueError(f"encoder_views must be shared or dropout, got {self.encoder_views!r}")


@dataclass
class ModelOutput:
    """Per-example prediction: a distribution, and for autoencoders a reconstruction error."""

    probs: np.ndarray
    recon_loss: float | None = None
    decision: object | None = None  # class index or wisdomnet.REJECTED once a head is attached


@dataclass
class BatchOutput:
    """Graph-side results of one batched forward pass."""

    probs: Tensor  # (batch, classes)
    features: Tensor  # (batch, feature_dim); what a rejection head would read
    recon_loss: Tensor | None = None  # batch-mean reconstruction loss
    recon_per_example: np.ndarray | None = None
    recon_steps: list[Tensor] | None = None  # one reconstructed step per input step


class MetaFusion(NamedTuple):
    fused: Tensor  # (batch, width) combined representation
    attention: Tensor  # (batch, 3) softmax weights
    convex: Tensor  # (batch, width) attention-weighted sum alone


@dataclass
class MetaLearnerParams:
    """Attention scores plus one simple recurrent pass over the scored inputs."""

    score: Tensor  # (1, width) scoring vector
    w_in: Tensor  # (width, width)
    w_rec: Tensor  # (width, width)
    bias: Tensor  # (width,)

    @classmethod
    def init(cls, width: int, rng: np.random.Generator, prefix: str = "meta") -> "MetaLearnerParams":
        bound = 1.0 / np.sqrt(width)
        return cls(
            Tensor(rng.uniform(-bound, bound, (1, width)), requires_grad=True, name=f"{prefix}.score"),
            Tensor(rng.uniform(-bound, bound, (width, width)), requires_grad=True, name=f"{prefix}.w_in"),
            Tensor(rng.uniform(-bound, bound, (width, width)), requires_grad=True, name=f"{prefix}.w_rec"),
            Tensor(np.zeros(width), requires_grad=True, name=f"{prefix}.b"),
        )

    def tensors(self):
        yield self.score
        yield self.w_in
        yield self.w_rec
        yield self.bias


def meta_learner_combine(m: MetaLearnerParams, inputs: list[Tensor]) -> MetaFusion:
    """Fuse exactly three equal-width encodings into one.

    Attention scores are softmaxed into a convex combination; a simple
    recurrent combiner then walks the three inputs in order, seeded by the
    weighted sum, and its final state is the fused output.
    """
    if len(inputs) != 3:
        raise ShapeError(f"meta learner fuses exactly 3 encodings, got {len(inputs)}")
    width = inputs[0].shape[1]
    for e in inputs:
        if len(e.shape) != 2 or e.shape[1] != width:
            raise ShapeError(f"meta learner widths differ: {[x.shape for x in inputs]}")
    scores = T.concat([T.linear(e, m.score) for e in inputs], axis=1)
    attn = T.softmax_rows(scores)
    ones_row = T.constant(np.ones((1, width)))
    convex = None
    for k, e in enumerate(inputs):
        tile = T.matmul(T.slice_cols(attn, k, k + 1), ones_row)
        term = T.mul(tile, e)
        convex = term if convex is None else T.add(convex, term)
    h = convex
    for e in inputs:
        h = T.tanh(T.add_bias(T.add(T.linear(e, m.w_in), T.linear(h, m.w_rec)), m.bias))
    return MetaFusion(h, attn, convex)


def _check_tokens(tokens) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] == 0 or ids.shape[0] == 0:
        raise ValueError(f"token batch must be a non-empty (examples, steps) matrix, got {ids.shape}")
    return ids


class _SequenceModel:
    """Shared plumbing: embedding, batched prediction, parameter listing."""

    kind: str = ""

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed)
        self.embedding = L.EmbeddingTable.init(cfg.vocab_size, cfg.embed_dim, self._rng)

    # subclasses implement forward_batch() and _tensors()

    def tensors(self):
        yield from self._tensors()

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, t in enumerate(self.tensors()):
            out.append((t.name or f"param.{i}", t))
        return out

    @property
    def feature_dim(self) -> int:
        raise NotImplementedError

    def _embed_steps(self, ids: np.ndarray) -> list[Tensor]:
        return [L.embedding_lookup(self.embedding, ids[:, t]) for t in range(ids.shape[1])]

    def _recon_pack(self, targets: list[Tensor], recon_steps: list[Tensor],
                    token_ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Batch-mean reconstruction loss plus the per-example values."""
        batch = targets[0].shape[0]
        if self.cfg.recon_mode == "mse":
            per = np.zeros(batch)
            total = None
            for tgt, rec in zip(targets, recon_steps):
                diff = T.sub(tgt, rec)
                sq = T.mul(diff, diff)
                per += sq.array.sum(axis=1)
                step_sum = T.total_sum(sq)
                total = step_sum if total is None else T.add(total, step_sum)
            return T.scale(total, 1.0 / batch), per
        # bce: reconstruct one-hot token rows through sigmoid outputs
        probs = T.concat(recon_steps, axis=0)  # (steps*batch, vocab)
        onehot = np.zeros((len(recon_steps) * batch, self.cfg.vocab_size))
        for s in range(len(recon_steps)):
            onehot[np.arange(batch) + s * batch, token_ids[:, s]] = 1.0
        loss = optim.bce(probs, onehot)
        p = np.clip(probs.array, optim.PROB_FLOOR, 1.0 - optim.PROB_FLOOR)
        cell = -(onehot * np.log(p) + (1.0 - onehot) * np.log(1.0 - p))
        per = cell.reshape(len(recon_steps), batch, -1).mean(axis=(0, 2))
        return loss, per

    def _recon_head_width(self) -> int:
        return self.cfg.embed_dim if self.cfg.recon_mode == "mse" else self.cfg.vocab_size

    def _recon_activation(self) -> str:
        return "linear" if self.cfg.recon_mode == "mse" else "sigmoid"

    def losses(self, out: BatchOutput, targets, recon_weight: float = 0.5):
        """(total, classification, reconstruction) scalar tensors for a batch."""
        targets = np.asarray(targets, dtype=np.int64)
        class_loss = optim.cce_rows(out.probs, targets)
        if out.recon_loss is None:
            return class_loss, class_loss, None
        total = T.add(class_loss, T.scale(out.recon_loss, float(recon_weight)))
        return total, class_loss, out.recon_loss

    def training_loss(self, out: BatchOutput, targets, recon_weight: float = 0.5) -> Tensor:
        return self.losses(out, targets, recon_weight)[0]

    def predict(self, token_ids) -> ModelOutput:
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("predict takes a non-empty 1-D token id sequence")
        out = self.forward_batch(ids[None, :], training=False)
        recon = float(out.recon_per_example[0]) if out.recon_per_example is not None else None
        return ModelOutput(out.probs.array[0].copy(), recon)

    def predict_batch(self, tokens, chunk: int = 256):
        """Inference over many examples: (probs, features, recon-per-example) arrays."""
        ids = _check_tokens(tokens)
        probs, feats, recons = [], [], []
        has_recon = True
        for lo in range(0, ids.shape[0], chunk):
            out = self.forward_batch(ids[lo:lo + chunk], training=False)
            probs.append(out.probs.array.copy())
            feats.append(out.features.array.copy())
            if out.recon_per_example is None:
                has_recon = False
            else:
                recons.append(out.recon_per_example)
        return (
            np.concatenate(probs, axis=0),
            np.concatenate(feats, axis=0),
            np.concatenate(recons) if has_recon else None,
        )


class LstmClassifier(_SequenceModel):
    """Stacked LSTM; the last step's hidden state feeds a softmax head."""

    kind = "lstm"

    def __init__(self, cfg: ClassifierConfig):
        super().__init__(cfg)
        self.trunk = L.StackedLSTMParams.init(
            cfg.embed_dim, cfg.hidden_size, cfg.num_layers, cfg.dropout, self._rng, prefix="trunk")
        self.head = L.DenseParams.init(cfg.hidden_size, cfg.num_classes, self._rng, prefix="head")

    @property
    def feature_dim(self) -> int:
        return self.cfg.hidden_size

    def _tensors(self):
        yield self.embedding.table
        yield from self.trunk.tensors()
        yield from self.head.tensors()

    def forward_batch(self, tokens, training: bool = False,
                      rng: np.random.Generator | None = None) -> BatchOutput:
        ids = _check_tokens(tokens)
        seq = self._embed_steps(ids)
        hidden_seq, _ = L.lstm_forward(self.trunk, seq, training, rng)
        features = hidden_seq[-1]
        probs = L.dense_forward(self.head.weights, self.head.bias, features, "softmax")
        return BatchOutput(probs, features)


class BiLstmClassifier(_SequenceModel):
    """Forward and backward stacks concatenated per step; last step classifies."""

    kind = "bilstm"

    def __init__(self, cfg: ClassifierConfig):
        super().__init__(cfg)
        self.fwd = L.StackedLSTMParams.init(
            cfg.embed_dim, cfg.hidden_size, cfg.num_layers, cfg.dropout, self._rng, prefix="fwd")
        self.bwd = L.StackedLSTMParams.init(
            cfg.embed_dim, cfg.hidden_size, cfg.num_layers, cfg.dropout, self._rng, prefix="bwd")
        self.head = L.DenseParams.init(2 * cfg.hidden_size, cfg.num_classes, self._rng, prefix="head")

    @property
    def feature_dim(self) -> int:
        return 2 * self.cfg.hidden_size

    def _tensors(self):
        yield self.embedding.table
        yield from self.fwd.tensors()
        yield from self.bwd.tensors()
        yield from self.head.tensors()

    def forward_batch(self, tokens, training: bool = False,
                      rng: np.random.Generator | None = None) -> BatchOutput:
        ids = _check_tokens(tokens)
        seq = self._embed_steps(ids)
        # classify from the final state of each direction (both have read
        # the whole sequence); bilstm_forward's per-step pairing is for
        # sequence-shaped consumers
        _, fwd_finals = L.lstm_forward(self.fwd, seq, training, rng)
        _, bwd_finals = L.lstm_forward(self.bwd, list(reversed(seq)), training, rng)
        features = T.concat([fwd_finals[-1].h, bwd_finals[-1].h], axis=1)
        probs = L.dense_forward(self.head.weights, self.head.bias, features, "softmax")
        return BatchOutput(probs, features)


class LstmAutoencoder(_SequenceModel):
    """Encode, repeat the final state, decode, reconstruct each embedded step."""

    kind = "lstm-ae"

    def __init__(self, cfg: ClassifierConfig):
        super().__init__(cfg)
        self.encoder = L.StackedLSTMParams.init(
            cfg.embed_dim, cfg.hidden_size, cfg.num_layers, cfg.dropout, self._rng, prefix="enc")
        self.decoder = L.StackedLSTMParams.init(
            cfg.hidden_size, cfg.hidden_size, cfg.num_layers, cfg.dropout, self._rng, prefix="dec")
        self.recon = L.DenseParams.init(cfg.hidden_size, self._recon_head_width(), self._rng,
                                        prefix="recon")
        self.head = L.DenseParams.init(cfg.hidden_size, cfg.num_classes, self._rng, prefix="head")

    @property
    def feature_dim(self) -> int:
        return self.cfg.hidden_size

    def _tensors(self):
        yield self.embedding.table
        yield from self.encoder.tensors()
        yield from self.decoder.tensors()
        yield from self.recon.tensors()
        yield from self.head.tensors()

    def forward_batch(self, tokens, training: bool = False,
                      rng: np.random.Generator | None = None) -> BatchOutput:
        ids = _check_tokens(tokens)
        seq = self._embed_steps(ids)
        _, finals = L.lstm_forward(self.encoder, seq, training, rng)
        encoded = finals[-1].h
        dec_in = L.repeat_sequence(encoded, len(seq))
        dec_seq, _ = L.lstm_forward(self.decoder, dec_in, training, rng)
        act = self._recon_activation()
        recon_steps = [L.dense_forward(self.recon.weights, self.recon.bias, h, act)
                       for h in dec_seq]
        recon_loss, per = self._recon_pack(seq, recon_steps, ids)
        probs = L.dense_forward(self.head.weights, self.head.bias, encoded, "softmax")
        return BatchOutput(probs, encoded, recon_loss, per, recon_steps)


class TlaNet(_SequenceModel):
    """Three parallel two-stage encoders, meta-learner fusion, mirrored decoders,
    reconstruction, and a classification network whose penultimate layer feeds
    the rejection head."""

    kind = "tla-net"

    def __init__(self, cfg: ClassifierConfig):
        super().__init__(cfg)
        h = cfg.hidden_size
        self.enc_stage1 = []
        self.enc_stage2 = []
        self.dec_stage1 = []
        self.dec_stage2 = []
        for k in range(3):
            self.enc_stage1.append(L.StackedLSTMParams.init(
                cfg.embed_dim, h, cfg.num_layers, cfg.dropout, self._rng, prefix=f"enc{k}.s1"))
            self.enc_stage2.append(L.StackedLSTMParams.init(
                h, h, cfg.num_layers, cfg.dropout, self._rng, prefix=f"enc{k}.s2"))
        self.enc_meta = MetaLearnerParams.init(h, self._rng, prefix="enc_meta")
        for k in range(3):
            self.dec_stage1.append(L.StackedLSTMParams.init(
                h, h, cfg.num_layers, cfg.dropout, self._rng, prefix=f"dec{k}.s1"))
            self.dec_stage2.append(L.StackedLSTMParams.init(
                h, h, cfg.num_layers, cfg.dropout, self._rng, prefix=f"dec{k}.s2"))
        self.dec_meta = MetaLearnerParams.init(h, self._rng, prefix="dec_meta")
        self.recon = L.DenseParams.init(h, self._recon_head_width(), self._rng, prefix="recon")
        self.class_hidden = L.DenseParams.init(h, cfg.head_hidden, self._rng, prefix="class.hidden")
        self.class_out = L.DenseParams.init(cfg.head_hidden, cfg.num_classes, self._rng,
                                            prefix="class.out")

    @property
    def feature_dim(self) -> int:
        return self.cfg.head_hidden

    def _tensors(self):
        yield self.embedding.table
        for stack in (*self.enc_stage1, *self.enc_stage2):
            yield from stack.tensors()
        yield from self.enc_meta.tensors()
        for stack in (*self.dec_stage1, *self.dec_stage2):
            yield from stack.tensors()
        yield from self.dec_meta.tensors()
        yield from self.recon.tensors()
        yield from self.class_hidden.tensors()
        yield from self.class_out.tensors()

    def _encode(self, k: int, seq: list[Tensor], training, rng) -> Tensor:
        steps = len(seq)
        _, s1_finals = L.lstm_forward(self.enc_stage1[k], seq, training, rng)
        rep = L.repeat_sequence(s1_finals[-1].h, steps)
        _, s2_finals = L.lstm_forward(self.enc_stage2[k], rep, training, rng)
        return s2_finals[-1].h

    def _decode(self, k: int, seq: list[Tensor], training, rng) -> list[Tensor]:
        steps = len(seq)
        _, d1_finals = L.lstm_forward(self.dec_stage1[k], seq, training, rng)
        rep = L.repeat_sequence(d1_finals[-1].h, steps)
        d2_seq, _ = L.lstm_forward(self.dec_stage2[k], rep, training, rng)
        return d2_seq

    def forward_batch(self, tokens, training: bool = False,
                      rng: np.random.Generator | None = None) -> BatchOutput:
        ids = _check_tokens(tokens)
        seq = self._embed_steps(ids)
        steps = len(seq)

        encodings = []
        for k in range(3):
            view = seq
            if self.cfg.encoder_views == "dropout" and training and self.cfg.dropout > 0.0:
                view = [T.dropout(x, self.cfg.dropout, rng) for x in seq]
            encodings.append(self._encode(k, view, training, rng))
        fusion = meta_learner_combine(self.enc_meta, encodings)

        dec_in = L.repeat_sequence(fusion.fused, steps)
        decoded = [self._decode(k, dec_in, training, rng) for k in range(3)]
        fused_steps = [meta_learner_combine(self.dec_meta, [d[t] for d in decoded]).fused
                       for t in range(steps)]
        act = self._recon_activation()
        recon_steps = [L.dense_forward(self.recon.weights, self.recon.bias, h, act)
                       for h in fused_steps]
        recon_loss, per = self._recon_pack(seq, recon_steps, ids)

        if self.cfg.class_tap == "fused":
            class_in = fusion.fused
        else:
            pooled = fused_steps[0]
            for h in fused_steps[1:]:
                pooled = T.add(pooled, h)
            class_in = T.scale(pooled, 1.0 / steps)
        hidden_act = L.dense_forward(self.class_hidden.weights, self.class_hidden.bias,
                                     class_in, "relu")
        probs = L.dense_forward(self.class_out.weights, self.class_out.bias, hidden_act, "softmax")
        return BatchOutput(probs, hidden_act, recon_loss, per, recon_steps)


def build_model(kind: str, cfg: ClassifierConfig) -> _SequenceModel:
    table = {
        "lstm": LstmClassifier,
        "bilstm": BiLstmClassifier,
        "lstm-ae": LstmAutoencoder,
        "tla-net": TlaNet,
    }
    if kind not in table:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(table)}")
    return table[kind](cfg)


def predict_with_rejection(model: _SequenceModel, head, token_ids,
                           theta: float | None = None) -> ModelOutput:
    """Predict one example and let the attached head accept or reject it."""
    from .wisdomnet import wisdomnet_classify

    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("predict takes a non-empty 1-D token id sequence")
    out = model.forward_batch(ids[None, :], training=False)
    recon = float(out.recon_per_example[0]) if out.recon_per_example is not None else None
    decision = wisdomnet_classify(head, out.features.array[0], theta)
    return ModelOutput(out.probs.array[0].copy(), recon, decision)


def train_step(model: _SequenceModel, optimizer, tokens, labels,
               recon_weight: float = 0.5, rng: np.random.Generator | None = None,
               step_index: int = 0) -> tuple[float, float]:
    """One optimizer update on a batch; returns (classification, reconstruction) losses."""
    optimizer.zero_grad()
    with T.Tape() as tape:
        out = model.forward_batch(tokens, training=True, rng=rng)
        total, class_loss, recon = model.losses(out, labels, recon_weight)
    total_val = total.item()
    if not np.isfinite(total_val):
        raise optim.TrainingDivergence("training loss is not finite", step=step_index)
    tape.backward(total)
    optimizer.step()
    return class_loss.item(), recon.item() if recon is not None else 0.0


def fit(model: _SequenceModel, optimizer, tokens, labels, epochs: int, batch_size: int,
        recon_weight: float = 0.5, seed: int = 0, start_epoch: int = 0,
        on_epoch=None) -> list[list[float]]:
    """Epoch loop over shuffled batches; returns [classification, reconstruction] per epoch.

    Shuffling and dropout draw from a generator derived from (seed, epoch),
    so a resumed run replays exactly the same stream as an uninterrupted one.
    """
    ids = _check_tokens(tokens)
    y = np.asarray(labels, dtype=np.int64)
    trace: list[list[float]] = []
    step = start_epoch * max(1, (ids.shape[0] + batch_size - 1) // batch_size)
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = np.random.default_rng((seed, epoch))
        order = rng.permutation(ids.shape[0])
        class_sum = recon_sum = 0.0
        for lo in range(0, order.size, batch_size):
            sel = order[lo:lo + batch_size]
            step += 1
            cl, rl = train_step(model, optimizer, ids[sel], y[sel], recon_weight, rng, step)
            class_sum += cl * sel.size
            recon_sum += rl * sel.size
        trace.append([class_sum / order.size, recon_sum / order.size])
        if on_epoch is not None:
            on_epoch(epoch, trace[-1])
    return trace
