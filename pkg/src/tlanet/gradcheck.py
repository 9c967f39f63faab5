"""Finite-difference verification of every backward rule in the library.

A check builds a scalar loss twice: once on a tape for analytic gradients,
and once per perturbed parameter entry for central differences. The error
metric is ``|analytic - numeric| / max(1, |analytic|, |numeric|)`` taken
entrywise, which behaves like relative error for large gradients and like
absolute error near zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    max_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_err <= self.tolerance


@dataclass
class CheckReport:
    results: list[CheckResult] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def worst(self) -> CheckResult | None:
        failing = [r for r in self.results if not r.passed]
        pool = failing or self.results
        return max(pool, key=lambda r: r.max_err / r.tolerance) if pool else None

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            status = "ok" if r.passed else "FAIL"
            out.append(f"{status:4s} {r.name:<44s} max_err={r.max_err:.3e} tol={r.tolerance:.0e}")
        return out


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(loss_fn, params: list[T.Tensor], h: float = FD_STEP) -> float:
    """Max normalized error between tape gradients and central differences.

    ``loss_fn`` must rebuild the loss from the current parameter values on
    every call (it is invoked 2 * sum(p.size) + 1 times).
    """
    for p in params:
        p.zero_grad()
    with T.Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        numeric = np.zeros_like(analytic)
        for i in range(p.values.size):
            orig = p.values[i]
            p.values[i] = orig + h
            up = loss_fn().item()
            p.values[i] = orig - h
            down = loss_fn().item()
            p.values[i] = orig
            numeric[i] = (up - down) / (2.0 * h)
        worst = max(worst, _rel_err(analytic, numeric))
        p.zero_grad()
    return worst


def run_checks(checks: list[tuple[str, object, float]]) -> CheckReport:
    """Run ``(name, thunk, tolerance)`` triples; each thunk returns a max error."""
    report = CheckReport()
    start = time.perf_counter()
    for name, thunk, tol in checks:
        report.results.append(CheckResult(name, float(thunk()), tol))
    report.elapsed = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# built-in suites, used by the CLI gradcheck command
# ---------------------------------------------------------------------------

OP_TOLERANCE = 1e-6
LAYER_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


def _rand(rng, shape):
    return T.Tensor(rng.uniform(-2.0, 2.0, shape), requires_grad=True)


def ops_suite(seed: int = 0) -> list[tuple[str, object, float]]:
    rng = np.random.default_rng(seed)
    checks = []

    def fd(name, builder):
        def thunk():
            params, fn = builder()
            return check_gradients(fn, params)

        checks.append((name, thunk, OP_TOLERANCE))

    fd("op.add", lambda: _binary(rng, T.add))
    fd("op.sub", lambda: _binary(rng, T.sub))
    fd("op.mul", lambda: _binary(rng, T.mul))
    fd("op.scale", lambda: _unary(rng, lambda x: T.scale(x, -1.7)))
    fd("op.add_bias", lambda: _bias(rng))
    fd("op.matmul", lambda: _matmul(rng))
    fd("op.linear", lambda: _linear(rng))
    fd("op.tanh", lambda: _unary(rng, T.tanh))
    fd("op.sigmoid", lambda: _unary(rng, T.sigmoid))
    fd("op.relu", lambda: _unary(rng, T.relu, offset=0.3))
    fd("op.softmax", lambda: _softmax(rng))
    fd("op.softmax_rows", lambda: _softmax_rows(rng))
    fd("op.concat", lambda: _concat(rng))
    fd("op.slice_cols", lambda: _unary2(rng, lambda x: T.slice_cols(x, 1, 3)))
    fd("op.reshape", lambda: _unary2(rng, lambda x: T.reshape(x, (x.size,))))
    fd("op.pick", lambda: _pick(rng))
    fd("op.take_per_row", lambda: _take_per_row(rng))
    fd("op.clip_log", lambda: _clip_log(rng))
    fd("op.repeat_vector", lambda: _repeat(rng))
    fd("op.lookup_rows", lambda: _lookup(rng))
    return checks


def _unary(rng, op, offset=0.0):
    x = T.Tensor(rng.uniform(-2, 2, (3, 4)) + offset, requires_grad=True)
    return [x], lambda: T.total_sum(T.mul(op(x), op(x)))


def _unary2(rng, op):
    x = _rand(rng, (3, 4))
    return [x], lambda: T.total_sum(T.mul(op(x), op(x)))


def _binary(rng, op):
    a, b = _rand(rng, (3, 4)), _rand(rng, (3, 4))
    return [a, b], lambda: T.total_sum(T.mul(op(a, b), op(a, b)))


def _bias(rng):
    m, b = _rand(rng, (4, 3)), _rand(rng, (3,))
    return [m, b], lambda: T.total_sum(T.tanh(T.add_bias(m, b)))


def _matmul(rng):
    a, b = _rand(rng, (3, 4)), _rand(rng, (4, 2))
    return [a, b], lambda: T.total_sum(T.tanh(T.matmul(a, b)))


def _linear(rng):
    x, w = _rand(rng, (3, 4)), _rand(rng, (2, 4))
    return [x, w], lambda: T.total_sum(T.tanh(T.linear(x, w)))


def _softmax(rng):
    x = _rand(rng, (5,))
    c = T.constant(rng.uniform(-1, 1, (5,)))
    return [x], lambda: T.total_sum(T.mul(T.softmax(x), c))


def _softmax_rows(rng):
    x = _rand(rng, (3, 4))
    c = T.constant(rng.uniform(-1, 1, (3, 4)))
    return [x], lambda: T.total_sum(T.mul(T.softmax_rows(x), c))


def _concat(rng):
    a, b = _rand(rng, (2, 3)), _rand(rng, (2, 2))
    return [a, b], lambda: T.total_sum(T.tanh(T.concat([a, b], axis=1)))


def _pick(rng):
    x = _rand(rng, (6,))
    return [x], lambda: T.mul(T.pick(x, 2), T.pick(x, 2))


def _take_per_row(rng):
    x = _rand(rng, (4, 3))
    idx = rng.integers(0, 3, 4)
    return [x], lambda: T.total_sum(T.tanh(T.take_per_row(x, idx)))


def _clip_log(rng):
    x = T.Tensor(rng.uniform(0.2, 2.0, (3, 4)), requires_grad=True)
    return [x], lambda: T.total_sum(T.clip_log(x))


def _repeat(rng):
    v = _rand(rng, (4,))
    c = T.constant(rng.uniform(-1, 1, (3, 4)))
    return [v], lambda: T.total_sum(T.mul(T.repeat_vector(v, 3), c))


def _lookup(rng):
    table = _rand(rng, (6, 3))
    ids = np.array([1, 2, 2, 5])
    return [table], lambda: T.total_sum(T.tanh(T.lookup_rows(table, ids, padding_idx=0)))


def layers_suite(seed: int = 0) -> list[tuple[str, object, float]]:
    from . import layers as L

    rng = np.random.default_rng(seed)
    checks = []

    def cell_check():
        p = L.LSTMCellParams.init(input_size=3, hidden_size=4, rng=rng)
        xs = [T.constant(rng.uniform(-1, 1, (1, 3))) for _ in range(3)]

        def loss_fn():
            state = L.LSTMState.zeros(1, 4)
            for x in xs:
                state = L.lstm_cell_step(p, x, state)
            return T.total_sum(state.h)

        return check_gradients(loss_fn, list(p.tensors()))

    checks.append(("layer.lstm_cell", cell_check, LAYER_TOLERANCE))

    def stack_check():
        p = L.StackedLSTMParams.init(input_size=3, hidden_size=3, num_layers=2, dropout=0.0, rng=rng)
        xs = [T.constant(rng.uniform(-1, 1, (2, 3))) for _ in range(4)]

        def loss_fn():
            seq, _ = L.lstm_forward(p, xs, training=False)
            return T.total_sum(seq[-1])

        return check_gradients(loss_fn, list(p.tensors()))

    checks.append(("layer.stacked_lstm", stack_check, LAYER_TOLERANCE))

    def bilstm_check():
        fwd = L.StackedLSTMParams.init(input_size=3, hidden_size=3, num_layers=1, dropout=0.0, rng=rng)
        bwd = L.StackedLSTMParams.init(input_size=3, hidden_size=3, num_layers=1, dropout=0.0, rng=rng)
        xs = [T.constant(rng.uniform(-1, 1, (1, 3))) for _ in range(4)]

        def loss_fn():
            seq = L.bilstm_forward(fwd, bwd, xs, training=False)
            return T.total_sum(T.tanh(seq[0]))

        return check_gradients(loss_fn, list(fwd.tensors()) + list(bwd.tensors()))

    checks.append(("layer.bilstm", bilstm_check, LAYER_TOLERANCE))

    def dense_check():
        p = L.DenseParams.init(3, 4, rng=rng)
        x = T.constant(rng.uniform(-1, 1, (2, 3)))

        def loss_fn():
            return T.total_sum(L.dense_forward(p.weights, p.bias, x, "tanh"))

        return check_gradients(loss_fn, [p.weights, p.bias])

    checks.append(("layer.dense", dense_check, OP_TOLERANCE))

    def embed_check():
        table = L.EmbeddingTable.init(vocab_size=7, embed_dim=3, rng=rng)
        ids = np.array([2, 3, 3, 6])
        c = T.constant(rng.uniform(-1, 1, (4, 3)))

        def loss_fn():
            return T.total_sum(T.mul(L.embedding_lookup(table, ids), c))

        return check_gradients(loss_fn, [table.table])

    checks.append(("layer.embedding", embed_check, OP_TOLERANCE))
    return checks


def models_suite(seed: int = 0) -> list[tuple[str, object, float]]:
    from . import models as M

    rng = np.random.default_rng(seed)
    cfg = M.ClassifierConfig(
        vocab_size=8, embed_dim=3, hidden_size=2, num_layers=1,
        dropout=0.0, num_classes=3, max_len=3, seed=seed, head_hidden=3,
    )
    tokens = np.array([[2, 4, 7]])
    target = np.array([1])
    checks = []

    def model_check(model):
        def loss_fn():
            out = model.forward_batch(tokens, training=False)
            loss = model.training_loss(out, target)
            return loss

        return check_gradients(loss_fn, list(model.tensors()))

    for name, factory in (
        ("model.lstm", lambda: M.LstmClassifier(cfg)),
        ("model.bilstm", lambda: M.BiLstmClassifier(cfg)),
        ("model.lstm_ae", lambda: M.LstmAutoencoder(cfg)),
        ("model.tla_net", lambda: M.TlaNet(cfg)),
    ):
        model = factory()
        checks.append((name, (lambda m=model: model_check(m)), MODEL_TOLERANCE))
    return checks


SUITES = {"ops": ops_suite, "layers": layers_suite, "models": models_suite}


def suite_for_scope(scope: str, seed: int = 0) -> list[tuple[str, object, float]]:
    if scope == "all":
        return ops_suite(seed) + layers_suite(seed) + models_suite(seed)
    if scope not in SUITES:
        raise ValueError(f"unknown gradcheck scope {scope!r}; pick from ops, layers, models, all")
    return SUITES[scope](seed)
