import math

import numpy as np
import pytest

from vtenlp.classifier import (
    ClassifierSpec,
    TrainConfig,
    forward,
    gradient,
    init_params,
    load_model,
    loss,
    predict_batch,
    save_model,
    train,
)
from vtenlp.embed import EmbeddingMatrix
from vtenlp.errors import ShapeError, TrainingError, ValidationError


def make_batch(rng, n, seq_len, dim, k, full_valid=False):
    batch = []
    for _ in range(n):
        rows = rng.normal(size=(seq_len, dim))
        valid = seq_len if full_valid else int(rng.integers(1, seq_len + 1))
        rows[valid:] = 0.0
        batch.append((EmbeddingMatrix(rows=rows, valid_rows=valid), int(rng.integers(k))))
    return batch


def relative_gradient_errors(params, batch, h=1e-4):
    analytic = gradient(params, batch)
    worst = 0.0
    for name, tensor in params.tensors.items():
        flat = tensor.ravel()
        ga = analytic[name].ravel()
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            up = loss(params, batch)
            flat[idx] = original - h
            down = loss(params, batch)
            flat[idx] = original
            numeric = (up - down) / (2 * h)
            err = abs(numeric - ga[idx])
            denom = max(abs(numeric), abs(ga[idx]))
            if denom > 1e-8:
                worst = max(worst, err / denom)
            else:
                worst = max(worst, 0.0 if err <= 1e-8 else err)
    return worst


# --- independent scalar oracle for the bidirectional forward pass -------------

def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_cell_scalar(x, h_prev, c_prev, W, U, b, hidden):
    """Literal per-gate equations, one scalar at a time."""
    a = [
        sum(x[d] * W[d][j] for d in range(len(x)))
        + sum(h_prev[q] * U[q][j] for q in range(hidden))
        + b[j]
        for j in range(4 * hidden)
    ]
    i = [sigmoid(a[j]) for j in range(hidden)]
    f = [sigmoid(a[hidden + j]) for j in range(hidden)]
    g = [math.tanh(a[2 * hidden + j]) for j in range(hidden)]
    o = [sigmoid(a[3 * hidden + j]) for j in range(hidden)]
    c = [f[j] * c_prev[j] + i[j] * g[j] for j in range(hidden)]
    h = [o[j] * math.tanh(c[j]) for j in range(hidden)]
    return h, c


def bilstm_forward_scalar(params, x_rows, hidden, num_layers):
    """Stacked bidirectional forward with plain Python loops."""
    tensors = {k: v.tolist() for k, v in params.tensors.items()}
    seq = [list(row) for row in x_rows]
    for layer in range(num_layers):
        fwd_h = [0.0] * hidden
        fwd_c = [0.0] * hidden
        fwd_seq = []
        for x in seq:
            fwd_h, fwd_c = lstm_cell_scalar(
                x, fwd_h, fwd_c,
                tensors[f"l{layer}.fwd.W"], tensors[f"l{layer}.fwd.U"],
                tensors[f"l{layer}.fwd.b"], hidden,
            )
            fwd_seq.append(fwd_h)
        bwd_h = [0.0] * hidden
        bwd_c = [0.0] * hidden
        bwd_seq = [None] * len(seq)
        for t in range(len(seq) - 1, -1, -1):
            bwd_h, bwd_c = lstm_cell_scalar(
                seq[t], bwd_h, bwd_c,
                tensors[f"l{layer}.bwd.W"], tensors[f"l{layer}.bwd.U"],
                tensors[f"l{layer}.bwd.b"], hidden,
            )
            bwd_seq[t] = bwd_h
        seq = [fwd_seq[t] + bwd_seq[t] for t in range(len(seq))]
        final = fwd_seq[-1] + bwd_seq[0]
    W_head = tensors["head.W"]
    b_head = tensors["head.b"]
    logits = [
        sum(final[j] * W_head[j][c] for j in range(len(final))) + b_head[c]
        for c in range(len(b_head))
    ]
    peak = max(logits)
    exps = [math.exp(z - peak) for z in logits]
    total = sum(exps)
    return [e / total for e in exps]


class TestForward:
    def test_zero_weights_uniform(self):
        spec = ClassifierSpec("bilstm", input_dim=4, hidden_size=3, num_layers=1, num_classes=3)
        params = init_params(spec, seed=0)
        for name in params.tensors:
            params.tensors[name] = np.zeros_like(params.tensors[name])
        x = EmbeddingMatrix(rows=np.random.default_rng(0).normal(size=(5, 4)), valid_rows=5)
        pred = forward(params, x)
        assert pred.probabilities == pytest.approx([1 / 3] * 3, abs=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        for kind in ("bilstm", "lstm", "linear"):
            spec = ClassifierSpec(kind, input_dim=6, hidden_size=4, num_layers=2, num_classes=4)
            params = init_params(spec, seed=7)
            for emb, _ in make_batch(rng, 100, 5, 6, 4):
                pred = forward(params, emb)
                assert abs(float(np.sum(pred.probabilities)) - 1.0) <= 1e-9
                assert np.all(pred.probabilities >= 0)

    def test_bilstm_matches_scalar_oracle(self):
        # hand-set small instance: 2 tokens, hidden 2, 2 stacked layers
        spec = ClassifierSpec("bilstm", input_dim=3, hidden_size=2, num_layers=2, num_classes=2)
        rng = np.random.default_rng(123)
        params = init_params(spec, seed=5)
        for name in params.tensors:  # overwrite with fixed, hand-set values
            params.tensors[name] = np.round(rng.uniform(-0.9, 0.9, params.tensors[name].shape), 3)
        rows = np.array([[0.5, -1.0, 0.25], [-0.75, 0.1, 1.5]])
        expected = bilstm_forward_scalar(params, rows.tolist(), hidden=2, num_layers=2)
        got = forward(params, EmbeddingMatrix(rows=rows, valid_rows=2))
        assert got.probabilities == pytest.approx(expected, abs=1e-9)

    def test_argmax_tie_break_lowest_id(self):
        spec = ClassifierSpec("linear", input_dim=2, hidden_size=2, num_layers=1, num_classes=3)
        params = init_params(spec, seed=0)
        for name in params.tensors:
            params.tensors[name] = np.zeros_like(params.tensors[name])
        pred = forward(params, EmbeddingMatrix(rows=np.ones((3, 2)), valid_rows=3))
        assert pred.predicted_class == 0

    def test_logit_shift_preserves_argmax(self):
        spec = ClassifierSpec("lstm", input_dim=4, hidden_size=3, num_layers=1, num_classes=3)
        params = init_params(spec, seed=2)
        x = EmbeddingMatrix(rows=np.random.default_rng(1).normal(size=(4, 4)), valid_rows=4)
        before = forward(params, x)
        params.tensors["head.b"] = params.tensors["head.b"] + 3.7
        after = forward(params, x)
        assert before.predicted_class == after.predicted_class
        assert after.probabilities == pytest.approx(before.probabilities, abs=1e-9)

    def test_dimension_mismatch(self):
        spec = ClassifierSpec("lstm", input_dim=4, hidden_size=3, num_layers=1, num_classes=2)
        params = init_params(spec, seed=0)
        with pytest.raises(ShapeError):
            forward(params, EmbeddingMatrix(rows=np.zeros((3, 5)), valid_rows=3))

    def test_padding_length_cannot_affect_prediction(self):
        rng = np.random.default_rng(9)
        for kind in ("bilstm", "lstm", "linear"):
            spec = ClassifierSpec(kind, input_dim=5, hidden_size=4, num_layers=2, num_classes=2)
            params = init_params(spec, seed=4)
            content = rng.normal(size=(3, 5))
            short = np.zeros((4, 5))
            short[:3] = content
            long = np.zeros((11, 5))
            long[:3] = content
            long[3:] = rng.normal(size=(8, 5))  # garbage in pad rows
            a = forward(params, EmbeddingMatrix(rows=short, valid_rows=3))
            b = forward(params, EmbeddingMatrix(rows=long, valid_rows=3))
            assert np.array_equal(a.probabilities, b.probabilities), kind

    def test_bilstm_contains_lstm(self):
        # backward weights zeroed + forward weights embedded => identical
        # forward hidden state, layer by layer
        D, H, L = 6, 4, 2
        lstm_params = init_params(
            ClassifierSpec("lstm", input_dim=D, hidden_size=H, num_layers=L, num_classes=2), seed=3
        )
        bi_params = init_params(
            ClassifierSpec("bilstm", input_dim=D, hidden_size=H, num_layers=L, num_classes=2), seed=8
        )
        for layer in range(L):
            for name in ("W", "U", "b"):
                source = lstm_params.tensors[f"l{layer}.fwd.{name}"]
                if name == "W" and layer > 0:
                    widened = np.zeros((2 * H, 4 * H))
                    widened[:H] = source
                    bi_params.tensors[f"l{layer}.fwd.W"] = widened
                else:
                    bi_params.tensors[f"l{layer}.fwd.{name}"] = source.copy()
                key = f"l{layer}.bwd.{name}"
                bi_params.tensors[key] = np.zeros_like(bi_params.tensors[key])
        # share the head on the forward half, zero the backward half
        head = np.zeros((2 * H, 2))
        head[:H] = lstm_params.tensors["head.W"]
        bi_params.tensors["head.W"] = head
        bi_params.tensors["head.b"] = lstm_params.tensors["head.b"].copy()

        rng = np.random.default_rng(11)
        rows = rng.normal(size=(7, D))
        emb = EmbeddingMatrix(rows=rows, valid_rows=6)
        a = forward(lstm_params, emb)
        b = forward(bi_params, emb)
        assert a.probabilities == pytest.approx(b.probabilities, abs=1e-12)


class TestLoss:
    def test_perfect_prediction_near_zero(self):
        spec = ClassifierSpec("linear", input_dim=2, hidden_size=2, num_layers=1, num_classes=2)
        params = init_params(spec, seed=0)
        for name in params.tensors:
            params.tensors[name] = np.zeros_like(params.tensors[name])
        params.tensors["fc2.b"] = np.array([60.0, 0.0])
        batch = [(EmbeddingMatrix(rows=np.ones((2, 2)), valid_rows=2), 0)]
        assert loss(params, batch) <= 1e-9

    def test_uniform_binary_is_ln2(self):
        spec = ClassifierSpec("bilstm", input_dim=3, hidden_size=2, num_layers=1, num_classes=2)
        params = init_params(spec, seed=0)
        for name in params.tensors:
            params.tensors[name] = np.zeros_like(params.tensors[name])
        batch = [(EmbeddingMatrix(rows=np.ones((3, 3)), valid_rows=3), 1)]
        assert loss(params, batch) == pytest.approx(math.log(2), abs=1e-9)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(5)
        spec = ClassifierSpec("lstm", input_dim=4, hidden_size=3, num_layers=2, num_classes=3)
        params = init_params(spec, seed=9)
        batch = make_batch(rng, 6, 4, 4, 3)
        expected = -np.mean(
            [math.log(forward(params, emb).probabilities[label]) for emb, label in batch]
        )
        assert loss(params, batch) == pytest.approx(expected, abs=1e-12)


class TestGradient:
    @pytest.mark.parametrize("kind", ["linear", "lstm", "bilstm"])
    def test_finite_differences_small(self, kind):
        rng = np.random.default_rng(21)
        spec = ClassifierSpec(kind, input_dim=5, hidden_size=3, num_layers=2, num_classes=2)
        params = init_params(spec, seed=1)
        batch = make_batch(rng, 3, 4, 5, 2)
        assert relative_gradient_errors(params, batch) <= 1e-3

    def test_stationary_at_confident_minimum(self):
        spec = ClassifierSpec("linear", input_dim=2, hidden_size=2, num_layers=1, num_classes=2)
        params = init_params(spec, seed=0)
        for name in params.tensors:
            params.tensors[name] = np.zeros_like(params.tensors[name])
        params.tensors["fc2.b"] = np.array([80.0, 0.0])
        batch = [(EmbeddingMatrix(rows=np.ones((2, 2)), valid_rows=2), 0)]
        grads = gradient(params, batch)
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        assert norm < 1e-6

    def test_softmax_coupling_on_absent_class(self):
        # a class missing from the batch still receives head gradient through
        # the softmax normalizer; verified numerically
        rng = np.random.default_rng(2)
        spec = ClassifierSpec("linear", input_dim=3, hidden_size=2, num_layers=1, num_classes=3)
        params = init_params(spec, seed=3)
        batch = [(EmbeddingMatrix(rows=rng.normal(size=(3, 3)), valid_rows=3), 0)]
        grads = gradient(params, batch)
        assert float(np.abs(grads["fc2.W"][:, 2]).sum()) > 0.0
        assert relative_gradient_errors(params, batch) <= 1e-3


class TestTrain:
    def _tiny_pairs(self, rng, n, dim, seq_len, token_a, token_b):
        """Linearly separable: class decided by which keyword vector appears."""
        pairs = []
        for i in range(n):
            label = i % 2
            rows = rng.normal(size=(seq_len, dim)) * 0.05
            rows[rng.integers(seq_len)] += token_a if label == 0 else token_b
            pairs.append((EmbeddingMatrix(rows=rows, valid_rows=seq_len), label))
        return pairs

    def test_learns_separable_corpus(self):
        rng = np.random.default_rng(0)
        dim = 12
        token_a = rng.normal(size=dim)
        token_b = rng.normal(size=dim)
        train_pairs = self._tiny_pairs(rng, 60, dim, 6, token_a, token_b)
        val_pairs = self._tiny_pairs(rng, 20, dim, 6, token_a, token_b)
        spec = ClassifierSpec("bilstm", input_dim=dim, hidden_size=8, num_layers=1, num_classes=2)
        params, history = train(
            spec, train_pairs, val_pairs,
            TrainConfig(learning_rate=0.3, epochs=20, batch_size=8, seed=1),
        )
        assert max(h["val_accuracy"] for h in history) >= 0.95
        probs = predict_batch(params, [emb for emb, _ in val_pairs])
        preds = np.argmax(probs, axis=1)
        accuracy = float(np.mean(preds == [label for _, label in val_pairs]))
        assert accuracy >= 0.95

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(4)
        pairs = make_batch(rng, 20, 4, 5, 2, full_valid=True)
        spec = ClassifierSpec("lstm", input_dim=5, hidden_size=3, num_layers=1, num_classes=2)
        config = TrainConfig(learning_rate=0.1, epochs=3, batch_size=4, seed=77)
        a, _ = train(spec, pairs[:14], pairs[14:], config)
        b, _ = train(spec, pairs[:14], pairs[14:], config)
        for name in a.tensors:
            assert np.array_equal(a.tensors[name], b.tensors[name])

    def test_zero_learning_rate_is_noop(self):
        rng = np.random.default_rng(6)
        pairs = make_batch(rng, 10, 4, 5, 2)
        spec = ClassifierSpec("linear", input_dim=5, hidden_size=3, num_layers=1, num_classes=2)
        init = init_params(spec, seed=5)
        params, _ = train(
            spec, pairs[:8], pairs[8:],
            TrainConfig(learning_rate=0.0, epochs=1, batch_size=4, seed=5),
        )
        for name in init.tensors:
            assert np.array_equal(params.tensors[name], init.tensors[name])

    def test_loss_monotone_for_small_lr_single_batch(self):
        rng = np.random.default_rng(8)
        pairs = make_batch(rng, 6, 4, 5, 2)
        spec = ClassifierSpec("lstm", input_dim=5, hidden_size=3, num_layers=1, num_classes=2)
        _, history = train(
            spec, pairs, pairs,
            TrainConfig(learning_rate=1e-4, epochs=6, batch_size=6, seed=2),
        )
        losses = [h["train_loss"] for h in history]
        for earlier, later in zip(losses, losses[1:]):
            assert later <= earlier + 1e-9

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_with_epoch(self):
        rng = np.random.default_rng(10)
        pairs = make_batch(rng, 12, 4, 5, 2)
        spec = ClassifierSpec("linear", input_dim=5, hidden_size=3, num_layers=1, num_classes=2)
        with pytest.raises(TrainingError, match="epoch"):
            train(
                spec, pairs[:8], pairs[8:],
                TrainConfig(learning_rate=1e308, epochs=5, batch_size=4, seed=0),
            )

    def test_early_stopping(self):
        rng = np.random.default_rng(12)
        pairs = make_batch(rng, 16, 4, 5, 2)
        spec = ClassifierSpec("linear", input_dim=5, hidden_size=3, num_layers=1, num_classes=2)
        _, history = train(
            spec, pairs[:12], pairs[12:],
            TrainConfig(learning_rate=1e-9, epochs=50, batch_size=4, seed=1, early_stop_patience=3),
        )
        assert len(history) == 4  # epoch 1 sets the best, then patience runs out

    def test_empty_sets_rejected(self):
        spec = ClassifierSpec("linear", input_dim=5, hidden_size=3, num_layers=1, num_classes=2)
        with pytest.raises(ValidationError):
            train(spec, [], [], TrainConfig(learning_rate=0.1, epochs=1))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        spec = ClassifierSpec("bilstm", input_dim=6, hidden_size=4, num_layers=2, num_classes=3)
        params = init_params(spec, seed=13)
        path = tmp_path / "model.bin"
        save_model(path, params, meta={"note": "test"})
        loaded, meta = load_model(path)
        assert meta == {"note": "test"}
        assert loaded.spec == spec
        for name, tensor in params.tensors.items():
            assert np.array_equal(
                loaded.tensors[name], tensor.astype("<f4").astype(np.float64)
            )

    def test_save_load_save_bit_exact(self, tmp_path):
        spec = ClassifierSpec("lstm", input_dim=4, hidden_size=3, num_layers=1, num_classes=2)
        params = init_params(spec, seed=1)
        first = tmp_path / "a.bin"
        second = tmp_path / "b.bin"
        save_model(first, params)
        loaded, _ = load_model(first)
        save_model(second, loaded)
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a model\n")
        with pytest.raises(ValidationError):
            load_model(path)


def test_spec_validation():
    with pytest.raises(ValidationError):
        ClassifierSpec("transformer")
    with pytest.raises(ValidationError):
        ClassifierSpec("lstm", hidden_size=0)
    with pytest.raises(ValidationError):
        ClassifierSpec("lstm", num_classes=1)
    assert ClassifierSpec("bilstm").feature_size == 512
    assert ClassifierSpec("lstm").feature_size == 256


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=-0.1, epochs=1)
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=0.1, epochs=0)
