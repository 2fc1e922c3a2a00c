"""Trainable sequence classifiers built directly on numpy.

Three kinds over per-token embedding sequences:

  bilstm - stacked bidirectional LSTM; the final forward and backward hidden
           states of the top layer are concatenated and fed to a linear head
  lstm   - stacked unidirectional LSTM; final hidden state to the head
  linear - masked mean pooling through two affine layers (tanh between)

Forward, loss and gradients are all explicit so every gradient coordinate
can be checked against finite differences. Pad rows never influence the
recurrences: at padded steps the state carries through unchanged, so the
same content padded to different lengths predicts identically.

Training is plain mini-batch gradient descent with global-norm clipping,
deterministic in the seed; the returned parameters are those of the epoch
with the best validation weighted F1.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .embed import EmbeddingMatrix
from .errors import ShapeError, TrainingError, ValidationError
from .metrics import compute_metrics
from .seeding import derive_seed

KIND_BILSTM = "bilstm"
KIND_LSTM = "lstm"
KIND_LINEAR = "linear"
KINDS = (KIND_BILSTM, KIND_LSTM, KIND_LINEAR)

GRAD_CLIP_NORM = 5.0
_PROB_FLOOR = 1e-12
_MODEL_MAGIC = b"VTEMODEL 1"


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    input_dim: int = 768
    hidden_size: int = 256
    num_layers: int = 2
    num_classes: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown classifier kind: {self.kind!r}")
        if self.hidden_size < 1:
            raise ValidationError("hidden_size must be >= 1")
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")

    @property
    def num_directions(self) -> int:
        return 2 if self.kind == KIND_BILSTM else 1

    @property
    def feature_size(self) -> int:
        """Width of the vector entering the classification head."""
        if self.kind == KIND_LINEAR:
            return self.hidden_size
        return self.hidden_size * self.num_directions


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 32
    seed: int = 0
    early_stop_patience: int = 0

    def __post_init__(self):
        # zero is allowed so a no-op update pass stays expressible
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


@dataclass
class Prediction:
    probabilities: np.ndarray
    predicted_class: int


@dataclass
class ModelParams:
    spec: ClassifierSpec
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def _directions(spec: ClassifierSpec):
    return ("fwd", "bwd") if spec.kind == KIND_BILSTM else ("fwd",)


def _layer_input_dim(spec: ClassifierSpec, layer: int) -> int:
    return spec.input_dim if layer == 0 else spec.hidden_size * spec.num_directions


def init_params(spec: ClassifierSpec, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(hidden), +1/sqrt(hidden)) weights, forget-gate bias +1."""
    rng = np.random.default_rng(derive_seed(seed, "init"))
    bound = 1.0 / np.sqrt(spec.hidden_size)

    def uniform(*shape):
        return rng.uniform(-bound, bound, size=shape)

    tensors: dict[str, np.ndarray] = {}
    hidden = spec.hidden_size
    if spec.kind == KIND_LINEAR:
        tensors["fc1.W"] = uniform(spec.input_dim, hidden)
        tensors["fc1.b"] = uniform(hidden)
        tensors["fc2.W"] = uniform(hidden, spec.num_classes)
        tensors["fc2.b"] = uniform(spec.num_classes)
    else:
        for layer in range(spec.num_layers):
            din = _layer_input_dim(spec, layer)
            for direction in _directions(spec):
                prefix = f"l{layer}.{direction}"
                tensors[f"{prefix}.W"] = uniform(din, 4 * hidden)
                tensors[f"{prefix}.U"] = uniform(hidden, 4 * hidden)
                bias = uniform(4 * hidden)
                bias[hidden : 2 * hidden] += 1.0
                tensors[f"{prefix}.b"] = bias
        tensors["head.W"] = uniform(spec.feature_size, spec.num_classes)
        tensors["head.b"] = uniform(spec.num_classes)
    return ModelParams(spec=spec, tensors=tensors)


# --- recurrent core ----------------------------------------------------------
# Gate layout along the 4H axis: input, forget, candidate, output. At masked
# (pad) steps the candidate state is computed but discarded, so neither the
# forward values nor the gradients depend on pad rows.

def _run_direction(X, M, W, U, b, reverse: bool):
    n_batch, seq_len, _ = X.shape
    hidden = U.shape[0]
    h = np.zeros((n_batch, hidden))
    c = np.zeros((n_batch, hidden))
    H_seq = np.empty((n_batch, seq_len, hidden))
    gate_i = np.empty_like(H_seq)
    gate_f = np.empty_like(H_seq)
    gate_g = np.empty_like(H_seq)
    gate_o = np.empty_like(H_seq)
    c_prev_all = np.empty_like(H_seq)
    h_prev_all = np.empty_like(H_seq)
    c_tanh = np.empty_like(H_seq)

    order = range(seq_len - 1, -1, -1) if reverse else range(seq_len)
    for t in order:
        h_prev_all[:, t] = h
        c_prev_all[:, t] = c
        a = X[:, t] @ W + h @ U + b
        i = _sigmoid(a[:, :hidden])
        f = _sigmoid(a[:, hidden : 2 * hidden])
        g = np.tanh(a[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(a[:, 3 * hidden :])
        c_new = f * c + i * g
        hc = np.tanh(c_new)
        h_new = o * hc
        m = M[:, t : t + 1]
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        gate_i[:, t] = i
        gate_f[:, t] = f
        gate_g[:, t] = g
        gate_o[:, t] = o
        c_tanh[:, t] = hc
        H_seq[:, t] = h

    cache = {
        "X": X, "M": M, "reverse": reverse,
        "i": gate_i, "f": gate_f, "g": gate_g, "o": gate_o,
        "c_prev": c_prev_all, "h_prev": h_prev_all, "c_tanh": c_tanh,
    }
    return H_seq, cache


def _run_direction_backward(dH_seq, cache, W, U):
    X, M = cache["X"], cache["M"]
    n_batch, seq_len, _ = X.shape
    hidden = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * hidden)
    dX = np.zeros_like(X)
    dh = np.zeros((n_batch, hidden))
    dc = np.zeros((n_batch, hidden))

    order = range(seq_len) if cache["reverse"] else range(seq_len - 1, -1, -1)
    for t in order:
        dh = dh + dH_seq[:, t]
        m = M[:, t : t + 1]
        dh_new = m * dh
        dh_carry = (1.0 - m) * dh
        dc_new = m * dc
        dc_carry = (1.0 - m) * dc

        i = cache["i"][:, t]
        f = cache["f"][:, t]
        g = cache["g"][:, t]
        o = cache["o"][:, t]
        hc = cache["c_tanh"][:, t]
        c_prev = cache["c_prev"][:, t]
        h_prev = cache["h_prev"][:, t]

        d_o = dh_new * hc
        dc_new = dc_new + dh_new * o * (1.0 - hc * hc)
        d_f = dc_new * c_prev
        d_i = dc_new * g
        d_g = dc_new * i
        dc_prev = dc_new * f + dc_carry

        da = np.concatenate(
            [
                d_i * i * (1.0 - i),
                d_f * f * (1.0 - f),
                d_g * (1.0 - g * g),
                d_o * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += X[:, t].T @ da
        dU += h_prev.T @ da
        db += da.sum(axis=0)
        dX[:, t] = da @ W.T
        dh = dh_carry + da @ U.T
        dc = dc_prev
    return dX, dW, dU, db


def _forward_internal(params: ModelParams, X, M, keep_cache: bool):
    spec = params.spec
    tensors = params.tensors
    if X.shape[2] != spec.input_dim:
        raise ShapeError(f"input dim {X.shape[2]} != spec input_dim {spec.input_dim}")

    if spec.kind == KIND_LINEAR:
        denom = np.maximum(M.sum(axis=1, keepdims=True), 1.0)
        pooled = (X * M[:, :, None]).sum(axis=1) / denom
        hidden_act = np.tanh(pooled @ tensors["fc1.W"] + tensors["fc1.b"])
        logits = hidden_act @ tensors["fc2.W"] + tensors["fc2.b"]
        cache = {"pooled": pooled, "denom": denom, "hidden_act": hidden_act} if keep_cache else None
        return _softmax(logits), cache

    layer_inputs = []
    layer_caches = []
    current = X
    for layer in range(spec.num_layers):
        layer_inputs.append(current)
        caches = {}
        Hf, caches["fwd"] = _run_direction(
            current, M,
            tensors[f"l{layer}.fwd.W"], tensors[f"l{layer}.fwd.U"], tensors[f"l{layer}.fwd.b"],
            reverse=False,
        )
        if spec.kind == KIND_BILSTM:
            Hb, caches["bwd"] = _run_direction(
                current, M,
                tensors[f"l{layer}.bwd.W"], tensors[f"l{layer}.bwd.U"], tensors[f"l{layer}.bwd.b"],
                reverse=True,
            )
            current = np.concatenate([Hf, Hb], axis=2)
        else:
            current = Hf
        layer_caches.append(caches)

    hidden = spec.hidden_size
    if spec.kind == KIND_BILSTM:
        features = np.concatenate([current[:, -1, :hidden], current[:, 0, hidden:]], axis=1)
    else:
        features = current[:, -1]
    logits = features @ tensors["head.W"] + tensors["head.b"]
    cache = {"layer_caches": layer_caches, "features": features} if keep_cache else None
    return _softmax(logits), cache


def _stack_batch(batch, spec: ClassifierSpec):
    if not batch:
        raise ValidationError("batch must be non-empty")
    seq_len = batch[0][0].rows.shape[0]
    X = np.empty((len(batch), seq_len, spec.input_dim))
    M = np.zeros((len(batch), seq_len))
    y = np.empty(len(batch), dtype=int)
    for row, (emb, label) in enumerate(batch):
        if emb.rows.shape != (seq_len, spec.input_dim):
            raise ShapeError(
                f"embedding shape {emb.rows.shape} != expected ({seq_len}, {spec.input_dim})"
            )
        X[row] = emb.rows
        M[row, : emb.valid_rows] = 1.0
        y[row] = label
    return X, M, y


def forward(params: ModelParams, x: EmbeddingMatrix) -> Prediction:
    """Class probabilities for one embedded sequence."""
    mask = np.zeros((1, x.rows.shape[0]))
    mask[0, : x.valid_rows] = 1.0
    probs, _ = _forward_internal(params, x.rows[None, :, :], mask, keep_cache=False)
    return Prediction(probabilities=probs[0], predicted_class=int(np.argmax(probs[0])))


def predict_batch(params: ModelParams, items: list[EmbeddingMatrix]) -> np.ndarray:
    """Probability matrix (n, k) for a list of embedded sequences."""
    X, M, _ = _stack_batch([(item, 0) for item in items], params.spec)
    probs, _ = _forward_internal(params, X, M, keep_cache=False)
    return probs


def loss(params: ModelParams, batch) -> float:
    """Mean negative log-likelihood of the true classes."""
    X, M, y = _stack_batch(batch, params.spec)
    probs, _ = _forward_internal(params, X, M, keep_cache=False)
    p_true = probs[np.arange(len(y)), y]
    return float(-np.log(np.maximum(p_true, _PROB_FLOOR)).mean())


def _loss_and_grad(params: ModelParams, X, M, y):
    spec = params.spec
    tensors = params.tensors
    probs, cache = _forward_internal(params, X, M, keep_cache=True)
    n = len(y)
    p_true = probs[np.arange(n), y]
    loss_value = float(-np.log(np.maximum(p_true, _PROB_FLOOR)).mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads: dict[str, np.ndarray] = {}
    if spec.kind == KIND_LINEAR:
        pooled, denom, hidden_act = cache["pooled"], cache["denom"], cache["hidden_act"]
        grads["fc2.W"] = hidden_act.T @ dlogits
        grads["fc2.b"] = dlogits.sum(axis=0)
        d_hidden = (dlogits @ tensors["fc2.W"].T) * (1.0 - hidden_act * hidden_act)
        grads["fc1.W"] = pooled.T @ d_hidden
        grads["fc1.b"] = d_hidden.sum(axis=0)
        return loss_value, grads

    features = cache["features"]
    grads["head.W"] = features.T @ dlogits
    grads["head.b"] = dlogits.sum(axis=0)
    d_features = dlogits @ tensors["head.W"].T

    hidden = spec.hidden_size
    n_batch, seq_len, _ = X.shape
    dHf = np.zeros((n_batch, seq_len, hidden))
    if spec.kind == KIND_BILSTM:
        dHb = np.zeros((n_batch, seq_len, hidden))
        dHf[:, -1] = d_features[:, :hidden]
        dHb[:, 0] = d_features[:, hidden:]
    else:
        dHb = None
        dHf[:, -1] = d_features

    for layer in range(spec.num_layers - 1, -1, -1):
        caches = cache["layer_caches"][layer]
        dX_f, dW, dU, db = _run_direction_backward(
            dHf, caches["fwd"], tensors[f"l{layer}.fwd.W"], tensors[f"l{layer}.fwd.U"]
        )
        grads[f"l{layer}.fwd.W"] = dW
        grads[f"l{layer}.fwd.U"] = dU
        grads[f"l{layer}.fwd.b"] = db
        d_input = dX_f
        if spec.kind == KIND_BILSTM:
            dX_b, dW, dU, db = _run_direction_backward(
                dHb, caches["bwd"], tensors[f"l{layer}.bwd.W"], tensors[f"l{layer}.bwd.U"]
            )
            grads[f"l{layer}.bwd.W"] = dW
            grads[f"l{layer}.bwd.U"] = dU
            grads[f"l{layer}.bwd.b"] = db
            d_input = d_input + dX_b
        if layer > 0:
            dHf = d_input[:, :, :hidden]
            if spec.kind == KIND_BILSTM:
                dHb = d_input[:, :, hidden:]
    return loss_value, grads


def gradient(params: ModelParams, batch) -> dict[str, np.ndarray]:
    """Analytic gradient of ``loss`` with respect to every parameter tensor."""
    X, M, y = _stack_batch(batch, params.spec)
    _, grads = _loss_and_grad(params, X, M, y)
    return grads


def _clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def train(spec: ClassifierSpec, train_set, validation_set, config: TrainConfig):
    """Mini-batch gradient descent; returns (best params, per-epoch history).

    Best = highest validation weighted F1 (earlier epoch wins ties). History
    records train loss and validation accuracy/weighted F1 per epoch.
    """
    if not train_set or not validation_set:
        raise ValidationError("train and validation sets must be non-empty")
    for _, label in list(train_set) + list(validation_set):
        if not 0 <= label < spec.num_classes:
            raise ValidationError(f"label {label} out of range for {spec.num_classes} classes")

    params = init_params(spec, config.seed)
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    X_train, M_train, y_train = _stack_batch(list(train_set), spec)
    X_val, M_val, y_val = _stack_batch(list(validation_set), spec)

    best = params.copy()
    best_f1 = -1.0
    epochs_since_best = 0
    history: list[dict] = []

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(y_train))
        loss_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss_value, grads = _loss_and_grad(params, X_train[idx], M_train[idx], y_train[idx])
            if not np.isfinite(loss_value):
                raise TrainingError(epoch, f"training loss became non-finite ({loss_value})")
            _clip_gradients(grads, GRAD_CLIP_NORM)
            for name, grad in grads.items():
                params.tensors[name] -= config.learning_rate * grad
            loss_sum += loss_value * len(idx)

        val_probs, _ = _forward_internal(params, X_val, M_val, keep_cache=False)
        val_preds = np.argmax(val_probs, axis=1)
        val_report = compute_metrics(list(y_val), list(val_preds), spec.num_classes)
        history.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / len(y_train),
                "val_accuracy": val_report.accuracy,
                "val_weighted_f1": val_report.weighted_f1,
            }
        )
        if val_report.weighted_f1 > best_f1:
            best_f1 = val_report.weighted_f1
            best = params.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if config.early_stop_patience > 0 and epochs_since_best >= config.early_stop_patience:
                break
    return best, history


# --- serialization -----------------------------------------------------------
# Versioned binary: magic line, canonical JSON header (spec, tensor shapes,
# optional metadata), then little-endian float32 payloads in header order.

def save_model(path, params: ModelParams, meta: dict | None = None) -> None:
    header = {
        "spec": asdict(params.spec),
        "meta": meta or {},
        "tensors": [
            {"name": name, "shape": list(tensor.shape)}
            for name, tensor in params.tensors.items()
        ],
    }
    with open(path, "wb") as handle:
        handle.write(_MODEL_MAGIC + b"\n")
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for tensor in params.tensors.values():
            handle.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_model(path):
    """Returns (ModelParams, meta dict). Values are float32-exact in float64."""
    with open(path, "rb") as handle:
        magic = handle.readline().rstrip(b"\n")
        if magic != _MODEL_MAGIC:
            raise ValidationError(f"not a model file (magic {magic!r})")
        header = json.loads(handle.readline().decode("utf-8"))
        spec = ClassifierSpec(**header["spec"])
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            payload = handle.read(count * 4)
            if len(payload) != count * 4:
                raise ValidationError(f"truncated tensor payload for {entry['name']!r}")
            tensors[entry["name"]] = (
                np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)
            )
    return ModelParams(spec=spec, tensors=tensors), header["meta"]
