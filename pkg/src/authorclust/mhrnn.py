"""Multi-headed Elman-style character language model.

One recurrent hidden layer is shared by M softmax heads, one per
document.  The hidden update is h_t = resqrt(W_hh h_{t-1} + W_xh x_t +
b_h) with one-hot character input x_t; head m predicts the next
character as softmax(W_hy[m] h_t + b_y[m]).

Training is truncated BPTT with per-weight adagrad.  Each timestep
trains the head of the current document, plus (with a per-epoch decaying
probability) one uniformly chosen other head, which regularizes the
output layers.  Gaussian noise is added to the hidden pre-activation
during training passes only.  Training continues a fixed number of
epochs past the validation minimum and the final, slightly overfit
weights are kept.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import CorruptFileError, DocTooShortError, NonFiniteLossError, VersionMismatchError
from .textprep import EncodedDoc

log = logging.getLogger(__name__)

LN2 = math.log(2.0)

# Independent RNG streams derived from one seed.
_STREAM_INIT, _STREAM_ORDER, _STREAM_NOISE, _STREAM_LEAK = 0, 1, 2, 3


def resqrt(x):
    """sqrt(x + 1) - 1 for x >= 0, else 0.  Works on scalars and arrays."""
    out = np.sqrt(np.maximum(x, 0.0) + 1.0) - 1.0
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def softmax(z):
    """Numerically stable softmax, computed in float64."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class Hyperparameters:
    hidden_size: int = 64
    psn: float = 0.0               # std of pre-synaptic Gaussian noise
    leak: float = 0.0              # first-epoch leak probability per timestep
    leak_decay: float = 0.5        # multiplied in each epoch
    overfit_epochs: int = 2        # epochs to continue past the val minimum
    direction: str = "forward"     # "forward" | "reverse"
    df_threshold: float | None = None
    learning_rate: float = 0.1
    adagrad_epsilon: float = 1e-8
    bptt_window: int = 20
    init_scale: float = 0.1
    seed: int = 0
    validation_fraction: float = 0.05
    max_epochs: int = 200          # safety cap on top of the stopping rule

    def __post_init__(self):
        if self.hidden_size < 1 or self.bptt_window < 1:
            raise ValueError("hidden_size and bptt_window must be >= 1")
        if self.overfit_epochs < 1 or self.max_epochs < 1:
            raise ValueError("overfit_epochs and max_epochs must be >= 1")
        if not 0.0 <= self.leak <= 1.0:
            raise ValueError("leak must be a probability")
        if not 0.0 < self.leak_decay <= 1.0:
            raise ValueError("leak_decay must be in (0, 1]")
        if self.psn < 0 or self.init_scale < 0:
            raise ValueError("psn and init_scale must be nonnegative")
        if self.learning_rate <= 0 or self.adagrad_epsilon <= 0:
            raise ValueError("learning_rate and adagrad_epsilon must be positive")
        if self.direction not in ("forward", "reverse"):
            raise ValueError("direction must be 'forward' or 'reverse'")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must be in (0, 0.5)")


@dataclass
class HiddenState:
    h: np.ndarray  # nonnegative: the range of resqrt


@dataclass
class MhrnnModel:
    W_xh: np.ndarray    # [hidden, alphabet]
    W_hh: np.ndarray    # [hidden, hidden]
    b_h: np.ndarray     # [hidden]
    W_hy: np.ndarray    # [heads, alphabet, hidden]
    b_y: np.ndarray     # [heads, alphabet]
    G_xh: np.ndarray    # adagrad accumulators, same shapes as the weights
    G_hh: np.ndarray
    G_bh: np.ndarray
    G_hy: np.ndarray
    G_by: np.ndarray
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    alphabet_hash: str = ""

    @property
    def alphabet_size(self) -> int:
        return self.W_xh.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_xh.shape[0]

    @property
    def n_heads(self) -> int:
        return self.W_hy.shape[0]

    def astype(self, dtype) -> "MhrnnModel":
        return MhrnnModel(
            W_xh=self.W_xh.astype(dtype), W_hh=self.W_hh.astype(dtype),
            b_h=self.b_h.astype(dtype), W_hy=self.W_hy.astype(dtype),
            b_y=self.b_y.astype(dtype), G_xh=self.G_xh.astype(dtype),
            G_hh=self.G_hh.astype(dtype), G_bh=self.G_bh.astype(dtype),
            G_hy=self.G_hy.astype(dtype), G_by=self.G_by.astype(dtype),
            hyper=self.hyper, alphabet_hash=self.alphabet_hash)


def init_model(alphabet_size: int, n_heads: int,
               hyper: Hyperparameters) -> MhrnnModel:
    """Uniform [-init_scale, init_scale] weights, zero biases, zero
    adagrad state; deterministic given hyper.seed."""
    if alphabet_size < 1 or n_heads < 1:
        raise ValueError("alphabet_size and n_heads must be >= 1")
    rng = np.random.default_rng([hyper.seed, _STREAM_INIT])
    s = hyper.init_scale
    h, k, m = hyper.hidden_size, alphabet_size, n_heads

    def uniform(*shape):
        return rng.uniform(-s, s, shape).astype(np.float32)

    return MhrnnModel(
        W_xh=uniform(h, k), W_hh=uniform(h, h),
        b_h=np.zeros(h, np.float32),
        W_hy=uniform(m, k, h), b_y=np.zeros((m, k), np.float32),
        G_xh=np.zeros((h, k), np.float32), G_hh=np.zeros((h, h), np.float32),
        G_bh=np.zeros(h, np.float32), G_hy=np.zeros((m, k, h), np.float32),
        G_by=np.zeros((m, k), np.float32), hyper=hyper)


def zero_state(model: MhrnnModel) -> HiddenState:
    return HiddenState(h=np.zeros(model.hidden_size, model.W_xh.dtype))


def forward_step(model: MhrnnModel, state: HiddenState, symbol: int,
                 head: int, noise_std: float = 0.0, rng=None):
    """One recurrence step followed by one head's prediction.

    Returns the new hidden state and the probability distribution over
    the next symbol.
    """
    a = model.W_hh @ state.h + model.W_xh[:, symbol] + model.b_h
    if noise_std > 0:
        a = a + rng.normal(0.0, noise_std, a.shape).astype(a.dtype)
    h = np.sqrt(np.maximum(a, 0.0) + 1.0) - 1.0
    probs = softmax(model.W_hy[head] @ h + model.b_y[head])
    return HiddenState(h=h), probs


def _trajectory(W_xh, W_hh, b_h, symbols, h0=None, noise=None):
    """Run the recurrence over a symbol sequence.

    Returns hidden states [T, hidden], the pre-activation sign masks
    (needed for the resqrt derivative), and the final state.
    """
    dtype = W_xh.dtype
    n = len(symbols)
    hidden = W_xh.shape[0]
    base = W_xh[:, symbols].T + b_h          # [n, hidden]
    if noise is not None:
        base = base + noise
    states = np.empty((n, hidden), dtype)
    masks = np.empty((n, hidden), bool)
    h = np.zeros(hidden, dtype) if h0 is None else h0
    a = np.empty(hidden, dtype)
    for t in range(n):
        np.dot(W_hh, h, out=a)
        a += base[t]
        masks[t] = a >= 0
        np.maximum(a, 0.0, out=a)
        a += 1.0
        np.sqrt(a, out=a)
        a -= 1.0
        states[t] = a
        h = states[t]
    return states, masks, h


def _entropies_for_heads(model: MhrnnModel, symbols: np.ndarray,
                         heads: Sequence[int], block: int = 64) -> np.ndarray:
    """Bits per character of each listed head over one symbol sequence,
    scored from the zero hidden state with no noise."""
    if len(symbols) < 2:
        raise DocTooShortError(
            f"need at least 2 symbols to score, got {len(symbols)}")
    inputs, targets = symbols[:-1], symbols[1:]
    states, _, _ = _trajectory(model.W_xh, model.W_hh, model.b_h, inputs)
    n = len(inputs)
    rows = np.arange(n)
    out = np.empty(len(heads), np.float64)
    for lo in range(0, len(heads), block):
        hd = list(heads[lo:lo + block])
        nb = len(hd)
        w = model.W_hy[hd].reshape(nb * model.alphabet_size, -1)
        z = (states @ w.T).reshape(n, nb, model.alphabet_size)
        z = z.astype(np.float64) + model.b_y[hd][None, :, :]
        m = z.max(axis=2)
        lse = m + np.log(np.exp(z - m[:, :, None]).sum(axis=2))
        picked = np.take_along_axis(
            z, targets[rows][:, None, None].astype(np.int64), axis=2)[:, :, 0]
        out[lo:lo + nb] = (lse - picked).mean(axis=0) / LN2
    return out


def cross_entropy(model: MhrnnModel, head: int, doc: EncodedDoc) -> float:
    """Average bits per character head assigns to the document, scored
    from the zero hidden state."""
    return float(_entropies_for_heads(model, np.asarray(doc.symbols), [head])[0])


def entropy_all_heads(model: MhrnnModel, doc: EncodedDoc) -> np.ndarray:
    """cross_entropy of every head against one document, batched."""
    return _entropies_for_heads(model, np.asarray(doc.symbols),
                                range(model.n_heads))


def _doc_loss_nats(W_xh, W_hh, b_h, W_hy_head, b_y_head, symbols) -> float:
    """Total nats one head assigns to a sequence; the quantity whose
    gradient training follows."""
    inputs, targets = symbols[:-1], symbols[1:]
    states, _, _ = _trajectory(W_xh, W_hh, b_h, inputs)
    z = (states @ W_hy_head.T).astype(np.float64) + b_y_head
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return float((lse - z[np.arange(len(inputs)), targets]).sum())


def _window_grads(W_xh, W_hh, b_h, W_hy, b_y, h0, inputs, targets,
                  target_head, leak_steps, noise):
    """Forward + backward over one BPTT window.

    leak_steps is a list of (step, head) pairs naming the extra heads
    trained at individual timesteps.  Returns (loss in nats, gradient
    dict, final hidden state).  The loss sums over every trained head.
    """
    dtype = W_xh.dtype
    n = len(inputs)
    hidden = W_xh.shape[0]
    states, masks, h_final = _trajectory(W_xh, W_hh, b_h, inputs, h0, noise)
    rows = np.arange(n)

    # Target head, vectorized over the window.
    z = states @ W_hy[target_head].T + b_y[target_head]
    picked = z[rows, targets].astype(np.float64)
    m = z.max(axis=1, keepdims=True)
    z -= m
    np.exp(z, out=z)
    ssum = z.sum(axis=1, keepdims=True)
    loss = float((np.log(ssum[:, 0]) + m[:, 0]).sum(dtype=np.float64)
                 - picked.sum())
    z /= ssum                      # now the probabilities
    dy = z
    dy[rows, targets] -= 1.0
    head_grads = {target_head: [dy.T @ states, dy.sum(axis=0)]}
    dstates = dy @ W_hy[target_head]

    for step, lh in leak_steps:
        zl = W_hy[lh] @ states[step] + b_y[lh]
        ml = zl.max()
        el = np.exp(zl - ml)
        sl = el.sum()
        loss += float(ml + np.log(sl) - zl[targets[step]])
        dyl = el / sl
        dyl[targets[step]] -= 1.0
        if lh not in head_grads:
            head_grads[lh] = [np.zeros_like(W_hy[lh]), np.zeros_like(b_y[lh])]
        head_grads[lh][0] += np.outer(dyl, states[step])
        head_grads[lh][1] += dyl
        dstates[step] += W_hy[lh].T @ dyl

    # Backpropagation through time within the window.
    deriv = masks * (0.5 / (states + 1.0))
    draw = np.empty((n, hidden), dtype)
    w_hh_t = np.ascontiguousarray(W_hh.T)
    dh_next = np.zeros(hidden, dtype)
    for t in range(n - 1, -1, -1):
        draw[t] = (dstates[t] + dh_next) * deriv[t]
        dh_next = w_hh_t @ draw[t]
    prev = np.empty((n, hidden), dtype)
    prev[0] = h0 if h0 is not None else 0.0
    prev[1:] = states[:-1]

    d_xh_t = np.zeros((W_xh.shape[1], hidden), dtype)
    np.add.at(d_xh_t, inputs, draw)
    grads = {
        "W_xh": d_xh_t.T,
        "W_hh": draw.T @ prev,
        "b_h": draw.sum(axis=0),
        "heads": head_grads,
    }
    return loss, grads, h_final


def _adagrad_step(w, g_acc, grad, lr, eps):
    g_acc += grad * grad
    w -= lr * grad / (np.sqrt(g_acc) + eps)


def _apply_grads(model: MhrnnModel, grads, lr, eps):
    _adagrad_step(model.W_xh, model.G_xh, grads["W_xh"], lr, eps)
    _adagrad_step(model.W_hh, model.G_hh, grads["W_hh"], lr, eps)
    _adagrad_step(model.b_h, model.G_bh, grads["b_h"], lr, eps)
    for head, (d_w, d_b) in grads["heads"].items():
        _adagrad_step(model.W_hy[head], model.G_hy[head], d_w, lr, eps)
        _adagrad_step(model.b_y[head], model.G_by[head], d_b, lr, eps)


def _split_doc(symbols: np.ndarray, val_fraction: float):
    """Train prefix and validation tail (with one context symbol)."""
    n = len(symbols)
    if n < 3:
        return None, None
    n_val = max(1, int(n * val_fraction))
    if n - n_val < 2:
        n_val = n - 2
    return symbols[:n - n_val], symbols[n - n_val - 1:]


def _train_document(model, symbols, head, leak_rate, use_leak,
                    noise_rng, leak_rng, hyper):
    n_steps = len(symbols) - 1
    h = np.zeros(model.hidden_size, model.W_xh.dtype)
    for start in range(0, n_steps, hyper.bptt_window):
        width = min(hyper.bptt_window, n_steps - start)
        inputs = symbols[start:start + width]
        targets = symbols[start + 1:start + 1 + width]
        noise = None
        if hyper.psn > 0:
            noise = noise_rng.normal(0.0, hyper.psn, (width, model.hidden_size))
            noise = noise.astype(model.W_xh.dtype)
        leak_steps = []
        if use_leak:
            hits = leak_rng.random(width) < leak_rate
            picks = leak_rng.integers(0, model.n_heads - 1, width)
            for i in np.nonzero(hits)[0]:
                lh = int(picks[i])
                if lh >= head:
                    lh += 1
                leak_steps.append((int(i), lh))
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads, h = _window_grads(
                model.W_xh, model.W_hh, model.b_h, model.W_hy, model.b_y,
                h, inputs, targets, head, leak_steps, noise)
            if not math.isfinite(loss):
                raise NonFiniteLossError(
                    "training loss is not finite; try a lower learning_rate")
            _apply_grads(model, grads, hyper.learning_rate,
                         hyper.adagrad_epsilon)


def train(model: MhrnnModel, training_set,
          hyper: Hyperparameters | None = None):
    """Train in place until validation entropy has worsened for
    hyper.overfit_epochs epochs, keeping the final (slightly overfit)
    weights.  Returns (model, per-epoch validation log).

    training_set is a corpus.TrainingSet or a plain sequence of
    EncodedDoc in head order.  The last validation_fraction of each
    document is held out of training; it is scored from the zero hidden
    state with one symbol of leading context.
    """
    docs = list(getattr(training_set, "documents", training_set))
    if len(docs) != model.n_heads:
        raise ValueError(
            f"training set has {len(docs)} documents, model has "
            f"{model.n_heads} heads")
    if hyper is None:
        hyper = model.hyper

    splits = [_split_doc(np.asarray(d.symbols), hyper.validation_fraction)
              for d in docs]
    trainable = [i for i, (tr, _) in enumerate(splits) if tr is not None]
    if not trainable:
        raise DocTooShortError("no document is long enough to train on")

    order_rng = np.random.default_rng([hyper.seed, _STREAM_ORDER])
    noise_rng = np.random.default_rng([hyper.seed, _STREAM_NOISE])
    leak_rng = np.random.default_rng([hyper.seed, _STREAM_LEAK])
    use_leak = hyper.leak > 0 and model.n_heads >= 2

    val_log: list[float] = []
    best = math.inf
    best_epoch = -1
    for epoch in range(hyper.max_epochs):
        leak_rate = hyper.leak * hyper.leak_decay ** epoch
        for i in order_rng.permutation(len(trainable)):
            head = trainable[i]
            _train_document(model, splits[head][0], head, leak_rate,
                            use_leak, noise_rng, leak_rng, hyper)
            checksum = float(model.W_hh.sum()) + float(model.W_xh.sum())
            if not math.isfinite(checksum):
                raise NonFiniteLossError(
                    "weights diverged; try a lower learning_rate")
        val = float(np.mean([
            _entropies_for_heads(model, splits[head][1], [head])[0]
            for head in trainable]))
        val_log.append(val)
        log.debug("epoch %d validation %.4f bits/char", epoch, val)
        if val < best:
            best, best_epoch = val, epoch
        if epoch - best_epoch >= hyper.overfit_epochs:
            break
    else:
        log.warning("stopped at max_epochs=%d before the overfit rule fired",
                    hyper.max_epochs)
    return model, val_log


def gradient_check(model: MhrnnModel, doc: EncodedDoc, head: int,
                   delta: float = 1e-4) -> float:
    """Compare the analytic BPTT gradient of the total document loss
    against central finite differences, over every weight in the model.
    Returns max |analytic - numeric| / (|numeric| + 1e-8).

    Runs in float64 with no truncation (one window spans the document)
    and no noise, so the analytic gradient is exact up to float error.
    """
    m = model.astype(np.float64)
    symbols = np.asarray(doc.symbols)
    inputs, targets = symbols[:-1], symbols[1:]
    h0 = np.zeros(m.hidden_size, np.float64)
    _, grads, _ = _window_grads(m.W_xh, m.W_hh, m.b_h, m.W_hy, m.b_y,
                                h0, inputs, targets, head, [], None)

    analytic = {"W_xh": grads["W_xh"], "W_hh": grads["W_hh"],
                "b_h": grads["b_h"],
                "W_hy": np.zeros_like(m.W_hy), "b_y": np.zeros_like(m.b_y)}
    for hd, (d_w, d_b) in grads["heads"].items():
        analytic["W_hy"][hd] = d_w
        analytic["b_y"][hd] = d_b

    def loss():
        return _doc_loss_nats(m.W_xh, m.W_hh, m.b_h, m.W_hy[head],
                              m.b_y[head], symbols)

    worst = 0.0
    for name, w in (("W_xh", m.W_xh), ("W_hh", m.W_hh), ("b_h", m.b_h),
                    ("W_hy", m.W_hy), ("b_y", m.b_y)):
        ana = analytic[name]
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + delta
            hi = loss()
            w[idx] = orig - delta
            lo = loss()
            w[idx] = orig
            numeric = (hi - lo) / (2.0 * delta)
            rel = abs(ana[idx] - numeric) / (abs(numeric) + 1e-8)
            worst = max(worst, rel)
    return worst


# --- model files ---------------------------------------------------------

_MAGIC = b"MHRN"
_FILE_VERSION = 1
# Fixed block order; each block is row-major little-endian float32.
_BLOCKS = ("W_xh", "W_hh", "b_h", "W_hy", "b_y",
           "G_xh", "G_hh", "G_bh", "G_hy", "G_by")


def _block_shapes(k, m, hidden):
    return {"W_xh": (hidden, k), "W_hh": (hidden, hidden), "b_h": (hidden,),
            "W_hy": (m, k, hidden), "b_y": (m, k),
            "G_xh": (hidden, k), "G_hh": (hidden, hidden), "G_bh": (hidden,),
            "G_hy": (m, k, hidden), "G_by": (m, k)}


def save_model(model: MhrnnModel, path) -> None:
    header = {
        "version": _FILE_VERSION,
        "k": model.alphabet_size,
        "M": model.n_heads,
        "hidden_size": model.hidden_size,
        "hyper": asdict(model.hyper),
        "alphabet_hash": model.alphabet_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in _BLOCKS:
            f.write(np.ascontiguousarray(
                getattr(model, name), dtype="<f4").tobytes())


def load_model(path) -> MhrnnModel:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != _MAGIC:
        raise CorruptFileError(f"{path} is not a model file")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise CorruptFileError(f"{path}: truncated header")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: unreadable header") from exc
    if header.get("version") != _FILE_VERSION:
        raise VersionMismatchError(
            f"{path}: version {header.get('version')}, expected {_FILE_VERSION}")

    k, m, hidden = header["k"], header["M"], header["hidden_size"]
    shapes = _block_shapes(k, m, hidden)
    offset = 8 + hlen
    arrays = {}
    for name in _BLOCKS:
        shape = shapes[name]
        nbytes = int(np.prod(shape)) * 4
        chunk = data[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptFileError(f"{path}: truncated block {name}")
        arrays[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise CorruptFileError(f"{path}: {len(data) - offset} trailing bytes")

    hyper = Hyperparameters(**header["hyper"])
    return MhrnnModel(hyper=hyper, alphabet_hash=header["alphabet_hash"],
                      **arrays)
