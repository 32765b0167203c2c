"""Stateful 2-layer LSTM language model trained with momentum SGD.

The network is implemented directly on numpy arrays: fused-gate forward,
exact truncated-BPTT backward (gradients do not cross window boundaries;
the carried state is data, not a differentiation path), global
gradient-norm clipping, and a learning-rate schedule that halves on a dev
cross-entropy increase with patience-based early stopping.

Training flattens the corpus (one ``</s>`` after every sentence) and
reshapes it into ``batch_size`` parallel token streams; hidden states are
zeroed at the start of each epoch and carried across consecutive windows
within it.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Vocabulary
from .validation import check_fitted, check_random_state, check_sentences

LN10 = math.log(10.0)
INIT_SCALE = 0.05
FORGET_BIAS = 1.0


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_params(vocab_size, layers=2, embed_dim=650, hidden_dim=650, seed=0,
                dtype=np.float32, init_scale=INIT_SCALE):
    """Uniform(-0.05, 0.05) weights, zero biases, forget-gate bias +1.

    ``init_scale`` widens the uniform range for small desk-scale networks,
    whose hidden activations would otherwise start near zero; the default
    matches the production recipe.
    """
    rng = check_random_state(seed)
    H = hidden_dim

    def u(*shape):
        return rng.uniform(-init_scale, init_scale, size=shape).astype(dtype)

    params = {"embedding": u(vocab_size, embed_dim)}
    in_dim = embed_dim
    for l in range(layers):
        params[f"l{l}.w_x"] = u(in_dim, 4 * H)
        params[f"l{l}.w_h"] = u(H, 4 * H)
        b = np.zeros(4 * H, dtype=dtype)
        b[H : 2 * H] = FORGET_BIAS  # gate blocks are packed [i, f, g, o]
        params[f"l{l}.b"] = b
        in_dim = H
    params["out.w"] = u(H, vocab_size)
    params["out.b"] = np.zeros(vocab_size, dtype=dtype)
    return params


def _layer_count(params):
    l = 0
    while f"l{l}.w_x" in params:
        l += 1
    return l


def zero_state(params, batch_size):
    H = params["l0.w_h"].shape[0]
    dtype = params["l0.w_h"].dtype
    return [
        (np.zeros((batch_size, H), dtype=dtype), np.zeros((batch_size, H), dtype=dtype))
        for _ in range(_layer_count(params))
    ]


def make_dropout_masks(params, seq_len, batch_size, dropout_keep, rng):
    """Inverted-dropout masks for the embedding output and each layer
    boundary; ``None`` disables dropout (eval mode)."""
    if dropout_keep >= 1.0:
        return None
    layers = _layer_count(params)
    E = params["embedding"].shape[1]
    H = params["l0.w_h"].shape[0]
    dtype = params["embedding"].dtype
    masks = [
        (rng.random((seq_len, batch_size, E)) < dropout_keep).astype(dtype)
    ]
    for _ in range(layers - 1):
        masks.append(
            (rng.random((seq_len, batch_size, H)) < dropout_keep).astype(dtype)
        )
    return masks


def forward_pass(params, inputs, targets, state, dropout_keep=1.0,
                 dropout_masks=None, collect_cache=False):
    """One window: mean token cross-entropy in nats, final state, cache.

    ``inputs``/``targets`` are (T, B) id arrays.  Dropout applies to the
    embedding output and between layers, train mode only (pass masks from
    ``make_dropout_masks``); inverted scaling keeps eval weights unchanged.
    """
    V = params["embedding"].shape[0]
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if inputs.max() >= V or targets.max() >= V:
        raise ValueError(f"token id out of range for vocab_size={V}")
    T, B = inputs.shape
    layers = _layer_count(params)
    keep = dropout_keep
    x = params["embedding"][inputs]  # (T, B, E)
    if dropout_masks is not None:
        x = x * dropout_masks[0] / keep
    cache_layers = []
    new_state = []
    for l in range(layers):
        wx, wh, b = params[f"l{l}.w_x"], params[f"l{l}.w_h"], params[f"l{l}.b"]
        H = wh.shape[0]
        h, c = state[l]
        pre = x.reshape(T * B, -1) @ wx
        pre = pre.reshape(T, B, 4 * H)
        I = np.empty((T, B, H), dtype=x.dtype)
        F = np.empty_like(I)
        G = np.empty_like(I)
        O = np.empty_like(I)
        C = np.empty_like(I)
        Hs = np.empty_like(I)
        for t in range(T):
            a = pre[t] + h @ wh + b
            i_t = _sigmoid(a[:, :H])
            f_t = _sigmoid(a[:, H : 2 * H])
            g_t = np.tanh(a[:, 2 * H : 3 * H])
            o_t = _sigmoid(a[:, 3 * H :])
            c = f_t * c + i_t * g_t
            h = o_t * np.tanh(c)
            I[t], F[t], G[t], O[t], C[t], Hs[t] = i_t, f_t, g_t, o_t, c, h
        if collect_cache:
            cache_layers.append(
                {"x": x, "I": I, "F": F, "G": G, "O": O, "C": C, "H": Hs,
                 "h0": state[l][0], "c0": state[l][1]}
            )
        new_state.append((h.copy(), c.copy()))
        x = Hs
        if dropout_masks is not None and l < layers - 1:
            x = x * dropout_masks[l + 1] / keep
    logits = x.reshape(T * B, -1) @ params["out.w"] + params["out.b"]
    logits -= logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    probs = ex / ex.sum(axis=1, keepdims=True)
    tgt = targets.reshape(T * B)
    tp = np.maximum(probs[np.arange(T * B), tgt], 1e-30)
    loss = float(-np.log(tp).mean())
    cache = None
    if collect_cache:
        cache = {
            "layers": cache_layers,
            "top": x,
            "probs": probs,
            "targets": tgt,
            "inputs": inputs,
            "masks": dropout_masks,
            "keep": keep,
            "shape": (T, B),
        }
    return loss, new_state, cache


def backward_pass(params, cache):
    """Exact gradients of the window's mean cross-entropy.

    Backpropagation runs through the full window; the incoming state is
    treated as a constant, so no gradient crosses window boundaries.
    """
    T, B = cache["shape"]
    layers = _layer_count(params)
    probs = cache["probs"].copy()
    probs[np.arange(T * B), cache["targets"]] -= 1.0
    dlogits = probs / (T * B)
    grads = {
        "out.w": cache["top"].reshape(T * B, -1).T @ dlogits,
        "out.b": dlogits.sum(axis=0),
    }
    d_stream = (dlogits @ params["out.w"].T).reshape(T, B, -1)
    for l in range(layers - 1, -1, -1):
        cl = cache["layers"][l]
        if cache["masks"] is not None and l < layers - 1:
            d_stream = d_stream * cache["masks"][l + 1] / cache["keep"]
        wx, wh = params[f"l{l}.w_x"], params[f"l{l}.w_h"]
        H = wh.shape[0]
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * H, dtype=wx.dtype)
        dX = np.empty_like(cl["x"])
        dh_next = np.zeros((B, H), dtype=wx.dtype)
        dc_next = np.zeros((B, H), dtype=wx.dtype)
        for t in range(T - 1, -1, -1):
            dh = d_stream[t] + dh_next
            tanh_c = np.tanh(cl["C"][t])
            do = dh * tanh_c
            dc = dc_next + dh * cl["O"][t] * (1.0 - tanh_c * tanh_c)
            di = dc * cl["G"][t]
            dg = dc * cl["I"][t]
            c_prev = cl["C"][t - 1] if t > 0 else cl["c0"]
            df = dc * c_prev
            dc_next = dc * cl["F"][t]
            da = np.concatenate(
                [
                    di * cl["I"][t] * (1.0 - cl["I"][t]),
                    df * cl["F"][t] * (1.0 - cl["F"][t]),
                    dg * (1.0 - cl["G"][t] * cl["G"][t]),
                    do * cl["O"][t] * (1.0 - cl["O"][t]),
                ],
                axis=1,
            )
            h_prev = cl["H"][t - 1] if t > 0 else cl["h0"]
            dwx += cl["x"][t].T @ da
            dwh += h_prev.T @ da
            db += da.sum(axis=0)
            dX[t] = da @ wx.T
            dh_next = da @ wh.T
        grads[f"l{l}.w_x"] = dwx
        grads[f"l{l}.w_h"] = dwh
        grads[f"l{l}.b"] = db
        d_stream = dX
    if cache["masks"] is not None:
        d_stream = d_stream * cache["masks"][0] / cache["keep"]
    demb = np.zeros_like(params["embedding"])
    flat_ids = cache["inputs"].reshape(T * B)
    np.add.at(demb, flat_ids, d_stream.reshape(T * B, -1))
    grads["embedding"] = demb
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    return grads


def clip_gradients(grads, max_norm):
    """Scale all gradients jointly so their global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return grads, total


def gradient_check(vocab_size=7, embed_dim=4, hidden_dim=5, seq_len=6,
                   batch_size=2, layers=2, dropout_keep=0.8, seed=0, eps=1e-5):
    """Max relative error of the analytic gradients against central finite
    differences, at double precision with fixed dropout masks."""
    rng = check_random_state(seed)
    params = init_params(vocab_size, layers, embed_dim, hidden_dim,
                         seed=seed, dtype=np.float64)
    inputs = rng.integers(0, vocab_size, size=(seq_len, batch_size))
    targets = rng.integers(0, vocab_size, size=(seq_len, batch_size))
    state = zero_state(params, batch_size)
    for h, c in state:
        h += rng.normal(0, 0.1, h.shape)
        c += rng.normal(0, 0.1, c.shape)
    masks = make_dropout_masks(params, seq_len, batch_size, dropout_keep,
                               check_random_state(seed + 1))
    _, _, cache = forward_pass(params, inputs, targets, state,
                               dropout_keep=dropout_keep, dropout_masks=masks,
                               collect_cache=True)
    grads = backward_pass(params, cache)

    def loss_at():
        loss, _, _ = forward_pass(params, inputs, targets, state,
                                  dropout_keep=dropout_keep, dropout_masks=masks)
        return loss

    # Coordinates whose gradient sits below the finite-difference noise
    # floor (~machine_eps * |loss| / eps) are compared absolutely via the
    # denominator floor; everything measurable is compared relatively.
    worst = 0.0
    for name, p in params.items():
        g = grads[name]
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_at()
            flat[j] = orig - eps
            down = loss_at()
            flat[j] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(gflat[j]) + abs(numeric), 1e-4)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst


class TrainingSchedule:
    """Learning-rate halving and early stopping driven by dev loss.

    The rate is halved after every epoch whose dev cross-entropy increased
    over the previous epoch's.  Training stops once the dev loss has failed
    to improve on its best value for more than ``patience`` consecutive
    epochs.
    """

    def __init__(self, lr_init, patience=3, halve_on_increase=True):
        self.lr = lr_init
        self.patience = patience
        self.halve_on_increase = halve_on_increase
        self.best = math.inf
        self.previous = math.inf
        self.stale = 0

    def update(self, dev_loss):
        """Feed one epoch's dev loss; returns (improved, stop)."""
        if self.halve_on_increase and dev_loss > self.previous:
            self.lr *= 0.5
        self.previous = dev_loss
        improved = dev_loss < self.best
        if improved:
            self.best = dev_loss
            self.stale = 0
        else:
            self.stale += 1
        return improved, self.stale > self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    lr: float
    wall_time: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    stop_reason: str = ""

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.epochs:
                fh.write(json.dumps(vars(r)) + "\n")
            fh.write(json.dumps({"stop_reason": self.stop_reason}) + "\n")


class StatefulLstmLm(BaseEstimator):
    """Stateful LSTM language model with an sklearn-style interface.

    ``fit(X, validation=...)`` trains on token sentences; ``generate``
    samples a corpus; ``sentence_logprob`` scores hypotheses (log10) for
    rescoring.  All randomness derives from ``random_state``.
    """

    def __init__(self, vocabulary=None, layers=2, embed_dim=650, hidden_dim=650,
                 batch_size=32, seq_len=35, dropout_keep=0.5, momentum=0.9,
                 lr_init=1.0, halve_lr_on_increase=True, patience=3,
                 max_epochs=50, clip_norm=5.0, init_scale=INIT_SCALE,
                 random_state=0):
        self.vocabulary = vocabulary
        self.layers = layers
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.batch_size = batch_size
        self.seq_len = seq_len
        self.dropout_keep = dropout_keep
        self.momentum = momentum
        self.lr_init = lr_init
        self.halve_lr_on_increase = halve_lr_on_increase
        self.patience = patience
        self.max_epochs = max_epochs
        self.clip_norm = clip_norm
        self.init_scale = init_scale
        self.random_state = random_state

    # -- data plumbing ------------------------------------------------------

    def _check_config(self):
        if self.vocabulary is None:
            raise ValueError("a fitted Vocabulary is required")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.lr_init <= 0:
            raise ValueError("lr_init must be positive")
        for name in ("layers", "embed_dim", "hidden_dim", "batch_size", "seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def _flatten(self, sentences):
        vocab = self.vocabulary
        flat = []
        for sent in check_sentences(sentences):
            flat.extend(vocab.encode(sent))
            flat.append(vocab.eos_id_)
        return np.asarray(flat, dtype=np.int64)

    @staticmethod
    def _windows(flat, lanes, seq_len):
        L = len(flat) // lanes
        while L < 2 and lanes > 1:
            lanes //= 2
            L = len(flat) // lanes
        if L < 2:
            raise ValueError("corpus too small to form one training window")
        data = flat[: L * lanes].reshape(lanes, L)
        out = []
        for t in range(0, L - 1, seq_len):
            end = min(t + seq_len, L - 1)
            out.append((data[:, t:end].T, data[:, t + 1 : end + 1].T))
        return out

    # -- training -----------------------------------------------------------

    def fit(self, X, y=None, validation=None):
        self._check_config()
        if validation is None or not list(validation):
            raise ValueError("a non-empty validation corpus is required")
        train_flat = self._flatten(X)
        dev_flat = self._flatten(validation)
        V = len(self.vocabulary)
        self.params_ = init_params(V, self.layers, self.embed_dim,
                                   self.hidden_dim, seed=self.random_state,
                                   dtype=np.float32, init_scale=self.init_scale)
        velocity = {k: np.zeros_like(v) for k, v in self.params_.items()}
        mask_rng = check_random_state(self.random_state + 1)
        schedule = TrainingSchedule(self.lr_init, self.patience,
                                    self.halve_lr_on_increase)
        self.log_ = TrainLog()
        best_params = {k: v.copy() for k, v in self.params_.items()}
        windows = self._windows(train_flat, self.batch_size, self.seq_len)
        for epoch in range(1, self.max_epochs + 1):
            started = time.perf_counter()
            lr = schedule.lr
            state = zero_state(self.params_, windows[0][0].shape[1])
            total_loss = 0.0
            total_tokens = 0
            for inputs, targets in windows:
                masks = make_dropout_masks(self.params_, inputs.shape[0],
                                           inputs.shape[1], self.dropout_keep,
                                           mask_rng)
                loss, state, cache = forward_pass(
                    self.params_, inputs, targets, state,
                    dropout_keep=self.dropout_keep, dropout_masks=masks,
                    collect_cache=True)
                grads = backward_pass(self.params_, cache)
                clip_gradients(grads, self.clip_norm)
                for k, g in grads.items():
                    v = velocity[k]
                    v *= self.momentum
                    v += g
                    self.params_[k] -= (lr * v).astype(self.params_[k].dtype)
                total_loss += loss * inputs.size
                total_tokens += inputs.size
            dev_loss = self._dev_cross_entropy(dev_flat, epoch)
            improved, stop = schedule.update(dev_loss)
            if improved:
                best_params = {k: v.copy() for k, v in self.params_.items()}
            self.log_.epochs.append(EpochRecord(
                epoch=epoch, train_loss=total_loss / total_tokens,
                dev_loss=dev_loss, lr=lr,
                wall_time=time.perf_counter() - started))
            if stop:
                self.log_.stop_reason = "patience"
                break
        else:
            self.log_.stop_reason = "max_epochs"
        self.params_ = best_params
        return self

    def _dev_cross_entropy(self, dev_flat, epoch):
        return self._stream_cross_entropy(dev_flat)

    def _stream_cross_entropy(self, flat):
        windows = self._windows(flat, self.batch_size, self.seq_len)
        state = zero_state(self.params_, windows[0][0].shape[1])
        total = 0.0
        n = 0
        for inputs, targets in windows:
            loss, state, _ = forward_pass(self.params_, inputs, targets, state)
            total += loss * inputs.size
            n += inputs.size
        return total / n

    def cross_entropy(self, sentences):
        """Stream cross-entropy in nats/token (stateful batched streams)."""
        check_fitted(self, "params_")
        return self._stream_cross_entropy(self._flatten(sentences))

    def score(self, X, y=None):
        return -self.cross_entropy(X)

    # -- scoring and generation ----------------------------------------------

    def sentence_logprob(self, tokens):
        """Total log10 probability of one sentence including ``</s>``.

        The stream boundary symbol ``</s>`` provides the initial context,
        matching how training streams represent sentence starts.
        """
        check_fitted(self, "params_")
        vocab = self.vocabulary
        ids = vocab.encode(list(tokens)) + [vocab.eos_id_]
        inputs = np.asarray([[vocab.eos_id_]] + [[i] for i in ids[:-1]], dtype=np.int64)
        targets = np.asarray([[i] for i in ids], dtype=np.int64)
        state = zero_state(self.params_, 1)
        loss, _, _ = forward_pass(self.params_, inputs, targets, state)
        return -loss * len(ids) / LN10

    def _step(self, x_ids, state):
        params = self.params_
        x = params["embedding"][x_ids]
        new_state = []
        for l in range(_layer_count(params)):
            wx, wh, b = params[f"l{l}.w_x"], params[f"l{l}.w_h"], params[f"l{l}.b"]
            H = wh.shape[0]
            h, c = state[l]
            a = x @ wx + h @ wh + b
            i_t = _sigmoid(a[:, :H])
            f_t = _sigmoid(a[:, H : 2 * H])
            g_t = np.tanh(a[:, 2 * H : 3 * H])
            o_t = _sigmoid(a[:, 3 * H :])
            c = f_t * c + i_t * g_t
            h = o_t * np.tanh(c)
            new_state.append((h, c))
            x = h
        logits = x @ params["out.w"] + params["out.b"]
        return logits, new_state

    def generate(self, n_tokens, temperature=1.0, random_state=None,
                 streams=64, max_sentence_tokens=1000):
        """Sample at least ``n_tokens`` words/morphs by ancestral sampling.

        Generation runs ``streams`` independent stateful lanes (each seeded
        from ``(random_state, lane)``), concatenated in lane order; state is
        carried continuously within a lane and ``</s>`` emits a sentence
        break.  ``temperature=0`` means argmax.  ``<s>`` is never emitted;
        ``<unk>`` may be sampled and stays literal.
        """
        check_fitted(self, "params_")
        if n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")
        if temperature < 0:
            raise ValueError("temperature must be >= 0")
        vocab = self.vocabulary
        eos, sos = vocab.eos_id_, vocab.sos_id_
        seed = self.random_state if random_state is None else random_state
        streams = min(streams, n_tokens)
        quota = np.full(streams, n_tokens // streams, dtype=np.int64)
        quota[: n_tokens % streams] += 1
        rngs = [np.random.default_rng([seed, lane]) for lane in range(streams)]
        state = zero_state(self.params_, streams)
        prev = np.full(streams, eos, dtype=np.int64)
        produced = np.zeros(streams, dtype=np.int64)
        open_len = np.zeros(streams, dtype=np.int64)
        done = np.zeros(streams, dtype=bool)
        sentences = [[] for _ in range(streams)]
        current = [[] for _ in range(streams)]
        tokens = vocab.tokens_
        while not done.all():
            logits, state = self._step(prev, state)
            logits[:, sos] = -np.inf
            if temperature == 0:
                choice = logits.argmax(axis=1)
            else:
                scaled = logits / temperature
                scaled -= scaled.max(axis=1, keepdims=True)
                probs = np.exp(scaled)
                probs /= probs.sum(axis=1, keepdims=True)
                cum = probs.cumsum(axis=1)
                u = np.asarray([rng.random() for rng in rngs])
                choice = (cum < u[:, None]).sum(axis=1)
                choice = np.minimum(choice, probs.shape[1] - 1)
            for lane in range(streams):
                if done[lane]:
                    continue
                tok = int(choice[lane])
                if tok == eos:
                    if current[lane]:
                        sentences[lane].append(current[lane])
                        current[lane] = []
                    open_len[lane] = 0
                else:
                    current[lane].append(tokens[tok])
                    produced[lane] += 1
                    open_len[lane] += 1
                    if open_len[lane] >= max_sentence_tokens:
                        sentences[lane].append(current[lane])
                        current[lane] = []
                        open_len[lane] = 0
                if produced[lane] >= quota[lane] and not current[lane]:
                    done[lane] = True
            prev = choice
        out = []
        for lane in range(streams):
            out.extend(sentences[lane])
        return out

    # -- persistence ----------------------------------------------------------

    def save(self, path):
        check_fitted(self, "params_")
        config = {
            k: v for k, v in self.get_params(deep=False).items() if k != "vocabulary"
        }
        np.savez(
            path,
            __config__=json.dumps(config),
            __tokens__="\n".join(self.vocabulary.tokens_),
            **self.params_,
        )

    @classmethod
    def load(cls, path):
        data = np.load(path if str(path).endswith(".npz") else str(path) + ".npz",
                       allow_pickle=False)
        config = json.loads(str(data["__config__"]))
        vocab = Vocabulary.from_tokens(str(data["__tokens__"]).split("\n"))
        model = cls(vocabulary=vocab, **config)
        params = {k: data[k] for k in data.files if not k.startswith("__")}
        expected = init_params(len(vocab), model.layers, model.embed_dim,
                               model.hidden_dim, seed=0, dtype=np.float32)
        for k, v in expected.items():
            if k not in params or params[k].shape != v.shape:
                raise ValueError(f"checkpoint parameter {k!r} missing or misshaped")
        model.params_ = params
        model.log_ = TrainLog()
        return model
