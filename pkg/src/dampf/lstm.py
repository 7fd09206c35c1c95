"""LSTM regressor with a feed-forward error-correction head, in plain numpy.

Gate blocks are stacked in the order f, g, i, o along the first axis of the
input matrix ``W`` (4H x I), recurrent matrix ``R`` (4H x H) and bias ``b``.
Every forward function takes a batch ``(B, T, I)``; single sequences are a
batch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import SupervisedDataset, WindowSplit
from .errors import DimensionMismatch, EmptyDataset, ModelFormatError

GATES = ("f", "g", "i", "o")


def sigmoid(z):
    # split on sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---- parameters ----------------------------------------------------------

@dataclass
class LstmWeights:
    W: np.ndarray
    R: np.ndarray
    b: np.ndarray
    Wy: np.ndarray
    by: float

    def __post_init__(self):
        self.W = np.asarray(self.W, np.float64)
        self.R = np.asarray(self.R, np.float64)
        self.b = np.asarray(self.b, np.float64)
        self.Wy = np.asarray(self.Wy, np.float64)
        self.by = np.asarray(self.by, np.float64).reshape(())
        H4, _ = self.W.shape
        H = H4 // 4
        if H4 != 4 * H or self.R.shape != (H4, H) or self.b.shape != (H4,) or self.Wy.shape != (H,):
            raise DimensionMismatch("inconsistent LSTM weight shapes")

    @property
    def hidden(self) -> int:
        return self.R.shape[1]

    @property
    def n_input(self) -> int:
        return self.W.shape[1]

    def gate(self, q: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_q, R_q, b_q) views for one gate."""
        k = GATES.index(q)
        H = self.hidden
        s = slice(k * H, (k + 1) * H)
        return self.W[s], self.R[s], self.b[s]

    def params(self) -> dict:
        return {"W": self.W, "R": self.R, "b": self.b, "Wy": self.Wy, "by": self.by}

    @classmethod
    def from_params(cls, p: dict) -> "LstmWeights":
        return cls(p["W"], p["R"], p["b"], p["Wy"], p["by"])

    def copy(self) -> "LstmWeights":
        return LstmWeights.from_params({k: np.array(v, copy=True) for k, v in self.params().items()})

    @classmethod
    def zeros(cls, n_input: int, hidden: int) -> "LstmWeights":
        return cls(np.zeros((4 * hidden, n_input)), np.zeros((4 * hidden, hidden)),
                   np.zeros(4 * hidden), np.zeros(hidden), 0.0)

    @classmethod
    def init(cls, n_input: int, hidden: int, rng) -> "LstmWeights":
        kw, kr = 1.0 / math.sqrt(n_input), 1.0 / math.sqrt(hidden)
        W = rng.uniform(-kw, kw, (4 * hidden, n_input))
        R = rng.uniform(-kr, kr, (4 * hidden, hidden))
        b = np.zeros(4 * hidden)
        b[:hidden] = 1.0  # forget gate
        Wy = rng.uniform(-kr, kr, hidden)
        return cls(W, R, b, Wy, 0.0)


@dataclass
class FfecWeights:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2", "w3"):
            setattr(self, name, np.asarray(getattr(self, name), np.float64))
        self.b3 = np.asarray(self.b3, np.float64).reshape(())
        h1, _ = self.W1.shape
        h2 = self.W2.shape[0]
        if (self.b1.shape != (h1,) or self.W2.shape != (h2, h1) or self.b2.shape != (h2,)
                or self.w3.shape != (h2,)):
            raise DimensionMismatch("inconsistent FFEC weight shapes")

    @property
    def n_input(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    @classmethod
    def from_params(cls, p: dict) -> "FfecWeights":
        return cls(p["W1"], p["b1"], p["W2"], p["b2"], p["w3"], p["b3"])

    @classmethod
    def zeros(cls, n_input: int, sizes=(256, 128)) -> "FfecWeights":
        h1, h2 = sizes
        return cls(np.zeros((h1, n_input)), np.zeros(h1), np.zeros((h2, h1)), np.zeros(h2),
                   np.zeros(h2), 0.0)

    @classmethod
    def init(cls, n_input: int, rng, sizes=(256, 128)) -> "FfecWeights":
        h1, h2 = sizes
        k1, k2, k3 = (1.0 / math.sqrt(n) for n in (n_input, h1, h2))
        return cls(rng.uniform(-k1, k1, (h1, n_input)), np.zeros(h1),
                   rng.uniform(-k2, k2, (h2, h1)), np.zeros(h2),
                   rng.uniform(-k3, k3, h2), 0.0)


@dataclass(frozen=True)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if np.shape(self.h) != np.shape(self.c):
            raise DimensionMismatch("h and c must have equal shapes")

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "LstmState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


# ---- LSTM forward / backward ---------------------------------------------

def _gates(z, H):
    f = sigmoid(z[..., :H])
    g = np.tanh(z[..., H:2 * H])
    i = sigmoid(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    return f, g, i, o


def lstm_cell_forward(x, prev: LstmState, w: LstmWeights) -> LstmState:
    x = np.asarray(x, np.float64)
    H = w.hidden
    if x.shape[-1] != w.n_input or np.shape(prev.h)[-1] != H:
        raise DimensionMismatch(f"cell expects input {w.n_input} / hidden {H}")
    z = x @ w.W.T + prev.h @ w.R.T + w.b
    f, g, i, o = _gates(z, H)
    c = f * prev.c + i * g
    return LstmState(o * np.tanh(c), c)


@dataclass
class LstmCache:
    X: np.ndarray            # (B, T, I)
    hs: np.ndarray           # (T + 1, B, H), hs[0] = initial h
    cs: np.ndarray           # (T + 1, B, H)
    gates: np.ndarray        # (T, 4, B, H)
    mask: np.ndarray | None  # dropout multiplier on the final h, already scaled
    w: LstmWeights = field(repr=False)

    @property
    def h_out(self) -> np.ndarray:
        h = self.hs[-1]
        return h if self.mask is None else h * self.mask


def _as_batch(seq) -> tuple[np.ndarray, bool]:
    X = np.asarray(seq, np.float64)
    if X.ndim == 2:
        return X[None], True
    if X.ndim != 3:
        raise DimensionMismatch("sequence must be (T, I) or (B, T, I)")
    return X, False


def lstm_forward(sequence, w: LstmWeights, init: LstmState | None = None,
                 dropout_mask=None):
    """Unroll over the sequence and project the final hidden state.

    Returns (prediction, cache); prediction is a scalar for a (T, I) input
    and a (B,) vector for a batch. ``dropout_mask`` multiplies the final
    hidden state (pass an already-rescaled mask for inverted dropout).
    """
    X, single = _as_batch(sequence)
    B, T, I = X.shape
    H = w.hidden
    if I != w.n_input:
        raise DimensionMismatch(f"input width {I}, weights expect {w.n_input}")
    if T < 1:
        raise DimensionMismatch("empty sequence")
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    if init is not None:
        hs[0] = init.h
        cs[0] = init.c
    gates = np.empty((T, 4, B, H))
    xz = X @ w.W.T + w.b  # input contributions for all steps at once
    for t in range(T):
        z = xz[:, t] + hs[t] @ w.R.T
        f, g, i, o = _gates(z, H)
        gates[t] = (f, g, i, o)
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
    cache = LstmCache(X, hs, cs, gates, None if dropout_mask is None else np.asarray(dropout_mask), w)
    pred = cache.h_out @ w.Wy + w.by
    return (float(pred[0]) if single else pred), cache


def lstm_backward(cache: LstmCache, dpred) -> dict:
    """Gradients of a scalar loss given dL/dprediction (scalar or (B,))."""
    w = cache.w
    X = cache.X
    B, T, _ = X.shape
    H = w.hidden
    dpred = np.broadcast_to(np.asarray(dpred, np.float64), (B,))
    grads = {"Wy": dpred @ cache.h_out, "by": np.asarray(dpred.sum())}
    dh = np.outer(dpred, w.Wy)
    if cache.mask is not None:
        dh = dh * cache.mask
    dc = np.zeros((B, H))
    dZ = np.empty((T, B, 4 * H))
    for t in range(T - 1, -1, -1):
        f, g, i, o = cache.gates[t]
        c = cache.cs[t + 1]
        tc = np.tanh(c)
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :H] = dc * cache.cs[t] * f * (1.0 - f)
        dz[:, H:2 * H] = dc * i * (1.0 - g * g)
        dz[:, 2 * H:3 * H] = dc * g * i * (1.0 - i)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dh = dz @ w.R
        dc = dc * f
    grads["W"] = np.einsum("tbk,bti->ki", dZ, X)
    grads["R"] = np.einsum("tbk,tbh->kh", dZ, cache.hs[:-1])
    grads["b"] = dZ.sum(axis=(0, 1))
    return grads


# ---- FFEC ----------------------------------------------------------------

@dataclass
class FfecCache:
    inp: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    w: FfecWeights = field(repr=False)


def ffec_forward(inp, w: FfecWeights):
    inp = np.atleast_2d(np.asarray(inp, np.float64))
    if inp.shape[1] != w.n_input:
        raise DimensionMismatch(f"corrector expects {w.n_input} inputs, got {inp.shape[1]}")
    a1 = np.maximum(inp @ w.W1.T + w.b1, 0.0)
    a2 = np.maximum(a1 @ w.W2.T + w.b2, 0.0)
    return a2 @ w.w3 + w.b3, FfecCache(inp, a1, a2, w)


def ffec_backward(cache: FfecCache, dout) -> dict:
    w = cache.w
    dout = np.broadcast_to(np.asarray(dout, np.float64), (cache.inp.shape[0],))
    grads = {"w3": dout @ cache.a2, "b3": np.asarray(dout.sum())}
    d2 = np.outer(dout, w.w3) * (cache.a2 > 0)
    grads["W2"] = d2.T @ cache.a1
    grads["b2"] = d2.sum(axis=0)
    d1 = (d2 @ w.W2) * (cache.a1 > 0)
    grads["W1"] = d1.T @ cache.inp
    grads["b1"] = d1.sum(axis=0)
    return grads


def ffec_correct(lstm_pred: float, history, w: FfecWeights) -> float:
    history = np.asarray(history, np.float64).ravel()
    if history.size + 1 != w.n_input:
        raise DimensionMismatch(f"history length {history.size}, corrector expects {w.n_input - 1}")
    out, _ = ffec_forward(np.concatenate([[lstm_pred], history]), w)
    return float(out[0])


# ---- optimisation --------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, t: int, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new (params, state)."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_m[k], new_v[k] = m, v
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return new_p, AdamState(new_m, new_v)


# ---- training ------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    units: int = 200
    dropout: float = 0.2
    learning_rate: float = 1e-4
    ffec_learning_rate: float = 1e-4
    epochs: int = 200
    ffec_epochs: int = 200
    batch: int = 256
    ffec_sizes: tuple[int, int] = (256, 128)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 42

    def __post_init__(self):
        if self.units < 1 or self.batch < 1:
            raise ValueError("units and batch must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.ffec_epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0 or self.ffec_learning_rate <= 0:
            raise ValueError("learning rates must be positive")

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class LstmFfecModel:
    lstm: LstmWeights
    ffec: FfecWeights
    lag_slots: tuple[int, ...]

    def sequences(self, X) -> np.ndarray:
        return np.asarray(X, np.float64)[:, list(self.lag_slots)][..., None]

    def predict_lstm(self, X) -> np.ndarray:
        pred, _ = lstm_forward(self.sequences(X), self.lstm)
        return np.atleast_1d(pred)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, np.float64)
        history = X[:, list(self.lag_slots)]
        out, _ = ffec_forward(np.column_stack([self.predict_lstm(X), history]), self.ffec)
        return out

    def to_dict(self) -> dict:
        return {"lag_slots": list(self.lag_slots),
                "lstm": {k: np.asarray(v).tolist() for k, v in self.lstm.params().items()},
                "ffec": {k: np.asarray(v).tolist() for k, v in self.ffec.params().items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "LstmFfecModel":
        try:
            lstm = LstmWeights.from_params({k: np.array(v, np.float64) for k, v in d["lstm"].items()})
            ffec = FfecWeights.from_params({k: np.array(v, np.float64) for k, v in d["ffec"].items()})
        except (KeyError, DimensionMismatch) as exc:
            raise ModelFormatError(f"bad LSTM/FFEC record: {exc}") from None
        return cls(lstm, ffec, tuple(d["lag_slots"]))


def _batches(n: int, size: int, rng):
    order = rng.permutation(n)
    for s in range(0, n, size):
        yield order[s:s + size]


def train_lstm_ffec(split, cfg: TrainConfig = TrainConfig()) -> LstmFfecModel:
    """Two-stage fit with MAE loss: the LSTM on lagged prices, then the
    corrector on (frozen LSTM prediction, lag window) with the LSTM fixed.

    ``split`` is a WindowSplit (its train part is used) or a
    SupervisedDataset, already scaled.
    """
    train = split.train if isinstance(split, WindowSplit) else split
    if not isinstance(train, SupervisedDataset) or len(train) == 0:
        raise EmptyDataset("LSTM training needs a non-empty training set")
    lag_slots = train.lag_slots
    if not lag_slots:
        raise EmptyDataset("training set has no lagged price columns")
    rng = np.random.default_rng(cfg.seed)
    lstm = LstmWeights.init(1, cfg.units, rng)
    ffec = FfecWeights.init(len(lag_slots) + 1, rng, cfg.ffec_sizes)
    model = LstmFfecModel(lstm, ffec, tuple(lag_slots))
    seqs = model.sequences(train.X)
    history = train.X[:, list(lag_slots)]
    y = train.y
    n = len(y)
    keep = 1.0 - cfg.dropout

    params = lstm.params()
    state = AdamState.zeros_like(params)
    t = 0
    for _ in range(cfg.epochs):
        for idx in _batches(n, cfg.batch, rng):
            mask = None
            if cfg.dropout > 0:
                mask = (rng.random((len(idx), cfg.units)) < keep) / keep
            pred, cache = lstm_forward(seqs[idx], LstmWeights.from_params(params), dropout_mask=mask)
            dpred = np.sign(pred - y[idx]) / len(idx)
            t += 1
            params, state = adam_step(params, lstm_backward(cache, dpred), state, t,
                                      cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    model.lstm = LstmWeights.from_params(params)

    inp = np.column_stack([model.predict_lstm(train.X), history])
    params = ffec.params()
    state = AdamState.zeros_like(params)
    t = 0
    for _ in range(cfg.ffec_epochs):
        for idx in _batches(n, cfg.batch, rng):
            out, cache = ffec_forward(inp[idx], FfecWeights.from_params(params))
            dout = np.sign(out - y[idx]) / len(idx)
            t += 1
            params, state = adam_step(params, ffec_backward(cache, dout), state, t,
                                      cfg.ffec_learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    model.ffec = FfecWeights.from_params(params)
    return model
