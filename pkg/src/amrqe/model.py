"""Hierarchical multi-output BiLSTM regressor, written directly against numpy.

Parameters are kept as float64 arrays whose values are always float32-representable,
so that the float32 model file round-trips exactly while gradients stay accurate.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .metrics import N_SCORES
from .preprocess import PAD_ID, EncodedInput

logger = logging.getLogger(__name__)

MAGIC = b"AMRQEMDL"
FORMAT_VERSION = 1
EMBED_INIT = 0.05


class ModelFormatError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    n_tokens: int
    n_pointers: int
    n_senses: int
    embed_dim: int = 128
    hidden_dim: int = 128
    lstm_layers: int = 2
    use_dep: bool = True
    use_pointers: bool = True
    hierarchical: bool = True
    multitask: bool = True
    d: int = N_SCORES
    k: int = 3
    lambda1: float = 0.2
    lambda2: float = 1.0
    max_len: int = 256
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.k < self.d:
            raise ValueError("need 0 < k < d")
        # lambda1 = 0 is allowed: it isolates the main loss while keeping the hierarchical wiring
        if self.lambda1 < 0 or self.lambda2 <= 0:
            raise ValueError("need lambda1 >= 0 and lambda2 > 0")
        for name in ("n_tokens", "n_pointers", "n_senses", "embed_dim", "hidden_dim", "lstm_layers", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hierarchical and not self.multitask:
            raise ValueError("the single-task (no-HMTL) variant is non-hierarchical; set hierarchical=False")


def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def glorot(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free for any x and cheaper than masked exp branches
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab: dict | None = field(default=None, repr=False)

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()}, self.vocab)


def _encoder_names(stream: str, layers: int) -> list[str]:
    return [f"{stream}.l{l}.{d}.{p}" for l in range(layers) for d in ("fwd", "bwd") for p in ("W", "U", "b")]


def init_model(cfg: ModelConfig) -> Model:
    rng = np.random.default_rng(cfg.seed)
    E, H = cfg.embed_dim, cfg.hidden_dim
    p: dict[str, np.ndarray] = {}
    for name, rows in (("emb.token", cfg.n_tokens), ("emb.pointer", cfg.n_pointers), ("emb.sense", cfg.n_senses)):
        table = rng.uniform(-EMBED_INIT, EMBED_INIT, size=(rows, E))
        table[PAD_ID] = 0.0
        p[name] = table
    for stream in ("amr", "dep"):
        for layer in range(cfg.lstm_layers):
            d_in = E if layer == 0 else 2 * H
            for direction in ("fwd", "bwd"):
                pre = f"{stream}.l{layer}.{direction}"
                p[pre + ".W"] = glorot(rng, d_in, 4 * H)
                p[pre + ".U"] = glorot(rng, H, 4 * H)
                b = np.zeros(4 * H)
                b[H:2 * H] = 1.0  # forget gate
                p[pre + ".b"] = b
    combined = 6 * H
    if cfg.hierarchical:
        n_sub = cfg.d - cfg.k
        p["sub.W"] = glorot(rng, combined, n_sub)
        p["sub.b"] = np.zeros(n_sub)
        p["main.W"] = glorot(rng, combined + n_sub, cfg.k)
        p["main.b"] = np.zeros(cfg.k)
    else:
        p["out.W"] = glorot(rng, combined, cfg.d)
        p["out.b"] = np.zeros(cfg.d)
    return Model(cfg, {k: _f32(v) for k, v in p.items()})


# --------------------------------------------------------------------------- batches

@dataclass
class Batch:
    amr_tokens: np.ndarray  # (B, Ta)
    amr_pointers: np.ndarray
    amr_senses: np.ndarray
    amr_lengths: np.ndarray  # (B,)
    dep_tokens: np.ndarray  # (B, Td)
    dep_pointers: np.ndarray
    dep_lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.amr_lengths)


def make_batch(items: Sequence[EncodedInput]) -> Batch:
    if not items:
        raise ValueError("empty batch")
    la = np.array([x.amr_length for x in items], dtype=np.int64)
    ld = np.array([x.dep_length for x in items], dtype=np.int64)
    ta, td = max(int(la.max()), 1), max(int(ld.max()), 1)

    def stack(attr: str, width: int) -> np.ndarray:
        out = np.full((len(items), width), PAD_ID, dtype=np.int64)
        for r, x in enumerate(items):
            seq = getattr(x, attr)[:width]
            out[r, : len(seq)] = seq
        return out

    return Batch(stack("amr_tokens", ta), stack("amr_pointers", ta), stack("amr_senses", ta), la,
                 stack("dep_tokens", td), stack("dep_pointers", td), ld)


# --------------------------------------------------------------------------- LSTM

def _lstm_forward(x, mask, W, U, b):
    """x: (T, B, D), mask: (T, B). Masked steps carry the previous state."""
    T, B, _ = x.shape
    H = U.shape[0]
    xw = x @ W + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((T, B, H))
    cache = {k: np.empty((T, B, H)) for k in ("i", "f", "o", "g", "c_prev", "h_prev", "tc")}
    for t in range(T):
        z = xw[t] + h @ U
        sg = _sigmoid(z[:, : 3 * H])
        i, f, o = sg[:, :H], sg[:, H:2 * H], sg[:, 2 * H:]
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[t][:, None]
        for k, v in (("i", i), ("f", f), ("o", o), ("g", g), ("c_prev", c), ("h_prev", h), ("tc", tc)):
            cache[k][t] = v
        c = m * c_new + (1 - m) * c
        h = m * h_new + (1 - m) * h
        hs[t] = h
    cache.update(x=x, mask=mask)
    return hs, cache


def _lstm_backward(dhs, cache, W, U):
    """dhs: gradient w.r.t. every emitted state (T, B, H). Returns dx, dW, dU, db."""
    x, mask = cache["x"], cache["mask"]
    T, B, _ = x.shape
    H = U.shape[0]
    dxw = np.zeros((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        m = mask[t][:, None]
        dh = dhs[t] + dh_next
        i, f, o, g = cache["i"][t], cache["f"][t], cache["o"][t], cache["g"][t]
        tc, c_prev = cache["tc"][t], cache["c_prev"][t]
        dh_new = m * dh
        dc_new = m * dc_next + dh_new * o * (1 - tc * tc)
        dz = np.concatenate(
            (dc_new * g * i * (1 - i), dc_new * c_prev * f * (1 - f), dh_new * tc * o * (1 - o), dc_new * i * (1 - g * g)),
            axis=1,
        )
        dxw[t] = dz
        dh_next = dz @ U.T + (1 - m) * dh
        dc_next = dc_new * f + (1 - m) * dc_next
    dU = np.tensordot(cache["h_prev"], dxw, axes=([0, 1], [0, 1]))
    dW = np.tensordot(x, dxw, axes=([0, 1], [0, 1]))
    db = dxw.sum(axis=(0, 1))
    dx = dxw @ W.T
    return dx, dW, dU, db


def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """(T, B) time index reversing each sequence within its length; padding stays put."""
    t = np.arange(T)[:, None]
    L = lengths[None, :]
    return np.where(t < L, L - 1 - t, t)


def _gather_time(a: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return a[idx, np.arange(a.shape[1])[None, :]]


def _encoder_forward(params, prefix, layers, x, lengths):
    T = x.shape[0]
    mask = (np.arange(T)[:, None] < lengths[None, :]).astype(np.float64)
    rev = _reverse_index(lengths, T)
    caches = []
    inp = x
    for layer in range(layers):
        pre = f"{prefix}.l{layer}"
        hf, cf = _lstm_forward(inp, mask, params[pre + ".fwd.W"], params[pre + ".fwd.U"], params[pre + ".fwd.b"])
        hr, cr = _lstm_forward(_gather_time(inp, rev), mask, params[pre + ".bwd.W"], params[pre + ".bwd.U"],
                               params[pre + ".bwd.b"])
        caches.append((cf, cr))
        inp = np.concatenate((hf, _gather_time(hr, rev)), axis=2)
        last = (hf[-1], hr[-1])
    v = np.concatenate(last, axis=1)
    return v, (caches, rev, T)


def _encoder_backward(params, grads, prefix, layers, dv, cache):
    caches, rev, T = cache
    H = dv.shape[1] // 2
    B = dv.shape[0]
    d_out = None
    for layer in range(layers - 1, -1, -1):
        pre = f"{prefix}.l{layer}"
        cf, cr = caches[layer]
        dhf = np.zeros((T, B, H))
        dhr = np.zeros((T, B, H))
        if d_out is not None:
            dhf += d_out[:, :, :H]
            dhr += _gather_time(d_out[:, :, H:], rev)
        if layer == layers - 1:
            dhf[-1] += dv[:, :H]
            dhr[-1] += dv[:, H:]
        dxf, dW, dU, db = _lstm_backward(dhf, cf, params[pre + ".fwd.W"], params[pre + ".fwd.U"])
        grads[pre + ".fwd.W"] += dW
        grads[pre + ".fwd.U"] += dU
        grads[pre + ".fwd.b"] += db
        dxr, dW, dU, db = _lstm_backward(dhr, cr, params[pre + ".bwd.W"], params[pre + ".bwd.U"])
        grads[pre + ".bwd.W"] += dW
        grads[pre + ".bwd.U"] += dU
        grads[pre + ".bwd.b"] += db
        d_out = dxf + _gather_time(dxr, rev)
    return d_out  # gradient w.r.t. the embedded input (T, B, E)


# --------------------------------------------------------------------------- forward pieces

def embed_and_sum(model: Model, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    """Per-position sums of token, pointer (and, for AMR, sense) embeddings: (B, T, E) each."""
    p, cfg = model.params, model.config
    for name, ids in (("emb.token", batch.amr_tokens), ("emb.token", batch.dep_tokens),
                      ("emb.pointer", batch.amr_pointers), ("emb.pointer", batch.dep_pointers),
                      ("emb.sense", batch.amr_senses)):
        if ids.size and (ids.min() < 0 or ids.max() >= p[name].shape[0]):
            raise IndexError(f"id out of range for {name}")
    amr = p["emb.token"][batch.amr_tokens] + p["emb.sense"][batch.amr_senses]
    dep = p["emb.token"][batch.dep_tokens].copy()
    if cfg.use_pointers:
        amr = amr + p["emb.pointer"][batch.amr_pointers]
        dep = dep + p["emb.pointer"][batch.dep_pointers]
    return amr, dep


def _joint_forward(model: Model, amr: np.ndarray, dep: np.ndarray, amr_len: np.ndarray, dep_len: np.ndarray):
    if np.any(amr_len <= 0) or np.any(dep_len <= 0):
        raise ValueError("zero-length sequence in batch")
    layers = model.config.lstm_layers
    va, ca = _encoder_forward(model.params, "amr", layers, amr.transpose(1, 0, 2), amr_len)
    vd, cd = _encoder_forward(model.params, "dep", layers, dep.transpose(1, 0, 2), dep_len)
    combined = np.concatenate((va * vd, va - vd, va + vd), axis=1)
    return combined, (va, vd, ca, cd)


def encode_joint(model: Model, amr: np.ndarray, dep: np.ndarray, amr_lengths, dep_lengths) -> np.ndarray:
    """Combined (product, difference, sum) of the two stream encodings: (B, 6H)."""
    combined, _ = _joint_forward(model, amr, dep, np.asarray(amr_lengths), np.asarray(dep_lengths))
    return combined


def _heads_forward(model: Model, combined: np.ndarray):
    p = model.params
    if model.config.hierarchical:
        sub = _sigmoid(combined @ p["sub.W"] + p["sub.b"])
        z = np.concatenate((combined, sub), axis=1)
        main = _sigmoid(z @ p["main.W"] + p["main.b"])
        return np.concatenate((main, sub), axis=1), (combined, sub, z, main)
    out = _sigmoid(combined @ p["out.W"] + p["out.b"])
    return out, (combined, out)


def forward(model: Model, batch: Batch):
    amr, dep = embed_and_sum(model, batch)
    combined, jcache = _joint_forward(model, amr, dep, batch.amr_lengths, batch.dep_lengths)
    y, hcache = _heads_forward(model, combined)
    return y, (batch, jcache, hcache)


def predict(model: Model, batch: Batch) -> np.ndarray:
    """(B, 36) scores in canonical layout: Smatch P/R/F1 first, then the 33 subtask scores."""
    return forward(model, batch)[0]


# --------------------------------------------------------------------------- losses

def loss_flat(preds: np.ndarray, targets: np.ndarray) -> float:
    preds, targets = np.atleast_2d(preds), np.atleast_2d(targets)
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {targets.shape}")
    if preds.shape[0] == 0:
        raise ValueError("empty batch")
    return float(np.mean((targets - preds) ** 2))


def loss_hier(sub_preds: np.ndarray, main_preds: np.ndarray, targets: np.ndarray,
              lambda1: float, lambda2: float, k: int = 3) -> float:
    """Weighted sum of the subtask MSE and the main-metric MSE.

    ``targets`` uses the canonical layout (main scores in the first ``k`` columns).
    """
    sub_preds, main_preds, targets = map(np.atleast_2d, (sub_preds, main_preds, targets))
    if main_preds.shape[1] != k or sub_preds.shape[1] != targets.shape[1] - k:
        raise ValueError("dimension mismatch between predictions and targets")
    if not len(sub_preds) == len(main_preds) == len(targets) or len(targets) == 0:
        raise ValueError("batch size mismatch or empty batch")
    return lambda1 * loss_flat(sub_preds, targets[:, k:]) + lambda2 * loss_flat(main_preds, targets[:, :k])


def batch_loss(model: Model, y: np.ndarray, targets: np.ndarray) -> float:
    cfg = model.config
    if cfg.hierarchical:
        return loss_hier(y[:, cfg.k:], y[:, : cfg.k], targets, cfg.lambda1, cfg.lambda2, cfg.k)
    if not cfg.multitask:
        return loss_flat(y[:, : cfg.k], targets[:, : cfg.k])
    return loss_flat(y, targets)


def _loss_grad(model: Model, y: np.ndarray, targets: np.ndarray) -> np.ndarray:
    cfg = model.config
    N = len(y)
    r = 2.0 * (y - targets)
    if cfg.hierarchical:
        g = np.empty_like(y)
        g[:, : cfg.k] = cfg.lambda2 * r[:, : cfg.k] / (cfg.k * N)
        g[:, cfg.k:] = cfg.lambda1 * r[:, cfg.k:] / ((cfg.d - cfg.k) * N)
        return g
    if not cfg.multitask:
        g = np.zeros_like(y)
        g[:, : cfg.k] = r[:, : cfg.k] / (cfg.k * N)
        return g
    return r / (cfg.d * N)


# --------------------------------------------------------------------------- backward

def backward(model: Model, cache, dy: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(dy * y) for every parameter, given the forward cache."""
    p, cfg = model.params, model.config
    batch, (va, vd, ca, cd), hcache = cache
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    if cfg.hierarchical:
        combined, sub, z, main = hcache
        dmain_pre = dy[:, : cfg.k] * main * (1 - main)
        grads["main.W"] = z.T @ dmain_pre
        grads["main.b"] = dmain_pre.sum(0)
        dz = dmain_pre @ p["main.W"].T
        H6 = combined.shape[1]
        dsub = dy[:, cfg.k:] + dz[:, H6:]
        dsub_pre = dsub * sub * (1 - sub)
        grads["sub.W"] = combined.T @ dsub_pre
        grads["sub.b"] = dsub_pre.sum(0)
        dcomb = dz[:, :H6] + dsub_pre @ p["sub.W"].T
    else:
        combined, out = hcache
        dpre = dy * out * (1 - out)
        grads["out.W"] = combined.T @ dpre
        grads["out.b"] = dpre.sum(0)
        dcomb = dpre @ p["out.W"].T
    H2 = va.shape[1]
    dmul, dsubt, dadd = dcomb[:, :H2], dcomb[:, H2:2 * H2], dcomb[:, 2 * H2:]
    dva = dmul * vd + dsubt + dadd
    dvd = dmul * va - dsubt + dadd
    layers = cfg.lstm_layers
    damr = _encoder_backward(p, grads, "amr", layers, dva, ca).transpose(1, 0, 2)
    ddep = _encoder_backward(p, grads, "dep", layers, dvd, cd).transpose(1, 0, 2)
    E = damr.shape[2]
    np.add.at(grads["emb.token"], batch.amr_tokens.ravel(), damr.reshape(-1, E))
    np.add.at(grads["emb.token"], batch.dep_tokens.ravel(), ddep.reshape(-1, E))
    np.add.at(grads["emb.sense"], batch.amr_senses.ravel(), damr.reshape(-1, E))
    if cfg.use_pointers:
        np.add.at(grads["emb.pointer"], batch.amr_pointers.ravel(), damr.reshape(-1, E))
        np.add.at(grads["emb.pointer"], batch.dep_pointers.ravel(), ddep.reshape(-1, E))
    for name in ("emb.token", "emb.pointer", "emb.sense"):
        grads[name][PAD_ID] = 0.0
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    return grads


def loss_and_grads(model: Model, batch: Batch, targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    y, cache = forward(model, batch)
    loss = batch_loss(model, y, targets)
    return loss, backward(model, cache, _loss_grad(model, y, targets))


def _used_rows(model: Model, batch: Batch, name: str) -> np.ndarray:
    if name == "emb.token":
        ids = np.concatenate((batch.amr_tokens.ravel(), batch.dep_tokens.ravel()))
    elif name == "emb.pointer":
        ids = np.concatenate((batch.amr_pointers.ravel(), batch.dep_pointers.ravel()))
    else:
        ids = batch.amr_senses.ravel()
    rows = np.unique(ids)
    return rows[rows != PAD_ID]


def grad_check(model: Model, batch: Batch, targets: np.ndarray, eps: float = 1e-4,
               n_samples: int = 200, seed: int = 0, floor: float = 1e-7) -> float:
    """Max relative error between analytic gradients and central finite differences.

    Samples are spread over every parameter block; embedding samples come from rows the
    batch actually uses. Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
    float64 roundoff on near-zero gradients from dominating.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_and_grads(model, batch, targets)
    names = sorted(model.params)
    per_block = max(1, math.ceil(n_samples / len(names)))
    worst = 0.0
    for name in names:
        param = model.params[name]
        if name.startswith("emb."):
            rows = _used_rows(model, batch, name)
            if name == "emb.pointer" and not model.config.use_pointers:
                rows = rows[:0]
            if len(rows) == 0:
                continue
            cand = [(int(r), int(c)) for r, c in zip(rng.choice(rows, per_block), rng.integers(0, param.shape[1], per_block))]
        else:
            flat = rng.integers(0, param.size, per_block)
            cand = [np.unravel_index(int(f), param.shape) for f in flat]
        for idx in cand:
            old = param[idx]
            param[idx] = old + eps
            lp = batch_loss(model, forward(model, batch)[0], targets)
            param[idx] = old - eps
            lm = batch_loss(model, forward(model, batch)[0], targets)
            param[idx] = old
            num = (lp - lm) / (2 * eps)
            ana = grads[name][idx]
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------- training

class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params[k][...] = _f32(params[k] - update)


def predict_all(model: Model, items: Sequence[EncodedInput], batch_size: int = 64) -> np.ndarray:
    out = [predict(model, make_batch(items[i: i + batch_size])) for i in range(0, len(items), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.config.d))


def _pearson_or_nan(x: np.ndarray, y: np.ndarray) -> float:
    x, y = x - x.mean(), y - y.mean()
    den = math.sqrt(float(x @ x) * float(y @ y))
    return float(x @ y) / den if den > 0 else float("nan")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_rho: float


def train(model: Model, train_x: Sequence[EncodedInput], train_y: np.ndarray,
          dev_x: Sequence[EncodedInput], dev_y: np.ndarray, lr: float = 1e-3, epochs: int = 20,
          batch_size: int = 16, seed: int = 0,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[Model, list[EpochRecord]]:
    """Adam over shuffled mini-batches; returns the parameters of the best dev-rho epoch.

    Dev rho is Pearson between predicted and gold Smatch F1 (column 2). Ties keep the
    earlier epoch.
    """
    if not len(train_x) or not len(dev_x):
        raise ValueError("training and development sets must be non-empty")
    train_y = np.asarray(train_y, dtype=np.float64)
    dev_y = np.asarray(dev_y, dtype=np.float64)
    model = model.copy()
    rng = np.random.default_rng(seed)
    opt = Adam(model.params, lr=lr)
    history: list[EpochRecord] = []
    best_rho, best_params = -math.inf, {k: v.copy() for k, v in model.params.items()}
    for epoch in range(epochs):
        order = rng.permutation(len(train_x))
        losses = []
        for b, start in enumerate(range(0, len(order), batch_size)):
            idx = order[start: start + batch_size]
            batch = make_batch([train_x[i] for i in idx])
            try:
                loss, grads = loss_and_grads(model, batch, train_y[idx])
            except FloatingPointError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not math.isfinite(loss):
                raise TrainingError(f"epoch {epoch}, batch {b}: non-finite loss {loss}")
            opt.step(model.params, grads)
            losses.append(loss * len(idx))
        preds = predict_all(model, dev_x)
        rho = _pearson_or_nan(preds[:, 2], dev_y[:, 2])
        rec = EpochRecord(epoch, float(sum(losses) / len(order)), rho)
        history.append(rec)
        logger.info("epoch %d train_loss=%.5f dev_rho=%.4f", epoch, rec.train_loss, rho)
        if on_epoch is not None:
            on_epoch(rec)
        if math.isfinite(rho) and rho > best_rho:
            best_rho = rho
            best_params = {k: v.copy() for k, v in model.params.items()}
    model.params = best_params
    return model, history


# --------------------------------------------------------------------------- persistence

def save_model(model: Model, path) -> None:
    """Binary layout: magic, version, JSON header, then named little-endian float32 arrays."""
    header = json.dumps({"config": asdict(model.config), "vocab": model.vocab,
                         "params": sorted(model.params)}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for name in sorted(model.params):
            arr = model.params[name]
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)) + enc)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ModelFormatError(f"truncated model file {path}")
        chunk = data[pos: pos + n]
        pos += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise ModelFormatError(f"{path} is not a model file (bad magic)")
    version, hlen = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version} unsupported (expected {FORMAT_VERSION})")
    try:
        header = json.loads(take(hlen).decode("utf-8"))
        config = ModelConfig(**header["config"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from exc
    params = {}
    for _ in header["params"]:
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8", errors="replace")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise ModelFormatError(f"trailing bytes in model file {path}")
    if sorted(params) != sorted(init_param_names(config)):
        raise ModelFormatError("parameter set does not match the stored configuration")
    return Model(config, params, header.get("vocab"))


def init_param_names(cfg: ModelConfig) -> list[str]:
    names = ["emb.token", "emb.pointer", "emb.sense"]
    names += _encoder_names("amr", cfg.lstm_layers) + _encoder_names("dep", cfg.lstm_layers)
    names += ["sub.W", "sub.b", "main.W", "main.b"] if cfg.hierarchical else ["out.W", "out.b"]
    return names
