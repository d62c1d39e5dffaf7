"""The move-prediction network: a recurrent classifier over the move space.

Architecture, fixed up to the structure variables:

    token indices -> embedding -> single recurrent layer (LSTM or GRU,
    optionally consuming the window most-recent-first) -> activation on
    the final hidden state -> optional batch norm -> num_fc hidden layers
    -> linear projection to vocabulary logits -> softmax.

Every history is fed with a leading start-of-history marker whose
embedding lives in row `vocab_size` of the table, so the empty window
still produces a prediction.  The Backward kinds reverse the window
before that marker is attached; `BackwardLSTM(x)` is therefore exactly
`LSTM(reversed(x))` on shared weights.

Tensor layout (the declared order used by checkpoints and the
initializer's random stream):

    embedding   (V+1, E)
    rnn_wx      (E, G*H)   G = 4 for LSTM (gates i|f|g|o), 3 for GRU (r|z|n)
    rnn_wh      (H, G*H)
    rnn_b       (G*H,)
    bn_scale, bn_shift, bn_mean, bn_var   (H,) each, batch_norm only;
                                          mean/var are running stats
    fc{i}_w     (H, H)     fc{i}_b (H,)   for i < num_fc
    out_w       (H, V)     out_b   (V,)

Cell equations, spelled out because the backward pass mirrors them
line for line:

    LSTM:  i,f,o = sigmoid(gates), g = tanh(gate)
           c' = f*c + i*g ;  h' = o * tanh(c')
    GRU:   r,z = sigmoid(gates), n = tanh(x@Wxn + (r*h)@Whn + bn)
           h' = (1-z)*n + z*h

Per-step dropout (training only) masks the hidden state each cell
emits, so the recurrence itself sees the dropped value.  Everything
runs in the dtype of the parameters: float32 for training, float64
when the gradients are being verified.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import IndexOutOfRange, NoLegalMove
from ..movespace import MoveToken, MoveVocabulary, enumerate_vocabulary, locally_legal_mask
from ..rules import GameState
from .config import StructureConfig

EMBED_DIM = 128
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

RUNNING_STAT_NAMES = ("bn_mean", "bn_var")


@dataclass(frozen=True)
class PredictionDistribution:
    """Probabilities over the whole vocabulary, possibly mask-filtered."""

    probs: np.ndarray
    filtered: bool = False


@dataclass
class ModelParameters:
    """All tensors of one network plus the dimensions that shaped them."""

    vocab_size: int
    embed_dim: int
    hidden: int
    tensors: dict[str, np.ndarray] = field(repr=False)

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["embedding"].dtype

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.vocab_size,
            self.embed_dim,
            self.hidden,
            {name: t.copy() for name, t in self.tensors.items()},
        )

    def astype(self, dtype) -> "ModelParameters":
        return ModelParameters(
            self.vocab_size,
            self.embed_dim,
            self.hidden,
            {name: t.astype(dtype) for name, t in self.tensors.items()},
        )

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())


def trainable_names(params: ModelParameters) -> list[str]:
    """Every tensor the optimizer touches; running stats are not gradients."""
    return [n for n in params.tensors if n not in RUNNING_STAT_NAMES]


def tensor_layout(
    config: StructureConfig,
    vocab_size: int,
    embed_dim: int = EMBED_DIM,
    hidden: Optional[int] = None,
) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes in declared order for the given structure."""
    h = hidden if hidden is not None else config.rnn_hidden
    gates = 4 if config.cell_kind == "LSTM" else 3
    layout: list[tuple[str, tuple[int, ...]]] = [
        ("embedding", (vocab_size + 1, embed_dim)),
        ("rnn_wx", (embed_dim, gates * h)),
        ("rnn_wh", (h, gates * h)),
        ("rnn_b", (gates * h,)),
    ]
    if config.batch_norm:
        layout += [
            ("bn_scale", (h,)),
            ("bn_shift", (h,)),
            ("bn_mean", (h,)),
            ("bn_var", (h,)),
        ]
    for i in range(config.num_fc):
        layout += [(f"fc{i}_w", (h, h)), (f"fc{i}_b", (h,))]
    layout += [("out_w", (h, vocab_size)), ("out_b", (vocab_size,))]
    return layout


def build(
    config: StructureConfig,
    vocab_size: int,
    seed: int,
    *,
    hidden: Optional[int] = None,
    embed_dim: int = EMBED_DIM,
    dtype=np.float32,
) -> ModelParameters:
    """Fresh parameters, deterministic in the seed.

    Weight matrices draw from U(-s, s) with s = 1/sqrt(fan_in); biases
    start at zero, batch-norm at the identity transform.  `hidden` and
    `embed_dim` overrides exist so verification can run at toy scale.
    """
    h = hidden if hidden is not None else config.rnn_hidden
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_layout(config, vocab_size, embed_dim, h):
        if name == "embedding":
            scale = 1.0 / np.sqrt(embed_dim)
            tensors[name] = rng.uniform(-scale, scale, shape).astype(dtype)
        elif len(shape) == 2:
            scale = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-scale, scale, shape).astype(dtype)
        elif name in ("bn_scale", "bn_var"):
            tensors[name] = np.ones(shape, dtype)
        else:
            tensors[name] = np.zeros(shape, dtype)
    return ModelParameters(vocab_size, embed_dim, h, tensors)


# ---------------------------------------------------------------------------
# Elementwise pieces
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp only ever sees non-positive arguments, so it cannot overflow
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "ReLU":
        return np.maximum(z, 0)
    if name == "Tanh":
        return np.tanh(z)
    if name == "Softmax":
        return _softmax_rows(z)
    return z  # Linear


def _activate_backward(name: str, grad: np.ndarray, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "ReLU":
        return grad * (z > 0)
    if name == "Tanh":
        return grad * (1.0 - a * a)
    if name == "Softmax":
        return a * (grad - (grad * a).sum(axis=1, keepdims=True))
    return grad


def _dropout_mask(rng: np.random.Generator, shape, p: float, dtype) -> np.ndarray:
    # inverted dropout: scaling happens here so inference needs none
    keep = (rng.random(shape) >= p).astype(dtype)
    return keep / dtype.type(1.0 - p)


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def _pack_inputs(
    params: ModelParameters, config: StructureConfig, xs: Sequence[Sequence[int]]
) -> tuple[np.ndarray, np.ndarray]:
    """Index matrix with the start marker at column 0, plus the step mask."""
    v = params.vocab_size
    rows = []
    for x in xs:
        arr = np.asarray(x, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= v):
            raise IndexOutOfRange(f"token index outside 0..{v - 1}: {arr.tolist()}")
        rows.append(arr[::-1] if config.backward else arr)
    steps = 1 + max((r.size for r in rows), default=0)
    ids = np.zeros((len(rows), steps), dtype=np.int64)
    active = np.zeros((len(rows), steps), dtype=bool)
    ids[:, 0] = v  # start-of-history marker
    active[:, 0] = True
    for b, r in enumerate(rows):
        ids[b, 1 : 1 + r.size] = r
        active[b, 1 : 1 + r.size] = True
    return ids, active


def _forward(
    params: ModelParameters,
    config: StructureConfig,
    xs: Sequence[Sequence[int]],
    mode: str,
    rng: Optional[np.random.Generator],
    keep: bool,
) -> tuple[np.ndarray, Optional[dict]]:
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be train or infer, got {mode!r}")
    if not len(xs):
        raise ValueError("empty batch")
    train = mode == "train"
    if train and rng is None and (config.rnn_dropout > 0 or config.fc_dropout > 0):
        raise ValueError("training-mode dropout needs an rng")

    t = params.tensors
    dtype = params.dtype
    h_dim = params.hidden
    lstm = config.cell_kind == "LSTM"
    ids, active = _pack_inputs(params, config, xs)
    batch, steps = ids.shape

    cache: dict = {"ids": ids, "active": active, "steps": []}
    h = np.zeros((batch, h_dim), dtype)
    c = np.zeros((batch, h_dim), dtype) if lstm else None
    wx, wh, b = t["rnn_wx"], t["rnn_wh"], t["rnn_b"]

    for step in range(steps):
        e = t["embedding"][ids[:, step]]
        gates = e @ wx + h @ wh + b
        if lstm:
            gi = _sigmoid(gates[:, :h_dim])
            gf = _sigmoid(gates[:, h_dim : 2 * h_dim])
            gg = np.tanh(gates[:, 2 * h_dim : 3 * h_dim])
            go = _sigmoid(gates[:, 3 * h_dim :])
            c_new = gf * c + gi * gg
            h_raw = go * np.tanh(c_new)
        else:
            gr = _sigmoid(gates[:, :h_dim])
            gz = _sigmoid(gates[:, h_dim : 2 * h_dim])
            rh = gr * h
            zn = e @ wx[:, 2 * h_dim :] + rh @ wh[:, 2 * h_dim :] + b[2 * h_dim :]
            gn = np.tanh(zn)
            c_new = None
            h_raw = (1.0 - gz) * gn + gz * h
        drop = None
        if train and config.rnn_dropout > 0:
            drop = _dropout_mask(rng, h_raw.shape, config.rnn_dropout, np.dtype(dtype))
            h_raw = h_raw * drop
        step_active = active[:, step : step + 1]
        h_next = np.where(step_active, h_raw, h)
        if keep:
            if lstm:
                cache["steps"].append((h, c, gi, gf, gg, go, c_new, drop))
            else:
                cache["steps"].append((h, gr, gz, gn, rh, drop))
        if lstm:
            c = np.where(step_active, c_new, c)
        h = h_next

    z_act = h
    act = _activate(config.rnn_activation, z_act)
    a = act

    bn = None
    if config.batch_norm:
        if train:
            mean = a.mean(axis=0)
            var = a.var(axis=0)
        else:
            mean, var = t["bn_mean"], t["bn_var"]
        ivar = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (a - mean) * ivar
        bn = {"xhat": xhat, "ivar": ivar, "mean": mean, "var": var}
        a = t["bn_scale"] * xhat + t["bn_shift"]

    fc_cache = []
    for i in range(config.num_fc):
        z = a @ t[f"fc{i}_w"] + t[f"fc{i}_b"]
        out = _activate(config.fc_activation, z)
        drop = None
        if train and config.fc_dropout > 0:
            drop = _dropout_mask(rng, out.shape, config.fc_dropout, np.dtype(dtype))
            out = out * drop
        fc_cache.append((a, z, out, drop))
        a = out

    logits = a @ t["out_w"] + t["out_b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    if keep:
        cache.update(z_act=z_act, act_out=act, bn=bn, fc=fc_cache, proj_in=a)
        return probs, cache
    return probs, None


def forward_batch(
    params: ModelParameters,
    config: StructureConfig,
    xs: Sequence[Sequence[int]],
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Probabilities for a batch of index windows, one row per window."""
    probs, _ = _forward(params, config, xs, mode, rng, keep=False)
    return probs


def forward(
    params: ModelParameters,
    config: StructureConfig,
    x: Sequence[int],
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
) -> PredictionDistribution:
    """Distribution over the vocabulary for a single (possibly empty) window."""
    probs = forward_batch(params, config, [x], mode, rng)
    return PredictionDistribution(probs[0], filtered=False)


# ---------------------------------------------------------------------------
# Loss and gradients
# ---------------------------------------------------------------------------

def _regularization(params: ModelParameters, config: StructureConfig) -> float:
    if config.fc_reg == 0:
        return 0.0
    # diverged weights overflow to inf here; that is the detection signal,
    # not an anomaly worth a warning
    with np.errstate(over="ignore"):
        total = float(np.sum(params.tensors["out_w"] ** 2))
        for i in range(config.num_fc):
            total += float(np.sum(params.tensors[f"fc{i}_w"] ** 2))
    return config.fc_reg * total


def loss(
    params: ModelParameters,
    config: StructureConfig,
    xs: Sequence[Sequence[int]],
    ys: Sequence[int],
    mode: str = "train",
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Mean cross-entropy of the unfiltered softmax plus weight decay.

    The filter never participates here: illegality is handled at
    prediction time, not by the objective.  Regularization covers the
    fully connected and projection weight matrices only.
    """
    probs, _ = _forward(params, config, xs, mode, rng, keep=False)
    ce = _cross_entropy(probs, np.asarray(ys))
    return ce + _regularization(params, config)


def _cross_entropy(probs: np.ndarray, ys: np.ndarray) -> float:
    if ys.min() < 0 or ys.max() >= probs.shape[1]:
        raise IndexOutOfRange(f"label outside 0..{probs.shape[1] - 1}")
    picked = probs[np.arange(len(ys)), ys]
    # softmax output can underflow to exactly 0 in float32; clamp for the log
    tiny = np.finfo(probs.dtype).tiny
    return float(-np.log(np.maximum(picked, tiny)).mean())


def loss_and_grads(
    params: ModelParameters,
    config: StructureConfig,
    xs: Sequence[Sequence[int]],
    ys: Sequence[int],
    mode: str = "train",
    rng: Optional[np.random.Generator] = None,
    stats: Optional[dict] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss plus its gradient for every trainable tensor.

    `stats`, when given, receives the batch-norm batch statistics so the
    training loop can fold them into the running estimates; the forward
    pass itself never mutates parameters.
    """
    t = params.tensors
    dtype = params.dtype
    h_dim = params.hidden
    lstm = config.cell_kind == "LSTM"
    probs, cache = _forward(params, config, xs, mode, rng, keep=True)
    ys = np.asarray(ys)
    value = _cross_entropy(probs, ys) + _regularization(params, config)

    grads = {name: np.zeros_like(t[name]) for name in trainable_names(params)}
    batch = probs.shape[0]

    d_logits = probs.copy()
    d_logits[np.arange(batch), ys] -= 1.0
    d_logits /= batch

    reg2 = dtype.type(2.0 * config.fc_reg)
    grads["out_w"] += cache["proj_in"].T @ d_logits
    if config.fc_reg:
        grads["out_w"] += reg2 * t["out_w"]
    grads["out_b"] += d_logits.sum(axis=0)
    da = d_logits @ t["out_w"].T

    for i in reversed(range(config.num_fc)):
        a_in, z, out, drop = cache["fc"][i]
        if drop is not None:
            da = da * drop
        dz = _activate_backward(config.fc_activation, da, z, out)
        grads[f"fc{i}_w"] += a_in.T @ dz
        if config.fc_reg:
            grads[f"fc{i}_w"] += reg2 * t[f"fc{i}_w"]
        grads[f"fc{i}_b"] += dz.sum(axis=0)
        da = dz @ t[f"fc{i}_w"].T

    if config.batch_norm:
        bn = cache["bn"]
        if stats is not None and mode == "train":
            stats["mean"], stats["var"] = bn["mean"], bn["var"]
        grads["bn_scale"] += (da * bn["xhat"]).sum(axis=0)
        grads["bn_shift"] += da.sum(axis=0)
        dxhat = da * t["bn_scale"]
        if mode == "train":
            # full batch-stat backward; running stats carry no gradient
            n = dtype.type(batch)
            da = (
                bn["ivar"]
                / n
                * (n * dxhat - dxhat.sum(axis=0) - bn["xhat"] * (dxhat * bn["xhat"]).sum(axis=0))
            )
        else:
            da = dxhat * bn["ivar"]

    da = _activate_backward(config.rnn_activation, da, cache["z_act"], cache["act_out"])

    ids, active = cache["ids"], cache["active"]
    wx, wh = t["rnn_wx"], t["rnn_wh"]
    dh = da
    dc = np.zeros_like(dh) if lstm else None
    for step in reversed(range(len(cache["steps"]))):
        step_active = active[:, step : step + 1]
        if lstm:
            h_prev, c_prev, gi, gf, gg, go, c_new, drop = cache["steps"][step]
            dh_cell = np.where(step_active, dh, 0.0)
            dc_cell = np.where(step_active, dc, 0.0)
            if drop is not None:
                dh_cell = dh_cell * drop
            tanh_c = np.tanh(c_new)
            d_go = dh_cell * tanh_c
            dc_cell = dc_cell + dh_cell * go * (1.0 - tanh_c * tanh_c)
            d_gi = dc_cell * gg
            d_gf = dc_cell * c_prev
            d_gg = dc_cell * gi
            d_gates = np.concatenate(
                [
                    d_gi * gi * (1.0 - gi),
                    d_gf * gf * (1.0 - gf),
                    d_gg * (1.0 - gg * gg),
                    d_go * go * (1.0 - go),
                ],
                axis=1,
            )
            dc = np.where(step_active, dc_cell * gf, dc)
            dh_prev = d_gates @ wh.T
        else:
            h_prev, gr, gz, gn, rh, drop = cache["steps"][step]
            dh_cell = np.where(step_active, dh, 0.0)
            if drop is not None:
                dh_cell = dh_cell * drop
            d_gn = dh_cell * (1.0 - gz)
            d_gz = dh_cell * (h_prev - gn)
            dh_prev = dh_cell * gz
            d_zn = d_gn * (1.0 - gn * gn)
            d_rh = d_zn @ wh[:, 2 * h_dim :].T
            d_gr = d_rh * h_prev
            dh_prev = dh_prev + d_rh * gr
            d_gates = np.concatenate(
                [d_gr * gr * (1.0 - gr), d_gz * gz * (1.0 - gz), d_zn], axis=1
            )
            # the n-column of wh multiplies r*h, not h
            dh_prev = dh_prev + d_gates[:, : 2 * h_dim] @ wh[:, : 2 * h_dim].T

        e = t["embedding"][ids[:, step]]
        grads["rnn_wx"] += e.T @ d_gates
        if lstm:
            grads["rnn_wh"] += h_prev.T @ d_gates
        else:
            grads["rnn_wh"][:, : 2 * h_dim] += h_prev.T @ d_gates[:, : 2 * h_dim]
            grads["rnn_wh"][:, 2 * h_dim :] += rh.T @ d_zn
        grads["rnn_b"] += d_gates.sum(axis=0)
        d_e = d_gates @ wx.T
        np.add.at(grads["embedding"], ids[:, step], d_e)

        dh = np.where(step_active, dh_prev, dh)

    return value, grads


# ---------------------------------------------------------------------------
# Filtering and prediction
# ---------------------------------------------------------------------------

def apply_filter(dist: PredictionDistribution, mask: np.ndarray) -> PredictionDistribution:
    """Zero out masked-off moves and renormalize what survives."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != dist.probs.shape:
        raise ValueError(f"mask shape {mask.shape} != distribution shape {dist.probs.shape}")
    if not mask.any():
        raise NoLegalMove("every move is masked off")
    kept = np.where(mask, dist.probs, 0.0)
    total = kept.sum()
    if total <= 0:
        # softmax underflow can zero every legal entry; fall back to uniform
        kept = mask.astype(dist.probs.dtype)
        total = kept.sum()
    return PredictionDistribution(kept / total, filtered=True)


def sample_index(dist: PredictionDistribution, rng: np.random.Generator) -> int:
    """Draw one class index; renormalizes so float dust cannot break choice."""
    p = dist.probs / dist.probs.sum()
    return int(rng.choice(len(p), p=p))


def predict(
    params: ModelParameters,
    config: StructureConfig,
    history: Sequence[Union[MoveToken, int]],
    state: GameState,
    policy: str = "argmax",
    seed: Optional[int] = None,
    vocabulary: Optional[MoveVocabulary] = None,
) -> MoveToken:
    """Choose the next move for `state`, which `history` must lead to.

    The distribution is always filtered to the locally legal mask, so the
    prediction can never be an impossible move.  `argmax` breaks ties
    toward the lowest vocabulary index; `sample` draws from the filtered
    distribution deterministically in `seed`.
    """
    vocab = vocabulary if vocabulary is not None else enumerate_vocabulary()
    indices = [tok if isinstance(tok, int) else vocab.encode(tok) for tok in history]
    if config.m is not None:
        indices = indices[-config.m :]
    dist = forward(params, config, indices)
    filtered = apply_filter(dist, locally_legal_mask(state, vocab))
    if policy == "argmax":
        choice = int(np.argmax(filtered.probs))
    elif policy == "sample":
        choice = sample_index(filtered, np.random.default_rng(seed))
    else:
        raise ValueError(f"policy must be argmax or sample, got {policy!r}")
    return vocab.decode(choice)
