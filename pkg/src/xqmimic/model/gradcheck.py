"""Finite-difference verification of the analytic gradients.

Runs at 64-bit with dropout switched off (finite differencing a
stochastic function is meaningless) but otherwise in training mode, so
the batch-statistics path of batch norm is exercised.  Central
differences over a random sample of parameters; the probe width 1e-5
puts the truncation error around 1e-10, far below the 1e-4 acceptance
bound, so any excess points at the backward pass, not the probe.

One caveat: ReLU is not differentiable at zero.  A probe that pushes a
pre-activation across that kink measures a blend of the two one-sided
slopes, not a derivative, so such probes say nothing about the backward
pass.  Each probe therefore records the sign pattern of every ReLU
input at +h and -h; if the patterns differ the component is skipped.
The kink set has measure zero, so this drops at most a couple of the
sampled components.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .config import StructureConfig
from .network import _cross_entropy, _forward, _regularization, build, loss_and_grads

PROBE = 1e-5


def _loss_and_relu_signs(params, config, xs, ys):
    """Training-mode loss plus the sign pattern at every ReLU input."""
    probs, cache = _forward(params, config, xs, "train", None, keep=True)
    value = _cross_entropy(probs, np.asarray(ys)) + _regularization(params, config)
    signs = []
    if config.rnn_activation == "ReLU":
        signs.append(np.signbit(cache["z_act"]).ravel())
    if config.fc_activation == "ReLU":
        for _, z, _, _ in cache["fc"]:
            signs.append(np.signbit(z).ravel())
    return value, np.concatenate(signs) if signs else None


def gradient_check(
    config: StructureConfig,
    seed: int = 0,
    *,
    samples: int = 220,
    hidden: int = 12,
    embed_dim: int = 10,
    vocab_size: int = 29,
    batch: int = 5,
) -> float:
    """Max relative error between analytic and numeric gradients.

    The width/embedding overrides keep the probe cheap; the structure
    under test (cell kind, activations, batch norm, layer count) is
    exactly the one configured.
    """
    config = config.replace(rnn_dropout=0.0, fc_dropout=0.0)
    params = build(config, vocab_size, seed, hidden=hidden, embed_dim=embed_dim, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)

    lengths = [0, 1, 2, 3, 5][:batch] + [3] * max(0, batch - 5)
    limit = config.m if config.m is not None else 5
    xs = [rng.integers(0, vocab_size, size=min(n, limit)) for n in lengths]
    ys = rng.integers(0, vocab_size, size=len(xs))

    _, grads = loss_and_grads(params, config, xs, ys, mode="train")

    flat: list[tuple[str, int]] = []
    for name, g in grads.items():
        flat.extend((name, i) for i in range(g.size))
    picks = rng.choice(len(flat), size=min(samples, len(flat)), replace=False)

    worst = 0.0
    checked = 0
    for pick in picks:
        name, i = flat[pick]
        tensor = params.tensors[name]
        original = tensor.flat[i]
        tensor.flat[i] = original + PROBE
        up, signs_up = _loss_and_relu_signs(params, config, xs, ys)
        tensor.flat[i] = original - PROBE
        down, signs_down = _loss_and_relu_signs(params, config, xs, ys)
        tensor.flat[i] = original
        if signs_up is not None and not np.array_equal(signs_up, signs_down):
            continue  # probe straddles a kink; nothing to compare against
        checked += 1
        numeric = (up - down) / (2 * PROBE)
        analytic = grads[name].flat[i]
        # the floor is the probe's own noise level: cancellation in
        # up-down caps measurable components at roughly ulp(loss)/2h
        scale = max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic - numeric) / scale)
    if checked < samples * 3 // 4:
        raise RuntimeError(f"only {checked} of {len(picks)} probes were kink-free")
    return worst


def check_all_structures(seed: int = 0, kinds: Optional[list[str]] = None) -> dict[str, float]:
    """Gradient-check every cell kind x batch-norm x FC-activation combination."""
    from .config import ACTIVATIONS, RNN_KINDS

    results = {}
    for kind in kinds or RNN_KINDS:
        for bn in (True, False):
            for fc_act in ACTIVATIONS:
                cfg = StructureConfig(
                    rnn_kind=kind, batch_norm=bn, fc_activation=fc_act, num_fc=2
                )
                label = f"{kind}/bn={'on' if bn else 'off'}/{fc_act}"
                results[label] = gradient_check(cfg, seed)
    return results
