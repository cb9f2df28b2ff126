"""Training objectives and the AMSGrad optimizer.

The triplet loss mines the hardest positive and hardest negative per anchor
inside an identity-balanced batch and sums hinge terms over all anchors.
For aggregation training the caller passes d = -s, so larger learned
similarity means smaller distance.

AMSGrad follows the original formulation: no bias correction, a running
entrywise maximum of the second moment, and coupled L2 weight decay added
to the gradient before the moment updates.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalError


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 1.0
    distance_source: str = "negative-learned-similarity"

    def __post_init__(self):
        if not np.isfinite(self.margin) or self.margin < 0:
            raise InvalidArgumentError("margin must be finite and >= 0")
        if self.distance_source not in ("euclidean-on-embeddings", "negative-learned-similarity"):
            raise InvalidArgumentError(f"unknown distance source {self.distance_source!r}")


def triplet_hard_loss(dists, labels, margin):
    """Batch-hard triplet loss summed over anchors.

    Returns (loss, gradient w.r.t. the distance matrix). The subgradient
    flows only through each anchor's selected hardest positive and hardest
    negative, and only when the hinge is active. Anchors whose identity has
    no other sample contribute nothing (with a warning).
    """
    d = np.asarray(dists, dtype=np.float64)
    labels = np.asarray(labels)
    n = d.shape[0]
    if d.ndim != 2 or d.shape != (n, n) or labels.shape != (n,):
        raise InvalidArgumentError("need a square distance matrix and matching labels")
    if not np.all(np.isfinite(d)):
        raise InvalidArgumentError("non-finite distances")
    if len(np.unique(labels)) < 2:
        raise InvalidArgumentError("triplet loss needs at least two identities in the batch")

    loss = 0.0
    grad = np.zeros_like(d)
    warned = False
    for i in range(n):
        same = labels == labels[i]
        same_others = same.copy()
        same_others[i] = False
        if not same_others.any():
            if not warned:
                warnings.warn(f"anchor {i} has no positive in batch; it contributes no loss")
                warned = True
            continue
        pos_idx = np.where(same_others)[0]
        neg_idx = np.where(~same)[0]
        jp = pos_idx[np.argmax(d[i, pos_idx])]
        jn = neg_idx[np.argmin(d[i, neg_idx])]
        term = margin + d[i, jp] - d[i, jn]
        if term > 0:
            loss += term
            grad[i, jp] += 1.0
            grad[i, jn] -= 1.0
    return float(loss), grad


def softmax_ce_loss(logits, labels):
    """Cross-entropy summed over the batch; gradient is softmax minus one-hot."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidArgumentError("logits must be a non-empty (N, C) matrix")
    n, c = z.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= c:
        raise InvalidArgumentError("labels must be integers in [0, C)")
    shift = z - z.max(axis=1, keepdims=True)
    log_probs = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(n), labels].sum())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad


class OptimizerState:
    """AMSGrad moments per parameter tensor, keyed like the params dict."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=5e-4):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.vhat = {k: np.zeros_like(v) for k, v in params.items()}


def amsgrad_step(params, grads, state: OptimizerState, lr):
    """One in-place parameter update; raises (state untouched) on NaN grads."""
    if set(grads) != set(params):
        raise InvalidArgumentError("gradient keys do not match parameter keys")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise InvalidArgumentError(f"gradient {k} shape {g.shape} != param {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {k}")

    b1, b2 = state.beta1, state.beta2
    for k in params:
        g = grads[k] + state.weight_decay * params[k]
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        state.vhat[k] = np.maximum(state.vhat[k], state.v[k])
        params[k] -= lr * state.m[k] / (np.sqrt(state.vhat[k]) + state.eps)
    state.step_count += 1
    return params


def lr_schedule(epoch, initial_lr, decay_epochs, factor=10.0):
    """Piecewise-constant decade decay: divide by `factor` at each boundary."""
    if epoch < 0:
        raise InvalidArgumentError("epoch must be >= 0")
    if initial_lr <= 0 or factor <= 0:
        raise InvalidArgumentError("initial_lr and factor must be > 0")
    drops = sum(1 for b in decay_epochs if epoch >= b)
    return initial_lr / factor**drops
