"""Importance-scoring network g: forward, exact backward, checkpoint I/O.

Architecture, for input dimension D and hidden width H:

    linear(D, H) -> ReLU -> dropout(p) -> batchnorm
    linear(H, H) -> ReLU -> dropout(p) -> batchnorm
    linear(H, 1) -> softplus

Dropout is inverted (activations scaled by 1/(1-p) at train time) and
batch-norm uses biased batch variance in train mode, running statistics in
eval mode. The backward pass returns input gradients as well as parameter
gradients so callers can propagate through the aggregation recurrence.
"""

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .errors import InvalidArgumentError, ManifestError

BN_EPS = 1e-5


def softplus(x):
    """log(1 + exp(x)) in the overflow-safe form max(x,0) + log1p(exp(-|x|)).

    exp underflow would return exactly 0 below x ~ -745; clamp to the
    smallest positive normal so scores stay strictly positive.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return np.maximum(out, np.finfo(np.float64).tiny)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def kaiming_uniform(fan_in, shape, rng):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ScoringTape:
    """Activations cached by one forward pass, consumed by backward."""

    mode: str
    x: np.ndarray
    blocks: list  # per hidden block: dict of cached arrays
    h2: np.ndarray
    s: np.ndarray


class ScoringNet:
    """Two-hidden-layer scorer producing one positive scalar per input row."""

    def __init__(self, in_dim, hidden=1024, dropout_p=0.5, bn_momentum=0.1, rng=None):
        if in_dim < 1 or hidden < 1:
            raise InvalidArgumentError("in_dim and hidden must be >= 1")
        if not 0.0 <= dropout_p < 1.0:
            raise InvalidArgumentError("dropout_p must lie in [0, 1)")
        self.in_dim = in_dim
        self.hidden = hidden
        self.dropout_p = dropout_p
        self.bn_momentum = bn_momentum
        self.mode = "eval"
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "w1": kaiming_uniform(in_dim, (in_dim, hidden), rng),
            "b1": np.zeros(hidden),
            "g1": np.ones(hidden),
            "beta1": np.zeros(hidden),
            "w2": kaiming_uniform(hidden, (hidden, hidden), rng),
            "b2": np.zeros(hidden),
            "g2": np.ones(hidden),
            "beta2": np.zeros(hidden),
            "w3": kaiming_uniform(hidden, (hidden,), rng),
            "b3": np.zeros(1),
        }
        self.running = {
            "rm1": np.zeros(hidden),
            "rv1": np.ones(hidden),
            "rm2": np.zeros(hidden),
            "rv2": np.ones(hidden),
        }

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def _block_forward(self, x, idx, rng, update_running=True):
        p = self.params
        w, b = p[f"w{idx}"], p[f"b{idx}"]
        gamma, beta = p[f"g{idx}"], p[f"beta{idx}"]
        z = x @ w + b
        a = np.maximum(z, 0.0)

        if self.mode == "train":
            mask = rng.random(a.shape) >= self.dropout_p
            d = a * mask / (1.0 - self.dropout_p)
            mu = d.mean(axis=0)
            var = d.var(axis=0)  # biased, matches the running-stat update
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (d - mu) * inv_std
            if update_running:
                m = self.bn_momentum
                self.running[f"rm{idx}"] = (1 - m) * self.running[f"rm{idx}"] + m * mu
                self.running[f"rv{idx}"] = (1 - m) * self.running[f"rv{idx}"] + m * var
        else:
            mask = None
            d = a
            inv_std = 1.0 / np.sqrt(self.running[f"rv{idx}"] + BN_EPS)
            xhat = (d - self.running[f"rm{idx}"]) * inv_std
        out = gamma * xhat + beta
        cache = {"x": x, "z": z, "mask": mask, "xhat": xhat, "inv_std": inv_std}
        return out, cache

    def forward(self, x, rng=None, update_running=True):
        """Score a batch of rows: returns (alphas shape (B,), tape)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InvalidArgumentError(f"expected input of shape (B, {self.in_dim}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("non-finite entries in scorer input")
        if self.mode == "train":
            if x.shape[0] < 2:
                raise InvalidArgumentError("train-mode batch must have >= 2 rows for batch-norm")
            if rng is None:
                raise InvalidArgumentError("train-mode forward needs an rng for dropout")

        h1, c1 = self._block_forward(x, 1, rng, update_running)
        h2, c2 = self._block_forward(h1, 2, rng, update_running)
        s = h2 @ self.params["w3"] + self.params["b3"][0]
        alphas = softplus(s)
        tape = ScoringTape(mode=self.mode, x=x, blocks=[c1, c2], h2=h2, s=s)
        return alphas, tape

    def _block_backward(self, dy, idx, cache, grads):
        p = self.params
        gamma = p[f"g{idx}"]
        xhat, inv_std, mask, z, x = (
            cache["xhat"],
            cache["inv_std"],
            cache["mask"],
            cache["z"],
            cache["x"],
        )
        grads[f"g{idx}"] = (dy * xhat).sum(axis=0)
        grads[f"beta{idx}"] = dy.sum(axis=0)
        dxhat = dy * gamma
        if mask is not None:  # train mode: batch statistics depend on every row
            b = dy.shape[0]
            dd = (inv_std / b) * (
                b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
            )
            da = dd * mask / (1.0 - self.dropout_p)
        else:
            dd = dxhat * inv_std
            da = dd
        dz = da * (z > 0)
        grads[f"w{idx}"] = x.T @ dz
        grads[f"b{idx}"] = dz.sum(axis=0)
        return dz @ p[f"w{idx}"].T

    def backward(self, tape: ScoringTape, dalphas):
        """Gradients of sum(dalphas * alphas) w.r.t. parameters and inputs."""
        dalphas = np.asarray(dalphas, dtype=np.float64)
        if dalphas.shape != tape.s.shape:
            raise InvalidArgumentError(
                f"upstream gradient shape {dalphas.shape} != batch shape {tape.s.shape}"
            )
        if tape.x.shape[1] != self.in_dim or tape.h2.shape[1] != self.hidden:
            raise InvalidArgumentError("tape shapes do not match this net")
        ds = dalphas * sigmoid(tape.s)
        grads = {
            "w3": tape.h2.T @ ds,
            "b3": np.array([ds.sum()]),
        }
        dh2 = np.outer(ds, self.params["w3"])
        dh1 = self._block_backward(dh2, 2, tape.blocks[1], grads)
        dx = self._block_backward(dh1, 1, tape.blocks[0], grads)
        return grads, dx

    def zero_like_params(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def state_tensors(self):
        out = dict(self.params)
        out.update(self.running)
        return out

    def save(self, path, extra=None):
        meta = {
            "kind": "scoring_net",
            "in_dim": self.in_dim,
            "hidden": self.hidden,
            "dropout_p": self.dropout_p,
            "bn_momentum": self.bn_momentum,
            "extra": extra or {},
        }
        checkpoint.write_tensors(path, self.state_tensors(), meta)

    @classmethod
    def load(cls, path):
        tensors, meta = checkpoint.read_tensors(path)
        if meta.get("kind") != "scoring_net":
            raise ManifestError(f"{path}: checkpoint kind {meta.get('kind')!r}, expected scoring_net")
        net = cls(
            in_dim=int(meta["in_dim"]),
            hidden=int(meta["hidden"]),
            dropout_p=float(meta["dropout_p"]),
            bn_momentum=float(meta["bn_momentum"]),
        )
        for k in net.params:
            if k not in tensors or tensors[k].shape != net.params[k].shape:
                raise ManifestError(f"{path}: tensor {k} missing or mis-shaped")
            net.params[k] = tensors[k]
        for k in net.running:
            if k not in tensors or tensors[k].shape != net.running[k].shape:
                raise ManifestError(f"{path}: tensor {k} missing or mis-shaped")
            net.running[k] = tensors[k]
        return net
