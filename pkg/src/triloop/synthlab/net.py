"""A small ReLU network with a heteroscedastic Laplace head.

The network maps an observation vector to a location vector mu and a
strictly positive scale vector b.  Forward, loss, and the full backward
pass are written out by hand in numpy; gradient correctness is covered
by a finite-difference check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Divergence, NonPositiveScale, ShapeMismatch

SCALE_EPS = 1e-3


def _softplus(u: np.ndarray) -> np.ndarray:
    # log(1 + exp(u)) without overflow for large |u|
    return np.logaddexp(0.0, u)


def _sigmoid(u: np.ndarray) -> np.ndarray:
    # stable in both tails
    return 0.5 * (1.0 + np.tanh(0.5 * u))


@dataclass
class NetParams:
    """Weights and biases, one entry per linear layer.

    Weight i has shape (fan_in_i, fan_out_i); the final fan_out is 2d,
    split into the mu and raw-scale heads.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        # half of the final layer feeds mu, half the raw scale
        return self.weights[-1].shape[1] // 2

    def copy(self) -> "NetParams":
        return NetParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat_iter(self):
        """Yield every parameter array, weights then bias per layer."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


def init_params(d: int, hidden: tuple[int, ...], rng: np.random.Generator) -> NetParams:
    """Per-layer uniform initialization in +-1/sqrt(fan_in)."""
    sizes = [d, *hidden, 2 * d]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return NetParams(weights, biases)


def _forward_cache(params: NetParams, y: np.ndarray):
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [y]
    h = y
    last = len(params.weights) - 1
    for i, (w, bias) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + bias
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        post.append(h)
    d = params.d_out
    mu = h[:, :d]
    raw = h[:, d:]
    b = _softplus(raw) + SCALE_EPS
    return mu, raw, b, pre, post


def forward(params: NetParams, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map observations to (mu, b); both have shape (batch, d)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != params.d_in:
        raise ShapeMismatch(
            f"expected shape (batch, {params.d_in}), got {y.shape}"
        )
    mu, _, b, _, _ = _forward_cache(params, y)
    return mu, b


def laplace_nll(x: np.ndarray, mu: np.ndarray, b: np.ndarray, reduction: str = "mean") -> float:
    """Negative log likelihood of x under Laplace(mu, b).

    "mean" averages the per-coordinate terms over samples and
    dimensions; "sum" keeps the per-sample sum over dimensions and
    averages over samples only.
    """
    if x.shape != mu.shape or mu.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape}, {mu.shape}, {b.shape}")
    if np.any(b <= 0):
        raise NonPositiveScale("scale entries must be strictly positive")
    per_coord = np.log(2.0 * b) + np.abs(x - mu) / b
    if reduction == "mean":
        return float(per_coord.mean())
    if reduction == "sum":
        return float(per_coord.sum(axis=1).mean())
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_and_grads(
    params: NetParams,
    x: np.ndarray,
    y: np.ndarray,
    reduction: str = "mean",
    coord_mask: np.ndarray | None = None,
):
    """Masked loss and analytic gradients for every parameter.

    ``coord_mask`` selects which (sample, dimension) terms contribute;
    the gradient check uses it to sidestep the absolute-value kink.
    Returns (loss, grad_weights, grad_biases).
    """
    n, d = x.shape
    mu, raw, b, pre, post = _forward_cache(params, y)
    if coord_mask is None:
        coord_mask = np.ones_like(x)
    if reduction == "mean":
        denom = float(coord_mask.sum())
        if denom == 0.0:
            denom = 1.0
    elif reduction == "sum":
        denom = float(n)
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    scale = coord_mask / denom
    per_coord = np.log(2.0 * b) + np.abs(x - mu) / b
    loss = float((per_coord * scale).sum())

    r = x - mu
    dmu = -np.sign(r) / b * scale
    db = (1.0 / b - np.abs(r) / b**2) * scale
    draw = db * _sigmoid(raw)
    delta = np.concatenate([dmu, draw], axis=1)

    grad_w: list[np.ndarray] = [None] * len(params.weights)
    grad_b: list[np.ndarray] = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = post[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0.0)
    return loss, grad_w, grad_b


def train(
    params: NetParams,
    x: np.ndarray,
    y: np.ndarray,
    *,
    lr: float = 1e-3,
    batch: int = 128,
    epochs: int = 50,
    rng: np.random.Generator | None = None,
    reduction: str = "mean",
    beta1: float = 0.9,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> NetParams:
    """Adaptive-moment minimization of the likelihood loss, in place.

    Samples are reshuffled every epoch with ``rng``; a non-finite batch
    loss raises :class:`Divergence`.
    """
    if len(x) == 0:
        raise ShapeMismatch("training data must be non-empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    arrays = list(params.flat_iter())
    m = [np.zeros_like(a) for a in arrays]
    v = [np.zeros_like(a) for a in arrays]
    step = 0
    n = len(x)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grad_w, grad_b = loss_and_grads(params, x[idx], y[idx], reduction)
            if not np.isfinite(loss):
                raise Divergence(f"non-finite loss at step {step}")
            grads = []
            for gw, gb in zip(grad_w, grad_b):
                grads.append(gw)
                grads.append(gb)
            step += 1
            correct1 = 1.0 - beta1**step
            correct2 = 1.0 - beta2**step
            for a, g, mi, vi in zip(arrays, grads, m, v):
                mi *= beta1
                mi += (1.0 - beta1) * g
                vi *= beta2
                vi += (1.0 - beta2) * g * g
                a -= lr * (mi / correct1) / (np.sqrt(vi / correct2) + adam_eps)
    return params


def grad_check(
    params: NetParams,
    x: np.ndarray,
    y: np.ndarray,
    h: float = 1e-5,
    kink_tol: float = 1e-4,
) -> float:
    """Max relative error of analytic gradients vs central differences.

    Coordinates sitting within ``kink_tol`` of the absolute-value kink
    at the unperturbed point are excluded from the loss on both sides,
    so the finite difference never straddles the non-differentiable
    point.
    """
    mu, _, _, _, _ = _forward_cache(params, y)
    mask = (np.abs(x - mu) >= kink_tol).astype(float)
    _, grad_w, grad_b = loss_and_grads(params, x, y, "mean", coord_mask=mask)
    analytic = []
    for gw, gb in zip(grad_w, grad_b):
        analytic.append(gw)
        analytic.append(gb)

    worst = 0.0
    for arr, grad in zip(params.flat_iter(), analytic):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + h
            up, _, _ = loss_and_grads(params, x, y, "mean", coord_mask=mask)
            flat[j] = saved - h
            down, _, _ = loss_and_grads(params, x, y, "mean", coord_mask=mask)
            flat[j] = saved
            fd = (up - down) / (2.0 * h)
            rel = abs(gflat[j] - fd) / max(abs(gflat[j]), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
