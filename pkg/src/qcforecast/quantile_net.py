"""Marginal generative quantile function and its learned inverse.

The forward net maps a normal score z* plus a context vector to a target
value; sweeping z* over normal quantiles traces the whole conditional
quantile curve, and feeding z* ~ N(0,1) turns the same net into a sampler.
The inverse net maps (value, context) back to a score estimate and is fitted
on (prediction, score) pairs that the forward pass produces for free.

Training draws a fresh quantile index u per observation per epoch, uses u as
the pinball-loss weight and its normal score as the network input, and adds
the score-reconstruction penalty for the inverse net. Reconstruction
gradients never reach the forward net: the generated pair is treated as
fixed ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ShapeError, TrainingDivergedError
from .optim import MomentumSgd


@dataclass
class TrainConfig:
    """Knobs for the gradient-descent loops.

    Phase 1 (marginals) runs minibatch SGD with momentum and a cosine-decayed
    step. Phase 2 (copula) runs full-batch plain gradient descent on the
    precomputed scores, so its epoch losses decrease monotonically;
    ``batch_size`` and ``momentum`` apply to phase 1 only.
    """

    learning_rate: float = 0.02
    epochs: int = 200
    batch_size: int = 64
    recon_weight: float = 1.0
    momentum: float = 0.9
    seed: int = 0
    u_margin: float = 1e-4
    weight_decay: float = 1e-4
    embed_dropout: float = 0.5
    inverse_polish_epochs: int = 400
    inverse_learning_rate: float = 0.1
    copula_learning_rate: float = 0.05
    copula_epochs: int = 600
    freeze_marginals: bool = True

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0 < self.u_margin < 0.5:
            raise ValueError(f"u_margin must lie in (0, 0.5), got {self.u_margin}")
        if not 0.0 <= self.embed_dropout < 1.0:
            raise ValueError(f"embed_dropout must lie in [0, 1), got {self.embed_dropout}")
        if self.inverse_polish_epochs < 0:
            raise ValueError(
                f"inverse_polish_epochs must be nonnegative, got {self.inverse_polish_epochs}")


class Mlp:
    """Plain fully-connected tanh net over the package's autodiff ops."""

    def __init__(self, sizes: list[int], rng: nm.RngState):
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, fan_in * fan_out).reshape(fan_in, fan_out)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def apply(self, x, params: list | None = None):
        """Forward pass; ``params`` may substitute tape-wrapped leaves."""
        ps = params if params is not None else self.parameters()
        h = x
        n_layers = len(self.weights)
        for i in range(n_layers):
            w, b = ps[2 * i], ps[2 * i + 1]
            h = nm.add(nm.matmul(h, w), nm.reshape(b, (1, -1)))
            if i < n_layers - 1:
                h = nm.tanh(h)
        return h


class QuantileNet:
    """Forward generator and inverse score net sharing one context layout.

    ``center``/``scale`` hold the robust standardization applied to targets
    during stand-alone training; the multi-horizon model keeps them at (0, 1)
    and standardizes per series instead.
    """

    def __init__(self, c_dim: int, hidden: tuple[int, int] = (64, 64), seed: int = 0):
        if c_dim < 0:
            raise ValueError(f"context width must be nonnegative, got {c_dim}")
        self.c_dim = int(c_dim)
        self.hidden = tuple(hidden)
        sizes = [1 + self.c_dim, *self.hidden, 1]
        root = nm.RngState(seed)
        self.forward_net = Mlp(sizes, root.spawn(1))
        self.inverse_net = Mlp(sizes, root.spawn(2))
        # identity skips on the score/value input: tanh stacks flatten extreme
        # quantiles, so the nets model deviations from a unit-slope base
        self.forward_skip = np.ones(())
        self.inverse_skip = np.ones(())
        self.center = 0.0
        self.scale = 1.0

    def forward_parameters(self) -> list[np.ndarray]:
        return self.forward_net.parameters() + [self.forward_skip]

    def inverse_parameters(self) -> list[np.ndarray]:
        return self.inverse_net.parameters() + [self.inverse_skip]

    def parameters(self) -> list[np.ndarray]:
        return self.forward_parameters() + self.inverse_parameters()

    def _check_context(self, context: np.ndarray) -> np.ndarray:
        context = np.atleast_2d(np.asarray(context, dtype=np.float64))
        if context.shape[-1] != self.c_dim:
            raise ShapeError(
                f"context width {context.shape[-1]} does not match net c_dim {self.c_dim}"
            )
        return context

    def predict_values(self, z_star: np.ndarray, contexts: np.ndarray,
                       params: list | None = None):
        """Vectorized forward pass; ``params`` (mlp weights + skip, from
        forward_parameters) keeps the result in standardized space."""
        z = np.asarray(z_star, dtype=np.float64).reshape(-1, 1)
        x = np.concatenate([z, contexts], axis=1)
        mlp_params, skip = (None, self.forward_skip) if params is None \
            else (params[:-1], params[-1])
        out = self.forward_net.apply(x, mlp_params)
        out = nm.add(nm.reshape(out, (-1,)), nm.mul(skip, z.reshape(-1)))
        if params is None:
            return nm.value_of(out) * self.scale + self.center
        return out

    def predict_scores(self, y: np.ndarray, contexts: np.ndarray,
                       params: list | None = None):
        """Vectorized inverse pass; expects values in original units unless
        ``params`` (inverse_parameters) marks a standardized training call."""
        if params is None:
            ys = (np.asarray(y, dtype=np.float64).reshape(-1, 1) - self.center) / self.scale
        else:
            ys = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        mlp_params, skip = (None, self.inverse_skip) if params is None \
            else (params[:-1], params[-1])
        out = self.inverse_net.apply(x := np.concatenate([ys, contexts], axis=1), mlp_params)
        return nm.add(nm.reshape(out, (-1,)), nm.mul(skip, ys.reshape(-1)))


def quantile_loss(u: float, y: float, y_hat: float) -> float:
    """Pinball loss u*(y - y_hat)_+ + (1-u)*(y_hat - y)_+, zero at the kink."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile index must lie in (0, 1), got {u}")
    diff = y - y_hat
    return u * max(diff, 0.0) + (1.0 - u) * max(-diff, 0.0)


def pinball(u, y, y_hat):
    """Vectorized pinball loss; ``u`` and ``y`` are constants, ``y_hat`` may
    be a recorded tensor (subgradient 0 at the kink via relu)."""
    under = nm.relu(nm.sub(y, y_hat))
    over = nm.relu(nm.sub(y_hat, y))
    return nm.add(nm.mul(u, under), nm.mul(1.0 - u, over))


def forward_quantile(net: QuantileNet, z_star: float, context) -> float:
    """Value of the learned quantile curve at normal score z*, one context."""
    ctx = net._check_context(context)
    return float(nm.value_of(net.predict_values(np.array([z_star]), ctx))[0])


def inverse_quantile(net: QuantileNet, y: float, context) -> float:
    """Estimated normal score of observing ``y`` under the given context."""
    ctx = net._check_context(context)
    return float(nm.value_of(net.predict_scores(np.array([y]), ctx))[0])


MAD_CONSISTENCY = 1.4826  # E[MAD] -> sd for normal data


def robust_standardization(y: np.ndarray, floor: float = 1e-6) -> tuple[float, float]:
    """Median center and consistency-scaled MAD for heavy-tailed targets;
    unit-ish residual scale keeps the score inputs in the nets' linear range."""
    center = float(np.median(y))
    scale = MAD_CONSISTENCY * float(np.median(np.abs(y - center)))
    return center, max(scale, floor)


def train_marginal(net: QuantileNet, contexts: np.ndarray, targets: np.ndarray,
                   cfg: TrainConfig) -> dict[str, list[float]]:
    """Fit the forward and inverse nets jointly by minibatch SGD.

    Per epoch every observation gets a fresh quantile index u; u weights the
    pinball loss while its normal score enters the forward net. The inverse
    net regresses the score from the (detached) prediction and context.
    Returns per-epoch average pinball and reconstruction losses.
    """
    cfg.validate()
    contexts = net._check_context(contexts)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(targets) == 0:
        raise ValueError("training requires a non-empty dataset")
    if len(targets) != len(contexts):
        raise ShapeError(f"{len(contexts)} contexts vs {len(targets)} targets")

    net.center, net.scale = robust_standardization(targets)
    y_std = (targets - net.center) / net.scale

    data_rng = nm.RngState(cfg.seed).spawn(101)
    n = len(targets)
    opt = MomentumSgd(net.parameters(), cfg.learning_rate, cfg.epochs, cfg.momentum)
    history: dict[str, list[float]] = {"l1": [], "l2": []}

    for epoch in range(cfg.epochs):
        order = data_rng.permutation(n)
        u_all = data_rng.uniform(cfg.u_margin, 1.0 - cfg.u_margin, n)
        z_all = nm.normal_quantile_array(u_all)
        sum_l1 = 0.0
        sum_l2 = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            l1v, l2v = _marginal_step(net, contexts[idx], y_std[idx],
                                      u_all[idx], z_all[idx], cfg, opt, epoch)
            sum_l1 += l1v * len(idx)
            sum_l2 += l2v * len(idx)
        mean_l1 = sum_l1 / n
        mean_l2 = sum_l2 / n
        if not (math.isfinite(mean_l1) and math.isfinite(mean_l2)):
            raise TrainingDivergedError("marginal", epoch, mean_l1)
        history["l1"].append(mean_l1)
        history["l2"].append(mean_l2)
    return history


def _marginal_step(net, ctx, y_std, u, z_star, cfg, opt, epoch):
    tape = nm.Tape()
    leaves = [tape.var(p) for p in opt.params]
    n_fwd = len(net.forward_parameters())

    y_hat = net.predict_values(z_star, ctx, params=leaves[:n_fwd])
    l1 = nm.reduce_mean(pinball(u, y_std, y_hat))

    # detached pair (prediction, score): reconstruction trains the inverse only
    y_hat_fixed = nm.value_of(y_hat)
    z_hat = net.predict_scores(y_hat_fixed, ctx, params=leaves[n_fwd:])
    resid = nm.sub(z_hat, z_star)
    l2 = nm.reduce_mean(nm.mul(resid, resid))

    loss = nm.add(l1, nm.mul(cfg.recon_weight, l2))
    tape.backward(loss)
    opt.step([leaf.grad_value for leaf in leaves], epoch)
    return float(nm.value_of(l1)), float(nm.value_of(l2))
