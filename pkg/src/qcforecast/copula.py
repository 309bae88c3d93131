"""Conditional Gaussian copula over forecast horizons.

The copula is parameterized directly by a lower-triangular factor L with
positive diagonal and unit row norms, so L L^T is a correlation matrix and no
explicit Cholesky decomposition is ever needed. Sampling pushes independent
normals through L and the normal CDF; likelihood needs only a triangular
solve and the log of the diagonal. A guardrail keeps the factor
well-conditioned during training: the raw diagonal is clipped at 1,
off-diagonals pass through tanh, and each row is scaled to unit l2 norm.
"""

from __future__ import annotations

import math

import numpy as np

from . import numerics as nm
from .errors import ShapeError, TrainingDivergedError
from .optim import MomentumSgd
from .quantile_net import Mlp, QuantileNet, TrainConfig

# Inverse nets can emit extreme scores on data far outside what they saw;
# 8 sigma keeps the likelihood finite without touching realistic values.
SCORE_CLAMP = 8.0


class CopulaFactor:
    """Validated lower-triangular factor of a correlation matrix."""

    def __init__(self, L: np.ndarray):
        L = np.asarray(L, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ShapeError(f"factor must be square, got shape {L.shape}")
        d = L.shape[0]
        if np.any(L[np.triu_indices(d, k=1)] != 0.0):
            raise ValueError("factor has nonzero entries above the diagonal")
        if np.any(np.diag(L) <= 0.0):
            raise ValueError("factor diagonal must be strictly positive")
        row_norms = np.linalg.norm(L, axis=1)
        if np.max(np.abs(row_norms - 1.0)) > 1e-10:
            raise ValueError("factor rows must have unit l2 norm")
        self.L = L

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    def correlation(self) -> np.ndarray:
        return self.L @ self.L.T


def _factor_matrix(L) -> np.ndarray:
    if isinstance(L, CopulaFactor):
        return L.L
    return nm.value_of(L)


def constrain_lower(raw_diag, raw_offdiag):
    """Differentiable guardrail: clip diag at 1, tanh off-diagonals, unit rows.

    Accepts [..., d] diagonals with [..., d(d-1)/2] packed strictly-lower
    entries and returns [..., d, d] factors.
    """
    d_vals = nm.clip_min(raw_diag, 1.0)
    o_vals = nm.tanh(raw_offdiag)
    L = nm.assemble_lower_tri(d_vals, o_vals)
    norms = nm.sqrt(nm.reduce_sum(nm.mul(L, L), axis=-1, keepdims=True))
    return nm.div(L, norms)


def constrain_L(raw_diag, raw_offdiag) -> CopulaFactor:
    """Build a validated CopulaFactor from raw network outputs."""
    raw_diag = np.asarray(raw_diag, dtype=np.float64).reshape(-1)
    raw_offdiag = np.asarray(raw_offdiag, dtype=np.float64).reshape(-1)
    d = raw_diag.shape[0]
    if d == 0:
        raise ValueError("factor dimension must be at least 1")
    L = constrain_lower(raw_diag, raw_offdiag)
    return CopulaFactor(np.asarray(L))


def copula_sample(L, z):
    """Correlate scores and map to quantile indices: z* = L z, u = CDF(z*).

    ``z`` may be a single [d] vector or a [K, d] batch of draws.
    """
    Lm = _factor_matrix(L)
    z = np.asarray(z, dtype=np.float64)
    z_star = z @ Lm.T
    return z_star, nm.normal_cdf_array(z_star)


def copula_nll(L, z_star_tilde):
    """Negative log likelihood of scores under the factor's Gaussian copula,
    up to the d*log(2*pi) constant: 2*logdet(L) + ||solve(L, z*)||^2.

    Differentiable in both arguments; supports leading batch axes.
    """
    if isinstance(L, CopulaFactor):
        L = L.L
    white = nm.lower_tri_solve(L, z_star_tilde, validate=not isinstance(L, nm.Tensor))
    quad = nm.reduce_sum(nm.mul(white, white), axis=-1)
    logdet = nm.reduce_sum(nm.log(nm.tri_diagonal(L)), axis=-1)
    out = nm.add(nm.mul(2.0, logdet), quad)
    if isinstance(out, np.ndarray) and out.ndim == 0:
        return float(out)
    return out


def whiten(L, z_star_tilde):
    """Recover the implied independent noise: solve L z = z*."""
    if isinstance(L, CopulaFactor):
        L = L.L
    return nm.lower_tri_solve(L, z_star_tilde, validate=not isinstance(L, nm.Tensor))


class CopulaHead:
    """Net mapping a pooled context vector to raw factor parameters.

    One hidden layer; the output splits into d raw diagonal entries and
    d(d-1)/2 raw off-diagonal entries consumed by the guardrail. Biases start
    at zero, so the initial factor is the identity (independence copula).
    """

    def __init__(self, input_dim: int, d: int, hidden: int = 64, seed: int = 0,
                 max_dim: int = 64):
        if d < 1:
            raise ValueError(f"horizon count must be at least 1, got {d}")
        if d > max_dim:
            raise ValueError(
                f"factor dimension {d} exceeds the configured bound {max_dim}; "
                "the dense factor has d(d+1)/2 outputs")
        self.d = d
        self.n_off = d * (d - 1) // 2
        self.net = Mlp([input_dim, hidden, d + self.n_off], nm.RngState(seed).spawn(3))

    def parameters(self) -> list[np.ndarray]:
        return self.net.parameters()

    def factors(self, pooled, params: list | None = None):
        """Guardrailed factors for a batch of pooled contexts [B, input_dim]."""
        raw = self.net.apply(pooled, params)
        raw_diag = nm.slice_last(raw, 0, self.d)
        raw_off = nm.slice_last(raw, self.d, self.d + self.n_off)
        L = constrain_lower(raw_diag, raw_off)
        diag = nm.value_of(nm.tri_diagonal(L))
        if np.any(diag < 1e-6):
            raise RuntimeError(
                "internal invariant violation: guardrailed factor diagonal fell "
                f"below 1e-6 (min {diag.min()})")
        return L

    def factor(self, pooled) -> CopulaFactor:
        """Single validated factor for one pooled context vector."""
        pooled = np.asarray(pooled, dtype=np.float64).reshape(1, -1)
        L = nm.value_of(self.factors(pooled))[0]
        return CopulaFactor(L)


def clamp_scores(z_star: np.ndarray) -> np.ndarray:
    return np.clip(z_star, -SCORE_CLAMP, SCORE_CLAMP)


def train_copula(head: CopulaHead, marginals: QuantileNet, contexts: np.ndarray,
                 targets: np.ndarray, cfg: TrainConfig) -> dict[str, list[float]]:
    """Phase-2 training: fit the copula head by Gaussian likelihood on the
    scores the frozen inverse net assigns to the observed targets.

    ``contexts`` is [N, d, c_dim] (per-observation, per-horizon contexts) and
    ``targets`` is [N, d] in original units. Marginals stay frozen; only head
    parameters move. Returns the per-epoch average NLL history.
    """
    cfg.validate()
    contexts = np.asarray(contexts, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if contexts.ndim != 3 or targets.ndim != 2 or contexts.shape[:2] != targets.shape:
        raise ShapeError(
            f"expected contexts [N, d, c_dim] and targets [N, d], got "
            f"{contexts.shape} and {targets.shape}")
    n, d, c_dim = contexts.shape
    if d != head.d:
        raise ShapeError(f"head is sized for d={head.d}, got d={d}")

    check_rng = nm.RngState(cfg.seed).spawn(211)
    rms = _inverse_rms(marginals, contexts, check_rng)
    if rms >= 0.1:
        raise ValueError(
            f"phase-1 inverse net is not accurate enough for copula training "
            f"(reconstruction RMS {rms:.3f} >= 0.1)")

    # frozen marginals: score every observation once, up front
    flat_ctx = contexts.reshape(n * d, c_dim)
    scores = nm.value_of(marginals.predict_scores(targets.reshape(-1), flat_ctx))
    scores = clamp_scores(scores.reshape(n, d))
    pooled = contexts.reshape(n, d * c_dim)

    # Full-batch plain gradient descent: the NLL is smooth, so epoch losses
    # decrease monotonically; momentum overshoots into tanh saturation here.
    opt = MomentumSgd(head.parameters(), cfg.copula_learning_rate,
                      cfg.copula_epochs, momentum=0.0)
    history: dict[str, list[float]] = {"l3": []}
    for epoch in range(cfg.copula_epochs):
        tape = nm.Tape()
        leaves = [tape.var(p) for p in opt.params]
        L = head.factors(pooled, params=leaves)
        loss = nm.reduce_mean(copula_nll(L, scores))
        mean_nll = float(nm.value_of(loss))
        if not math.isfinite(mean_nll):
            raise TrainingDivergedError("copula", epoch, mean_nll)
        tape.backward(loss)
        opt.step([leaf.grad_value for leaf in leaves], epoch)
        history["l3"].append(mean_nll)
    return history


def _inverse_rms(marginals: QuantileNet, contexts: np.ndarray,
                 rng: nm.RngState) -> float:
    """Score-reconstruction RMS through the frozen forward/inverse pair."""
    flat = contexts.reshape(-1, contexts.shape[-1])
    take = min(len(flat), 2000)
    flat = flat[:take]
    u = rng.uniform(1e-4, 1.0 - 1e-4, take)
    z = nm.normal_quantile_array(u)
    y_hat = nm.value_of(marginals.predict_values(z, flat))
    z_hat = nm.value_of(marginals.predict_scores(y_hat, flat))
    return float(np.sqrt(np.mean((z_hat - z) ** 2)))
