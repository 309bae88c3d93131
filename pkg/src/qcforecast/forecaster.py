"""Multi-horizon generative forecaster.

A windowed encoder summarizes each series' recent history and static
covariates into a shared embedding; per-horizon contexts append a learned
horizon-position embedding and that horizon's future-available covariates.
One quantile net (plus its inverse) is shared across horizons, and a copula
head maps the concatenated contexts to a correlation factor over horizons.

Training is two-phase: phase 1 fits encoder, position embeddings, and the
quantile nets under pinball + reconstruction loss across strided forecast
creation cuts; phase 2 freezes all of that and fits the copula head by
Gaussian likelihood on the scores the inverse net assigns to the training
windows. The last ``d`` steps of every series are reserved for evaluation
and are never touched by training targets or standardization statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .copula import CopulaFactor, CopulaHead, clamp_scores, copula_nll, copula_sample, train_copula, whiten
from .errors import AlignmentError, InsufficientSamplesError, ShapeError, TrainingDivergedError
from .optim import MomentumSgd
from .quantile_net import Mlp, QuantileNet, TrainConfig, pinball, robust_standardization


@dataclass
class Series:
    """One time series with aligned covariate tables."""

    series_id: str
    y: np.ndarray                  # [T]
    hist_cov: np.ndarray           # [T, n_h]
    future_cov: np.ndarray         # [T, n_f]
    static_cov: np.ndarray         # [n_s]

    def length(self) -> int:
        return len(self.y)


@dataclass
class SeriesDataset:
    """Panel of series sharing one horizon count and history window length."""

    series: list[Series]
    horizon: int                   # d: forecast horizons per cut
    history: int                   # h: encoder window length
    nonnegative: bool = False
    hist_cov_names: tuple[str, ...] = ()
    future_cov_names: tuple[str, ...] = ()
    static_cov_names: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.horizon < 1 or self.history < 1:
            raise ValueError("horizon and history must be at least 1")
        if not self.series:
            raise ValueError("dataset holds no series")
        n_h, n_f, n_s = len(self.hist_cov_names), len(self.future_cov_names), len(self.static_cov_names)
        for s in self.series:
            T = s.length()
            if T < self.horizon + 1:
                raise AlignmentError(
                    f"series {s.series_id} has {T} steps; needs at least "
                    f"{self.horizon + 1} for one evaluation cut")
            for name, arr, want in (("hist_cov", s.hist_cov, (T, n_h)),
                                    ("future_cov", s.future_cov, (T, n_f))):
                if arr.shape != want:
                    raise AlignmentError(
                        f"series {s.series_id}: {name} shape {arr.shape} != {want}")
            if s.static_cov.shape != (n_s,):
                raise AlignmentError(
                    f"series {s.series_id}: static_cov shape {s.static_cov.shape} != ({n_s},)")
            for name, arr in (("y", s.y), ("hist_cov", s.hist_cov),
                              ("future_cov", s.future_cov), ("static_cov", s.static_cov)):
                if arr.size and not np.all(np.isfinite(arr)):
                    raise AlignmentError(f"series {s.series_id}: {name} has non-finite values")

    def eval_cut(self, s: Series) -> int:
        """Forecast creation time whose targets are the held-out final window."""
        return s.length() - self.horizon

    def training_cuts(self, s: Series, stride: int) -> list[int]:
        """Strided cuts whose target windows stay inside the training period,
        newest first so short series keep their most recent window."""
        last = s.length() - 2 * self.horizon
        return list(range(last, 0, -stride))


@dataclass
class ForecastPaths:
    """Simulated future sample paths for one series at one creation time."""

    series_id: str
    cut: int
    samples: np.ndarray            # [K, d]
    seed: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ShapeError(f"paths must be [K>=1, d], got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"paths for {self.series_id} contain non-finite values")


@dataclass
class CrossSeriesCovariance:
    """Shrunk, PSD-projected correlation across series' whitened noise."""

    matrix: np.ndarray             # [M, M]
    shrinkage: float

    def __post_init__(self):
        S = np.asarray(self.matrix, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ShapeError(f"cross-series matrix must be square, got {S.shape}")
        if np.max(np.abs(S - S.T)) > 1e-10:
            raise ValueError("cross-series matrix must be symmetric")
        if np.max(np.abs(np.diag(S) - 1.0)) > 1e-8:
            raise ValueError("cross-series matrix must have unit diagonal")
        if np.min(np.linalg.eigvalsh(S)) < -1e-8:
            raise ValueError("cross-series matrix must be positive semi-definite")
        self.matrix = S


@dataclass
class ModelConfig:
    """Architecture hyperparameters of the forecaster."""

    history: int = 52              # encoder window length h
    hidden: int = 64               # hidden width of encoder and nets
    embed_dim: int = 32            # shared history/static embedding width
    pos_dim: int = 8               # learned horizon-position embedding width
    stride: int = 4                # spacing of training cuts
    max_copula_dim: int = 64
    seed: int = 0


class Forecaster:
    """Encoder + shared quantile nets + copula head, with per-series stats."""

    def __init__(self, horizon: int, n_hist_cov: int, n_future_cov: int,
                 n_static_cov: int, config: ModelConfig):
        self.config = config
        self.horizon = int(horizon)
        self.n_hist_cov = int(n_hist_cov)
        self.n_future_cov = int(n_future_cov)
        self.n_static_cov = int(n_static_cov)
        h = config.history
        self.encoder_in = h * (2 + self.n_hist_cov) + self.n_static_cov
        # contexts: shared embedding, horizon position, raw statics, future covs
        self.c_dim = (config.embed_dim + config.pos_dim + self.n_static_cov
                      + self.n_future_cov)

        root = nm.RngState(config.seed)
        self.encoder = Mlp([self.encoder_in, config.hidden, config.embed_dim], root.spawn(11))
        limit = math.sqrt(6.0 / (self.horizon + config.pos_dim))
        self.pos_embed = root.spawn(12).uniform(-limit, limit, self.horizon * config.pos_dim) \
            .reshape(self.horizon, config.pos_dim)
        self.quantile_net = QuantileNet(self.c_dim, hidden=(config.hidden, config.hidden),
                                        seed=config.seed)
        self.copula_head = CopulaHead(self.horizon * self.c_dim, self.horizon,
                                      hidden=config.hidden, seed=config.seed,
                                      max_dim=config.max_copula_dim)
        self.copula_trained = False
        self.stats: dict[str, tuple[float, float]] = {}
        self.nonnegative = False

    # -- parameter plumbing ------------------------------------------------

    def phase1_parameters(self) -> list[np.ndarray]:
        return (self.encoder.parameters() + [self.pos_embed]
                + self.quantile_net.parameters())

    def series_stats(self, s: Series, train_len: int) -> tuple[float, float]:
        if s.series_id in self.stats:
            return self.stats[s.series_id]
        return robust_standardization(s.y[:train_len])

    # -- context assembly ---------------------------------------------------

    def _window(self, s: Series, cut: int, center: float, scale: float) -> np.ndarray:
        """Flattened encoder input for the window ending at ``cut``."""
        h = self.config.history
        lo = max(0, cut - h)
        y_win = (s.y[lo:cut] - center) / scale
        hist_win = s.hist_cov[lo:cut]
        pad = h - (cut - lo)
        if pad > 0:
            y_win = np.concatenate([np.zeros(pad), y_win])
            hist_win = np.concatenate([np.zeros((pad, self.n_hist_cov)), hist_win])
        mask = np.zeros(h)
        mask[pad:] = 1.0
        return np.concatenate([y_win, mask, hist_win.reshape(-1), s.static_cov])

    def _batch_contexts(self, windows, statics, futures, enc_params=None,
                        pos=None, drop_mask=None):
        """Contexts for a batch: [B, d, c_dim] from windows [B, enc_in],
        statics [B, n_s], and future covariates [B, d, n_f]. Differentiable
        when given leaves; ``drop_mask`` (training only) zeroes embedding
        coordinates to keep the window channel from memorizing examples."""
        B = len(windows)
        d = self.horizon
        embed = nm.tanh(self.encoder.apply(windows, enc_params))
        if drop_mask is not None:
            embed = nm.mul(embed, drop_mask)
        e3 = nm.broadcast_to(nm.reshape(embed, (B, 1, self.config.embed_dim)),
                             (B, d, self.config.embed_dim))
        p = self.pos_embed if pos is None else pos
        p3 = nm.broadcast_to(nm.reshape(p, (1, d, self.config.pos_dim)),
                             (B, d, self.config.pos_dim))
        parts = [e3, p3]
        if self.n_static_cov:
            parts.append(nm.broadcast_to(
                nm.reshape(statics, (B, 1, self.n_static_cov)),
                (B, d, self.n_static_cov)))
        if self.n_future_cov:
            parts.append(futures)
        return nm.concat_last(parts)

    def contexts_for(self, dataset: SeriesDataset, s: Series, cut: int) -> np.ndarray:
        """Per-horizon context matrix [d, c_dim] at one creation time."""
        d = self.horizon
        if not 1 <= cut <= s.length() - d:
            raise AlignmentError(
                f"cut {cut} outside valid range [1, {s.length() - d}] for {s.series_id}")
        center, scale = self.series_stats(s, s.length() - d)
        win = self._window(s, cut, center, scale)[None, :]
        fut = s.future_cov[cut:cut + d][None, :, :]
        ctx = nm.value_of(self._batch_contexts(win, s.static_cov[None, :], fut))
        return ctx[0]


def encode_contexts(model: Forecaster, dataset: SeriesDataset, s: Series,
                    cut: int | None = None) -> np.ndarray:
    """Deterministic per-horizon contexts (embedding, position, future covs)."""
    if cut is None:
        cut = dataset.eval_cut(s)
    return model.contexts_for(dataset, s, cut)


# ---------------------------------------------------------------------------
# training


def _collect_examples(model: Forecaster, dataset: SeriesDataset):
    """Windows, future covariates, standardized targets over training cuts."""
    d = model.horizon
    windows, statics, futures, targets = [], [], [], []
    for s in dataset.series:
        center, scale = model.stats[s.series_id]
        for cut in dataset.training_cuts(s, model.config.stride):
            windows.append(model._window(s, cut, center, scale))
            statics.append(s.static_cov)
            futures.append(s.future_cov[cut:cut + d])
            targets.append((s.y[cut:cut + d] - center) / scale)
    if not windows:
        raise AlignmentError(
            "no training cuts: every series needs at least 2*horizon + 1 steps")
    return (np.asarray(windows), np.asarray(statics), np.asarray(futures),
            np.asarray(targets))


def train_forecaster(model: Forecaster, dataset: SeriesDataset, cfg: TrainConfig,
                     with_copula: bool = True) -> dict[str, list[float]]:
    """Two-phase training; returns per-epoch histories for l1, l2, and l3."""
    cfg.validate()
    dataset.validate()
    d = model.horizon
    model.nonnegative = dataset.nonnegative
    for s in dataset.series:
        model.stats[s.series_id] = robust_standardization(s.y[:s.length() - d])

    windows, statics, futures, targets = _collect_examples(model, dataset)
    n = len(windows)
    n_enc = len(model.encoder.parameters())
    n_fwd = len(model.quantile_net.forward_parameters())

    opt = MomentumSgd(model.phase1_parameters(), cfg.learning_rate, cfg.epochs,
                      cfg.momentum)
    # decay weight matrices only; biases and position embeddings stay free
    decay_mask = [p.ndim == 2 for p in opt.params]
    decay_mask[n_enc] = False
    data_rng = nm.RngState(cfg.seed).spawn(301)
    drop_rng = nm.RngState(cfg.seed).spawn(303)
    history: dict[str, list[float]] = {"l1": [], "l2": [], "l3": []}

    for epoch in range(cfg.epochs):
        order = data_rng.permutation(n)
        u_all = data_rng.uniform(cfg.u_margin, 1.0 - cfg.u_margin, n * d).reshape(n, d)
        z_all = nm.normal_quantile_array(u_all)
        sum_l1 = sum_l2 = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if cfg.embed_dropout > 0.0:
                # whole-embedding blackout per example: the window channel
                # cannot become an example id when it is absent half the time
                keep = 1.0 - cfg.embed_dropout
                mask = drop_rng.bernoulli(keep, len(idx))
                drop = mask.reshape(len(idx), 1) / keep
            else:
                drop = None
            l1v, l2v = _phase1_step(model, windows[idx], statics[idx], futures[idx],
                                    targets[idx], u_all[idx], z_all[idx], cfg, opt,
                                    epoch, n_enc, n_fwd, decay_mask, drop)
            sum_l1 += l1v * len(idx)
            sum_l2 += l2v * len(idx)
        mean_l1, mean_l2 = sum_l1 / n, sum_l2 / n
        if not (math.isfinite(mean_l1) and math.isfinite(mean_l2)):
            raise TrainingDivergedError("phase-1", epoch, mean_l1)
        history["l1"].append(mean_l1)
        history["l2"].append(mean_l2)

    ctx = nm.value_of(model._batch_contexts(windows, statics, futures))
    history["l2"] += _polish_inverse(model, ctx, cfg)

    if with_copula:
        history["l3"] = train_copula(model.copula_head, model.quantile_net,
                                     ctx, targets, cfg)["l3"]
        model.copula_trained = True
    return history


def _polish_inverse(model: Forecaster, ctx: np.ndarray, cfg: TrainConfig) -> list[float]:
    """Fit the inverse net against the now-frozen forward net: the joint loop
    leaves it lagging its moving target, so finish it on a settled one."""
    epochs = cfg.inverse_polish_epochs
    if epochs == 0:
        return []
    n, d, c_dim = ctx.shape
    flat_ctx = ctx.reshape(n * d, c_dim)
    net = model.quantile_net
    opt = MomentumSgd(net.inverse_parameters(), cfg.inverse_learning_rate, epochs,
                      cfg.momentum)
    rng = nm.RngState(cfg.seed).spawn(302)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n * d)
        u_all = rng.uniform(cfg.u_margin, 1.0 - cfg.u_margin, n * d)
        z_all = nm.normal_quantile_array(u_all)
        y_hat = nm.value_of(model.quantile_net.predict_values(z_all, flat_ctx,
                                                              params=model.quantile_net.forward_net.parameters()))
        total = 0.0
        step_rows = 4 * cfg.batch_size * d
        for start in range(0, n * d, step_rows):
            idx = order[start:start + step_rows]
            tape = nm.Tape()
            leaves = [tape.var(p) for p in opt.params]
            z_hat = net.predict_scores(y_hat[idx], flat_ctx[idx], params=leaves)
            resid = nm.sub(z_hat, z_all[idx])
            loss = nm.reduce_mean(nm.mul(resid, resid))
            tape.backward(loss)
            opt.step([leaf.grad_value for leaf in leaves], epoch)
            total += float(nm.value_of(loss)) * len(idx)
        mean_l2 = total / (n * d)
        if not math.isfinite(mean_l2):
            raise TrainingDivergedError("inverse-polish", epoch, mean_l2)
        history.append(mean_l2)
    return history


def _phase1_step(model, windows, statics, futures, targets, u, z_star, cfg, opt,
                 epoch, n_enc, n_fwd, decay_mask, drop_mask):
    B, d = targets.shape
    tape = nm.Tape()
    leaves = [tape.var(p) for p in opt.params]
    enc_leaves = leaves[:n_enc]
    pos_leaf = leaves[n_enc]
    fwd_leaves = leaves[n_enc + 1:n_enc + 1 + n_fwd]
    inv_leaves = leaves[n_enc + 1 + n_fwd:]

    ctx = model._batch_contexts(windows, statics, futures, enc_params=enc_leaves,
                                pos=pos_leaf, drop_mask=drop_mask)
    flat_ctx = nm.reshape(ctx, (B * d, model.c_dim))
    z_flat = z_star.reshape(-1)
    q_in = nm.concat_last([z_flat.reshape(-1, 1), flat_ctx])
    y_raw = nm.reshape(model.quantile_net.forward_net.apply(q_in, fwd_leaves[:-1]), (-1,))
    y_hat = nm.reshape(nm.add(y_raw, nm.mul(fwd_leaves[-1], z_flat)), (B, d))
    l1 = nm.reduce_mean(pinball(u, targets, y_hat))

    # reconstruction trains the inverse net only: prediction, score, and
    # context all enter as fixed values
    y_fixed = nm.value_of(y_hat).reshape(-1)
    inv_in = np.concatenate([y_fixed.reshape(-1, 1), nm.value_of(flat_ctx)], axis=1)
    z_raw = nm.reshape(model.quantile_net.inverse_net.apply(inv_in, inv_leaves[:-1]), (-1,))
    z_hat = nm.reshape(nm.add(z_raw, nm.mul(inv_leaves[-1], y_fixed)), (B, d))
    resid = nm.sub(z_hat, z_star)
    l2 = nm.reduce_mean(nm.mul(resid, resid))

    loss = nm.add(l1, nm.mul(cfg.recon_weight, l2))
    tape.backward(loss)
    grads = [leaf.grad_value for leaf in leaves]
    if cfg.weight_decay > 0.0:
        for i, decay in enumerate(decay_mask):
            if decay:
                grads[i] = grads[i] + cfg.weight_decay * opt.params[i]
    opt.step(grads, epoch)
    return float(nm.value_of(l1)), float(nm.value_of(l2))


# ---------------------------------------------------------------------------
# inference


def _copula_factor(model: Forecaster, ctx: np.ndarray) -> np.ndarray:
    """Correlation factor at the given contexts; identity when untrained."""
    if not model.copula_trained:
        return np.eye(model.horizon)
    return model.copula_head.factor(ctx.reshape(-1)).L


def direct_quantile_forecast(model: Forecaster, dataset: SeriesDataset, s: Series,
                             u_vec, cut: int | None = None) -> np.ndarray:
    """Marginal quantile forecasts at the requested levels, bypassing the
    copula entirely."""
    u_vec = np.asarray(u_vec, dtype=np.float64)
    if u_vec.shape != (model.horizon,):
        raise ShapeError(f"u_vec must have shape ({model.horizon},), got {u_vec.shape}")
    if np.any(u_vec <= 0.0) or np.any(u_vec >= 1.0):
        raise ValueError("quantile indices must lie strictly inside (0, 1)")
    if cut is None:
        cut = dataset.eval_cut(s)
    ctx = model.contexts_for(dataset, s, cut)
    z = nm.normal_quantile_array(u_vec)
    center, scale = model.series_stats(s, s.length() - model.horizon)
    y_std = nm.value_of(model.quantile_net.predict_values(z, ctx))
    return y_std * scale + center


def simulate_paths(model: Forecaster, dataset: SeriesDataset, s: Series, K: int,
                   rng: nm.RngState, cut: int | None = None) -> ForecastPaths:
    """Draw K sample paths: correlate noise through L(x), push scores through
    the quantile net per horizon, de-standardize, floor at 0 if nonnegative."""
    if K < 1:
        raise ValueError(f"path count must be at least 1, got {K}")
    if cut is None:
        cut = dataset.eval_cut(s)
    d = model.horizon
    ctx = model.contexts_for(dataset, s, cut)
    L = _copula_factor(model, ctx)
    z = rng.standard_normal_matrix(K, d)
    z_star, _ = copula_sample(L, z)
    flat_ctx = np.repeat(ctx[None, :, :], K, axis=0).reshape(K * d, model.c_dim)
    y_std = nm.value_of(model.quantile_net.predict_values(z_star.reshape(-1), flat_ctx))
    center, scale = model.series_stats(s, s.length() - d)
    paths = y_std.reshape(K, d) * scale + center
    if model.nonnegative or dataset.nonnegative:
        paths = np.maximum(paths, 0.0)
    return ForecastPaths(s.series_id, cut, paths, rng.seed)


def anomaly_score(model: Forecaster, dataset: SeriesDataset, s: Series,
                  observed: np.ndarray, cut: int | None = None):
    """Quantile indices, normal scores, and joint copula NLL of an observed
    window; higher joint score = more anomalous."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape != (model.horizon,):
        raise ShapeError(f"observed window must have shape ({model.horizon},), "
                         f"got {observed.shape}")
    if cut is None:
        cut = dataset.eval_cut(s)
    ctx = model.contexts_for(dataset, s, cut)
    center, scale = model.series_stats(s, s.length() - model.horizon)
    y_std = (observed - center) / scale
    z_tilde = nm.value_of(model.quantile_net.predict_scores(y_std, ctx))
    u_tilde = nm.normal_cdf_array(z_tilde)
    L = _copula_factor(model, ctx)
    joint = float(copula_nll(L, clamp_scores(z_tilde)))
    return u_tilde, z_tilde, joint


def whitened_training_scores(model: Forecaster, dataset: SeriesDataset) -> np.ndarray:
    """Whitened noise of every training window, one row per series with
    cuts concatenated along the columns (input to fit_cross_series)."""
    d = model.horizon
    rows = []
    for s in dataset.series:
        center, scale = model.series_stats(s, s.length() - d)
        whites = []
        for cut in dataset.training_cuts(s, model.config.stride):
            ctx = model.contexts_for(dataset, s, cut)
            y_std = (s.y[cut:cut + d] - center) / scale
            z_tilde = clamp_scores(nm.value_of(
                model.quantile_net.predict_scores(y_std, ctx)))
            L = _copula_factor(model, ctx)
            whites.append(whiten(L, z_tilde))
        rows.append(np.concatenate(whites))
    # series can have different cut counts; keep the shared newest columns
    n_cols = min(len(r) for r in rows)
    return np.asarray([r[:n_cols] for r in rows])


# ---------------------------------------------------------------------------
# cross-series association


def fit_cross_series(whitened: np.ndarray, shrinkage: float = 0.1,
                     sparsity_threshold: float = 0.0) -> CrossSeriesCovariance:
    """Estimate the across-series correlation of whitened noise, shrink it
    toward the identity, and project to the nearest valid correlation matrix
    (eigenvalue floor 1e-8, unit diagonal)."""
    whitened = np.asarray(whitened, dtype=np.float64)
    if whitened.ndim != 2 or whitened.shape[0] < 2:
        raise ShapeError(f"need a [M>=2, n] whitened matrix, got {whitened.shape}")
    if whitened.shape[1] < 2:
        raise InsufficientSamplesError(
            f"need at least 2 whitened columns per series, got {whitened.shape[1]}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {shrinkage}")
    M = whitened.shape[0]
    stds = whitened.std(axis=1)
    C = np.eye(M)
    ok = stds > 1e-12
    if ok.any():
        sub = np.corrcoef(whitened[ok])
        C[np.ix_(ok, ok)] = np.atleast_2d(sub)
    S = (1.0 - shrinkage) * C + shrinkage * np.eye(M)
    if sparsity_threshold > 0.0:
        off = ~np.eye(M, dtype=bool)
        S[off & (np.abs(S) < sparsity_threshold)] = 0.0
    # nearest-correlation projection: floor eigenvalues, rescale the diagonal
    vals, vecs = np.linalg.eigh((S + S.T) / 2.0)
    vals = np.maximum(vals, 1e-8)
    S = (vecs * vals) @ vecs.T
    scale = np.sqrt(np.diag(S))
    S = S / np.outer(scale, scale)
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return CrossSeriesCovariance(S, shrinkage)


def simulate_cross_series(model: Forecaster, dataset: SeriesDataset,
                          series_list: list[Series], S_hat: CrossSeriesCovariance,
                          K: int, rng: nm.RngState,
                          cuts: list[int] | None = None) -> list[ForecastPaths]:
    """Couple the latent noise across series: per path, each horizon's
    M-vector of draws follows N(0, S_hat); each series' row then runs through
    its own sampling pipeline exactly as independent simulation does."""
    M = len(series_list)
    if S_hat.matrix.shape != (M, M):
        raise ShapeError(f"S_hat is {S_hat.matrix.shape}, need ({M}, {M})")
    if K < 1:
        raise ValueError(f"path count must be at least 1, got {K}")
    try:
        LS = np.linalg.cholesky(S_hat.matrix + 1e-12 * np.eye(M))
    except np.linalg.LinAlgError as exc:
        raise ValueError("cross-series matrix is not positive definite after "
                         "the eigenvalue floor") from exc
    d = model.horizon
    if cuts is None:
        cuts = [dataset.eval_cut(s) for s in series_list]
    raw = rng.standard_normal_matrix(K * M, d).reshape(K, M, d)
    coupled = np.einsum("ms,ksd->kmd", LS, raw)
    out = []
    for m, (s, cut) in enumerate(zip(series_list, cuts)):
        ctx = model.contexts_for(dataset, s, cut)
        L = _copula_factor(model, ctx)
        z_star, _ = copula_sample(L, coupled[:, m, :])
        flat_ctx = np.repeat(ctx[None, :, :], K, axis=0).reshape(K * d, model.c_dim)
        y_std = nm.value_of(model.quantile_net.predict_values(z_star.reshape(-1), flat_ctx))
        center, scale = model.series_stats(s, s.length() - d)
        paths = y_std.reshape(K, d) * scale + center
        if model.nonnegative or dataset.nonnegative:
            paths = np.maximum(paths, 0.0)
        out.append(ForecastPaths(s.series_id, cut, paths, rng.seed))
    return out
