"""Interval-mesh evaluation: mesh enumeration and interpolation, interval
quantile loss, quantile/interval crossing rates, and the two-quantile
shifted-Gamma fit used by fixed-quantile baselines.

A target interval (l, s) is the sum of s consecutive horizons starting at
lead l (1-based), constrained by l + s - 1 <= d. Path-derived tables take
empirical quantiles of per-path interval sums, which makes them consistent
by construction: quantiles never cross in u, and for nonnegative paths
nested intervals never cross either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlignmentError,
    GammaFitConvergenceError,
    GammaFitInfeasibleError,
    InsufficientSamplesError,
    MeshBudgetError,
)
from .forecaster import ForecastPaths

EVAL_QUANTILES = (0.1, 0.3, 0.5, 0.7, 0.9, 0.95)


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True)
class MeshSpec:
    """Budgeted set of (lead, span) interval targets covering all marginals."""

    horizon: int
    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set(self.points)
        if len(seen) != len(self.points):
            raise ValueError("mesh points must be unique")
        for l, s in self.points:
            if l < 1 or s < 1 or l + s - 1 > self.horizon:
                raise ValueError(f"mesh point (l={l}, s={s}) outside range for "
                                 f"d={self.horizon}")
        for l in range(1, self.horizon + 1):
            if (l, 1) not in seen:
                raise ValueError(f"mesh must include every marginal; missing ({l}, 1)")
        n_all = self.horizon * (self.horizon + 1) // 2
        if len(self.points) < n_all and len(self.points) < 3:
            raise ValueError("interpolation needs at least 3 mesh points")

    def contains(self, l: int, s: int) -> bool:
        return (l, s) in set(self.points)


def all_intervals(d: int) -> list[tuple[int, int]]:
    """Every valid (l, s) pair: l >= 1, s >= 1, l + s - 1 <= d."""
    return [(l, s) for s in range(1, d + 1) for l in range(1, d - s + 2)]


def _geometric_ladder(limit: int, base: int = 2) -> list[int]:
    vals, v = [], base
    while v <= limit:
        vals.append(v)
        v *= base
    return vals


def _spread_order(values: list[int]) -> list[int]:
    """Reorder coarse-to-fine: ends first, then recursive midpoints."""
    if not values:
        return []
    out: list[int] = []
    queue = [(0, len(values) - 1)]
    seen = set()
    while queue:
        lo, hi = queue.pop(0)
        for idx in (lo, hi):
            if idx not in seen:
                seen.add(idx)
                out.append(values[idx])
        mid = (lo + hi) // 2
        if mid not in seen and hi - lo > 1:
            seen.add(mid)
            out.append(values[mid])
            queue.append((lo, mid))
            queue.append((mid, hi))
    return out


def mesh_enumerate(d: int, budget: int) -> MeshSpec:
    """Mesh with all marginal points plus geometrically spaced interval
    points, truncated to exactly ``budget`` (or all pairs if they fit).

    Raises
    ------
    MeshBudgetError
        If ``budget`` cannot cover the marginals (or the 3-point
        interpolation floor when non-mesh pairs exist).
    """
    if d < 1:
        raise MeshBudgetError(f"horizon count must be at least 1, got {d}")
    every = all_intervals(d)
    if budget < d:
        raise MeshBudgetError(f"budget {budget} cannot cover the {d} marginal points")
    if budget >= len(every):
        return MeshSpec(d, tuple(every))
    if budget < 3:
        raise MeshBudgetError(
            f"budget {budget} leaves non-mesh intervals without 3 interpolation points")
    points = [(l, 1) for l in range(1, d + 1)]
    chosen = set(points)
    # coarse-to-fine ladder of spans crossed with spread-ordered leads
    for pass_spans in (_geometric_ladder(d), range(2, d + 1)):
        for s in pass_spans:
            if len(points) >= budget:
                break
            leads = list(range(1, d - s + 2))
            for l in _spread_order(leads):
                if len(points) >= budget:
                    break
                if (l, s) not in chosen:
                    chosen.add((l, s))
                    points.append((l, s))
    return MeshSpec(d, tuple(points))


# ---------------------------------------------------------------------------
# tables


@dataclass
class QuantileForecastTable:
    """Per-(l, s) quantile forecasts on a mesh at a fixed evaluation u set."""

    mesh: MeshSpec
    u_set: tuple[float, ...]
    values: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    interpolation_flags: dict[tuple[int, int], str] = field(default_factory=dict)

    def validate(self) -> None:
        for key, vals in self.values.items():
            if vals.shape != (len(self.u_set),):
                raise ValueError(f"cell {key} has {vals.shape}, want ({len(self.u_set)},)")
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"cell {key} has non-finite forecasts")


def interval_sums(paths: np.ndarray, l: int, s: int) -> np.ndarray:
    """Per-path total over horizons [l, l+s), 1-based lead."""
    return paths[:, l - 1:l - 1 + s].sum(axis=1)


def interval_sum_quantiles(paths: ForecastPaths, mesh: MeshSpec,
                           u_set=EVAL_QUANTILES) -> QuantileForecastTable:
    """Empirical u-quantiles (order-statistic interpolation) of per-path
    interval sums at every mesh point."""
    samples = paths.samples
    if samples.shape[0] < 20:
        raise InsufficientSamplesError(
            f"need at least 20 paths for interval quantiles, got {samples.shape[0]}")
    if samples.shape[1] != mesh.horizon:
        raise AlignmentError(f"paths have {samples.shape[1]} horizons, mesh wants "
                             f"{mesh.horizon}")
    u_arr = np.asarray(u_set, dtype=np.float64)
    table = QuantileForecastTable(mesh, tuple(u_set))
    for l, s in mesh.points:
        sums = interval_sums(samples, l, s)
        table.values[(l, s)] = np.quantile(sums, u_arr, method="linear")
    return table


def interval_truth(truth: np.ndarray, l: int, s: int) -> float:
    return float(np.sum(truth[l - 1:l - 1 + s]))


def pinball_value(u: float, y: float, y_hat: float) -> float:
    diff = y - y_hat
    return u * max(diff, 0.0) + (1.0 - u) * max(-diff, 0.0)


def interval_ql(table: QuantileForecastTable, truth: np.ndarray) -> dict:
    """Pinball loss of every table cell against realized interval totals."""
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != (table.mesh.horizon,):
        raise AlignmentError(f"truth has shape {truth.shape}, want "
                             f"({table.mesh.horizon},)")
    out = {}
    for (l, s), forecasts in table.values.items():
        y = interval_truth(truth, l, s)
        out[(l, s)] = np.array([pinball_value(u, y, q)
                                for u, q in zip(table.u_set, forecasts)])
    return out


GROUPS = ("(l,1)", "(1,s)", "all")


def _group_cells(cells, group: str):
    if group == "(l,1)":
        return [c for c in cells if c[1] == 1]
    if group == "(1,s)":
        return [c for c in cells if c[0] == 1]
    if group == "all":
        return list(cells)
    raise ValueError(f"unknown group {group}")


def aggregate_ql(per_example_ql: list[dict], u_set=EVAL_QUANTILES) -> dict:
    """Average QL per (group, u) across examples and cells, as in the report."""
    out = {}
    for group in GROUPS:
        sums = np.zeros(len(u_set))
        count = 0
        for ql in per_example_ql:
            cells = _group_cells(ql.keys(), group)
            for c in cells:
                sums += ql[c]
            count += len(cells)
        out[group] = sums / max(count, 1)
    return out


# ---------------------------------------------------------------------------
# crossing rates


def crossing_rates(table: QuantileForecastTable, u_set=None,
                   nonnegative: bool = True) -> tuple[float, float]:
    """Fractions of inconsistent cells.

    q_x: cells with any adjacent-u violation (a lower quantile forecast
    strictly above a higher one). i_x: same-lead nested interval pairs whose
    larger-span forecast falls below the smaller's at any evaluated u; only
    defined for nonnegative data (NaN plus a warning otherwise).
    """
    if u_set is None:
        u_set = table.u_set
    order = np.argsort(np.asarray(u_set))
    n_cells = 0
    n_qx = 0
    for vals in table.values.values():
        n_cells += 1
        v = vals[order]
        if np.any(np.diff(v) < 0.0):
            n_qx += 1
    q_x = n_qx / max(n_cells, 1)

    if not nonnegative:
        import warnings

        warnings.warn("interval-crossing rate is undefined for signed data; "
                      "nested sums need not be ordered", stacklevel=2)
        return q_x, float("nan")

    by_lead: dict[int, list[int]] = {}
    for l, s in table.values:
        by_lead.setdefault(l, []).append(s)
    n_pairs = 0
    n_ix = 0
    for l, spans in by_lead.items():
        spans = sorted(spans)
        for i, s_small in enumerate(spans):
            for s_big in spans[i + 1:]:
                n_pairs += 1
                if np.any(table.values[(l, s_big)] < table.values[(l, s_small)]):
                    n_ix += 1
    i_x = n_ix / n_pairs if n_pairs else 0.0
    return q_x, i_x


def pooled_crossing_rates(tables: list[QuantileForecastTable],
                          nonnegative: bool = True) -> tuple[float, float]:
    """Crossing rates pooled over many examples (cells and pairs counted
    across all tables)."""
    rates = [crossing_rates(t, nonnegative=nonnegative) for t in tables]
    cells = [len(t.values) for t in tables]

    def pairs_of(t):
        by_lead: dict[int, int] = {}
        for l, s in t.values:
            by_lead[l] = by_lead.get(l, 0) + 1
        return sum(k * (k - 1) // 2 for k in by_lead.values())

    pair_counts = [pairs_of(t) for t in tables]
    qx = sum(r[0] * c for r, c in zip(rates, cells)) / max(sum(cells), 1)
    if not nonnegative:
        return qx, float("nan")
    total_pairs = sum(pair_counts)
    ix = sum(r[1] * p for r, p in zip(rates, pair_counts)) / max(total_pairs, 1)
    return qx, ix


# ---------------------------------------------------------------------------
# shifted Gamma


@dataclass(frozen=True)
class ShiftedGamma:
    """Gamma(k, theta) shifted left by one unit with negative mass at 0."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0.0 and math.isfinite(self.shape)):
            raise ValueError(f"shape must be positive and finite, got {self.shape}")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")


def _reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x): series for x < a+1,
    continued fraction above; absolute error well under 1e-9."""
    if x < 0.0 or a <= 0.0:
        raise ValueError(f"invalid arguments a={a}, x={x}")
    if x == 0.0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        n = a
        for _ in range(500):
            n += 1.0
            term *= x / n
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return total * math.exp(-x + a * math.log(x) - lg)
    # Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d_ = 1.0 / b
    h = d_
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d_ = an * d_ + b
        if abs(d_) < tiny:
            d_ = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d_ = 1.0 / d_
        delta = d_ * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(-x + a * math.log(x) - lg) * h
    return 1.0 - q


def gamma_quantile(u: float, shape: float, scale: float = 1.0) -> float:
    """Inverse CDF of Gamma(shape, scale) by bisection on the regularized
    incomplete gamma function."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile index must lie in (0, 1), got {u}")
    lo, hi = 0.0, max(shape, 1.0)
    while _reg_lower_gamma(shape, hi) < u:
        hi *= 2.0
        if hi > 1e12:
            raise GammaFitConvergenceError("gamma quantile bracket exploded")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _reg_lower_gamma(shape, mid) < u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(hi, 1.0):
            break
    return 0.5 * (lo + hi) * scale


def shifted_gamma_quantile(g: ShiftedGamma, u: float) -> float:
    """max(gamma quantile - 1, 0): the shift puts real mass at zero."""
    return max(gamma_quantile(u, g.shape, g.scale) - 1.0, 0.0)


DEGENERATE_SHAPE = 0.5  # pinned k when p50 sits on the zero atom


def fit_shifted_gamma(p50: float, p90: float) -> ShiftedGamma:
    """Two-quantile fit: bisection on the shape using the scale-free quantile
    ratio, then the scale by matching p50 (or p90 alone when p50 = 0).

    Raises
    ------
    GammaFitInfeasibleError
        If p90 <= p50 or p50 < 0.
    GammaFitConvergenceError
        If no shape in [1e-3, 1e3] matches the quantile ratio.
    """
    if p50 < 0.0 or p90 <= p50:
        raise GammaFitInfeasibleError(
            f"need 0 <= p50 < p90 for a shifted-Gamma fit, got ({p50}, {p90})")
    if p50 == 0.0:
        k = DEGENERATE_SHAPE
        theta = (p90 + 1.0) / gamma_quantile(0.9, k)
        return ShiftedGamma(k, theta)
    target = (p90 + 1.0) / (p50 + 1.0)

    def ratio(log_k: float) -> float:
        k = math.exp(log_k)
        return gamma_quantile(0.9, k) / gamma_quantile(0.5, k)

    lo, hi = math.log(1e-3), math.log(1e3)
    r_lo, r_hi = ratio(lo), ratio(hi)
    # ratio decreases in k toward 1
    if not (r_hi <= target <= r_lo):
        raise GammaFitConvergenceError(
            f"quantile ratio {target} outside the reachable range "
            f"[{r_hi:.6f}, {r_lo:.6f}] for shapes in [1e-3, 1e3]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ratio(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    k = math.exp(0.5 * (lo + hi))
    theta = (p50 + 1.0) / gamma_quantile(0.5, k)
    return ShiftedGamma(k, theta)


# ---------------------------------------------------------------------------
# mesh interpolation


def mesh_interpolate(table: QuantileForecastTable, query: tuple[int, int]):
    """Forecasts at any (l, s) from the three nearest mesh points by
    barycentric interpolation (exact on mesh points and on affine fields);
    collinear triples fall back to inverse-distance weighting, flagged."""
    l, s = query
    d = table.mesh.horizon
    if l < 1 or s < 1 or l + s - 1 > d:
        raise ValueError(f"query (l={l}, s={s}) outside range for d={d}")
    if (l, s) in table.values:
        return table.values[(l, s)].copy(), "exact"
    pts = list(table.values.keys())
    coords = np.asarray(pts, dtype=np.float64)
    q = np.array([l, s], dtype=np.float64)
    dist = np.linalg.norm(coords - q, axis=1)
    nearest = np.argsort(dist, kind="stable")[:3]
    tri = coords[nearest]
    vals = np.stack([table.values[pts[i]] for i in nearest])
    # barycentric weights from the affine system [x; y; 1] w = [q; 1]
    A = np.vstack([tri.T, np.ones(3)])
    rhs = np.array([q[0], q[1], 1.0])
    det = np.linalg.det(A)
    if abs(det) < 1e-9:
        w = 1.0 / np.maximum(dist[nearest], 1e-12)
        w = w / w.sum()
        return w @ vals, "collinear-idw"
    w = np.linalg.solve(A, rhs)
    return w @ vals, "barycentric"


# ---------------------------------------------------------------------------
# report assembly


def report_rows(model_name: str, per_example_ql: list[dict],
                tables: list[QuantileForecastTable], u_set=EVAL_QUANTILES,
                baseline: dict | None = None, nonnegative: bool = True) -> list[dict]:
    """Rows of the evaluation report: one per (group, u) with pooled
    crossing rates; ``baseline`` maps (group, u) to the scaling QL."""
    agg = aggregate_ql(per_example_ql, u_set)
    rows = []
    for group in GROUPS:
        sub = []
        for t in tables:
            keep = {c: t.values[c] for c in _group_cells(t.values.keys(), group)}
            if keep:
                sub.append(QuantileForecastTable(t.mesh, t.u_set, keep))
        q_x, i_x = pooled_crossing_rates(sub, nonnegative=nonnegative) if sub \
            else (0.0, float("nan"))
        if group == "(l,1)":
            i_x = float("nan")  # no nested pairs among marginals
        for j, u in enumerate(u_set):
            mean_ql = agg[group][j]
            scaled = ""
            if baseline is not None:
                base = baseline.get((group, u), 0.0)
                scaled = mean_ql / base if base > 0 else ""
            rows.append({"model": model_name, "group": group, "u": u,
                         "mean_QL": mean_ql, "scaled_QL": scaled,
                         "q_x": q_x, "i_x": i_x})
    return rows
