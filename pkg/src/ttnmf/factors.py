"""Factor model, lag machinery and the two regularizers.

The latent flow matrix is approximated as X ~ spatial @ latent with an
autoregressive coupling on the rows of `latent` (weights in `ar_weights`,
offsets in a LagSet) and an orthogonality push on the compact routing
matrix routing @ spatial.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError, UsageError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LagSet:
    """Strictly increasing positive integer lags; empty means no temporal coupling."""

    lags: tuple = ()

    def __post_init__(self):
        lags = tuple(int(v) for v in self.lags)
        if any(v < 1 for v in lags):
            raise ConfigError(f"lags must be positive integers, got {lags}")
        if len(set(lags)) != len(lags):
            raise ConfigError(f"lags must be distinct, got {lags}")
        object.__setattr__(self, "lags", tuple(sorted(lags)))

    @property
    def max_lag(self) -> int:
        return self.lags[-1] if self.lags else 0

    def __len__(self):
        return len(self.lags)

    def __iter__(self):
        return iter(self.lags)


@dataclass(frozen=True)
class RegularizationWeights:
    """Penalty strengths (lambdas) and the ratios (betas) they were tuned from."""

    lambda_temporal: float = 0.0
    lambda_ortho: float = 0.0
    beta_temporal: float = 0.0
    beta_ortho: float = 0.0

    def __post_init__(self):
        if self.lambda_temporal < 0 or self.lambda_ortho < 0:
            raise ConfigError("penalty weights must be >= 0")
        # beta = 0 switches the corresponding penalty off (ablation mode)
        for b in (self.beta_temporal, self.beta_ortho):
            if not 0.0 <= b <= 1.0:
                raise ConfigError(f"beta must lie in [0, 1], got {b}")


@dataclass(frozen=True)
class TemporalGraph:
    """Signed similarity graph over timestamps induced by one row of AR weights.

    `bands[d]` holds the edge weights S(t, t+d) for displacement d > 0
    (symmetric counterpart implied), `diagonal` the boundary-correction
    diagonal D, and `laplacian` the graph Laplacian of S.  Storage is banded:
    T x T dense matrices are never materialized.
    """

    n_timestamps: int
    bands: dict
    diagonal: np.ndarray
    laplacian: sp.csr_matrix

    def weight_matrix(self) -> sp.csr_matrix:
        """Symmetric edge-weight matrix S (no self loops)."""
        T = self.n_timestamps
        if not self.bands:
            return sp.csr_matrix((T, T))
        diags, offs = [], []
        for d, band in self.bands.items():
            diags += [band, band]
            offs += [d, -d]
        return sp.diags(diags, offs, shape=(T, T), format="csr")

    def penalty(self, row: np.ndarray) -> float:
        """1/2 sum S(t1,t2)(h_t1-h_t2)^2 + 1/2 h D h^T for one latent row."""
        row = np.asarray(row, dtype=float)
        quad = float(row @ (self.laplacian @ row))
        return quad + 0.5 * float((row * row) @ self.diagonal)

    def gradient(self, row: np.ndarray) -> np.ndarray:
        """Gradient of penalty() with respect to the row."""
        row = np.asarray(row, dtype=float)
        return 2.0 * (self.laplacian @ row) + self.diagonal * row

    def curvature_bound(self) -> float:
        """Upper bound on ||Lap||_2 + ||D||_2 (infinity norm on the Laplacian)."""
        if self.n_timestamps == 0:
            return 0.0
        lap_inf = float(np.abs(self.laplacian).sum(axis=1).max())
        d_norm = float(np.max(np.abs(self.diagonal))) if self.diagonal.size else 0.0
        return lap_inf + d_norm


def build_temporal_graph(ar_row, lag_set: LagSet, n_timestamps: int) -> TemporalGraph:
    """Build the temporal graph of one latent row.

    The lag-0 weight is fixed at -1 so that the graph quadratic form plus the
    diagonal correction reproduces the AR residual sum exactly, boundary
    effects included.
    """
    T = int(n_timestamps)
    if T < 1:
        raise ConfigError(f"need at least one timestamp, got {T}")
    ar_row = np.asarray(ar_row, dtype=float).reshape(-1)
    if ar_row.shape != (len(lag_set),):
        raise ShapeError(f"ar_row has {ar_row.size} weights for {len(lag_set)} lags")
    if np.any(ar_row < 0):
        raise ValidationError("AR weights must be nonnegative")
    if len(lag_set) == 0:
        return TemporalGraph(T, {}, np.zeros(T), sp.csr_matrix((T, T)))
    L = lag_set.max_lag
    if L >= T:
        raise ConfigError(f"max lag {L} must be < number of timestamps {T}")

    offsets = np.concatenate(([0], np.asarray(lag_set.lags, dtype=int)))
    signed = np.concatenate(([-1.0], ar_row))

    # Each residual position t in [L, T-1] couples the pair (t-li, t-lj) with
    # weight -1/2 w_i w_j; collecting by displacement d = li - lj > 0 gives a
    # band whose values vary only where the window [L, T-1] truncates.
    bands = {}
    for i, li in enumerate(offsets):
        for j, lj in enumerate(offsets):
            d = int(li - lj)
            if d <= 0:
                continue
            c = -0.5 * signed[i] * signed[j]
            if c == 0.0:
                continue
            band = bands.setdefault(d, np.zeros(T - d))
            band[L - li : T - li] += c
    bands = {d: band for d, band in bands.items() if np.any(band)}

    total = float(signed.sum())
    window = np.zeros(T)
    for i, li in enumerate(offsets):
        window[L - li : T - li] += signed[i]
    diagonal = total * window

    rowsum = np.zeros(T)
    for d, band in bands.items():
        rowsum[: T - d] += band
        rowsum[d:] += band
    diags, offs = [rowsum], [0]
    for d, band in bands.items():
        diags += [-band, -band]
        offs += [d, -d]
    laplacian = sp.diags(diags, offs, shape=(T, T), format="csr")
    return TemporalGraph(T, bands, diagonal, laplacian)


def build_lag_design_matrix(latent: np.ndarray, row: int, lag_set: LagSet) -> np.ndarray:
    """Lagged copies of one latent row, zero outside the residual window.

    Returns a len(lag_set) x T matrix whose q-th row holds latent[row, t - lag_q]
    for t >= max_lag and 0 before that.
    """
    latent = np.asarray(latent, dtype=float)
    if latent.ndim != 2:
        raise ShapeError("latent must be 2-D")
    k, T = latent.shape
    if not 0 <= row < k:
        raise ShapeError(f"row {row} out of range for {k} latent rows")
    design = np.zeros((len(lag_set), T))
    if len(lag_set) == 0:
        return design
    L = lag_set.max_lag
    if L >= T:
        raise ConfigError(f"max lag {L} must be < number of timestamps {T}")
    for q, lag in enumerate(lag_set.lags):
        design[q, L:] = latent[row, L - lag : T - lag]
    return design


@dataclass(frozen=True)
class FactorModel:
    """Trained factors plus the cached compact routing matrix."""

    spatial: np.ndarray         # n x k
    latent: np.ndarray          # k x T
    ar_weights: np.ndarray      # k x len(lag_set)
    lag_set: LagSet
    compact_routing: np.ndarray  # m x k, equals routing @ spatial

    @classmethod
    def from_factors(cls, spatial, latent, ar_weights, lag_set, routing) -> "FactorModel":
        spatial = np.ascontiguousarray(spatial, dtype=float)
        latent = np.ascontiguousarray(latent, dtype=float)
        ar_weights = np.ascontiguousarray(ar_weights, dtype=float)
        routing_arr = routing_array(routing)
        if spatial.ndim != 2 or latent.ndim != 2 or ar_weights.ndim != 2:
            raise ShapeError("factors must be 2-D arrays")
        n, k = spatial.shape
        if latent.shape[0] != k:
            raise ShapeError(f"latent has {latent.shape[0]} rows, expected rank {k}")
        if ar_weights.shape != (k, len(lag_set)):
            raise ShapeError(
                f"ar_weights shape {ar_weights.shape} != ({k}, {len(lag_set)})")
        if routing_arr.shape[1] != n:
            raise ShapeError(
                f"routing has {routing_arr.shape[1]} columns, expected {n}")
        for name, arr in (("spatial", spatial), ("latent", latent),
                          ("ar_weights", ar_weights)):
            if arr.size and arr.min() < 0:
                raise ValidationError(f"{name} factor has negative entries")
        return cls(spatial, latent, ar_weights, lag_set, routing_arr @ spatial)

    @property
    def rank(self) -> int:
        return self.spatial.shape[1]

    @property
    def n_flows(self) -> int:
        return self.spatial.shape[0]

    @property
    def n_timestamps(self) -> int:
        return self.latent.shape[1]


def routing_array(routing) -> np.ndarray:
    """Accept a RoutingMatrix or a plain 2-D array and return the array."""
    arr = getattr(routing, "entries", routing)
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2:
        raise ShapeError("routing must be a 2-D matrix")
    return arr


def temporal_penalty_value(latent, ar_weights, lag_set: LagSet, form: str) -> float:
    """AR temporal penalty over all latent rows.

    form="residual" evaluates 1/2 sum_p sum_{t>max_lag} (h_p(t) - sum_l
    w_p(l) h_p(t-l))^2 directly; form="laplacian" goes through the banded
    temporal graph.  The two agree to rounding error.
    """
    if form not in ("residual", "laplacian"):
        raise UsageError(f"unknown temporal penalty form {form!r}")
    latent = np.asarray(latent, dtype=float)
    if latent.ndim != 2:
        raise ShapeError("latent must be 2-D")
    k, T = latent.shape
    if len(lag_set) == 0:
        return 0.0
    ar_weights = np.asarray(ar_weights, dtype=float)
    if ar_weights.shape != (k, len(lag_set)):
        raise ShapeError(
            f"ar_weights shape {ar_weights.shape} != ({k}, {len(lag_set)})")
    L = lag_set.max_lag
    if L >= T:
        raise ConfigError(f"max lag {L} must be < number of timestamps {T}")
    if form == "residual":
        total = 0.0
        for p in range(k):
            pred = np.zeros(T - L)
            for q, lag in enumerate(lag_set.lags):
                pred += ar_weights[p, q] * latent[p, L - lag : T - lag]
            resid = latent[p, L:] - pred
            total += 0.5 * float(resid @ resid)
        return total
    total = 0.0
    for p in range(k):
        graph = build_temporal_graph(ar_weights[p], lag_set, T)
        total += graph.penalty(latent[p])
    return total


def ortho_penalty_value(compact_routing) -> float:
    """||C^T C - I||_F^2 for the compact routing matrix C."""
    compact = np.asarray(compact_routing, dtype=float)
    if compact.ndim != 2:
        raise ShapeError("compact routing must be 2-D")
    gram = compact.T @ compact
    gram = gram - np.eye(gram.shape[0])
    return float(np.vdot(gram, gram))


def objective_value(x, model: FactorModel, weights: RegularizationWeights,
                    routing) -> float:
    """Full regularized objective: data fit + temporal + orthogonality terms.

    The compact routing matrix is recomputed from `routing` and the current
    spatial factor so perturbed models evaluate consistently.
    """
    x = np.asarray(x, dtype=float)
    routing_arr = routing_array(routing)
    if x.shape != (model.n_flows, model.n_timestamps):
        raise ShapeError(
            f"data shape {x.shape} != ({model.n_flows}, {model.n_timestamps})")
    resid = x - model.spatial @ model.latent
    total = float(np.vdot(resid, resid))
    if weights.lambda_temporal > 0 and len(model.lag_set) > 0:
        total += weights.lambda_temporal * temporal_penalty_value(
            model.latent, model.ar_weights, model.lag_set, "residual")
    if weights.lambda_ortho > 0:
        total += weights.lambda_ortho * ortho_penalty_value(
            routing_arr @ model.spatial)
    return total
