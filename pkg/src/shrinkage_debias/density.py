"""Gaussian kernel density estimates and their score ``d/dy log p(y)``.

Evaluation is exact O(n) summation per query point, done in log space so the
score stays finite far from the data. Two regularizers apply where the
density is small: the density is floored at ``density_floor_frac`` times the
peak density, and the score is clamped to ``[-score_clamp, score_clamp]``.
Setting the floor to 0 and the clamp to ``inf`` gives the exact derivative of
the log KDE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_DENSITY_FLOOR_FRAC = 1e-3
DEFAULT_CLAMP_BANDWIDTHS = 2.0  # default clamp is 2 / h
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_CHUNK_ELEMS = 4_000_000
_PEAK_POINTS = 1000


@dataclass(frozen=True)
class ScoreModel:
    """A fitted one-dimensional Gaussian KDE.

    ``weights`` are optional non-negative sample weights (uniform if None).
    ``score_clamp=None`` means the default ``2 / bandwidth``.
    """

    samples: np.ndarray
    bandwidth: float
    density_floor_frac: float = DEFAULT_DENSITY_FLOOR_FRAC
    score_clamp: float | None = None
    weights: np.ndarray | None = None
    log_peak: float = field(init=False, repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).ravel()
        if samples.size == 0:
            raise ValidationError("a score model needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("samples must be finite")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValidationError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        if not 0.0 <= self.density_floor_frac < 1.0:
            raise ValidationError("density_floor_frac must lie in [0, 1)")
        clamp = DEFAULT_CLAMP_BANDWIDTHS / self.bandwidth if self.score_clamp is None else float(self.score_clamp)
        if not clamp > 0:
            raise ValidationError("score_clamp must be positive (use inf to disable)")
        weights = self.weights
        if weights is not None:
            weights = np.asarray(weights, dtype=float).ravel()
            if weights.shape != samples.shape or np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise ValidationError("weights must be finite, non-negative and match the samples")
            if weights.sum() <= 0:
                raise ValidationError("weights must not all be zero")
            weights.setflags(write=False)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "score_clamp", clamp)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "log_peak", self._compute_log_peak())

    @property
    def n(self) -> int:
        return self.samples.size

    def _log_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.n, -math.log(self.n))
        with np.errstate(divide="ignore"):
            return np.log(self.weights / self.weights.sum())

    def _compute_log_peak(self) -> float:
        # Peak over sample points; for large samples, over an evenly spaced
        # subset of the sorted samples (spacing far below the bandwidth).
        pts = self.samples
        if pts.size > _PEAK_POINTS:
            pts = np.sort(pts)[np.linspace(0, pts.size - 1, _PEAK_POINTS).astype(int)]
        log_p, _ = _log_density_and_raw_score(self, pts)
        return float(log_p.max())

    def log_density(self, y):
        log_p, _ = _log_density_and_raw_score(self, np.atleast_1d(np.asarray(y, dtype=float)))
        return float(log_p[0]) if np.ndim(y) == 0 else log_p

    def density(self, y):
        return np.exp(self.log_density(y))

    def with_regularization(self, density_floor_frac: float, score_clamp: float | None) -> "ScoreModel":
        return ScoreModel(self.samples, self.bandwidth, density_floor_frac, score_clamp, self.weights)


def _log_density_and_raw_score(model: ScoreModel, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log KDE density and unregularized score at each point of ``y``."""
    h = model.bandwidth
    xs = model.samples
    log_w = model._log_weights()
    out_logp = np.empty(y.size)
    out_score = np.empty(y.size)
    step = max(1, _CHUNK_ELEMS // xs.size)
    for start in range(0, y.size, step):
        yc = y[start : start + step]
        diff = xs[None, :] - yc[:, None]  # (y_i - y)
        a = log_w[None, :] - 0.5 * (diff / h) ** 2
        m = a.max(axis=1, keepdims=True)
        e = np.exp(a - m)
        s = e.sum(axis=1)
        t = (e * diff).sum(axis=1)
        out_logp[start : start + step] = m[:, 0] + np.log(s) - math.log(h) - _LOG_SQRT_2PI
        out_score[start : start + step] = t / (s * h * h)
    return out_logp, out_score


def scott_bandwidth(samples, weights=None) -> float:
    """Scott's rule for one dimension: ``sd * n_eff ** (-1/5)``.

    With weights, ``sd`` is the weighted standard deviation (reliability
    weights) and ``n_eff = (sum w)^2 / sum w^2``.
    """
    x = np.asarray(samples, dtype=float)
    if weights is None:
        n_eff = x.size
        sd = x.std(ddof=1)
    else:
        w = np.asarray(weights, dtype=float)
        v1, v2 = w.sum(), (w * w).sum()
        n_eff = v1 * v1 / v2
        mean = (w * x).sum() / v1
        sd = math.sqrt((w * (x - mean) ** 2).sum() / (v1 - v2 / v1))
    return float(sd * n_eff ** (-1.0 / 5.0))


def fit_kde(
    samples,
    weights=None,
    density_floor_frac: float = DEFAULT_DENSITY_FLOOR_FRAC,
    score_clamp: float | None = None,
) -> ScoreModel:
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise ValidationError(f"a KDE needs at least 2 samples, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise ValidationError("samples must be finite")
    if weights is not None:
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != samples.shape or np.any(weights < 0) or not weights.sum() > 0:
            raise ValidationError("weights must be non-negative, not all zero, and match the samples")
    if np.ptp(samples) == 0:
        raise ValidationError("zero bandwidth: all samples are equal")
    h = scott_bandwidth(samples, weights)
    if not h > 0:
        raise ValidationError("zero bandwidth: sample standard deviation is 0")
    return ScoreModel(samples, h, density_floor_frac, score_clamp, weights)


def score_at(model: ScoreModel, y):
    """Regularized score of the KDE at ``y`` (scalar or array)."""
    pts = np.atleast_1d(np.asarray(y, dtype=float))
    log_p, score = _log_density_and_raw_score(model, pts)
    if model.density_floor_frac > 0:
        log_thr = model.log_peak + math.log(model.density_floor_frac)
        low = log_p < log_thr
        # floored denominator: score * p / threshold
        score = np.where(low, score * np.exp(np.minimum(log_p - log_thr, 0.0)), score)
    score = np.clip(score, -model.score_clamp, model.score_clamp)
    return float(score[0]) if np.ndim(y) == 0 else score


def analytic_gaussian_score(mean: float, variance: float, y):
    """Score of N(mean, variance): ``(mean - y) / variance``."""
    if not variance > 0:
        raise ValidationError(f"variance must be positive, got {variance}")
    return (mean - np.asarray(y, dtype=float)) / variance if np.ndim(y) else (mean - y) / variance
