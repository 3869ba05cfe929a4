"""Upstream estimation of the shrinkage model ``y_pred = k * y_true + m + e``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data_model import CalibrationArtifact, CalibrationPair, SIGMA_SOURCES
from .errors import ValidationError


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    r_squared: float
    rss: float

    @property
    def n(self) -> int:
        return len(self.residuals)


def _as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and not isinstance(pairs[0], CalibrationPair):
        y_true, y_pred = pairs
        return np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float)
    pairs = list(pairs)
    return (
        np.array([p.y_true for p in pairs], dtype=float),
        np.array([p.y_pred for p in pairs], dtype=float),
    )


def fit_linear_calibration(pairs: Sequence[CalibrationPair] | tuple[Iterable, Iterable]) -> LinearFit:
    """Ordinary least squares of predictions on truth.

    ``pairs`` is a list of :class:`CalibrationPair` or a ``(y_true, y_pred)``
    tuple of arrays.
    """
    y, yhat = _as_arrays(pairs)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValidationError("y_true and y_pred must be 1-d and of equal length")
    n = len(y)
    if n < 3:
        raise ValidationError(f"need at least 3 calibration pairs, got {n}")
    y_mean = y.mean()
    dy = y - y_mean
    sxx = float(dy @ dy)
    if sxx <= 0.0 or sxx <= 1e-24 * n * max(1.0, y_mean**2):
        raise ValidationError("degenerate design: y_true is constant, slope is not identified")
    slope = float(dy @ (yhat - yhat.mean())) / sxx
    intercept = float(yhat.mean() - slope * y_mean)
    residuals = yhat - (slope * y + intercept)
    rss = float(residuals @ residuals)
    tss = float(((yhat - yhat.mean()) ** 2).sum())
    r_squared = 1.0 - rss / tss if tss > 0 else 1.0
    return LinearFit(slope, intercept, residuals, min(max(r_squared, 0.0), 1.0), rss)


def estimate_noise_variance(pairs, fit: LinearFit) -> float:
    """Mean squared residual (1/n divisor) of the fitted line, intercept included."""
    y, yhat = _as_arrays(pairs)
    resid = yhat - fit.slope * y - fit.intercept
    return float(np.mean(resid**2))


def build_artifact(fit: LinearFit, sigma2: float, n_cal: int, sigma_source: str = "calibration") -> CalibrationArtifact:
    if not fit.slope > 0:
        raise ValidationError(
            f"fitted slope {fit.slope:.4g} is not positive: predictions are flat or anti-correlated "
            "with the truth, so the shrinkage cannot be inverted"
        )
    if sigma_source not in SIGMA_SOURCES:
        raise ValidationError(f"sigma_source must be one of {SIGMA_SOURCES}")
    return CalibrationArtifact(
        k_hat=float(fit.slope),
        m_hat=float(fit.intercept),
        sigma2_hat=float(sigma2),
        n_cal=int(n_cal),
        sigma_source=sigma_source,
    )


def calibrate(pairs, sigma_source: str = "calibration", sigma_pairs=None) -> tuple[CalibrationArtifact, LinearFit]:
    """Fit the line on ``pairs`` and package it.

    With ``sigma_source="training"`` the noise variance is taken from the
    residuals of ``sigma_pairs`` (e.g. the training split) around the line
    fitted on the calibration pairs.
    """
    fit = fit_linear_calibration(pairs)
    if sigma_source == "training":
        if sigma_pairs is None:
            raise ValidationError("sigma_source='training' needs the training pairs")
        sigma2 = estimate_noise_variance(sigma_pairs, fit)
    else:
        sigma2 = estimate_noise_variance(pairs, fit)
    return build_artifact(fit, sigma2, fit.n, sigma_source), fit
