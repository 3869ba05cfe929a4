"""Turn predictions into debiased outcomes: naive, LCC, Tweedie, and the PPI mean."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data_model import CalibrationArtifact, TrialData
from .density import ScoreModel, fit_kde, score_at
from .errors import ValidationError


CORRECTION_METHODS = ("naive", "lcc", "tweedie")


@dataclass(frozen=True)
class CorrectedOutcome:
    unit_id: str
    value: float
    method: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"unit {self.unit_id!r}: corrected value is not finite")
        if self.method not in CORRECTION_METHODS:
            raise ValidationError(f"unknown correction method {self.method!r}")


def lcc_correct(artifact: CalibrationArtifact, y_hat):
    """Invert the fitted line: ``(y_hat - m) / k``."""
    if isinstance(y_hat, (list, tuple)):
        y_hat = np.asarray(y_hat, dtype=float)
    return (y_hat - artifact.m_hat) / artifact.k_hat


def tweedie_correct(artifact: CalibrationArtifact, score_model: ScoreModel | Callable, y_hat):
    """Tweedie-adjusted outcome ``(y_hat + sigma2 * score(y_hat)) / k``.

    ``score_model`` is a :class:`ScoreModel` fitted on the same treatment arm
    as ``y_hat``, or any callable returning the score (e.g. an analytic one).
    """
    if isinstance(y_hat, (list, tuple)):
        y_hat = np.asarray(y_hat, dtype=float)
    if isinstance(score_model, ScoreModel):
        s = score_at(score_model, y_hat)
    else:
        s = score_model(y_hat)
    return (y_hat + artifact.sigma2_hat * s) / artifact.k_hat


def ppi_mean(labeled: Sequence[tuple[float, float]], unlabeled: Sequence[float]) -> float:
    """Prediction-powered mean: mean of unlabeled predictions minus the rectifier.

    ``labeled`` holds ``(prediction, truth)`` pairs; the rectifier is the mean
    of ``prediction - truth`` over them.
    """
    labeled = np.asarray(labeled, dtype=float).reshape(-1, 2) if len(labeled) else np.empty((0, 2))
    unlabeled = np.asarray(unlabeled, dtype=float)
    if labeled.shape[0] == 0:
        raise ValidationError("PPI needs at least one labeled pair")
    if unlabeled.size == 0:
        raise ValidationError("PPI needs at least one unlabeled prediction")
    rectifier = np.mean(labeled[:, 0] - labeled[:, 1])
    return float(np.mean(unlabeled) - rectifier)


def arm_score_models(y_pred, treatment, weights=None, **kde_kwargs) -> dict[int, ScoreModel]:
    """Fit one KDE per treatment arm on that arm's predictions."""
    y_pred = np.asarray(y_pred, dtype=float)
    treatment = np.asarray(treatment)
    models = {}
    for arm in (0, 1):
        mask = treatment == arm
        arm_y = y_pred[mask]
        if np.unique(arm_y).size < 2:
            raise ValidationError(f"arm {arm} needs at least 2 distinct predictions for the KDE, got {arm_y.size} rows")
        models[arm] = fit_kde(arm_y, None if weights is None else np.asarray(weights)[mask], **kde_kwargs)
    return models


def tweedie_values(artifact: CalibrationArtifact, y_pred, treatment, weights=None, **kde_kwargs) -> np.ndarray:
    """Vectorized Tweedie correction with arm-specific score models."""
    y_pred = np.asarray(y_pred, dtype=float)
    treatment = np.asarray(treatment)
    models = arm_score_models(y_pred, treatment, weights, **kde_kwargs)
    out = np.empty_like(y_pred)
    for arm, model in models.items():
        mask = treatment == arm
        out[mask] = tweedie_correct(artifact, model, y_pred[mask])
    return out


def correct_values(trial: TrialData, artifact: CalibrationArtifact | None, method: str, **kde_kwargs) -> np.ndarray:
    y_pred = trial.y_pred
    if method == "naive":
        return y_pred.copy()
    if artifact is None:
        raise ValidationError(f"method {method!r} needs a calibration artifact")
    if method == "lcc":
        return lcc_correct(artifact, y_pred)
    if method == "tweedie":
        return tweedie_values(artifact, y_pred, trial.treatment, **kde_kwargs)
    raise ValidationError(f"unknown correction method {method!r}; choose from {CORRECTION_METHODS}")


def correct_trial(
    trial: TrialData, artifact: CalibrationArtifact | None, method: str, **kde_kwargs
) -> list[CorrectedOutcome]:
    """One corrected outcome per record, in input order."""
    values = correct_values(trial, artifact, method, **kde_kwargs)
    return [CorrectedOutcome(uid, float(v), method) for uid, v in zip(trial.unit_ids, values)]
