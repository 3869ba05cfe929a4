"""Treatment-effect estimators on (possibly corrected) outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np

from .data_model import AteReport, TrialData
from .errors import ValidationError


@dataclass(frozen=True)
class PropensitySpec:
    """Where propensities come from: a trial column, the sigmoid of the
    confounder, or one constant for every unit."""

    kind: Literal["known_column", "sigmoid_of_confounder", "constant"]
    constant_value: float | None = None

    def __post_init__(self):
        if self.kind not in ("known_column", "sigmoid_of_confounder", "constant"):
            raise ValidationError(f"unknown propensity kind {self.kind!r}")
        if (self.kind == "constant") != (self.constant_value is not None):
            raise ValidationError("constant_value is required for, and only for, kind='constant'")
        if self.constant_value is not None and not 0.0 < self.constant_value < 1.0:
            raise ValidationError("constant propensity must lie in (0, 1)")

    @classmethod
    def parse(cls, text: str) -> "PropensitySpec":
        """Parse ``column``, ``sigmoid`` or ``const:<p>``."""
        if text == "column":
            return cls("known_column")
        if text == "sigmoid":
            return cls("sigmoid_of_confounder")
        if text.startswith("const:"):
            try:
                value = float(text[len("const:"):])
            except ValueError:
                raise ValidationError(f"bad constant propensity {text!r}") from None
            return cls("constant", value)
        raise ValidationError(f"propensity must be 'column', 'sigmoid' or 'const:<p>', got {text!r}")

    def resolve(self, trial: TrialData) -> np.ndarray:
        if self.kind == "constant":
            return np.full(len(trial), self.constant_value)
        if self.kind == "known_column":
            e = trial.propensity
            if e is None:
                raise ValidationError("propensity column missing or incomplete in the trial")
            return e
        c = trial.confounder
        if c is None:
            raise ValidationError("confounder column missing or incomplete in the trial")
        return sigmoid_propensity(c)


def sigmoid_propensity(c):
    """``1 / (1 + exp(-c))``, evaluated without overflow."""
    c = np.asarray(c, dtype=float)
    out = np.empty_like(c)
    pos = c >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-c[pos]))
    ec = np.exp(c[~pos])
    out[~pos] = ec / (1.0 + ec)
    return float(out) if out.ndim == 0 else out


def _split(values, treatment) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    treatment = np.asarray(treatment)
    if values.shape != treatment.shape:
        raise ValidationError("values and treatment must have the same length")
    if not np.all((treatment == 0) | (treatment == 1)):
        raise ValidationError("treatment must be 0 or 1")
    treated = treatment == 1
    n1 = int(treated.sum())
    n0 = treated.size - n1
    if n1 == 0 or n0 == 0:
        raise ValidationError(f"both arms need at least one unit (treated={n1}, control={n0})")
    return values, treated, np.array([n1, n0])


def diff_in_means(values, treatment, method: str = "naive") -> AteReport:
    """Mean of treated values minus mean of control values."""
    values, treated, (n1, n0) = _split(values, treatment)
    tau = values[treated].mean() - values[~treated].mean()
    return AteReport(method, float(tau), int(n1), int(n0), "diff_in_means")


def hajek_weights(treatment, propensity) -> np.ndarray:
    """Inverse-probability weights: ``1/e`` for treated, ``1/(1-e)`` for control."""
    treatment = np.asarray(treatment)
    e = np.asarray(propensity, dtype=float)
    if e.shape != treatment.shape:
        raise ValidationError("propensity and treatment must have the same length")
    if np.any(~np.isfinite(e)) or np.any(e <= 0.0) or np.any(e >= 1.0):
        raise ValidationError("propensities must lie strictly inside (0, 1)")
    return np.where(treatment == 1, 1.0 / e, 1.0 / (1.0 - e))


def iptw_ate(values, treatment, propensity, method: str = "naive") -> AteReport:
    """Self-normalized (Hajek) inverse-probability-weighted ATE."""
    values, treated, (n1, n0) = _split(values, treatment)
    w = hajek_weights(treatment, propensity)
    tau = _weighted_mean(values[treated], w[treated]) - _weighted_mean(values[~treated], w[~treated])
    return AteReport(method, float(tau), int(n1), int(n0), "iptw")


def _weighted_mean(x, w):
    if np.all(w == w[0]):
        # uniform weights cancel; keeps constant-propensity IPTW identical to diff-in-means
        return float(x.mean())
    return float(np.sum(w * x) / np.sum(w))


def ppi_arm_means(y_pred, treatment, labels, propensity=None) -> tuple[float, float]:
    """Per-arm prediction-powered means.

    ``labels`` is an array with NaN for unlabeled units. Within each arm the
    imputed mean runs over every unit of the arm and the rectifier over its
    labeled units. With ``propensity`` both means are inverse-probability
    weighted.
    """
    y_pred = np.asarray(y_pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    treatment = np.asarray(treatment)
    w = np.ones_like(y_pred) if propensity is None else hajek_weights(treatment, propensity)
    means = []
    for arm in (1, 0):
        in_arm = treatment == arm
        lab = in_arm & ~np.isnan(labels)
        if not lab.any():
            raise ValidationError(f"PPI needs labeled units in both arms; arm {arm} has none")
        rect = _weighted_mean(y_pred[lab] - labels[lab], w[lab])
        means.append(_weighted_mean(y_pred[in_arm], w[in_arm]) - rect)
    return means[0], means[1]


def ppi_ate(trial: TrialData, labeled: Mapping[str, float] | list[tuple[str, float]], propensity=None) -> AteReport:
    """Difference of per-arm PPI means.

    ``labeled`` maps unit ids of the trial to ground-truth outcomes.
    """
    items = labeled.items() if isinstance(labeled, Mapping) else labeled
    labels = np.full(len(trial), np.nan)
    for uid, y in items:
        if not math.isfinite(y):
            raise ValidationError(f"label for {uid!r} is not finite")
        labels[trial.position(uid)] = y
    treatment = trial.treatment
    _, _, (n1, n0) = _split(trial.y_pred, treatment)
    mu1, mu0 = ppi_arm_means(trial.y_pred, treatment, labels, propensity)
    return AteReport("ppi", mu1 - mu0, int(n1), int(n0), "ppi_mean_diff")
