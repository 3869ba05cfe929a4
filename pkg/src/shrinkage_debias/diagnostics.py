"""Debiasing-quality diagnostics over a sweep of true effects.

The F-test is the joint test of slope = 1 and intercept = 0 for the
regression of estimated on true effects, with ``(2, n - 2)`` degrees of
freedom.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .density import fit_kde, score_at
from .errors import ValidationError

TABLE_COLUMNS = ("method", "mae", "slope", "intercept", "f_statistic", "p_value", "pearson_r", "n_points")


@dataclass(frozen=True)
class CalibrationDiagnostic:
    slope: float
    intercept: float
    f_statistic: float
    p_value: float
    mae: float
    n_points: int
    pearson_r: float

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValidationError(f"p_value out of [0, 1]: {self.p_value}")
        if self.mae < 0:
            raise ValidationError("mae must be non-negative")


def f_upper_tail(f: float, df1: int, df2: int) -> float:
    """``P(F > f)`` for an F(df1, df2) variable.

    Uses ``I_x(df2/2, df1/2)`` with ``x = df2 / (df2 + df1 f)``; ``df2 = inf``
    falls back to the chi-square limit.
    """
    if not (df1 >= 1 and df2 >= 1):
        raise ValidationError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if math.isnan(f) or f < 0:
        raise ValidationError(f"F statistic must be >= 0, got {f}")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    if math.isinf(df2):
        return float(special.gammaincc(df1 / 2.0, df1 * f / 2.0))
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(df2 / 2.0, df1 / 2.0, x))


def calibration_regression(tau_true, tau_hat) -> CalibrationDiagnostic:
    tau_true = np.asarray(tau_true, dtype=float)
    tau_hat = np.asarray(tau_hat, dtype=float)
    if tau_true.shape != tau_hat.shape or tau_true.ndim != 1:
        raise ValidationError("tau_true and tau_hat must be 1-d arrays of equal length")
    n = tau_true.size
    if n < 4:
        raise ValidationError(f"calibration regression needs at least 4 points, got {n}")
    dx = tau_true - tau_true.mean()
    sxx = float(dx @ dx)
    if sxx <= 0:
        raise ValidationError("tau_true has no variance; the calibration slope is not identified")
    dy = tau_hat - tau_hat.mean()
    slope = float(dx @ dy) / sxx
    intercept = float(tau_hat.mean() - slope * tau_true.mean())
    resid = tau_hat - (intercept + slope * tau_true)
    rss_u = float(resid @ resid)
    rss_r = float(np.sum((tau_hat - tau_true) ** 2))
    # guard against round-off making a perfect fit look imperfect
    scale = max(1.0, float(np.sum(tau_hat**2)))
    if rss_u <= 1e-24 * scale:
        if rss_r <= 1e-24 * scale:
            f_stat, p = 0.0, 1.0
        else:
            f_stat, p = math.inf, 0.0
    else:
        f_stat = max(0.0, (rss_r - rss_u) / 2.0) / (rss_u / (n - 2))
        p = f_upper_tail(f_stat, 2, n - 2)
    syy = float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy) if syy > 0 else 0.0
    return CalibrationDiagnostic(
        slope=slope,
        intercept=intercept,
        f_statistic=float(f_stat),
        p_value=float(p),
        mae=float(np.mean(np.abs(tau_hat - tau_true))),
        n_points=int(n),
        pearson_r=max(-1.0, min(1.0, r)),
    )


def score_correlation(sample_a, sample_b, eval_points, **kde_kwargs) -> float:
    """Pearson correlation between the KDE scores of two samples over ``eval_points``."""
    s_a = score_at(fit_kde(sample_a, **kde_kwargs), np.asarray(eval_points, dtype=float))
    s_b = score_at(fit_kde(sample_b, **kde_kwargs), np.asarray(eval_points, dtype=float))
    if np.std(s_a) == 0 or np.std(s_b) == 0:
        raise ValidationError("a score vector has zero variance over the evaluation points")
    return float(np.corrcoef(s_a, s_b)[0, 1])


def diagnostic_rows(diagnostics: dict[str, CalibrationDiagnostic]) -> list[dict]:
    return [{"method": name, **{k: v for k, v in asdict(d).items()}} for name, d in diagnostics.items()]


def write_table_csv(diagnostics: dict[str, CalibrationDiagnostic], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in diagnostic_rows(diagnostics):
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_table_json(diagnostics: dict[str, CalibrationDiagnostic], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(diagnostic_rows(diagnostics), fh, indent=2)
        fh.write("\n")


def format_table(diagnostics: dict[str, CalibrationDiagnostic]) -> str:
    lines = [f"{'method':<10} {'MAE':>8} {'slope':>8} {'F':>10} {'p':>7}"]
    for name, d in diagnostics.items():
        lines.append(f"{name:<10} {d.mae:8.3f} {d.slope:8.3f} {d.f_statistic:10.3f} {d.p_value:7.3f}")
    return "\n".join(lines)
