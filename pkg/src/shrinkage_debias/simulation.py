"""Benchmark harness: confounded populations, frozen embeddings, trained
predictors, and every debiasing method scored over a sweep of true effects.

Each sweep point draws its own random stream from ``SeedSequence([seed,
index])``, so serial and parallel runs give identical results.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .calibration import build_artifact, estimate_noise_variance, fit_linear_calibration
from .corrections import lcc_correct, tweedie_values
from .diagnostics import CalibrationDiagnostic, calibration_regression
from .errors import ValidationError
from .estimators import hajek_weights, iptw_ate, ppi_arm_means, sigmoid_propensity
from .nn import FrozenEmbedder, Predictor, TrainConfig, embed, train_predictor

log = logging.getLogger(__name__)

SWEEP_METHODS = ("oracle", "naive", "lcc", "tweedie", "ppi", "ratledge")
SWEEP_COLUMNS = ("tau_true", "method", "tau_hat", "r2_oos")


@dataclass(frozen=True)
class SimConfig:
    tau_grid: tuple[float, ...] = tuple(np.linspace(-2.0, 2.0, 51).tolist())
    n_train: int = 5000
    n_test: int = 5000
    sigma_y: float = 1.0
    # sd of the noise added to the outcome before it is embedded; this is what
    # limits how much of Y the features carry (R^2 of about 0.5 by default)
    embed_noise: float = 1.5
    embed_dim: int = 100
    hidden_dim: int = 50
    predictor_hidden_dim: int = 50
    lambda_b: float = 15.0
    ppi_label_frac: float = 0.10
    ppi_stratified: bool = False
    calibration_frac: float = 0.25
    sigma_source: str = "calibration"
    tweedie_k: str = "calibrated"
    tweedie_weighted: bool = True
    seed: int = 20240601
    epochs: int = 30
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 64
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        if not self.tau_grid:
            raise ValidationError("tau_grid must not be empty")
        for name in ("n_train", "n_test", "embed_dim", "hidden_dim", "predictor_hidden_dim", "epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.n_train < 20 or self.n_test < 20:
            raise ValidationError("n_train and n_test must be at least 20")
        if self.sigma_y < 0 or self.embed_noise < 0:
            raise ValidationError("sigma_y and embed_noise must be non-negative")
        if self.lambda_b < 0:
            raise ValidationError("lambda_b must be non-negative")
        if not 0.0 < self.ppi_label_frac <= 1.0:
            raise ValidationError("ppi_label_frac must lie in (0, 1]")
        if not 0.0 < self.calibration_frac < 1.0:
            raise ValidationError("calibration_frac must lie in (0, 1)")
        if self.sigma_source not in ("calibration", "training"):
            raise ValidationError("sigma_source must be 'calibration' or 'training'")
        if self.tweedie_k != "calibrated":
            try:
                k = float(self.tweedie_k)
            except (TypeError, ValueError):
                raise ValidationError("tweedie_k must be 'calibrated' or a positive number") from None
            if not k > 0:
                raise ValidationError("tweedie_k must be positive")

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_dim=self.predictor_hidden_dim,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            lambda_b=self.lambda_b,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown simulation settings: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Population:
    c: np.ndarray
    a: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        n = self.c.size
        if not (self.a.size == n and self.y.size == n and self.x.shape[0] == n):
            raise ValidationError("population fields must have equal lengths")

    @property
    def propensity(self) -> np.ndarray:
        return sigmoid_propensity(self.c)

    def __len__(self):
        return self.c.size


def generate_population(
    cfg: SimConfig, tau: float, rng: np.random.Generator, embedder: FrozenEmbedder | None = None, n: int | None = None,
    confounder=None,
) -> Population:
    """Draw ``C ~ N(0,1)``, ``A ~ Bernoulli(sigmoid(C))``, ``Y ~ N(tau A + C, sigma_y)``
    and embed ``Y`` (plus embedding noise) through the frozen network.

    ``confounder`` overrides the draw of ``C`` (used for degenerate checks).
    """
    n = cfg.n_test if n is None else n
    c = rng.standard_normal(n) if confounder is None else np.broadcast_to(np.asarray(confounder, float), (n,)).copy()
    a = (rng.random(n) < sigmoid_propensity(c)).astype(int)
    y = tau * a + c + cfg.sigma_y * rng.standard_normal(n)
    if embedder is None:
        embedder = FrozenEmbedder.random(rng, cfg.hidden_dim, cfg.embed_dim)
    x = embed(embedder, y + cfg.embed_noise * rng.standard_normal(n))
    return Population(c, a, y, x)


def r_squared(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class SweepResult:
    tau_true: float
    estimates: dict = field(default_factory=dict)
    r2_oos: float = math.nan
    k_hat: float = math.nan
    sigma2_hat: float = math.nan

    def rows(self) -> list[tuple]:
        return [(self.tau_true, m, self.estimates[m], self.r2_oos) for m in SWEEP_METHODS if m in self.estimates]


def _child_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]))


def run_point(cfg: SimConfig, index: int) -> SweepResult:
    """Run the whole pipeline for one value of the true effect."""
    tau = cfg.tau_grid[index]
    rng = _child_rng(cfg.seed, index)
    embedder = FrozenEmbedder.random(rng, cfg.hidden_dim, cfg.embed_dim)
    train = generate_population(cfg, tau, rng, embedder, cfg.n_train)
    test = generate_population(cfg, tau, rng, embedder, cfg.n_test)

    # upstream: fit / calibration split of the training population
    perm = rng.permutation(cfg.n_train)
    n_cal = int(round(cfg.calibration_frac * cfg.n_train))
    cal_idx, fit_idx = perm[:n_cal], perm[n_cal:]
    tcfg = cfg.train_config
    mse_model = train_predictor(train.x[fit_idx], train.y[fit_idx], "mse", tcfg, rng)
    rat_model = train_predictor(train.x[fit_idx], train.y[fit_idx], "ratledge", tcfg, rng)

    cal_pairs = (train.y[cal_idx], mse_model.predict(train.x[cal_idx]))
    fit = fit_linear_calibration(cal_pairs)
    if cfg.sigma_source == "training":
        sigma2 = estimate_noise_variance((train.y[fit_idx], mse_model.predict(train.x[fit_idx])), fit)
    else:
        sigma2 = estimate_noise_variance(cal_pairs, fit)
    artifact = build_artifact(fit, sigma2, n_cal, cfg.sigma_source)

    # downstream: only predictions, treatment and propensities
    y_hat = mse_model.predict(test.x)
    e = test.propensity
    a = test.a
    est = {
        "oracle": iptw_ate(test.y, a, e).tau_hat,
        "naive": iptw_ate(y_hat, a, e).tau_hat,
        "lcc": iptw_ate(lcc_correct(artifact, y_hat), a, e).tau_hat,
    }
    tw_artifact = artifact if cfg.tweedie_k == "calibrated" else replace(artifact, k_hat=float(cfg.tweedie_k))
    weights = hajek_weights(a, e) if cfg.tweedie_weighted else None
    est["tweedie"] = iptw_ate(tweedie_values(tw_artifact, y_hat, a, weights), a, e).tau_hat

    labels = np.full(cfg.n_test, np.nan)
    labeled = _ppi_label_mask(rng, a, cfg.ppi_label_frac, cfg.ppi_stratified)
    labels[labeled] = test.y[labeled]
    mu1, mu0 = ppi_arm_means(y_hat, a, labels, e)
    est["ppi"] = mu1 - mu0
    est["ratledge"] = iptw_ate(rat_model.predict(test.x), a, e).tau_hat
    r2 = r_squared(test.y, y_hat)
    log.debug("tau=%.3f r2=%.3f k=%.3f sigma2=%.3f", tau, r2, artifact.k_hat, artifact.sigma2_hat)
    return SweepResult(tau, {k: float(v) for k, v in est.items()}, r2, artifact.k_hat, artifact.sigma2_hat)


def _ppi_label_mask(rng, a, frac: float, stratified: bool) -> np.ndarray:
    n = a.size
    mask = np.zeros(n, dtype=bool)
    if frac >= 1.0:
        mask[:] = True
        return mask
    if stratified:
        for arm in (0, 1):
            idx = np.flatnonzero(a == arm)
            k = max(1, int(round(frac * idx.size)))
            mask[rng.choice(idx, size=k, replace=False)] = True
        return mask
    k = max(2, int(round(frac * n)))
    mask[rng.choice(n, size=k, replace=False)] = True
    # a pooled draw can miss an arm in tiny trials; add one unit from it
    for arm in (0, 1):
        if not np.any(mask & (a == arm)):
            mask[rng.choice(np.flatnonzero(a == arm))] = True
    return mask


def run_sweep(cfg: SimConfig, n_jobs: int = 1) -> list[SweepResult]:
    indices = range(len(cfg.tau_grid))
    if n_jobs == 1:
        return [run_point(cfg, i) for i in indices]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(run_point, [cfg] * len(cfg.tau_grid), indices))


def summarize(results: list[SweepResult]) -> dict[str, CalibrationDiagnostic]:
    tau = np.array([r.tau_true for r in results])
    out = {}
    for method in SWEEP_METHODS:
        if all(method in r.estimates for r in results):
            out[method] = calibration_regression(tau, [r.estimates[method] for r in results])
    return out


def mean_r2(results: list[SweepResult]) -> float:
    return float(np.mean([r.r2_oos for r in results]))


def write_sweep_csv(results: list[SweepResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in results:
            for tau, method, tau_hat, r2 in r.rows():
                writer.writerow([repr(tau), method, repr(tau_hat), repr(r2)])


def read_sweep_csv(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Return ``{method: (tau_true, tau_hat)}`` from a sweep CSV."""
    from .data_model import _parse_float, _read_csv

    _, rows = _read_csv(path, ("tau_true", "method", "tau_hat"))
    by_method: dict[str, tuple[list, list]] = {}
    for i, r in enumerate(rows, start=1):
        t, h = by_method.setdefault(r["method"].strip(), ([], []))
        t.append(_parse_float(r["tau_true"], i, "tau_true"))
        h.append(_parse_float(r["tau_hat"], i, "tau_hat"))
    return {m: (np.array(t), np.array(h)) for m, (t, h) in by_method.items()}
