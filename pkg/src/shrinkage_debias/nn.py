"""Small numpy networks for the benchmark: a frozen random embedder and a
one-hidden-layer regressor trained by mini-batch gradient descent under MSE or the
quintile-bias (Ratledge) loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

N_QUINTILES = 5


def _uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def relu(x):
    return np.maximum(x, 0.0)


# --- frozen embedder ------------------------------------------------------


@dataclass(frozen=True)
class FrozenEmbedder:
    """Three linear layers ``1 -> hidden -> hidden -> embed_dim`` with ReLU on
    the two hidden layers. Weights never change after construction."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValidationError("embedder needs exactly three layers")
        for w in (*self.weights, *self.biases):
            w.setflags(write=False)

    @classmethod
    def random(cls, rng: np.random.Generator, hidden_dim: int = 50, embed_dim: int = 100) -> "FrozenEmbedder":
        dims = [1, hidden_dim, hidden_dim, embed_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(_uniform_init(rng, fan_in, (fan_in, fan_out)))
            biases.append(_uniform_init(rng, fan_in, fan_out))
        return cls(tuple(weights), tuple(biases))

    @property
    def embed_dim(self) -> int:
        return self.weights[2].shape[1]


def embed(embedder: FrozenEmbedder, y) -> np.ndarray:
    """Map scalar outcomes to embedding rows."""
    h = np.asarray(y, dtype=float).reshape(-1, 1)
    w, b = embedder.weights, embedder.biases
    h = relu(h @ w[0] + b[0])
    h = relu(h @ w[1] + b[1])
    return h @ w[2] + b[2]


# --- Ratledge loss --------------------------------------------------------


def quintile_boundaries(targets) -> np.ndarray:
    return np.quantile(np.asarray(targets, dtype=float), [0.2, 0.4, 0.6, 0.8])


def quintile_groups(targets, boundaries) -> np.ndarray:
    """Group index 0..4; a value equal to a boundary goes to the lower group."""
    return np.searchsorted(boundaries, np.asarray(targets, dtype=float), side="left")


def ratledge_loss_and_grad(preds, targets, lambda_b: float, boundaries=None) -> tuple[float, np.ndarray]:
    """``MSE + lambda_b * max_j bias_j^2`` and its (sub)gradient w.r.t. ``preds``.

    ``bias_j`` is the mean residual over targets in quintile ``j``. Empty
    groups are skipped. The gradient flows through the arg-max group only.
    """
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = targets.size
    if boundaries is None:
        if n < N_QUINTILES:
            raise ValidationError(f"quintile loss needs at least {N_QUINTILES} samples, got {n}")
        boundaries = quintile_boundaries(targets)
    resid = preds - targets
    mse = float(np.mean(resid**2))
    grad = 2.0 * resid / n
    groups = quintile_groups(targets, boundaries)
    counts = np.bincount(groups, minlength=N_QUINTILES)
    sums = np.bincount(groups, weights=resid, minlength=N_QUINTILES)
    present = counts > 0
    bias = np.zeros(N_QUINTILES)
    bias[present] = sums[present] / counts[present]
    sq = np.where(present, bias**2, -np.inf)
    j = int(np.argmax(sq))
    grad = grad + np.where(groups == j, lambda_b * 2.0 * bias[j] / counts[j], 0.0)
    return mse + lambda_b * float(sq[j]), grad


def ratledge_loss(preds, targets, lambda_b: float, boundaries=None) -> float:
    return ratledge_loss_and_grad(preds, targets, lambda_b, boundaries)[0]


def mse_loss_and_grad(preds, targets) -> tuple[float, np.ndarray]:
    resid = np.asarray(preds, dtype=float) - np.asarray(targets, dtype=float)
    return float(np.mean(resid**2)), 2.0 * resid / resid.size


# --- predictor ------------------------------------------------------------


@dataclass
class Predictor:
    """``y = W2 relu(W1 z + b1) + b2`` on standardized inputs ``z``.

    Training happens on standardized targets; ``predict`` returns outcome units.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0
    loss_kind: str = "mse"
    history: list = field(default_factory=list)

    @classmethod
    def init(cls, rng, x, y, hidden_dim: int = 50, loss_kind: str = "mse") -> "Predictor":
        x = np.asarray(x, dtype=float)
        d = x.shape[1]
        x_mean = x.mean(axis=0)
        x_scale = x.std(axis=0)
        x_scale[x_scale == 0] = 1.0
        y = np.asarray(y, dtype=float)
        y_scale = float(y.std()) or 1.0
        return cls(
            w1=_uniform_init(rng, d, (d, hidden_dim)) * math.sqrt(6.0),
            b1=np.zeros(hidden_dim),
            w2=_uniform_init(rng, hidden_dim, (hidden_dim, 1)),
            b2=np.zeros(1),
            x_mean=x_mean,
            x_scale=x_scale,
            y_mean=float(y.mean()),
            y_scale=y_scale,
            loss_kind=loss_kind,
        )

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_scale

    def forward(self, z) -> tuple[np.ndarray, tuple]:
        pre = z @ self.w1 + self.b1
        h = relu(pre)
        out = (h @ self.w2 + self.b2)[:, 0]
        return out, (z, pre, h)

    def backward(self, grad_out, cache) -> list[np.ndarray]:
        z, pre, h = cache
        g = grad_out[:, None]
        gw2 = h.T @ g
        gb2 = g.sum(axis=0)
        gh = (g @ self.w2.T) * (pre > 0)
        gw1 = z.T @ gh
        gb1 = gh.sum(axis=0)
        return [gw1, gb1, gw2, gb2]

    def predict(self, x) -> np.ndarray:
        out, _ = self.forward(self.standardize(x))
        return out * self.y_scale + self.y_mean


def loss_and_param_grads(model: Predictor, z, t, loss_kind: str, lambda_b: float = 0.0, boundaries=None):
    """Loss and parameter gradients on standardized inputs ``z`` and targets ``t``."""
    out, cache = model.forward(z)
    if loss_kind == "mse":
        loss, g = mse_loss_and_grad(out, t)
    elif loss_kind == "ratledge":
        loss, g = ratledge_loss_and_grad(out, t, lambda_b, boundaries)
    else:
        raise ValidationError(f"unknown loss {loss_kind!r}")
    return loss, model.backward(g, cache)


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 50
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 64
    weight_decay: float = 0.0
    lambda_b: float = 15.0
    optimizer: str = "adam"
    momentum: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


def train_predictor(x, y, loss_kind: str, cfg: TrainConfig, rng: np.random.Generator) -> Predictor:
    """Mini-batch training with Adam (default) or SGD with momentum.

    For the Ratledge loss the quintile boundaries come from the full training
    targets once, before the first epoch.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.size:
        raise ValidationError(f"x has {x.shape[0]} rows but y has {y.size} values")
    if loss_kind not in ("mse", "ratledge"):
        raise ValidationError(f"unknown loss {loss_kind!r}")
    model = Predictor.init(rng, x, y, cfg.hidden_dim, loss_kind)
    z = model.standardize(x)
    t = (y - model.y_mean) / model.y_scale
    boundaries = quintile_boundaries(t) if loss_kind == "ratledge" else None
    m1 = [np.zeros_like(p) for p in model.params]
    m2 = [np.zeros_like(p) for p in model.params]
    n = y.size
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            # overflow shows up as a non-finite loss, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_param_grads(model, z[idx], t[idx], loss_kind, cfg.lambda_b, boundaries)
            if not math.isfinite(loss):
                raise NumericalError(
                    f"training diverged at epoch {epoch}, batch {start // cfg.batch_size}: loss={loss} "
                    f"(lr={cfg.learning_rate}, loss={loss_kind})"
                )
            total += loss * idx.size
            step += 1
            for p, g, v, s in zip(model.params, grads, m1, m2):
                if cfg.weight_decay and p.ndim == 2:
                    g = g + cfg.weight_decay * p
                if cfg.optimizer == "sgd":
                    v *= cfg.momentum
                    v -= cfg.learning_rate * g
                    p += v
                    continue
                v *= cfg.momentum
                v += (1.0 - cfg.momentum) * g
                s *= cfg.beta2
                s += (1.0 - cfg.beta2) * g * g
                v_hat = v / (1.0 - cfg.momentum**step)
                s_hat = s / (1.0 - cfg.beta2**step)
                p -= cfg.learning_rate * v_hat / (np.sqrt(s_hat) + 1e-8)
        model.history.append(total / n)
    return model
