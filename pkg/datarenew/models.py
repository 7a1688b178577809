"""Pluggable predictors: a ridge regressor and a perceptron behind one interface."""

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import ClassVar, Optional, Union

import numpy as np

from datarenew.core import Batch, Schema, SchemaError, TrainingError
from datarenew.loss import perceptron_loss, rmse

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class RegressionConfig:
    """Hyper-parameters of the ridge regressor.

    ``learning_rate`` scales the steps 1/L_w and 1/2, L_w being the Lipschitz
    constant of the gradient in w; values up to 1 keep every epoch non-increasing.
    """

    ridge: float = 1e-3
    learning_rate: float = 1.0
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        """Validate the values."""
        if self.ridge < 0:
            raise ValueError(f"Ridge weight must be non-negative, got {self.ridge}.")
        if self.learning_rate <= 0:
            raise ValueError(f"Learning rate must be positive, got {self.learning_rate}.")
        if self.epochs < 1:
            raise ValueError(f"Epochs must be at least 1, got {self.epochs}.")


@dataclass(frozen=True)
class PerceptronConfig:
    """Hyper-parameters of the perceptron; labels are always encoded as -1/+1."""

    learning_rate: float = 1.0
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        """Validate the values."""
        if self.learning_rate <= 0:
            raise ValueError(f"Learning rate must be positive, got {self.learning_rate}.")
        if self.epochs < 1:
            raise ValueError(f"Epochs must be at least 1, got {self.epochs}.")


@dataclass(frozen=True)
class Standardizer:
    """Per-attribute z-scoring with statistics frozen from a fitting batch."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_features(cls, x: np.ndarray) -> "Standardizer":
        """Statistics of a feature matrix; constant columns get scale 1."""
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(_readonly(mean), _readonly(scale))

    @classmethod
    def identity(cls, width: int) -> "Standardizer":
        """A no-op standardizer."""
        return cls(_readonly(np.zeros(width)), _readonly(np.ones(width)))

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Z-score a feature matrix."""
        return (x - self.mean) / self.scale


def _readonly(arr) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


# ----------------------------------------------------------------------
# Ridge objective
# ----------------------------------------------------------------------
def ridge_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, ridge: float) -> float:
    """Mean squared error plus ridge * ||w||^2 (the intercept is not penalised)."""
    resid = y - (x @ w + b)
    return float(np.dot(resid, resid) / y.size + ridge * np.dot(w, w))


def ridge_gradient(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, ridge: float):
    """Gradient of :func:`ridge_objective` with respect to (w, b)."""
    resid = y - (x @ w + b)
    grad_w = -2.0 * (x.T @ resid) / y.size + 2.0 * ridge * w
    grad_b = -2.0 * float(resid.sum()) / y.size
    return grad_w, grad_b


def _ridge_lipschitz(x: np.ndarray, ridge: float) -> float:
    """Largest curvature of the objective along w; x must be column-centred."""
    hess = 2.0 * (x.T @ x) / x.shape[0] + 2.0 * ridge * np.eye(x.shape[1])
    lip = float(np.linalg.eigvalsh(hess).max())
    return lip if lip > 0 else 1.0


# ----------------------------------------------------------------------
# Predictor interface
# ----------------------------------------------------------------------
class Predictor(ABC):
    """A linear model over standardized features.

    Predictors are immutable: ``fit`` and ``warm_fit`` return new instances.
    """

    task: ClassVar[str]
    model_name: ClassVar[str]
    config_cls: ClassVar[type]

    def __init__(
        self,
        schema: Schema,
        config=None,
        standardizer: Optional[Standardizer] = None,
        weights: Optional[np.ndarray] = None,
        bias: float = 0.0,
        *,
        degenerate: bool = False,
        n_trained: int = 0,
        history: tuple = (),
    ):
        """Create a predictor; without weights it is unfitted."""
        if schema.task != self.task:
            raise SchemaError(f"{type(self).__name__} needs a {self.task} target, schema has {schema.task}.")
        self.schema = schema
        self.config = config if config is not None else self.config_cls()
        self.standardizer = standardizer
        self.weights = None if weights is None else _readonly(weights)
        self.bias = float(bias)
        self.degenerate = degenerate
        self.n_trained = n_trained
        self.history = tuple(history)

    @property
    def width(self) -> int:
        """Number of input features."""
        return len(self.schema.feature_indices)

    @property
    def fitted(self) -> bool:
        """Whether parameters are available."""
        return self.weights is not None

    @classmethod
    def from_coefficients(cls, schema: Schema, coef, intercept: float, config=None) -> "Predictor":
        """A fitted predictor with fixed raw-feature coefficients and intercept."""
        coef = np.asarray(coef, dtype=np.float64)
        return cls(schema, config, Standardizer.identity(coef.size), coef, intercept)

    def fresh(self) -> "Predictor":
        """An unfitted predictor with the same schema and configuration."""
        return type(self)(self.schema, self.config)

    def _with(self, standardizer, weights, bias, **meta) -> "Predictor":
        return type(self)(self.schema, self.config, standardizer, weights, bias, **meta)

    # ------------------------------------------------------------------
    # Training
    # ------------------------------------------------------------------
    def fit(self, batch: Batch) -> "Predictor":
        """Train from scratch on ``batch``."""
        self._check_training_batch(batch)
        std = Standardizer.from_features(batch.features)
        return self._train(batch, std, None, 0.0)

    def warm_fit(self, batch: Batch) -> "Predictor":
        """Continue training from the current parameters on ``batch``.

        Standardization statistics are refreshed on ``batch`` and the current
        parameters re-expressed under them, so predictions do not change at the start.
        """
        if not self.fitted:
            return self.fit(batch)
        self._check_training_batch(batch)
        std = Standardizer.from_features(batch.features)
        old = self.standardizer
        w0 = self.weights * (std.scale / old.scale)
        b0 = self.bias + float(np.dot(self.weights, (std.mean - old.mean) / old.scale))
        return self._train(batch, std, w0, b0)

    def _check_training_batch(self, batch: Batch):
        if batch.schema != self.schema:
            raise SchemaError("Training batch schema does not match the predictor schema.")
        if batch.n_rows < 2:
            raise TrainingError(f"Training needs at least 2 rows, got {batch.n_rows}.")

    @abstractmethod
    def _train(self, batch: Batch, std: Standardizer, w0: Optional[np.ndarray], b0: float) -> "Predictor":
        """Run the training loop from (w0, b0); w0 None means initialise."""

    # ------------------------------------------------------------------
    # Inference
    # ------------------------------------------------------------------
    def predict(self, features) -> np.ndarray:
        """Real-valued scores w.x + b on raw features (regression values or classification margins)."""
        if not self.fitted:
            raise TrainingError("Predictor has not been fitted.")
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.width:
            raise ValueError(f"Expected {self.width} features, got {x.shape[1]}.")
        return self.standardizer.transform(x) @ self.weights + self.bias

    @abstractmethod
    def loss_on(self, batch: Batch) -> float:
        """Monitoring loss of this predictor on ``batch``."""

    # ------------------------------------------------------------------
    # Snapshots
    # ------------------------------------------------------------------
    def snapshot(self) -> str:
        """Versioned JSON document holding everything needed to restore the predictor."""
        if not self.fitted:
            raise TrainingError("Cannot snapshot an unfitted predictor.")
        doc = {
            "version": SNAPSHOT_VERSION,
            "model": self.model_name,
            "task": self.task,
            "schema_hash": self.schema.schema_hash,
            "config": asdict(self.config),
            "standardization": {
                "mean": self.standardizer.mean.tolist(),
                "scale": self.standardizer.scale.tolist(),
            },
            "parameters": {"weights": self.weights.tolist(), "bias": self.bias},
            "degenerate": self.degenerate,
            "n_trained": self.n_trained,
        }
        return json.dumps(doc)

    @classmethod
    def restore(cls, blob: Union[str, dict], schema: Schema) -> "Predictor":
        """Rebuild a predictor from :meth:`snapshot` output; rejects a different schema."""
        doc = json.loads(blob) if isinstance(blob, str) else blob
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"Unsupported snapshot version {doc.get('version')}.")
        if doc.get("schema_hash") != schema.schema_hash:
            raise SchemaError("Snapshot was taken under a different schema.")
        target_cls = PREDICTORS.get(doc.get("model"))
        if target_cls is None:
            raise ValueError(f"Unknown model '{doc.get('model')}' in snapshot.")
        if cls is not Predictor and target_cls is not cls:
            raise ValueError(f"Snapshot holds a {doc['model']}, not a {cls.model_name}.")
        std = Standardizer(
            _readonly(doc["standardization"]["mean"]), _readonly(doc["standardization"]["scale"])
        )
        return target_cls(
            schema,
            target_cls.config_cls(**doc["config"]),
            std,
            np.array(doc["parameters"]["weights"], dtype=np.float64),
            doc["parameters"]["bias"],
            degenerate=doc.get("degenerate", False),
            n_trained=doc.get("n_trained", 0),
        )


class LinearRegressor(Predictor):
    """Ridge regression trained by full-batch gradient descent."""

    task = "regression"
    model_name = "linear_regression"
    config_cls = RegressionConfig

    @property
    def coefficients(self) -> tuple[np.ndarray, float]:
        """Coefficients and intercept on the raw (unstandardized) features."""
        coef = self.weights / self.standardizer.scale
        intercept = self.bias - float(np.dot(coef, self.standardizer.mean))
        return coef, intercept

    def _train(self, batch, std, w0, b0):
        x_raw = batch.features
        y = batch.target
        if np.all(x_raw == x_raw[0]) and not np.all(y == y[0]):
            raise TrainingError("All feature rows are identical but the targets differ.")

        cfg = self.config
        x = std.transform(x_raw)
        if w0 is None:
            rng = np.random.default_rng(cfg.seed)
            w = rng.normal(0.0, 0.01, x.shape[1])
            b = 0.0
        else:
            w, b = np.array(w0, dtype=np.float64), float(b0)

        # centred features decouple w and b; the intercept has curvature 2
        step_w = cfg.learning_rate / _ridge_lipschitz(x, cfg.ridge)
        step_b = cfg.learning_rate / 2.0
        history = [ridge_objective(w, b, x, y, cfg.ridge)]
        for _ in range(cfg.epochs):
            grad_w, grad_b = ridge_gradient(w, b, x, y, cfg.ridge)
            w = w - step_w * grad_w
            b = b - step_b * grad_b
            history.append(ridge_objective(w, b, x, y, cfg.ridge))
        logger.debug("ridge fit on %d rows: objective %.6g -> %.6g", y.size, history[0], history[-1])
        return self._with(std, w, b, n_trained=batch.n_rows, history=tuple(history))

    def loss_on(self, batch: Batch) -> float:
        """RMSE on the batch."""
        return rmse(self.predict(batch.features), batch.target)


class Perceptron(Predictor):
    """Pocket perceptron on -1/+1 labels.

    The monitoring loss is the perceptron criterion per row, evaluated on the
    unit-norm parameter vector so that it does not depend on the weight scale.
    """

    task = "classification"
    model_name = "perceptron"
    config_cls = PerceptronConfig

    @staticmethod
    def signed_labels(batch: Batch) -> np.ndarray:
        """Target column mapped 0 -> -1, 1 -> +1."""
        return np.where(batch.target > 0.5, 1.0, -1.0)

    def predict_labels(self, features) -> np.ndarray:
        """Hard labels in {0, 1}; margins at or above 0 count as positive."""
        return (self.predict(features) >= 0).astype(np.float64)

    def _normalized_loss(self, w, b, x, y) -> float:
        norm = math.sqrt(float(np.dot(w, w)) + b * b)
        if norm == 0.0:
            return math.inf
        return perceptron_loss(w / norm, b / norm, x, y) / y.size

    def _train(self, batch, std, w0, b0):
        cfg = self.config
        x = std.transform(batch.features)
        y = self.signed_labels(batch)

        if np.all(y == y[0]):
            logger.warning("single-class training batch (%d rows); predicting %+d everywhere", y.size, y[0])
            return self._with(
                std, np.zeros(x.shape[1]), cfg.learning_rate * y[0], degenerate=True, n_trained=batch.n_rows
            )

        if w0 is None:
            w, b = np.zeros(x.shape[1]), 0.0
            best = (math.inf, w.copy(), b)
        else:
            w, b = np.array(w0, dtype=np.float64), float(b0)
            best = (self._normalized_loss(w, b, x, y), w.copy(), b)

        rng = np.random.default_rng(cfg.seed)
        eta = cfg.learning_rate
        history = []
        for _ in range(cfg.epochs):
            mistakes = 0
            for i in rng.permutation(y.size):
                xi, yi = x[i], y[i]
                if yi * (float(np.dot(w, xi)) + b) <= 0.0:
                    w = w + eta * yi * xi
                    b = b + eta * yi
                    mistakes += 1
            loss = self._normalized_loss(w, b, x, y)
            history.append(loss)
            if loss < best[0]:
                best = (loss, w.copy(), b)
            if mistakes == 0:
                break
        logger.debug("perceptron fit on %d rows: best loss %.6g, %d epochs", y.size, best[0], len(history))
        return self._with(std, best[1], best[2], n_trained=batch.n_rows, history=tuple(history))

    def loss_on(self, batch: Batch) -> float:
        """Per-row perceptron criterion on the unit-norm parameters."""
        if not self.fitted:
            raise TrainingError("Predictor has not been fitted.")
        x = self.standardizer.transform(batch.features)
        return self._normalized_loss(self.weights, self.bias, x, self.signed_labels(batch))


PREDICTORS = {cls.model_name: cls for cls in (LinearRegressor, Perceptron)}


def linreg_fit(batch: Batch, cfg: Optional[RegressionConfig] = None) -> LinearRegressor:
    """Fit a ridge regressor on a batch with a numeric target."""
    return LinearRegressor(batch.schema, cfg).fit(batch)


def perceptron_fit(batch: Batch, cfg: Optional[PerceptronConfig] = None) -> Perceptron:
    """Fit a perceptron on a batch with a binary target."""
    return Perceptron(batch.schema, cfg).fit(batch)


def make_predictor(schema: Schema, kind: Optional[str] = None, config=None) -> Predictor:
    """Unfitted predictor for the schema's task; ``kind`` must agree with it when given."""
    if kind is not None and kind != schema.task:
        raise SchemaError(f"Model kind '{kind}' does not match the schema target ({schema.task}).")
    cls = LinearRegressor if schema.task == "regression" else Perceptron
    return cls(schema, config)
