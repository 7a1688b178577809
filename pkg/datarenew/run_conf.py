"""Run configuration: JSON config file plus command-line overrides."""

import argparse
import json
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from datarenew.core import Thresholds
from datarenew.models import PerceptronConfig, RegressionConfig
from datarenew.utils import load_json_object

MODES = ("simulate", "replay", "tune", "sweep")
MODEL_KINDS = ("regression", "classification")


@dataclass(frozen=True)
class RunConfig:
    """Every resolved parameter of one CLI run."""

    mode: str = "simulate"
    rows: int = 300000
    batch: int = 10000
    initial: Optional[int] = None
    sim_threshold: float = 0.5
    lc_low: float = 0.3
    lc_high: float = 0.9
    model: Optional[str] = None
    drift: str = "none"
    seed: int = 0
    noise: float = 0.15
    period: int = 100
    out: str = "renewal_metrics.csv"
    csv: Optional[str] = None
    schema: Optional[str] = None
    flags_only: bool = False
    dump_stream: Optional[str] = None
    jobs: int = 1
    sizes: tuple = (1000, 5000, 10000)
    ridge: float = 1e-3
    learning_rate: float = 1.0
    epochs: Optional[int] = None
    stream: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        """Check everything that a Thresholds or model config would not catch."""
        if self.mode not in MODES:
            raise ValueError(f"Unknown mode '{self.mode}', expected one of {', '.join(MODES)}.")
        if self.model is not None and self.model not in MODEL_KINDS:
            raise ValueError(f"Unknown model '{self.model}', expected regression or classification.")
        if self.rows < 1:
            raise ValueError(f"--rows must be positive, got {self.rows}.")
        if self.initial is not None and self.initial < 2:
            raise ValueError(f"--initial must be at least 2, got {self.initial}.")
        if self.jobs < 1:
            raise ValueError(f"--jobs must be positive, got {self.jobs}.")
        if not self.sizes or any(int(s) < 1 for s in self.sizes):
            raise ValueError("Sweep sizes must be positive integers.")
        if self.mode == "replay" and not (self.csv and self.schema):
            raise ValueError("replay needs both --csv and --schema.")
        self.thresholds()
        self.model_config()

    def thresholds(self, batch: Optional[int] = None) -> Thresholds:
        """Thresholds for this run, optionally with another gate size."""
        return Thresholds(self.sim_threshold, self.lc_low, self.lc_high, batch or self.batch)

    @property
    def task(self) -> str:
        """Model kind, regression unless set."""
        return self.model or "regression"

    def model_config(self, task: Optional[str] = None) -> Union[RegressionConfig, PerceptronConfig]:
        """Hyper-parameters for a model kind (default: the configured one)."""
        epochs = {} if self.epochs is None else {"epochs": self.epochs}
        if (task or self.task) == "classification":
            return PerceptronConfig(learning_rate=self.learning_rate, seed=self.seed, **epochs)
        return RegressionConfig(ridge=self.ridge, learning_rate=self.learning_rate, seed=self.seed, **epochs)

    def header(self) -> dict:
        """Resolved config as '#' header entries for output CSVs."""
        data = asdict(self)
        stream = data.pop("stream")
        if self.mode != "sweep":
            data.pop("sizes")
        if stream:
            data["stream"] = stream
        return data


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "mode")
DEFAULTS = RunConfig()


class RunConf:
    """Interface to an optional JSON run-config file."""

    def __init__(self, config_path: Union[str, Path, None] = None):
        """Read the config file (if any) and validate it."""
        self.config_path = None if config_path is None else Path(config_path)
        self.values = {}
        if self.config_path is None:
            return
        try:
            self.values = load_json_object(self.config_path)
        except (OSError, ValueError) as exc:
            raise ValueError(f"Cannot read config '{self.config_path}': {exc}") from exc
        self.validate()

    def validate(self):
        """Drop unknown keys and values of the wrong type, with a warning each."""
        valid = {}
        for key, value in self.values.items():
            if key not in CONFIG_KEYS:
                warnings.warn(f"Unknown config key '{key}' in {self.config_path}, ignoring.")
                continue
            try:
                valid[key] = self._coerce(key, value)
            except (TypeError, ValueError) as exc:
                warnings.warn(f"Invalid value for '{key}' in {self.config_path} ({exc}), using the default.")
        try:
            RunConfig(**{k: v for k, v in valid.items() if k not in ("csv", "schema")})
        except ValueError as exc:
            warnings.warn(f"{self.config_path} is inconsistent ({exc}). Resetting to defaults.")
            self.reset()
            return
        self.values = valid

    @staticmethod
    def _coerce(key: str, value):
        default = getattr(DEFAULTS, key)
        if key == "stream":
            if not isinstance(value, dict):
                raise TypeError("expected an object")
            return value
        if key == "sizes":
            return tuple(int(v) for v in value)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if value is None:
            return None
        if isinstance(default, int) or key in ("initial", "epochs"):
            if isinstance(value, bool) or int(value) != value:
                raise ValueError("expected an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)

    def reset(self):
        """Forget all file values."""
        self.values = {}

    def take_over(self, cfg: RunConfig):
        """Keep the resolved settings that differ from the defaults as file values."""
        self.values = {
            key: getattr(cfg, key) for key in CONFIG_KEYS if getattr(cfg, key) != getattr(DEFAULTS, key)
        }

    def save(self, path: Union[str, Path, None] = None):
        """Write the current values as JSON."""
        path = Path(path or self.config_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        values = {k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(values, f, indent=4, sort_keys=True)

    def resolve(self, args: argparse.Namespace, mode: Optional[str] = None) -> RunConfig:
        """Merge defaults, file values and explicitly given flags (flags win)."""
        merged = dict(self.values)
        for key in CONFIG_KEYS:
            value = getattr(args, key, None)
            if value is not None and value is not False:
                merged[key] = tuple(value) if key == "sizes" else value
        merged["mode"] = mode or getattr(args, "command", None) or DEFAULTS.mode
        return RunConfig(**merged)
