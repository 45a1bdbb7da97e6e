"""TOML run configuration: flat typed keys with per-task defaults."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:        # Python 3.10
    import tomli as tomllib
from pathlib import Path

from .errors import ConfigurationError
from .space import ABLATION_FLAGS, TASKS

# per-task defaults for the searchable training hyperparameters
_TASK_DEFAULTS = {
    "lp_homo": {"lr": 1e-4, "layer_count": 2, "batch_size": 64, "dims": 100,
                "dropout": 0.0, "search_epochs": 300},
    "kg": {"lr": 1e-3, "layer_count": 1, "batch_size": 128, "dims": 200,
           "dropout": 0.0, "search_epochs": 200},
    "nc": {"lr": 1e-3, "layer_count": 2, "batch_size": 64, "dims": 64,
           "dropout": 0.0, "search_epochs": 30},
    "gc": {"lr": 1e-2, "layer_count": 4, "batch_size": 32, "dims": 32,
           "dropout": 0.0, "search_epochs": 30},
}


@dataclass
class RunConfig:
    """Everything one multi-seed run needs, resolved and validated."""

    task: str
    dataset: str
    output_dir: str = "runs"
    features: str | None = None      # node feature CSV (nc)
    labels: str | None = None        # node label CSV (nc)
    dims: int = 0                    # 0 means "use the task default"
    layer_count: int = 0
    lr: float = 0.0
    batch_size: int = 0
    dropout: float = -1.0
    search_epochs: int = 0
    retrain_epochs: int = 200
    tau0: float = 1.0
    tau_final: float = 0.1
    patience: int = 20
    hops: int = 2
    d_max: int = 3
    degree_cap: int = 64
    workers: int = 1
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    ablation: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(
                f"task must be one of {TASKS}, got {self.task!r}")
        defaults = _TASK_DEFAULTS[self.task]
        if self.dims == 0:
            self.dims = defaults["dims"]
        if self.layer_count == 0:
            self.layer_count = defaults["layer_count"]
        if self.lr == 0.0:
            self.lr = defaults["lr"]
        if self.batch_size == 0:
            self.batch_size = defaults["batch_size"]
        if self.dropout == -1.0:
            self.dropout = defaults["dropout"]
        if self.search_epochs == 0:
            self.search_epochs = defaults["search_epochs"]
        self._validate()

    def _validate(self):
        def require(cond, message):
            if not cond:
                raise ConfigurationError(message)

        require(self.dims > 0, f"dims must be positive, got {self.dims}")
        require(self.layer_count >= 1,
                f"layer_count must be at least 1, got {self.layer_count}")
        require(self.lr > 0, f"lr must be positive, got {self.lr}")
        require(self.batch_size >= 1,
                f"batch_size must be at least 1, got {self.batch_size}")
        require(0.0 <= self.dropout < 1.0,
                f"dropout must lie in [0, 1), got {self.dropout}")
        require(self.search_epochs > 0, "search_epochs must be positive")
        require(self.retrain_epochs > 0, "retrain_epochs must be positive")
        require(self.tau0 >= self.tau_final > 0,
                f"need tau0 >= tau_final > 0, got {self.tau0}, {self.tau_final}")
        require(self.patience >= 1, "patience must be at least 1")
        require(self.hops >= 1, "hops must be at least 1")
        require(self.d_max >= 1, "d_max must be at least 1")
        require(self.degree_cap >= 1, "degree_cap must be at least 1")
        require(self.workers >= 1, "workers must be at least 1")
        require(len(self.seeds) > 0, "seeds must be non-empty")
        require(all(isinstance(s, int) for s in self.seeds),
                "seeds must be integers")
        unknown = set(self.ablation) - set(ABLATION_FLAGS)
        require(not unknown, f"unknown ablation flags: {sorted(unknown)}")

    def to_toml(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, str):
                rendered = f'"{value}"'
            elif isinstance(value, list):
                rendered = "[" + ", ".join(
                    f'"{v}"' if isinstance(v, str) else repr(v)
                    for v in value) + "]"
            else:
                rendered = repr(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    """Load a TOML file into a RunConfig.

    Unknown keys are rejected; missing optional keys fall back to the
    per-task defaults.  ``overrides`` (CLI flags) take precedence over
    file values.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            blob = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None
    if overrides:
        blob.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(blob) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
    for key in ("task", "dataset"):
        if key not in blob:
            raise ConfigurationError(f"{path}: missing required key '{key}'")
    try:
        return RunConfig(**blob)
    except TypeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
