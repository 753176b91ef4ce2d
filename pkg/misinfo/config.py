"""
Run configuration for the misinformation pipeline. One YAML file (config/misinfo.yaml)
holds every pipeline choice; CLI flags override it per run and every artifact embeds
the resolved result.
"""

from __future__ import annotations

import logging
import os
import re
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from misinfo.arabic_text import PreprocessConfig
from misinfo.cnn_config import CnnConfig
from misinfo.corpus import SplitSpec
from misinfo.embeddings import EmbedTrainConfig
from misinfo.errors import ConfigError
from misinfo.features import TfidfConfig

logger = logging.getLogger(__name__)

CONFIG_DIR_ENV = "MISINFO_CONFIG_DIR"
CONFIG_FILE = "misinfo.yaml"

FeatureKind = Literal["tfidf-uni", "tfidf-ngram", "cbow", "fasttext"]
ModelName = Literal["nb", "sgd", "svm", "rf", "gbt", "cnn"]
LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR"]


class PathsConfig(BaseModel):
    model_config = {"extra": "ignore"}

    corpus: str | None = Field(None, description="Labelled tweets (JSONL or TSV)")
    stoplist: str | None = Field(None, description="Stop-word file; empty uses the packaged list")
    embeddings: str | None = Field(None, description="Trained embedding table (text vector format)")
    models: str = Field("models", description="Directory for trained models")
    reports: str = Field("reports", description="Directory for metrics, ROC and grid CSVs")


class ModelConfig(BaseModel):
    model_config = {"extra": "ignore"}

    kind: ModelName = "gbt"
    params: dict[str, Any] = Field(default_factory=dict, description="Kind-specific hyperparameters (defaults otherwise)")


class RunConfig(BaseModel):
    """Everything a run needs besides its input files."""

    model_config = ConfigDict(extra="ignore")

    paths: PathsConfig = Field(default_factory=PathsConfig)
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    tfidf: TfidfConfig = Field(default_factory=TfidfConfig)
    embed: EmbedTrainConfig = Field(default_factory=EmbedTrainConfig)
    cnn: CnnConfig = Field(default_factory=CnnConfig)
    split: SplitSpec = Field(default_factory=SplitSpec)
    model: ModelConfig = Field(default_factory=ModelConfig)
    feature_kind: FeatureKind = "tfidf-uni"
    seed: int = 42
    n_jobs: int = Field(1, description="Worker threads for forests and grid search")
    log_level: LogLevel = "INFO"

    def check_paths(self, *names: str) -> None:
        """Raise ConfigError if any named, configured path does not exist."""
        for name in names:
            value = getattr(self.paths, name)
            if value and not Path(value).exists():
                raise ConfigError("paths.%s does not exist: %s" % (name, value))

    def with_overrides(self, **updates: Any) -> "RunConfig":
        """Copy with dotted-key overrides, e.g. with_overrides(**{"model.kind": "rf"}); None values are skipped."""
        data = self.model_dump()
        for key, value in updates.items():
            if value is None:
                continue
            node = data
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return _validate(data, "overrides")


def _validate(data: Any, origin: str) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError("invalid configuration (%s): %s" % (origin, e)) from e


_ENV_PATTERN = re.compile(r"\$\{([^}]+)\}|\$([A-Za-z_][A-Za-z0-9_]*)")


def _substitute_env(obj: Any) -> Any:
    """Replace ${VAR} / $VAR in string values; unknown variables are left as written."""
    if isinstance(obj, str):
        return _ENV_PATTERN.sub(lambda m: os.environ.get(m.group(1) or m.group(2) or "", m.group(0)), obj)
    if isinstance(obj, dict):
        return {k: _substitute_env(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_substitute_env(v) for v in obj]
    return obj


def project_root() -> Path:
    return Path(__file__).resolve().parent.parent


def config_dir() -> Path:
    """MISINFO_CONFIG_DIR env or <project>/config."""
    root = project_root()
    base = Path(os.environ.get(CONFIG_DIR_ENV, str(root / "config")))
    if not base.is_absolute():
        base = (root / base).resolve()
    return base


def run_config_path() -> Path:
    return config_dir() / CONFIG_FILE


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError("cannot parse %s: %s" % (path, e)) from e
    if not isinstance(data, dict):
        raise ConfigError("%s must hold a mapping at the top level" % path)
    return _validate(_substitute_env(data), str(path))


def save_run_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.model_dump(mode="json"), f, default_flow_style=False, allow_unicode=True, sort_keys=False)
    return path


_run_config: RunConfig | None = None


def reset_run_config_cache() -> None:
    """Clear the cached config; the next get_run_config() rereads the file."""
    global _run_config
    _run_config = None


def get_run_config() -> RunConfig:
    """Load config/misinfo.yaml once; defaults when the file is missing."""
    global _run_config
    if _run_config is None:
        path = run_config_path()
        if path.exists():
            _run_config = load_run_config(path)
            logger.debug("loaded run config from %s", path)
        else:
            _run_config = RunConfig()
    return _run_config


def ensure_run_config() -> tuple[Path, bool]:
    """Create config/misinfo.yaml from the shipped example (or defaults). Returns (path, created)."""
    path = run_config_path()
    if path.exists():
        return path, False
    path.parent.mkdir(parents=True, exist_ok=True)
    example = project_root() / "config" / (CONFIG_FILE + ".example")
    if example.exists():
        path.write_text(example.read_text(encoding="utf-8"), encoding="utf-8")
    else:
        save_run_config(RunConfig(), path)
    load_run_config(path)
    return path, True
