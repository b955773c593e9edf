"""
Run configuration: classifier, SMOTE and reporting options.

Values come from (highest priority first) command line flags, environment variables, the YAML run config file and
the defaults below. Environment variables use the LPSCORE_ prefix and __ for nesting, e.g. LPSCORE_TRAIN__MAX_EPOCHS=20.
"""

import hashlib
from typing import Optional

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict, YamlConfigSettingsSource

import settings
from augment import SmoteConfig
from errors import ConfigError
from metrics import CIMethod
from support import canonical_json, file_exists
from textclf import HeadConfig, TrainConfig


class RunSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix=settings.ENV_PREFIX,
        env_nested_delimiter="__",
        extra="forbid",
        yaml_file=None,
    )

    # One seed for everything random in a run
    seed: int = settings.DEFAULT_SEED
    alpha_threshold: float = Field(default=settings.ALPHA_THRESHOLD, gt=0, le=1)
    confidence: float = Field(default=settings.CONFIDENCE, gt=0, lt=1)
    ci_method: CIMethod = CIMethod.WALD
    bootstrap_resamples: int = Field(default=settings.BOOTSTRAP_RESAMPLES, ge=1)
    cv_folds: int = Field(default=5, ge=2)

    train: TrainConfig = TrainConfig()
    head: HeadConfig = HeadConfig()
    smote: SmoteConfig = SmoteConfig()

    @classmethod
    def settings_customise_sources(
        cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings
    ):
        # Init kwargs are the command line flags
        return (init_settings, env_settings, YamlConfigSettingsSource(settings_cls))

    def train_config(self) -> TrainConfig:
        return self.train.model_copy(update={"seed": self.seed})

    def smote_config(self) -> SmoteConfig:
        return self.smote.model_copy(update={"seed": self.seed})


def settings_class(path: Optional[str]) -> type:
    if path is None:
        return RunSettings

    class FileRunSettings(RunSettings):
        model_config = SettingsConfigDict(yaml_file=path)

    return FileRunSettings


def load_run_settings(path: Optional[str] = None, **overrides) -> RunSettings:
    if path is not None and not file_exists(path):
        raise ConfigError("config file not found", source=path)

    overrides = {key: value for key, value in overrides.items() if value is not None}
    try:
        return settings_class(path)(**overrides)
    except yaml.YAMLError as e:
        raise ConfigError(f"not valid YAML: {e}", source=path)
    except (ValueError, TypeError, AttributeError) as e:
        # Validation errors, and a file that is not a mapping
        raise ConfigError(str(e), source=path)


def config_hash(run_settings: RunSettings) -> str:
    return hashlib.sha256(
        canonical_json(run_settings.model_dump(mode="json")).encode("utf-8")
    ).hexdigest()
