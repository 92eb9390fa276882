"""
config.py

Hiperparâmetros e chaves de arquitetura (ModelConfig) e configuração de
execução da CLI (RunConfig), validados com pydantic.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dygcl.errors import ConfigError

SEED_ENV = "DYGCL_SEED"

# grades padrão da varredura de hiperparâmetros
LEARNING_RATE_GRID = (1e-2, 5e-2, 1e-3, 5e-3, 1e-4, 5e-4)
WEIGHT_DECAY_GRID = (1e-2, 1e-3, 1e-4, 1e-5)
HIDDEN_GRID = (16, 32, 64, 128)


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # dimensões
    embedding_dim: int = Field(100, gt=0)
    local_hidden: int = Field(16, gt=0)
    global_hidden: int = Field(16, gt=0)
    mlp_hidden: int = Field(16, gt=0)

    # encoder global
    pool_blocks: int = Field(2, ge=1)
    pool_ratio: float = Field(0.5, gt=0.0, le=1.0)
    rnn_kind: Literal["lstm", "gru"] = "lstm"
    score_kind: Literal["gnn", "projection"] = "gnn"
    score_activation: Literal["tanh", "sigmoid"] = "tanh"

    # encoder local
    gnn_kind: Literal["gcn", "sage", "gat"] = "gcn"
    gcn_activation: Literal["relu", "tanh"] = "relu"
    share_weights: bool = False

    # objetivo
    loss_weight: float = Field(0.5, ge=0.0, le=1.0)
    supervised_only: bool = False

    # otimização
    learning_rate: float = Field(5e-3, ge=0.0)
    weight_decay: float = Field(1e-5, ge=0.0)
    dropout: float = Field(0.2, ge=0.0, lt=1.0)
    batch_size: int = Field(32, gt=0)
    max_epochs: int = Field(200, gt=0)
    patience: int = Field(50, ge=0)
    min_delta: float = Field(0.0, ge=0.0)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)

    # janela temporal
    historic_days: int | None = Field(None, gt=0)
    lead_days: int = Field(1, gt=0)

    @property
    def local_width(self) -> int:
        """Largura de Z_local e H_L (2h)."""
        return 2 * self.local_hidden

    @classmethod
    def build(cls, **values: Any) -> "ModelConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(_describe(e)) from None

    def evolve(self, **changes: Any) -> "ModelConfig":
        return ModelConfig.build(**{**self.model_dump(), **changes})


class RunConfig(BaseModel):
    """ModelConfig mais caminhos da execução."""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    dataset: Path | None = None
    embeddings: Path | None = None
    out_dir: Path = Path("out")

    @model_validator(mode="after")
    def _resolve_paths(self) -> "RunConfig":
        for name in ("dataset", "embeddings", "out_dir"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Path(value).expanduser().resolve())
        return self


_PATH_KEYS = {"dataset", "embeddings", "out_dir"}


def _describe(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        loc = ".".join(str(x) for x in item["loc"]) or "config"
        parts.append(f"{loc}: valor inválido ({item['msg']})")
    return "; ".join(parts)


def load_run_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Precedência: flag da CLI > arquivo de configuração > DYGCL_SEED (só a
    semente) > padrão documentado. O arquivo é um objeto JSON plano.
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"arquivo de configuração não encontrado: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"arquivo de configuração não é JSON válido: {e}") from None
        if not isinstance(values, dict):
            raise ConfigError("o arquivo de configuração deve conter um objeto JSON")

    if "seeds" not in values and os.environ.get(SEED_ENV):
        try:
            values["seeds"] = [int(os.environ[SEED_ENV])]
        except ValueError:
            raise ConfigError(f"{SEED_ENV} deve ser um inteiro") from None

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    unknown = set(values) - _PATH_KEYS - set(ModelConfig.model_fields)
    if unknown:
        raise ConfigError(f"chaves de configuração desconhecidas: {', '.join(sorted(unknown))}")

    model_values = {k: v for k, v in values.items() if k not in _PATH_KEYS}
    path_values = {k: v for k, v in values.items() if k in _PATH_KEYS}
    try:
        return RunConfig(model=ModelConfig(**model_values), **path_values)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from None
