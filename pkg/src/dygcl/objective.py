"""
objective.py

Cabeça de saída: perda contrastiva entre as duas visões, fusão em
Z_Final, probabilidade do evento e perda conjunta ponderada.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dygcl import autodiff as ad
from dygcl.autodiff import ParamStore, Tensor
from dygcl.config import ModelConfig
from dygcl.errors import ConfigError, DimensionError, NumericError

PROB_EPS = 1e-7


@dataclass(frozen=True)
class HeadParams:
    W_l: Tensor
    b_l: Tensor
    W_g: Tensor
    b_g: Tensor
    mlp_W1: Tensor
    mlp_b1: Tensor
    mlp_W2: Tensor
    mlp_b2: Tensor

    @classmethod
    def register(cls, store: ParamStore, cfg: ModelConfig, rng: np.random.Generator) -> "HeadParams":
        w = cfg.local_width
        store.glorot("head.W_l", w, w, rng)
        store.zeros("head.b_l", 1, w)
        store.glorot("head.W_g", w, w, rng)
        store.zeros("head.b_g", 1, w)
        store.glorot("head.mlp_W1", 2 * w, cfg.mlp_hidden, rng)
        store.zeros("head.mlp_b1", 1, cfg.mlp_hidden)
        store.glorot("head.mlp_W2", cfg.mlp_hidden, 1, rng)
        store.zeros("head.mlp_b2", 1, 1)
        return cls.from_store(store)

    @classmethod
    def from_store(cls, store: ParamStore) -> "HeadParams":
        return cls(**{name: store[f"head.{name}"] for name in cls.__dataclass_fields__})


def contrastive_loss(z_local: Tensor, z_global: Tensor) -> Tensor:
    """1 − cos(Z_local, Z_global) ∈ [0, 2]; sem amostras negativas. Visão identicamente nula é erro."""
    if not (np.any(z_local.data) and np.any(z_global.data)):
        raise NumericError("contrastive_loss: visão com norma nula")
    return ad.affine(ad.cosine_similarity(z_local, z_global), -1.0, 1.0)


def fuse(z_local: Tensor, z_global: Tensor, p: HeadParams) -> Tensor:
    """tanh([Z_local·W_l + b_l ‖ Z_global·W_g + b_g]) → 1 × 4h."""
    if z_local.shape != z_global.shape:
        raise DimensionError(f"fuse: visões com formatos diferentes {z_local.shape} vs {z_global.shape}")
    local = ad.add_bias(ad.matmul(z_local, p.W_l), p.b_l)
    glob = ad.add_bias(ad.matmul(z_global, p.W_g), p.b_g)
    return ad.tanh(ad.concat_cols(local, glob))


def predict(z_final: Tensor, p: HeadParams) -> Tensor:
    """σ(MLP(Z_Final)), mantido em [ε, 1−ε]."""
    hidden = ad.tanh(ad.add_bias(ad.matmul(z_final, p.mlp_W1), p.mlp_b1))
    logit = ad.add_bias(ad.matmul(hidden, p.mlp_W2), p.mlp_b2)
    return ad.clamp(ad.sigmoid(logit), PROB_EPS, 1.0 - PROB_EPS)


def supervised_loss(probs: Tensor | Sequence[Tensor], labels: int | Sequence[int]) -> Tensor:
    """Entropia cruzada binária com os dois termos, média sobre o lote."""
    if isinstance(probs, Tensor):
        return ad.binary_cross_entropy(probs, float(labels))
    if len(probs) != len(labels):
        raise DimensionError("previsões e rótulos com tamanhos diferentes")
    return ad.mean_of([ad.binary_cross_entropy(p, float(y)) for p, y in zip(probs, labels)])


def total_loss(l_sup: Tensor, l_contra: Tensor, weight: float) -> Tensor:
    """λ·L_sup + (1−λ)·L_contra."""
    if not 0.0 <= weight <= 1.0:
        raise ConfigError(f"peso da perda {weight} fora de [0, 1]")
    return ad.add(ad.affine(l_sup, weight), ad.affine(l_contra, 1.0 - weight))
