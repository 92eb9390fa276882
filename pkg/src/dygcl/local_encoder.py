"""
local_encoder.py

Encoder de visão local: a cada snapshot uma camada de grafo (GCN,
GraphSAGE ou GAT) sobre a saída do passo anterior, seguida da camada de
atenção temporal que reinjeta as features semânticas projetadas.
Z_local é a média dos nós do último passo.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dygcl import autodiff as ad
from dygcl.autodiff import ParamStore, Tensor
from dygcl.config import ModelConfig
from dygcl.errors import DimensionError
from dygcl.graph_core import DynamicGraphSample, NormalizedAdjacency, SemanticFeatures

GAT_SLOPE = 0.2


@dataclass(frozen=True)
class TimestepParams:
    theta: Tensor
    W_s: Tensor
    b_s: Tensor
    W_0: Tensor
    b_0: Tensor
    att_src: Tensor | None = None
    att_dst: Tensor | None = None


@dataclass(frozen=True)
class LocalEncoderParams:
    steps: tuple[TimestepParams, ...]

    @staticmethod
    def _names(t: int, shared: bool, gat: bool = False) -> dict[str, str]:
        # t = 1 lê H_sem (largura d) e fica sempre com os próprios pesos
        prefix = "local.shared" if shared and t >= 2 else f"local.t{t:02d}"
        keys = ["theta", "W_s", "b_s", "W_0", "b_0"] + (["att_src", "att_dst"] if gat else [])
        return {k: f"{prefix}.{k}" for k in keys}

    @classmethod
    def register(cls, store: ParamStore, cfg: ModelConfig, num_snapshots: int,
                 rng: np.random.Generator) -> "LocalEncoderParams":
        d, h = cfg.embedding_dim, cfg.local_hidden
        fan = 2 if cfg.gnn_kind == "sage" else 1
        gat = cfg.gnn_kind == "gat"
        for t in range(1, num_snapshots + 1):
            names = cls._names(t, cfg.share_weights, gat)
            if names["theta"] in store:
                continue
            in_dim = d if t == 1 else 2 * h
            store.glorot(names["theta"], fan * in_dim, h, rng)
            store.glorot(names["W_s"], h, h, rng)
            store.zeros(names["b_s"], 1, h)
            store.glorot(names["W_0"], d, h, rng)
            store.zeros(names["b_0"], 1, h)
            if gat:
                store.glorot(names["att_src"], h, 1, rng)
                store.glorot(names["att_dst"], h, 1, rng)
        return cls.from_store(store, cfg, num_snapshots)

    @classmethod
    def from_store(cls, store: ParamStore, cfg: ModelConfig, num_snapshots: int) -> "LocalEncoderParams":
        steps = []
        for t in range(1, num_snapshots + 1):
            names = cls._names(t, cfg.share_weights, cfg.gnn_kind == "gat")
            steps.append(TimestepParams(**{k: store[v] for k, v in names.items()}))
        return cls(tuple(steps))


def gcn_layer(a_hat: NormalizedAdjacency, h: Tensor, theta: Tensor, act: str = "relu") -> Tensor:
    """σ(Â·H·θ)."""
    return ad.activation(ad.spmm(a_hat, ad.matmul(h, theta)), act)


def sage_layer(neighbor_mean, h: Tensor, theta: Tensor, act: str = "relu") -> Tensor:
    """σ([H ‖ M·H]·θ), M = média dos vizinhos."""
    return ad.activation(ad.matmul(ad.concat_cols(h, ad.spmm(neighbor_mean, h)), theta), act)


def gat_layer(edges: tuple[np.ndarray, np.ndarray], h: Tensor, theta: Tensor, att_src: Tensor, att_dst: Tensor,
              act: str = "relu", slope: float = GAT_SLOPE) -> Tensor:
    """
    Atenção de grafo com uma cabeça: Z = H·θ, e_ij = LeakyReLU(Z_i·a_dst +
    Z_j·a_src), α_i· = softmax sobre a vizinhança de i (incluindo i) e
    saída σ(Σ_j α_ij·Z_j). Pesos das arestas não entram.
    """
    dst, src = edges
    n = h.shape[0]
    z = ad.matmul(h, theta)
    logits = ad.add(ad.gather_rows(ad.matmul(z, att_dst), dst), ad.gather_rows(ad.matmul(z, att_src), src))
    alpha = ad.segment_softmax(ad.leaky_relu(logits, slope), dst, n)
    return ad.activation(ad.scatter_add_rows(ad.scale_rows(ad.gather_rows(z, src), alpha), dst, n), act)


def temporal_attention(h_t: Tensor, h_sem: Tensor, p: TimestepParams) -> Tensor:
    """tanh([H_t·W_s + b_s ‖ H_sem·W_0 + b_0]) → N × 2h."""
    if h_t.shape[0] != h_sem.shape[0]:
        raise DimensionError(f"temporal_attention: {h_t.shape[0]} vs {h_sem.shape[0]} linhas")
    structural = ad.add_bias(ad.matmul(h_t, p.W_s), p.b_s)
    semantic = ad.add_bias(ad.matmul(h_sem, p.W_0), p.b_0)
    return ad.tanh(ad.concat_cols(structural, semantic))


def local_forward(sample: DynamicGraphSample, features: SemanticFeatures, params: LocalEncoderParams,
                  cfg: ModelConfig, rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Devolve (Z_local 1×2h, H_L N×2h). `rng` ativa o dropout (treino)."""
    if len(params.steps) != sample.num_snapshots:
        raise DimensionError(
            f"encoder montado para {len(params.steps)} snapshots, amostra {sample.sample_id} tem {sample.num_snapshots}"
        )
    h_sem = Tensor(features.matrix)
    h = h_sem
    for t, step in enumerate(params.steps):
        if cfg.gnn_kind == "sage":
            h = sage_layer(sample.neighbor_means[t], h, step.theta, cfg.gcn_activation)
        elif cfg.gnn_kind == "gat":
            h = gat_layer(sample.attention_edges[t], h, step.theta, step.att_src, step.att_dst, cfg.gcn_activation)
        else:
            h = gcn_layer(sample.normalized[t], h, step.theta, cfg.gcn_activation)
        h = ad.dropout(h, cfg.dropout, rng)
        h = temporal_attention(h, h_sem, step)
        h = ad.dropout(h, cfg.dropout, rng)
    return ad.row_mean(h), h
