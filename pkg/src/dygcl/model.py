"""
model.py

Montagem dos modelos treináveis: DyGCL (encoders local e global + cabeça)
e a referência estática (GCN de 2 camadas sobre a união dos snapshots).
Os dois expõem a mesma interface para o treinador.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from dygcl import autodiff as ad
from dygcl.autodiff import ParamStore, Tensor
from dygcl.config import ModelConfig
from dygcl.errors import ConfigError
from dygcl.global_encoder import GlobalEncoderParams, PooledTrace, global_forward
from dygcl.graph_core import DynamicGraphSample, SemanticFeatures, normalize_adjacency, union_snapshots
from dygcl.local_encoder import LocalEncoderParams, gcn_layer, local_forward
from dygcl.objective import PROB_EPS, HeadParams, contrastive_loss, fuse, predict, supervised_loss, total_loss


@dataclass
class SampleOutput:
    loss: Tensor | None
    prob: float
    sup: float | None
    contra: float | None = None
    traces: list[PooledTrace] = field(default_factory=list)


class DyGCL:
    kind = "dygcl"

    def __init__(self, cfg: ModelConfig, num_snapshots: int):
        self.cfg = cfg
        self.num_snapshots = num_snapshots

    def build_params(self, rng: np.random.Generator) -> ParamStore:
        store = ParamStore()
        LocalEncoderParams.register(store, self.cfg, self.num_snapshots, rng)
        GlobalEncoderParams.register(store, self.cfg, rng)
        HeadParams.register(store, self.cfg, rng)
        return store

    def sample_loss(self, sample: DynamicGraphSample, features: SemanticFeatures, params: ParamStore,
                    rng: np.random.Generator | None = None) -> SampleOutput:
        """Forward completo de uma amostra; `rng` liga o dropout."""
        cfg = self.cfg
        local = LocalEncoderParams.from_store(params, cfg, self.num_snapshots)
        z_local, h_l = local_forward(sample, features, local, cfg, rng)
        z_global, traces = global_forward(sample, h_l, GlobalEncoderParams.from_store(params, cfg), cfg, rng)
        head = HeadParams.from_store(params)
        prob = predict(fuse(z_local, z_global, head), head)
        if sample.label is None:
            return SampleOutput(None, prob.item(), None, None, traces)
        l_sup = supervised_loss(prob, sample.label)
        # λ = 1 anula o termo contrastivo; nem chega a ser calculado
        if cfg.supervised_only or cfg.loss_weight == 1.0:
            return SampleOutput(l_sup, prob.item(), l_sup.item(), None, traces)
        l_contra = contrastive_loss(z_local, z_global)
        loss = total_loss(l_sup, l_contra, cfg.loss_weight)
        return SampleOutput(loss, prob.item(), l_sup.item(), l_contra.item(), traces)


class StaticGCN:
    """Referência estática: une as arestas de todos os snapshots num único grafo."""

    kind = "static_gcn"

    def __init__(self, cfg: ModelConfig, num_snapshots: int):
        self.cfg = cfg
        self.num_snapshots = num_snapshots
        self._union = lru_cache(maxsize=None)(self._normalized_union)

    @staticmethod
    def _normalized_union(sample: DynamicGraphSample):
        return normalize_adjacency(union_snapshots(sample))

    def build_params(self, rng: np.random.Generator) -> ParamStore:
        d, h = self.cfg.embedding_dim, self.cfg.local_hidden
        store = ParamStore()
        store.glorot("static.gcn1", d, h, rng)
        store.glorot("static.gcn2", h, h, rng)
        store.glorot("static.out_W", h, 1, rng)
        store.zeros("static.out_b", 1, 1)
        return store

    def sample_loss(self, sample: DynamicGraphSample, features: SemanticFeatures, params: ParamStore,
                    rng: np.random.Generator | None = None) -> SampleOutput:
        cfg = self.cfg
        a_hat = self._union(sample)
        h = gcn_layer(a_hat, Tensor(features.matrix), params["static.gcn1"], cfg.gcn_activation)
        h = ad.dropout(h, cfg.dropout, rng)
        h = gcn_layer(a_hat, h, params["static.gcn2"], cfg.gcn_activation)
        h = ad.dropout(h, cfg.dropout, rng)
        logit = ad.add_bias(ad.matmul(ad.row_mean(h), params["static.out_W"]), params["static.out_b"])
        prob = ad.clamp(ad.sigmoid(logit), PROB_EPS, 1.0 - PROB_EPS)
        if sample.label is None:
            return SampleOutput(None, prob.item(), None)
        loss = supervised_loss(prob, sample.label)
        return SampleOutput(loss, prob.item(), loss.item())


MODELS = {DyGCL.kind: DyGCL, StaticGCN.kind: StaticGCN}


def make_model(kind: str, cfg: ModelConfig, num_snapshots: int):
    try:
        return MODELS[kind](cfg, num_snapshots)
    except KeyError:
        raise ConfigError(f"tipo de modelo desconhecido '{kind}'") from None
