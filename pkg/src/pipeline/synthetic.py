"""
synthetic.py

Conjunto sintético com precursor plantado: todo snapshot tem um fundo
Erdős–Rényi com probabilidade p; nas amostras positivas um grupo de m nós
(as palavras de índice < m no vocabulário) vai se adensando até virar
clique nos últimos snapshots. Esses nós carregam um deslocamento nas
features nas duas classes, então só a estrutura separa as classes.
"""

from __future__ import annotations

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dygcl.errors import ConfigError
from dygcl.graph_core import DynamicGraphSample, SparseAdjacency
from pipeline.corpus import Vocabulary

logger = logging.getLogger(__name__)


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_nodes: int = Field(30, ge=1)
    num_snapshots: int = Field(5, ge=1)
    embedding_dim: int = Field(100, ge=1)
    edge_prob: float = Field(0.05, ge=0.0, le=1.0)
    motif_size: int = Field(6, ge=2)
    motif_growth: list[int] | None = None   # arestas novas por snapshot; None = rampa até o clique
    num_samples: int = Field(200, ge=1)
    positive_fraction: float = Field(0.5, ge=0.0, le=1.0)
    feature_offset: float = 0.5
    negative_schedule: Literal["none", "reversed"] = "none"
    seed: int = 0

    @classmethod
    def build(cls, **values) -> "SyntheticSpec":
        try:
            spec = cls(**values)
        except ValidationError as e:
            raise ConfigError("; ".join(f"{'.'.join(map(str, i['loc']))}: {i['msg']}" for i in e.errors())) from None
        spec.check()
        return spec

    @property
    def motif_edges(self) -> int:
        return math.comb(self.motif_size, 2)

    def check(self) -> None:
        if self.motif_size > self.num_nodes:
            raise ConfigError(f"motivo maior que o grafo ({self.motif_size} > {self.num_nodes})")
        growth = self.growth()
        if len(growth) != self.num_snapshots:
            raise ConfigError(f"motif_growth tem {len(growth)} entradas para {self.num_snapshots} snapshots")
        if any(g < 0 for g in growth) or sum(growth) > self.motif_edges:
            raise ConfigError(f"motif_growth deve ser não negativo e somar no máximo {self.motif_edges}")

    def growth(self) -> list[int]:
        if self.motif_growth is not None:
            return list(self.motif_growth)
        return ramp_schedule(self.motif_edges, self.num_snapshots)


def ramp_schedule(total: int, num_snapshots: int) -> list[int]:
    """Incrementos de uma rampa linear 0 → total (total no último snapshot)."""
    if num_snapshots == 1:
        return [total]
    cumulative = [round(total * t / (num_snapshots - 1)) for t in range(num_snapshots)]
    return [cumulative[0]] + [b - a for a, b in zip(cumulative, cumulative[1:])]


def _vocabulary(n: int) -> Vocabulary:
    width = len(str(n - 1))
    return Vocabulary(f"w{i:0{width}d}" for i in range(n))


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[DynamicGraphSample], Vocabulary, np.ndarray]:
    """
    Devolve (amostras, vocabulário, tabela de embeddings V×d). Tudo sai de
    um único gerador semeado, em ordem fixa: mesma semente, mesmos bits.
    """
    spec.check()
    rng = np.random.default_rng(spec.seed)
    n, m = spec.num_nodes, spec.motif_size
    vocab = _vocabulary(n)

    table = rng.uniform(-0.1, 0.1, size=(n, spec.embedding_dim))
    # tabela única para as duas classes: só a estrutura separa positivas de negativas
    table[:m] += spec.feature_offset

    n_pos = round(spec.positive_fraction * spec.num_samples)
    labels = np.zeros(spec.num_samples, dtype=np.int64)
    labels[:n_pos] = 1
    rng.shuffle(labels)

    growth = np.cumsum(spec.growth())
    reversed_growth = growth[::-1]
    iu, ju = np.triu_indices(n, k=1)
    motif_pairs = np.array([(a, b) for a in range(m) for b in range(a + 1, m)], dtype=np.int64)
    width = len(str(spec.num_samples - 1))

    samples = []
    for s, label in enumerate(labels):
        vocab_ids = rng.permutation(n)
        # nó local cujo token tem índice v
        position = np.empty(n, dtype=np.int64)
        position[vocab_ids] = np.arange(n)
        order = rng.permutation(len(motif_pairs))
        if label == 1:
            schedule = growth
        elif spec.negative_schedule == "reversed":
            schedule = reversed_growth
        else:
            schedule = None

        snapshots = []
        for t in range(spec.num_snapshots):
            keep = rng.random(len(iu)) < spec.edge_prob
            edges = [np.stack([iu[keep], ju[keep]], axis=1)]
            if schedule is not None and schedule[t] > 0:
                planted = motif_pairs[order[:schedule[t]]]
                edges.append(position[planted])
            snapshots.append(SparseAdjacency.from_edges(n, np.concatenate(edges)))

        samples.append(DynamicGraphSample(
            sample_id=f"syn{s:0{width}d}",
            num_nodes=n,
            snapshots=tuple(snapshots),
            node_vocab_ids=vocab_ids.astype(np.int64),
            label=int(label),
        ))

    logger.info("[OK] %d amostras sintéticas geradas (%d positivas)", len(samples), n_pos)
    return samples, vocab, table
