"""
global_encoder.py

Encoder de visão global: em cada snapshot, L blocos de pooling top-K
(GCN → escores de atenção → seleção dos k melhores nós → subgrafo
induzido), readout média‖máximo, e uma rede recorrente (LSTM ou GRU)
sobre a sequência de vetores dos snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dygcl import autodiff as ad
from dygcl.autodiff import ParamStore, Tensor
from dygcl.config import ModelConfig
from dygcl.errors import ConfigError, DimensionError
from dygcl.graph_core import (
    DynamicGraphSample,
    NormalizedAdjacency,
    SparseAdjacency,
    induced_subgraph,
    normalize_adjacency,
)

_GATES = {"lstm": ("i", "f", "o", "c"), "gru": ("z", "r", "n")}


# ----------------------------------------------------
# PARÂMETROS
# ----------------------------------------------------
@dataclass(frozen=True)
class BlockParams:
    theta: Tensor
    theta_att: Tensor


@dataclass(frozen=True)
class RecurrentCellParams:
    kind: str
    W: dict[str, Tensor]
    U: dict[str, Tensor]
    b: dict[str, Tensor]

    @property
    def hidden(self) -> int:
        return next(iter(self.U.values())).shape[0]


@dataclass(frozen=True)
class GlobalEncoderParams:
    blocks: tuple[BlockParams, ...]
    cell: RecurrentCellParams

    @classmethod
    def register(cls, store: ParamStore, cfg: ModelConfig, rng: np.random.Generator) -> "GlobalEncoderParams":
        g, width = cfg.global_hidden, cfg.local_width
        for level in range(1, cfg.pool_blocks + 1):
            in_dim = width if level == 1 else g
            store.glorot(f"global.block{level}.theta", in_dim, g, rng)
            store.glorot(f"global.block{level}.theta_att", g, 1, rng)
        hidden = width
        # viés não nulo: com entrada nula a célula ainda produz estado não nulo
        bound = 1.0 / math.sqrt(hidden)
        for gate in _GATES[cfg.rnn_kind]:
            store.glorot(f"global.rnn.W_{gate}", 2 * g, hidden, rng)
            store.glorot(f"global.rnn.U_{gate}", hidden, hidden, rng)
            store.uniform(f"global.rnn.b_{gate}", 1, hidden, bound, rng)
        return cls.from_store(store, cfg)

    @classmethod
    def from_store(cls, store: ParamStore, cfg: ModelConfig) -> "GlobalEncoderParams":
        blocks = tuple(
            BlockParams(store[f"global.block{lv}.theta"], store[f"global.block{lv}.theta_att"])
            for lv in range(1, cfg.pool_blocks + 1)
        )
        gates = _GATES[cfg.rnn_kind]
        cell = RecurrentCellParams(
            cfg.rnn_kind,
            {k: store[f"global.rnn.W_{k}"] for k in gates},
            {k: store[f"global.rnn.U_{k}"] for k in gates},
            {k: store[f"global.rnn.b_{k}"] for k in gates},
        )
        if cell.hidden != cfg.local_width:
            raise ConfigError(f"estado recorrente de tamanho {cell.hidden} deve igualar dim(Z_local)={cfg.local_width}")
        return cls(blocks, cell)


# ----------------------------------------------------
# POOLING TOP-K
# ----------------------------------------------------
@dataclass(frozen=True)
class BlockTrace:
    indices: np.ndarray        # índices originais dos nós mantidos
    scores: np.ndarray         # escore de cada nó mantido
    adjacency: SparseAdjacency  # grafo grosso, indexado localmente


@dataclass
class PooledTrace:
    snapshot: int
    blocks: list[BlockTrace] = field(default_factory=list)


@dataclass(frozen=True)
class PoolResult:
    adjacency: SparseAdjacency
    features: Tensor
    indices: np.ndarray
    scores: Tensor


def attention_scores(h: Tensor, a_hat: NormalizedAdjacency, theta_att: Tensor,
                     kind: str = "gnn", act: str = "tanh") -> Tensor:
    """S = act(Â·H·θ_att); com kind='projection', act(H·θ_att)."""
    if h.shape[1] != theta_att.shape[0]:
        raise DimensionError(f"attention_scores: features {h.shape} vs θ_att {theta_att.shape}")
    proj = ad.matmul(h, theta_att)
    if kind == "gnn":
        proj = ad.spmm(a_hat, proj)
    return ad.activation(proj, act)


def pool_size(ratio: float, n: int) -> int:
    # round() evita que 0.1·30 vire 3.0000000000000004 e suba para 4
    return max(1, math.ceil(round(ratio * n, 9)))


def topk_select(scores, ratio: float, n: int | None = None) -> np.ndarray:
    """k = max(1, ⌈ρ·N⌉) maiores escores; empate → menor índice; saída crescente."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = len(s) if n is None else n
    k = min(pool_size(ratio, n), len(s))
    order = np.lexsort((np.arange(len(s)), -s))
    return np.sort(order[:k])


def pool_block(adj: SparseAdjacency, h: Tensor, block: BlockParams, cfg: ModelConfig,
               a_hat: NormalizedAdjacency | None = None, rng: np.random.Generator | None = None) -> PoolResult:
    a_hat = a_hat if a_hat is not None else normalize_adjacency(adj)
    h_t = ad.activation(ad.spmm(a_hat, ad.matmul(h, block.theta)), cfg.gcn_activation)
    h_t = ad.dropout(h_t, cfg.dropout, rng)
    s = attention_scores(h_t, a_hat, block.theta_att, cfg.score_kind, cfg.score_activation)
    idx = topk_select(s.data[:, 0], cfg.pool_ratio, adj.num_nodes)
    selected = ad.gather_rows(s, idx)
    # multiplicar pelo escore é o que dá gradiente a θ_att
    pooled = ad.scale_rows(ad.gather_rows(h_t, idx), selected)
    return PoolResult(induced_subgraph(adj, idx), pooled, idx, selected)


def readout(h: Tensor) -> Tensor:
    """[média ‖ máximo] por coluna → 1 × 2g."""
    if h.shape[0] == 0:
        raise DimensionError("readout de grafo vazio")
    return ad.concat_cols(ad.row_mean(h), ad.col_max(h))


# ----------------------------------------------------
# RECORRÊNCIA
# ----------------------------------------------------
def _gate(x: Tensor, h: Tensor, cell: RecurrentCellParams, k: str) -> Tensor:
    return ad.add_bias(ad.add(ad.matmul(x, cell.W[k]), ad.matmul(h, cell.U[k])), cell.b[k])


def lstm_step(x: Tensor, h: Tensor, c: Tensor, cell: RecurrentCellParams) -> tuple[Tensor, Tensor]:
    i = ad.sigmoid(_gate(x, h, cell, "i"))
    f = ad.sigmoid(_gate(x, h, cell, "f"))
    o = ad.sigmoid(_gate(x, h, cell, "o"))
    cand = ad.tanh(_gate(x, h, cell, "c"))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, cand))
    return ad.mul(o, ad.tanh(c_new)), c_new


def gru_step(x: Tensor, h: Tensor, cell: RecurrentCellParams) -> Tensor:
    z = ad.sigmoid(_gate(x, h, cell, "z"))
    r = ad.sigmoid(_gate(x, h, cell, "r"))
    recur = ad.mul(r, ad.matmul(h, cell.U["n"]))
    n = ad.tanh(ad.add_bias(ad.add(ad.matmul(x, cell.W["n"]), recur), cell.b["n"]))
    return ad.add(ad.mul(ad.affine(z, -1.0, 1.0), n), ad.mul(z, h))


def recurrent_aggregate(zs: list[Tensor], cell: RecurrentCellParams) -> Tensor:
    """Roda a célula da esquerda para a direita a partir do estado zero; devolve o último h."""
    if not zs:
        raise DimensionError("recurrent_aggregate exige ao menos um vetor de snapshot")
    h = Tensor(np.zeros((1, cell.hidden)))
    c = Tensor(np.zeros((1, cell.hidden)))
    for x in zs:
        if x.shape[1] != cell.W[next(iter(cell.W))].shape[0]:
            raise DimensionError(f"largura de entrada {x.shape[1]} incompatível com a célula")
        if cell.kind == "lstm":
            h, c = lstm_step(x, h, c, cell)
        else:
            h = gru_step(x, h, cell)
    return h


# ----------------------------------------------------
# FORWARD COMPLETO
# ----------------------------------------------------
def global_forward(sample: DynamicGraphSample, h_l: Tensor, params: GlobalEncoderParams, cfg: ModelConfig,
                   rng: np.random.Generator | None = None) -> tuple[Tensor, list[PooledTrace]]:
    if h_l.shape[0] != sample.num_nodes:
        raise DimensionError(f"H_L tem {h_l.shape[0]} linhas para {sample.num_nodes} nós")
    readouts: list[Tensor] = []
    traces: list[PooledTrace] = []
    for t, adj in enumerate(sample.snapshots):
        trace = PooledTrace(snapshot=t + 1)
        a_hat = sample.normalized[t]
        h, original = h_l, np.arange(sample.num_nodes)
        for block in params.blocks:
            res = pool_block(adj, h, block, cfg, a_hat=a_hat, rng=rng)
            original = original[res.indices]
            trace.blocks.append(BlockTrace(original, res.scores.data[:, 0].copy(), res.adjacency))
            adj, h, a_hat = res.adjacency, res.features, None
        readouts.append(readout(h))
        traces.append(trace)
    return recurrent_aggregate(readouts, params.cell), traces
