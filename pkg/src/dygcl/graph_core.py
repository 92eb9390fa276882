"""
graph_core.py

Tipos de grafo dinâmico (snapshots sobre um conjunto fixo de nós) e as
transformações estruturais usadas pelos encoders: normalização simétrica
com self-loop e subgrafo induzido.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from dygcl.errors import ConfigError, StructuralError

_NO_EDGES = np.empty((0, 2), dtype=np.int64)


# ----------------------------------------------------
# TIPOS
# ----------------------------------------------------
@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """
    Arestas não direcionadas (u < v), sem duplicatas e sem self-loops.
    Os self-loops são somados apenas na normalização.
    """

    num_nodes: int
    edges: np.ndarray = dataclasses.field(default_factory=lambda: _NO_EDGES.copy())
    weights: np.ndarray = dataclasses.field(default_factory=lambda: np.empty(0))

    @classmethod
    def from_edges(cls, num_nodes: int, pairs, weights=None) -> "SparseAdjacency":
        """Canonicaliza (u < v), remove pares repetidos (fica o primeiro) e valida índices."""
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            w = np.ones(len(arr), dtype=np.float64)
        else:
            w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(w) != len(arr):
            raise StructuralError("pesos e arestas com tamanhos diferentes")
        if num_nodes < 1:
            raise StructuralError("o grafo precisa de ao menos um nó")
        if len(arr) == 0:
            return cls(num_nodes, _NO_EDGES.copy(), np.empty(0))
        if arr.min() < 0 or arr.max() >= num_nodes:
            raise StructuralError("índice de aresta fora do intervalo")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise StructuralError("laço não permitido")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise StructuralError("pesos das arestas devem ser positivos e finitos")
        canon = np.sort(arr, axis=1)
        _, first = np.unique(canon, axis=0, return_index=True)
        return cls(num_nodes, canon[first], w[first])

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.num_nodes, self.num_nodes))
        u, v = self.edges[:, 0], self.edges[:, 1]
        dense[u, v] = self.weights
        dense[v, u] = self.weights
        return dense


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """D̃^{-1/2}(A + I)D̃^{-1/2} em CSR (ou um recorte dela)."""

    num_nodes: int
    matrix: sp.csr_matrix

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class SemanticFeatures:
    """H_sem: uma linha de embedding por nó da amostra."""

    matrix: np.ndarray

    @classmethod
    def from_embeddings(cls, sample: "DynamicGraphSample", table: np.ndarray) -> "SemanticFeatures":
        ids = np.asarray(sample.node_vocab_ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(table)):
            raise StructuralError(f"amostra {sample.sample_id}: id de vocabulário fora da tabela de embeddings")
        return cls(np.asarray(table, dtype=np.float64)[ids])

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class DynamicGraphSample:
    sample_id: str
    num_nodes: int
    snapshots: tuple[SparseAdjacency, ...]
    node_vocab_ids: np.ndarray
    label: int | None = None

    @property
    def num_snapshots(self) -> int:
        return len(self.snapshots)

    @cached_property
    def normalized(self) -> tuple[NormalizedAdjacency, ...]:
        return tuple(normalize_adjacency(a) for a in self.snapshots)

    @cached_property
    def neighbor_means(self) -> tuple[sp.csr_matrix, ...]:
        return tuple(mean_neighbor_matrix(a) for a in self.snapshots)

    @cached_property
    def attention_edges(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return tuple(attention_edges(a) for a in self.snapshots)

    def with_label(self, label: int | None) -> "DynamicGraphSample":
        return dataclasses.replace(self, label=label)


# ----------------------------------------------------
# OPERAÇÕES
# ----------------------------------------------------
def _check_edges(adj: SparseAdjacency) -> None:
    if adj.num_edges == 0:
        return
    if adj.edges.min() < 0 or adj.edges.max() >= adj.num_nodes:
        raise StructuralError(f"índice de aresta fora do intervalo para {adj.num_nodes} nós")


def normalize_adjacency(adj: SparseAdjacency) -> NormalizedAdjacency:
    _check_edges(adj)
    n = adj.num_nodes
    u, v, w = adj.edges[:, 0], adj.edges[:, 1], adj.weights
    deg = np.ones(n)
    np.add.at(deg, u, w)
    np.add.at(deg, v, w)
    # o mesmo valor vai para (u, v) e (v, u): simetria exata
    off = w / np.sqrt(deg[u] * deg[v])
    diag = np.arange(n)
    rows = np.concatenate([u, v, diag])
    cols = np.concatenate([v, u, diag])
    vals = np.concatenate([off, off, 1.0 / deg])
    return NormalizedAdjacency(n, sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))


def attention_edges(adj: SparseAdjacency) -> tuple[np.ndarray, np.ndarray]:
    """(destino, origem) de cada aresta nos dois sentidos, mais um self-loop por nó."""
    _check_edges(adj)
    u, v = adj.edges[:, 0], adj.edges[:, 1]
    diag = np.arange(adj.num_nodes)
    return np.concatenate([u, v, diag]), np.concatenate([v, u, diag])


def mean_neighbor_matrix(adj: SparseAdjacency) -> sp.csr_matrix:
    """Adjacência normalizada por linha, sem self-loop (agregador média do GraphSAGE)."""
    _check_edges(adj)
    n = adj.num_nodes
    u, v, w = adj.edges[:, 0], adj.edges[:, 1], adj.weights
    strength = np.zeros(n)
    np.add.at(strength, u, w)
    np.add.at(strength, v, w)
    safe = np.where(strength > 0, strength, 1.0)
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    vals = np.concatenate([w / safe[u], w / safe[v]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _check_selection(idx: np.ndarray, n: int) -> None:
    if idx.ndim != 1:
        raise StructuralError("a seleção deve ser uma lista plana de índices")
    if idx.size == 0:
        return
    if idx.min() < 0 or idx.max() >= n:
        raise StructuralError(f"índice selecionado fora do intervalo para {n} nós")
    if np.any(np.diff(idx) <= 0):
        raise StructuralError("a seleção deve ser estritamente crescente (sem repetições)")


def induced_subgraph(adj, idx: Sequence[int]):
    """
    Recorte (idx × idx) preservando a ordem. Aceita SparseAdjacency ou
    NormalizedAdjacency e devolve o mesmo tipo; o recorte de uma matriz
    normalizada não é renormalizado aqui.
    """
    sel = np.asarray(idx, dtype=np.int64)
    _check_selection(sel, adj.num_nodes)
    if isinstance(adj, NormalizedAdjacency):
        sub = adj.matrix[sel][:, sel]
        return NormalizedAdjacency(len(sel), sp.csr_matrix(sub))

    _check_edges(adj)
    remap = np.full(adj.num_nodes, -1, dtype=np.int64)
    remap[sel] = np.arange(len(sel))
    if adj.num_edges == 0:
        return SparseAdjacency(len(sel), _NO_EDGES.copy(), np.empty(0))
    keep = (remap[adj.edges[:, 0]] >= 0) & (remap[adj.edges[:, 1]] >= 0)
    # idx crescente mantém u < v após o remapeamento
    return SparseAdjacency(len(sel), remap[adj.edges[keep]], adj.weights[keep].copy())


def validate_sample(sample: DynamicGraphSample, features: SemanticFeatures | None = None,
                    require_label: bool = True) -> list[str]:
    """Lista de violações (vazia = amostra ok). Nunca lança exceção."""
    problems: list[str] = []
    n = sample.num_nodes
    if not isinstance(n, (int, np.integer)) or n < 1:
        problems.append("num_nodes deve ser uma contagem positiva")
        n = 0
    if sample.num_snapshots < 1:
        problems.append("amostra sem snapshots")
    if sample.label not in (0, 1) and (require_label or sample.label is not None):
        problems.append("rótulo não binário")
    if len(sample.node_vocab_ids) != n:
        problems.append("tamanho de node_vocab_ids difere de num_nodes")
    for t, adj in enumerate(sample.snapshots):
        if adj.num_nodes != n:
            problems.append(f"número de nós do snapshot difere (t={t})")
            continue
        if adj.num_edges == 0:
            continue
        e = adj.edges
        if e.min() < 0 or e.max() >= n:
            problems.append(f"índice de aresta fora do intervalo (t={t})")
        if np.any(e[:, 0] == e[:, 1]):
            problems.append(f"laço armazenado (t={t})")
        canon = np.sort(e, axis=1)
        if len(np.unique(canon, axis=0)) != len(canon):
            problems.append(f"aresta duplicada (t={t})")
    if features is not None:
        if features.matrix.shape[0] != n:
            problems.append("linhas de features diferem de num_nodes")
        if not np.all(np.isfinite(features.matrix)):
            problems.append("feature não finita")
    return problems


# ----------------------------------------------------
# UTILITÁRIOS DE AMOSTRA
# ----------------------------------------------------
def permute_sample(sample: DynamicGraphSample, order: Sequence[int]) -> DynamicGraphSample:
    """Novo nó a = nó antigo order[a]."""
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(sample.num_nodes)):
        raise StructuralError("a ordem deve ser uma permutação dos nós")
    new_id = np.empty_like(order)
    new_id[order] = np.arange(len(order))
    snapshots = tuple(
        SparseAdjacency.from_edges(a.num_nodes, new_id[a.edges], a.weights) for a in sample.snapshots
    )
    return dataclasses.replace(
        sample,
        snapshots=snapshots,
        node_vocab_ids=np.asarray(sample.node_vocab_ids)[order],
    )


def union_snapshots(sample: DynamicGraphSample) -> SparseAdjacency:
    edges = np.concatenate([a.edges for a in sample.snapshots])
    weights = np.concatenate([a.weights for a in sample.snapshots])
    return SparseAdjacency.from_edges(sample.num_nodes, edges, weights)


def window_sample(sample: DynamicGraphSample, historic_days: int | None = None,
                  lead_days: int = 1) -> DynamicGraphSample:
    """
    lead_days = ℓ descarta os ℓ−1 últimos snapshots; historic_days = k mantém
    os k últimos snapshots que sobram.
    """
    T = sample.num_snapshots
    if lead_days < 1 or lead_days > T:
        raise ConfigError(f"lead_days={lead_days} excede os {T} snapshots disponíveis")
    available = T - (lead_days - 1)
    k = available if historic_days is None else historic_days
    if k < 1 or k > available:
        raise ConfigError(f"historic_days={historic_days} excede os {available} snapshots disponíveis")
    kept = sample.snapshots[available - k:available]
    if len(kept) == T:
        return sample
    return dataclasses.replace(sample, snapshots=tuple(kept))
