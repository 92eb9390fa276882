"""Construtores de grafos aleatórios para os testes."""

import numpy as np

from dygcl.graph_core import DynamicGraphSample, SparseAdjacency


def random_adjacency(rng: np.random.Generator, n: int, p: float = 0.3) -> SparseAdjacency:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return SparseAdjacency.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))


def random_sample(rng: np.random.Generator, n: int = 6, t: int = 3, p: float = 0.4,
                  label: int = 1, sample_id: str = "s0") -> DynamicGraphSample:
    return DynamicGraphSample(
        sample_id=sample_id,
        num_nodes=n,
        snapshots=tuple(random_adjacency(rng, n, p) for _ in range(t)),
        node_vocab_ids=np.arange(n, dtype=np.int64),
        label=label,
    )
