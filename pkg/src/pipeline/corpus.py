"""
corpus.py

Construção dos grafos de co-ocorrência: cada dia vira um snapshot, cada
palavra um nó, e duas palavras ficam ligadas se aparecem a menos de `w`
posições uma da outra em algum documento daquele dia.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from dygcl.errors import ConfigError, StructuralError
from dygcl.graph_core import DynamicGraphSample, SparseAdjacency

logger = logging.getLogger(__name__)

TOKEN_RX = re.compile(r"\w+", re.UNICODE)
DEFAULT_WINDOW = 5

# lista curta, só para a opção --stopwords; desligada por padrão
STOPWORDS = frozenset(
    "a an and are as at be by for from has in is it its of on or that the to was were will with "
    "o os as um uma de do da dos das e em no na nos nas por para com que se".split()
)


# ----------------------------------------------------
# TIPOS
# ----------------------------------------------------
@dataclass(frozen=True)
class CorpusDay:
    date: str
    documents: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        for doc in self.documents:
            if any(not tok for tok in doc):
                raise StructuralError(f"token vazio num documento de {self.date}")

    @classmethod
    def from_texts(cls, date: str, texts: Iterable[str], stopwords: frozenset[str] | None = None) -> "CorpusDay":
        return cls(date, tuple(tokenize(t, stopwords) for t in texts))

    def tokens(self) -> Iterable[str]:
        for doc in self.documents:
            yield from doc


class Vocabulary:
    """token ↔ índice, índices densos a partir de 0 na ordem de inserção."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        self._tokens: list[str] = []
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self._index:
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
        return self._index[token]

    def get(self, token: str) -> int | None:
        return self._index.get(token)

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self._tokens)

    @classmethod
    def from_days(cls, days: Iterable[CorpusDay], min_count: int = 1) -> "Vocabulary":
        """Passo serial sobre todo o corpus; ordem = primeira ocorrência."""
        counts: Counter[str] = Counter()
        for day in days:
            counts.update(day.tokens())
        return cls(tok for tok, c in counts.items() if c >= min_count)


# ----------------------------------------------------
# TOKENIZAÇÃO E JANELA
# ----------------------------------------------------
def tokenize(text: str, stopwords: frozenset[str] | None = None) -> tuple[str, ...]:
    tokens = TOKEN_RX.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tuple(tokens)


def window_pairs(tokens: Sequence, window: int) -> Counter:
    """Pares (a, b), a < b, com distância < window; conta multiplicidades."""
    if window < 2:
        raise ConfigError(f"a janela deve ser ao menos 2, recebido {window}")
    pairs: Counter = Counter()
    n = len(tokens)
    for i in range(n):
        for j in range(i + 1, min(i + window, n)):
            a, b = tokens[i], tokens[j]
            if a is None or b is None or a == b:
                continue
            pairs[(a, b) if a < b else (b, a)] += 1
    return pairs


# ----------------------------------------------------
# INGESTÃO
# ----------------------------------------------------
def ingest_corpus(days: Sequence[CorpusDay], vocab: Vocabulary, window: int = DEFAULT_WINDOW,
                  missing: Literal["skip", "error"] = "skip", weighted: bool = False,
                  sample_id: str = "", label: int | None = None) -> DynamicGraphSample:
    """
    Um snapshot por dia sobre o conjunto fixo de nós (união das palavras do
    período, em ordem de índice do vocabulário). O seletor de features é
    `node_vocab_ids`. Tokens fora do vocabulário ocupam posição na janela mas
    não geram nós.
    """
    if not days:
        raise ConfigError("ingest_corpus exige ao menos um dia")
    if missing not in ("skip", "error"):
        raise ConfigError(f"política de token ausente desconhecida '{missing}'")

    mapped_days = []
    skipped = 0
    for day in days:
        docs = []
        for doc in day.documents:
            ids = []
            for tok in doc:
                idx = vocab.get(tok)
                if idx is None:
                    if missing == "error":
                        raise StructuralError(f"token '{tok}' de {day.date} fora do vocabulário")
                    skipped += 1
                ids.append(idx)
            docs.append(ids)
        mapped_days.append(docs)
    if skipped:
        logger.debug("%s: %d tokens fora do vocabulário ignorados", sample_id or "amostra", skipped)

    node_ids = sorted({i for docs in mapped_days for doc in docs for i in doc if i is not None})
    if not node_ids:
        raise StructuralError(f"amostra {sample_id}: nenhum token do vocabulário em nenhum dia")
    local = {vid: pos for pos, vid in enumerate(node_ids)}

    snapshots = []
    for docs in mapped_days:
        counts: Counter = Counter()
        for doc in docs:
            counts.update(window_pairs([None if i is None else local[i] for i in doc], window))
        pairs = sorted(counts)
        weights = [float(counts[p]) for p in pairs] if weighted else None
        snapshots.append(SparseAdjacency.from_edges(len(node_ids), pairs, weights))

    return DynamicGraphSample(
        sample_id=sample_id,
        num_nodes=len(node_ids),
        snapshots=tuple(snapshots),
        node_vocab_ids=np.asarray(node_ids, dtype=np.int64),
        label=label,
    )
