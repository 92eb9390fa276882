"""
dataset_io.py

Formatos de arquivo:
  - dataset: JSON por linha {id, label, num_nodes, node_ids, snapshots[, weights]}
  - embeddings: texto, `token v1 ... vd` por linha
  - modelo: contêiner de texto autodescritivo (config + tensores nomeados)
Toda escrita é atômica (arquivo temporário + os.replace) e os reais saem
com 17 dígitos significativos.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from dygcl.autodiff import ParamStore
from dygcl.config import ModelConfig
from dygcl.errors import ConfigError, ParseError, StructuralError
from dygcl.graph_core import DynamicGraphSample, SparseAdjacency
from pipeline.corpus import Vocabulary

MODEL_MAGIC = "# dygcl model v1"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


# ----------------------------------------------------
# DATASET
# ----------------------------------------------------
def sample_to_record(sample: DynamicGraphSample) -> dict:
    record = {
        "id": sample.sample_id,
        "label": sample.label,
        "num_nodes": int(sample.num_nodes),
        "node_ids": [int(v) for v in sample.node_vocab_ids],
        "snapshots": [[[int(u), int(v)] for u, v in a.edges] for a in sample.snapshots],
    }
    if any(np.any(a.weights != 1.0) for a in sample.snapshots):
        record["weights"] = [[float(w) for w in a.weights] for a in sample.snapshots]
    return record


def write_dataset(samples: Iterable[DynamicGraphSample], path: Path) -> Path:
    lines = [json.dumps(sample_to_record(s), separators=(",", ":")) for s in samples]
    return atomic_write_text(path, "".join(line + "\n" for line in lines))


def _int_list(value, lineno: int, field: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ParseError("esperada uma lista de inteiros", lineno, field)
    return value


def record_to_sample(record, lineno: int) -> DynamicGraphSample:
    if not isinstance(record, dict):
        raise ParseError("o registro deve ser um objeto JSON", lineno)
    for key in ("id", "label", "num_nodes", "node_ids", "snapshots"):
        if key not in record:
            raise ParseError("campo ausente", lineno, key)
    if not isinstance(record["id"], str):
        raise ParseError("id deve ser texto", lineno, "id")
    label = record["label"]
    if label is not None and label not in (0, 1):
        raise ParseError("label deve ser 0 ou 1", lineno, "label")
    n = record["num_nodes"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ParseError("num_nodes deve ser um inteiro positivo", lineno, "num_nodes")
    node_ids = _int_list(record["node_ids"], lineno, "node_ids")
    if len(node_ids) != n:
        raise ParseError(f"esperados {n} ids de nós, recebidos {len(node_ids)}", lineno, "node_ids")
    snaps = record["snapshots"]
    if not isinstance(snaps, list) or not snaps:
        raise ParseError("snapshots deve ser uma lista não vazia", lineno, "snapshots")
    weights = record.get("weights")
    if weights is not None and (not isinstance(weights, list) or len(weights) != len(snaps)):
        raise ParseError("weights deve ter uma lista por snapshot", lineno, "weights")

    snapshots = []
    for t, edges in enumerate(snaps):
        if not isinstance(edges, list) or not all(isinstance(e, list) and len(e) == 2 for e in edges):
            raise ParseError(f"snapshot {t} deve ser uma lista de pares [u, v]", lineno, "snapshots")
        for e in edges:
            _int_list(e, lineno, "snapshots")
        try:
            snapshots.append(SparseAdjacency.from_edges(n, edges, None if weights is None else weights[t]))
        except StructuralError as e:
            raise ParseError(f"snapshot {t}: {e}", lineno, "snapshots") from None
    return DynamicGraphSample(
        sample_id=record["id"],
        num_nodes=n,
        snapshots=tuple(snapshots),
        node_vocab_ids=np.asarray(node_ids, dtype=np.int64),
        label=label,
    )


def read_dataset(path: Path) -> list[DynamicGraphSample]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"arquivo de dataset não encontrado: {path}")
    samples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"JSON malformado ({e.msg})", lineno) from None
            samples.append(record_to_sample(record, lineno))
    return samples


# ----------------------------------------------------
# EMBEDDINGS
# ----------------------------------------------------
def random_embeddings(rows: int, dim: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-0.1, 0.1, size=(rows, dim))


def load_embeddings(path: Path | None, dim: int, vocab: Vocabulary | None = None,
                    seed: int = 0) -> tuple[Vocabulary, np.ndarray]:
    """
    Lê `token v1 ... vd`. Com `vocab`, a matriz segue a ordem do vocabulário
    e tokens ausentes do arquivo recebem uniform(−0.1, 0.1) semeado; sem
    arquivo, a matriz inteira é aleatória.
    """
    if path is None:
        if vocab is None:
            raise ConfigError("embeddings aleatórios exigem um vocabulário")
        return vocab, random_embeddings(len(vocab), dim, seed)

    path = Path(path)
    if not path.exists():
        raise ParseError(f"arquivo de embeddings não encontrado: {path}")
    found: dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) - 1 != dim:
                raise ParseError(f"esperados {dim} valores, recebidos {len(parts) - 1}", lineno, "vector")
            try:
                vector = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise ParseError("valor não numérico", lineno, "vector") from None
            if not np.all(np.isfinite(vector)):
                raise ParseError("valor não finito", lineno, "vector")
            found.setdefault(parts[0], vector)

    if vocab is None:
        return Vocabulary(found), np.array(list(found.values())).reshape(len(found), dim)

    table = random_embeddings(len(vocab), dim, seed)
    for idx, tok in enumerate(vocab.tokens):
        if tok in found:
            table[idx] = found[tok]
    return vocab, table


def write_embeddings(vocab: Vocabulary, table: np.ndarray, path: Path) -> Path:
    if len(vocab) != len(table):
        raise StructuralError(f"{len(vocab)} tokens para {len(table)} linhas de embeddings")
    lines = [" ".join([tok, *map(fmt, row)]) for tok, row in zip(vocab.tokens, table)]
    return atomic_write_text(path, "".join(line + "\n" for line in lines))


# ----------------------------------------------------
# MODELO
# ----------------------------------------------------
def model_to_text(params: ParamStore, cfg: ModelConfig, kind: str, num_snapshots: int) -> str:
    out = [
        MODEL_MAGIC,
        f"kind {kind}",
        f"snapshots {num_snapshots}",
        f"config {cfg.model_dump_json()}",
    ]
    for name, t in params.items():
        rows, cols = t.shape
        out.append(f"tensor {name} {rows} {cols}")
        out.extend(" ".join(map(fmt, row)) for row in t.data)
    return "\n".join(out) + "\n"


def write_model(path: Path, params: ParamStore, cfg: ModelConfig, kind: str, num_snapshots: int) -> Path:
    return atomic_write_text(path, model_to_text(params, cfg, kind, num_snapshots))


def read_model(path: Path) -> tuple[ParamStore, ModelConfig, str, int]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"arquivo de modelo não encontrado: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ParseError("não é um arquivo de modelo", 1, "header")

    def header(lineno: int, key: str) -> str:
        if lineno > len(lines) or not lines[lineno - 1].startswith(key + " "):
            raise ParseError(f"esperado '{key}'", lineno, key)
        return lines[lineno - 1][len(key) + 1:]

    kind = header(2, "kind")
    try:
        num_snapshots = int(header(3, "snapshots"))
        cfg = ModelConfig.model_validate_json(header(4, "config"))
    except ValueError as e:
        raise ParseError(f"valor inválido no cabeçalho: {e}", None, "config") from None

    store = ParamStore()
    i = 4
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "tensor":
            raise ParseError("esperado 'tensor <nome> <linhas> <colunas>'", i + 1, "tensor")
        name = parts[1]
        try:
            rows, cols = int(parts[2]), int(parts[3])
        except ValueError:
            raise ParseError("o formato do tensor deve ser inteiro", i + 1, "tensor") from None
        values = []
        for r in range(rows):
            lineno = i + 2 + r
            if lineno > len(lines):
                raise ParseError(f"tensor {name} truncado", lineno, name)
            try:
                row = [float(x) for x in lines[lineno - 1].split()]
            except ValueError:
                raise ParseError("valor não numérico", lineno, name) from None
            if len(row) != cols:
                raise ParseError(f"esperados {cols} valores, recebidos {len(row)}", lineno, name)
            values.append(row)
        store.add(name, np.array(values, dtype=np.float64).reshape(rows, cols))
        i += 1 + rows
    return store, cfg, kind, num_snapshots
