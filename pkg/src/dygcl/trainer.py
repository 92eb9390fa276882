"""
trainer.py

Protocolo de treino e avaliação: divisão 70/15/15, lotes com Adam,
parada antecipada pela perda de validação, métricas de classificação,
experimentos com várias sementes, referência estática e varredura de
sensibilidade (dias históricos / dias de antecedência).
"""

from __future__ import annotations

import logging
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from dygcl import autodiff as ad
from dygcl.autodiff import ParamStore, Tape, backward
from dygcl.config import HIDDEN_GRID, LEARNING_RATE_GRID, WEIGHT_DECAY_GRID, ModelConfig
from dygcl.errors import ConfigError, NumericError, StructuralError, TrainingDivergedError, UsageError
from dygcl.graph_core import DynamicGraphSample, SemanticFeatures, validate_sample, window_sample
from dygcl.model import make_model
from dygcl.optim import Adam, EarlyStopping

logger = logging.getLogger(__name__)

METRIC_KEYS = ("accuracy", "precision", "recall", "f1")
SWEEP_AXES = ("historic_days", "lead_days", "loss_weight", "learning_rate", "weight_decay", "local_hidden")
SWEEP_GRIDS = {"learning_rate": LEARNING_RATE_GRID, "weight_decay": WEIGHT_DECAY_GRID, "local_hidden": HIDDEN_GRID}
MIN_SAMPLES = 10


# ----------------------------------------------------
# REGISTROS
# ----------------------------------------------------
class Metrics(BaseModel):
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    zero_division: list[str] = Field(default_factory=list)

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        total = tp + fp + fn + tn
        if total == 0:
            raise UsageError("métricas exigem ao menos uma previsão")
        flags = []
        if tp + fp:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            flags.append("precision")
        if tp + fn:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            flags.append("recall")
        if precision + recall:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            flags.append("f1")
        return cls(accuracy=(tp + tn) / total, precision=precision, recall=recall, f1=f1,
                   tp=tp, fp=fp, fn=fn, tn=tn, zero_division=flags)

    @classmethod
    def from_predictions(cls, labels: Sequence[int], probs: Sequence[float], threshold: float = 0.5) -> "Metrics":
        y = np.asarray(labels, dtype=np.int64)
        pred = (np.asarray(probs, dtype=np.float64) >= threshold).astype(np.int64)
        return cls.from_counts(
            tp=int(((pred == 1) & (y == 1)).sum()),
            fp=int(((pred == 1) & (y == 0)).sum()),
            fn=int(((pred == 0) & (y == 1)).sum()),
            tn=int(((pred == 0) & (y == 0)).sum()),
        )


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    val_precision: float
    val_recall: float
    val_f1: float


class TrainHistory(BaseModel):
    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.epochs])


class ExperimentResult(BaseModel):
    kind: str
    seeds: list[int]
    runs: list[Metrics]
    mean: dict[str, float]
    std: dict[str, float]
    histories: list[TrainHistory] = Field(default_factory=list)


class DatasetSplit(NamedTuple):
    train: list[DynamicGraphSample]
    val: list[DynamicGraphSample]
    test: list[DynamicGraphSample]


# ----------------------------------------------------
# PREPARAÇÃO
# ----------------------------------------------------
def split_dataset(samples: Sequence[DynamicGraphSample], seed: int) -> DatasetSplit:
    """Embaralha com a semente e separa 70/15/15 (o resto vai para treino)."""
    n = len(samples)
    if n < MIN_SAMPLES:
        raise ConfigError(f"a divisão exige ao menos {MIN_SAMPLES} amostras, recebidas {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = n_test = math.floor(0.15 * n)
    n_train = n - n_val - n_test
    pick = lambda ids: [samples[i] for i in ids]  # noqa: E731
    return DatasetSplit(
        pick(order[:n_train]),
        pick(order[n_train:n_train + n_val]),
        pick(order[n_train + n_val:]),
    )


def prepare_samples(samples: Sequence[DynamicGraphSample], embeddings: np.ndarray, cfg: ModelConfig,
                    labeled: bool = True) -> tuple[list[DynamicGraphSample], dict[str, SemanticFeatures]]:
    """Aplica a janela temporal, monta H_sem e valida cada amostra; `labeled=False` aceita rótulo ausente."""
    if embeddings.shape[1] != cfg.embedding_dim:
        raise ConfigError(f"tabela de embeddings com dim {embeddings.shape[1]}, configuração espera {cfg.embedding_dim}")
    windowed = [window_sample(s, cfg.historic_days, cfg.lead_days) for s in samples]
    features: dict[str, SemanticFeatures] = {}
    for s in windowed:
        features[s.sample_id] = feats = SemanticFeatures.from_embeddings(s, embeddings)
        problems = validate_sample(s, feats, require_label=labeled)
        if problems:
            raise StructuralError(f"amostra {s.sample_id}: {'; '.join(problems)}")
    lengths = {s.num_snapshots for s in windowed}
    if len(lengths) > 1:
        raise StructuralError(f"amostras com números de snapshots diferentes: {sorted(lengths)}")
    return windowed, features


def _num_snapshots(samples: Sequence[DynamicGraphSample]) -> int:
    return samples[0].num_snapshots


def _score(model, params: ParamStore, samples: Sequence[DynamicGraphSample],
           features: dict[str, SemanticFeatures]) -> tuple[float, Metrics]:
    losses, probs = [], []
    for s in samples:
        out = model.sample_loss(s, features[s.sample_id], params)
        losses.append(out.loss.item())
        probs.append(out.prob)
    return float(np.mean(losses)), Metrics.from_predictions([s.label for s in samples], probs)


# ----------------------------------------------------
# TREINO
# ----------------------------------------------------
def train(split: DatasetSplit, embeddings: np.ndarray, cfg: ModelConfig, seed: int | None = None,
          kind: str = "dygcl",
          on_best: Callable[[ParamStore, int], None] | None = None) -> tuple[ParamStore, TrainHistory]:
    """
    Treina por lotes embaralhados até `max_epochs` ou até `patience` épocas
    sem melhora na perda de validação; devolve os parâmetros da melhor época.
    """
    seed = cfg.seeds[0] if seed is None else seed
    train_set, features = prepare_samples(split.train, embeddings, cfg)
    val_set, val_features = prepare_samples(split.val, embeddings, cfg)
    if not train_set or not val_set:
        raise UsageError("o treino exige conjuntos de treino e validação não vazios")
    features.update(val_features)

    init_ss, shuffle_ss, dropout_ss = np.random.SeedSequence(seed).spawn(3)
    model = make_model(kind, cfg, _num_snapshots(train_set))
    params = model.build_params(np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    opt = Adam(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(patience=cfg.patience, delta=cfg.min_delta)
    history = TrainHistory()
    best = params.snapshot()
    logger.info("Treinando %s: %d parâmetros, %d amostras de treino, %d de validação",
                kind, params.size(), len(train_set), len(val_set))

    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(len(train_set))
        total = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            opt.zero_grad()
            batch_loss = 0.0
            try:
                for s in batch:
                    with Tape() as tape:
                        out = model.sample_loss(s, features[s.sample_id], params, dropout_rng)
                        scaled = ad.affine(out.loss, 1.0 / len(batch))
                    backward(scaled, tape)
                    batch_loss += out.loss.item()
            except NumericError as e:
                raise TrainingDivergedError(f"falha numérica na amostra {s.sample_id}: {e}", epoch, b) from e
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError("perda do lote não finita", epoch, b)
            opt.step()
            total += batch_loss
            logger.debug("época %d lote %d: perda %.6f", epoch, b, batch_loss / len(batch))

        val_loss, val_metrics = _score(model, params, val_set, features)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError("perda de validação não finita", epoch)
        history.epochs.append(EpochRecord(
            epoch=epoch, train_loss=total / len(train_set), val_loss=val_loss,
            val_acc=val_metrics.accuracy, val_precision=val_metrics.precision,
            val_recall=val_metrics.recall, val_f1=val_metrics.f1,
        ))
        if stopper(val_loss, epoch):
            best = params.snapshot()
            history.best_epoch = epoch
            if on_best is not None:
                on_best(params, epoch)
        logger.info("Época %d: treino %.4f | validação %.4f | acc %.3f",
                    epoch, total / len(train_set), val_loss, val_metrics.accuracy)
        if stopper.early_stop:
            history.stopped_early = True
            logger.info("[OK] Parada antecipada na época %d (melhor: %d)", epoch, history.best_epoch)
            break

    params.restore(best)
    return params, history


def evaluate(params: ParamStore, samples: Sequence[DynamicGraphSample], embeddings: np.ndarray,
             cfg: ModelConfig, kind: str = "dygcl") -> Metrics:
    """Limiar 0.5 sobre ŷ, sem dropout."""
    if not samples:
        raise UsageError("não há como avaliar uma partição vazia")
    prepared, features = prepare_samples(samples, embeddings, cfg)
    model = make_model(kind, cfg, _num_snapshots(prepared))
    return _score(model, params, prepared, features)[1]


def predict_probabilities(params: ParamStore, samples: Sequence[DynamicGraphSample], embeddings: np.ndarray,
                          cfg: ModelConfig, kind: str = "dygcl"):
    """Saída completa por amostra (probabilidade e traços de pooling)."""
    prepared, features = prepare_samples(samples, embeddings, cfg, labeled=False)
    model = make_model(kind, cfg, _num_snapshots(prepared))
    return [model.sample_loss(s, features[s.sample_id], params) for s in prepared]


# ----------------------------------------------------
# EXPERIMENTOS
# ----------------------------------------------------
def _aggregate(runs: list[Metrics]) -> tuple[dict[str, float], dict[str, float]]:
    frame = pd.DataFrame([r.model_dump(include=set(METRIC_KEYS)) for r in runs])[list(METRIC_KEYS)]
    return frame.mean().to_dict(), frame.std(ddof=0).to_dict()


def run_experiment(samples: Sequence[DynamicGraphSample], embeddings: np.ndarray, cfg: ModelConfig,
                   kind: str = "dygcl") -> ExperimentResult:
    """Treina e testa uma vez por semente; média e desvio padrão por métrica."""
    runs, histories = [], []
    for seed in cfg.seeds:
        split = split_dataset(samples, seed)
        params, history = train(split, embeddings, cfg, seed=seed, kind=kind)
        metrics = evaluate(params, split.test, embeddings, cfg, kind)
        logger.info("[OK] semente %d: acc %.4f f1 %.4f", seed, metrics.accuracy, metrics.f1)
        runs.append(metrics)
        histories.append(history)
    mean, std = _aggregate(runs)
    return ExperimentResult(kind=kind, seeds=list(cfg.seeds), runs=runs, mean=mean, std=std, histories=histories)


def baseline_static_gcn(samples: Sequence[DynamicGraphSample], embeddings: np.ndarray,
                        cfg: ModelConfig) -> Metrics:
    """GCN de 2 camadas sobre a união dos snapshots, mesmo protocolo, primeira semente."""
    seed = cfg.seeds[0]
    split = split_dataset(samples, seed)
    params, _ = train(split, embeddings, cfg, seed=seed, kind="static_gcn")
    return evaluate(params, split.test, embeddings, cfg, kind="static_gcn")


def sensitivity_sweep(samples: Sequence[DynamicGraphSample], embeddings: np.ndarray, cfg: ModelConfig,
                      axis: str, values: Sequence | None = None, kind: str = "dygcl") -> pd.DataFrame:
    """
    Retreina por valor do eixo e tabula precisão/revocação/F1 (média e
    desvio). Sem `values`, learning_rate, weight_decay e local_hidden usam
    a grade de busca padrão.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"eixo de varredura desconhecido '{axis}' (esperado um de {', '.join(SWEEP_AXES)})")
    if values is None:
        if axis not in SWEEP_GRIDS:
            raise ConfigError(f"eixo {axis} não tem grade padrão; informe os valores")
        values = SWEEP_GRIDS[axis]
    if axis in ("historic_days", "lead_days"):
        budget = min(s.num_snapshots for s in samples)
        for v in values:
            if int(v) < 1 or int(v) > budget:
                raise ConfigError(f"{axis}={v} excede os {budget} snapshots por amostra")
    rows = []
    for v in values:
        cell_cfg = cfg.evolve(**{axis: v})
        result = run_experiment(samples, embeddings, cell_cfg, kind)
        row = {axis: v}
        for key in ("precision", "recall", "f1", "accuracy"):
            row[f"{key}_mean"] = result.mean[key]
            row[f"{key}_std"] = result.std[key]
        rows.append(row)
    return pd.DataFrame(rows)
