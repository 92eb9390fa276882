"""
cli.py

Ponto de entrada de linha de comando:

    python src/cli.py generate --n 30 --t 5 --samples 200 --seed 7
    python src/cli.py train --dataset out/dataset.jsonl --embeddings out/embeddings.txt
    python src/cli.py eval --model out/model.txt --dataset out/dataset.jsonl --split test
    python src/cli.py gradcheck
    python src/cli.py sweep --axis historic_days --values 1,2,3,4,5 --dataset ...
    python src/cli.py export-pooled --model out/model.txt --dataset ... --sample-id syn007

Códigos de saída: 0 sucesso, 1 falha de execução/numérica, 2 uso/configuração.
"""

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

# Ajuste de path para imports locais
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
if BASE_DIR not in sys.path:
    sys.path.insert(0, BASE_DIR)

from dygcl.config import SEED_ENV, ModelConfig, RunConfig, load_run_config  # noqa: E402
from dygcl.errors import ConfigError, DyGCLError, ParseError, TrainingDivergedError, UsageError  # noqa: E402
from dygcl.autodiff import grad_check  # noqa: E402
from dygcl.graph_core import SemanticFeatures, window_sample  # noqa: E402
from dygcl.model import DyGCL  # noqa: E402
from dygcl import trainer  # noqa: E402
from pipeline.corpus import DEFAULT_WINDOW, STOPWORDS, CorpusDay, Vocabulary, ingest_corpus  # noqa: E402
from pipeline.dataset_io import (  # noqa: E402
    atomic_write_text,
    load_embeddings,
    random_embeddings,
    read_dataset,
    read_model,
    write_dataset,
    write_embeddings,
    write_model,
)
from pipeline.synthetic import SyntheticSpec, generate_synthetic  # noqa: E402

logger = logging.getLogger("dygcl.cli")

# flag da CLI → chave do ModelConfig
MODEL_FLAGS = {
    "embedding_dim": "embedding_dim",
    "hidden": "local_hidden",
    "global_hidden": "global_hidden",
    "mlp_hidden": "mlp_hidden",
    "pool_blocks": "pool_blocks",
    "pool_ratio": "pool_ratio",
    "rnn": "rnn_kind",
    "gnn": "gnn_kind",
    "score_kind": "score_kind",
    "loss_alpha": "loss_weight",
    "supervised_only": "supervised_only",
    "lr": "learning_rate",
    "weight_decay": "weight_decay",
    "dropout": "dropout",
    "batch_size": "batch_size",
    "epochs": "max_epochs",
    "patience": "patience",
    "min_delta": "min_delta",
    "historic_days": "historic_days",
    "lead_days": "lead_days",
}


def _sci(x: float) -> str:
    mantissa, exp = f"{x:.0e}".split("e")
    return f"{mantissa}e{int(exp)}"


def boundary(fn):
    """Converte DyGCLError em mensagem no stderr e código de saída."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DyGCLError as e:
            click.echo(f"[Erro] {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


def model_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(path_type=Path), help="Arquivo JSON de configuração."),
        click.option("--dataset", type=click.Path(path_type=Path)),
        click.option("--embeddings", type=click.Path(path_type=Path)),
        click.option("--out-dir", type=click.Path(path_type=Path)),
        click.option("--seed", "seeds", type=int, multiple=True, help="Semente (repetível)."),
        click.option("--embedding-dim", type=int),
        click.option("--hidden", type=int, help="h do encoder local."),
        click.option("--global-hidden", type=int),
        click.option("--mlp-hidden", type=int),
        click.option("--pool-blocks", type=int),
        click.option("--pool-ratio", type=float),
        click.option("--rnn", type=click.Choice(["lstm", "gru"])),
        click.option("--gnn", type=click.Choice(["gcn", "sage", "gat"])),
        click.option("--score-kind", type=click.Choice(["gnn", "projection"])),
        click.option("--loss-alpha", type=float, help="Peso λ da perda supervisionada."),
        click.option("--supervised-only/--with-contrastive", default=None),
        click.option("--lr", type=float),
        click.option("--weight-decay", type=float),
        click.option("--dropout", type=float),
        click.option("--batch-size", type=int),
        click.option("--epochs", type=int),
        click.option("--patience", type=int),
        click.option("--min-delta", type=float, help="Melhora mínima da perda de validação."),
        click.option("--historic-days", type=int),
        click.option("--lead-days", type=int),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _run_config(config_path, dataset, embeddings, out_dir, seeds, **flags) -> RunConfig:
    overrides = {MODEL_FLAGS[k]: v for k, v in flags.items() if k in MODEL_FLAGS}
    overrides.update(dataset=dataset, embeddings=embeddings, out_dir=out_dir)
    if seeds:
        overrides["seeds"] = list(seeds)
    return load_run_config(config_path, overrides)


def _embedding_table(path: Path | None, samples, cfg: ModelConfig) -> np.ndarray:
    if path is not None:
        return load_embeddings(path, cfg.embedding_dim)[1]
    rows = max(int(s.node_vocab_ids.max()) for s in samples) + 1
    logger.warning("sem arquivo de embeddings; usando tabela aleatória semeada (%d × %d)",
                   rows, cfg.embedding_dim)
    return random_embeddings(rows, cfg.embedding_dim, cfg.seeds[0])


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"faltou {flag}")
    return value


def _window_length(samples, cfg: ModelConfig) -> int:
    return window_sample(samples[0], cfg.historic_days, cfg.lead_days).num_snapshots


def _write_json(path: Path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _history_csv(history: trainer.TrainHistory) -> str:
    frame = history.to_frame()[["epoch", "train_loss", "val_loss", "val_acc"]]
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log em nível DEBUG.")
def cli(verbose: bool):
    """Toolkit DyGCL: grafos dinâmicos, treino contrastivo e avaliação."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="[%(levelname)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


# ----------------------------------------------------
# DADOS
# ----------------------------------------------------
@cli.command()
@click.option("--n", "num_nodes", type=int, default=30, show_default=True)
@click.option("--t", "num_snapshots", type=int, default=5, show_default=True)
@click.option("--samples", "num_samples", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=None, help=f"Padrão: ${SEED_ENV} ou 0.")
@click.option("--m", "motif_size", type=int, default=6, show_default=True)
@click.option("--p", "edge_prob", type=float, default=0.05, show_default=True)
@click.option("--d", "embedding_dim", type=int, default=100, show_default=True)
@click.option("--positive-fraction", type=float, default=0.5, show_default=True)
@click.option("--offset", "feature_offset", type=float, default=0.5, show_default=True)
@click.option("--growth", default=None, help="Arestas novas por snapshot, ex.: 0,0,5,5,5.")
@click.option("--negative-schedule", type=click.Choice(["none", "reversed"]), default="none")
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("out"))
@boundary
def generate(seed, growth, out_dir, **spec_values):
    """Gera o conjunto sintético com precursor plantado."""
    if seed is None:
        try:
            seed = int(os.environ.get(SEED_ENV, 0))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} deve ser um inteiro") from None
    if growth is not None:
        try:
            spec_values["motif_growth"] = [int(x) for x in growth.split(",")]
        except ValueError:
            raise ConfigError(f"--growth deve ser uma lista de inteiros separados por vírgula: {growth}") from None
    spec = SyntheticSpec.build(seed=seed, **spec_values)
    samples, vocab, table = generate_synthetic(spec)
    dataset = write_dataset(samples, out_dir / "dataset.jsonl")
    write_embeddings(vocab, table, out_dir / "embeddings.txt")
    _write_json(out_dir / "manifest.json", {
        "seed": seed,
        "spec": spec.model_dump(),
        "num_positive": sum(s.label for s in samples),
        "files": ["dataset.jsonl", "embeddings.txt"],
    })
    click.echo(f"[OK] {len(samples)} amostras salvas em {dataset}")


@cli.command()
@click.option("--corpus", type=click.Path(path_type=Path), required=True, help="JSONL: {id, label, days}.")
@click.option("--window", type=int, default=DEFAULT_WINDOW, show_default=True)
@click.option("--d", "embedding_dim", type=int, default=100, show_default=True)
@click.option("--embeddings", type=click.Path(path_type=Path), default=None, help="Vetores pré-treinados.")
@click.option("--stopwords", is_flag=True, help="Remove palavras vazias.")
@click.option("--min-count", type=int, default=1, show_default=True)
@click.option("--weighted", is_flag=True, help="Arestas com peso = contagem de co-ocorrências.")
@click.option("--missing", type=click.Choice(["skip", "error"]), default="skip", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("out"))
@boundary
def ingest(corpus, window, embedding_dim, embeddings, stopwords, min_count, weighted, missing, seed, out_dir):
    """Constrói grafos de co-ocorrência a partir de um corpus diário."""
    if not corpus.exists():
        raise ParseError(f"arquivo de corpus não encontrado: {corpus}")
    stop = STOPWORDS if stopwords else None
    records = []
    with corpus.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                days = [CorpusDay.from_texts(str(d["date"]), d["docs"], stop) for d in rec["days"]]
                records.append((str(rec["id"]), rec.get("label"), days))
            except json.JSONDecodeError as e:
                raise ParseError(f"JSON malformado ({e.msg})", lineno) from None
            except (KeyError, TypeError) as e:
                raise ParseError(f"registro de corpus inválido: {e}", lineno) from None

    vocab = Vocabulary.from_days((d for _, _, days in records for d in days), min_count=min_count)
    samples = [
        ingest_corpus(days, vocab, window=window, missing=missing, weighted=weighted, sample_id=sid, label=label)
        for sid, label, days in records
    ]
    _, table = load_embeddings(embeddings, embedding_dim, vocab=vocab, seed=seed)
    write_dataset(samples, out_dir / "dataset.jsonl")
    write_embeddings(vocab, table, out_dir / "embeddings.txt")
    click.echo(f"[OK] {len(samples)} amostras, vocabulário de {len(vocab)} palavras")




# ----------------------------------------------------
# TREINO E AVALIAÇÃO
# ----------------------------------------------------
def _train_experiment(samples, table, run: RunConfig, kind: str) -> None:
    """Várias sementes: um treino por semente, histórico por semente e média/desvio no experiment.json."""
    result = trainer.run_experiment(samples, table, run.model, kind)
    for seed, history in zip(result.seeds, result.histories):
        atomic_write_text(run.out_dir / f"history_seed{seed}.csv", _history_csv(history))
    atomic_write_text(run.out_dir / "experiment.json",
                      result.model_dump_json(indent=2, exclude={"histories"}) + "\n")
    click.echo(f"[OK] {kind}, {len(result.seeds)} sementes: "
               f"acc={result.mean['accuracy']:.4f}±{result.std['accuracy']:.4f} "
               f"f1={result.mean['f1']:.4f}±{result.std['f1']:.4f}")


def _inference_config(model_path: Path, config_path, dataset, embeddings, out_dir, seed) -> RunConfig:
    """Do --config só valem caminhos e semente; a arquitetura vem do arquivo do modelo."""
    run = load_run_config(config_path, {
        "dataset": dataset, "embeddings": embeddings, "out_dir": out_dir,
        "seeds": None if seed is None else [seed],
    })
    ignored = run.model.model_fields_set - {"seeds"}
    if ignored:
        logger.warning("chaves de modelo ignoradas (arquitetura de %s): %s", model_path, ", ".join(sorted(ignored)))
    return run


@cli.command()
@model_options
@click.option("--baseline", is_flag=True, help="Treina a referência GCN estática.")
@boundary
def train(baseline, **options):
    """Treina, salva modelo, histórico (CSV) e métricas de teste; com várias --seed, roda o experimento."""
    run = _run_config(**options)
    cfg = run.model
    samples = read_dataset(_require(run.dataset, "--dataset"))
    table = _embedding_table(run.embeddings, samples, cfg)
    kind = "static_gcn" if baseline else "dygcl"
    if len(cfg.seeds) > 1:
        _train_experiment(samples, table, run, kind)
        return
    seed = cfg.seeds[0]
    num_snapshots = _window_length(samples, cfg)
    model_path = run.out_dir / "model.txt"

    def checkpoint(params, epoch):
        write_model(model_path, params, cfg, kind, num_snapshots)

    split = trainer.split_dataset(samples, seed)
    try:
        params, history = trainer.train(split, table, cfg, seed=seed, kind=kind, on_best=checkpoint)
    except TrainingDivergedError:
        if model_path.exists():
            logger.error("treino divergiu; último checkpoint mantido em %s", model_path)
        raise
    metrics = trainer.evaluate(params, split.test, table, cfg, kind)

    write_model(model_path, params, cfg, kind, num_snapshots)
    atomic_write_text(run.out_dir / "history.csv", _history_csv(history))
    atomic_write_text(run.out_dir / "metrics.json", metrics.model_dump_json(indent=2) + "\n")
    click.echo(f"[OK] {kind}: acc={metrics.accuracy:.4f} f1={metrics.f1:.4f} (melhor época {history.best_epoch})")


@cli.command(name="eval")
@click.option("--model", "model_path", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Arquivo JSON (caminhos e semente).")
@click.option("--dataset", type=click.Path(path_type=Path), default=None)
@click.option("--embeddings", type=click.Path(path_type=Path), default=None)
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test", "all"]), default="test",
              show_default=True)
@click.option("--seed", type=int, default=None, help="Semente da divisão (padrão: --config, $DYGCL_SEED ou a do modelo).")
@click.option("--out-dir", type=click.Path(path_type=Path), default=None)
@boundary
def evaluate(model_path, config_path, dataset, embeddings, split_name, seed, out_dir):
    """Recalcula as métricas de um modelo salvo."""
    params, cfg, kind, _ = read_model(model_path)
    run = _inference_config(model_path, config_path, dataset, embeddings, out_dir, seed)
    samples = read_dataset(_require(run.dataset, "--dataset"))
    table = _embedding_table(run.embeddings, samples, cfg)
    if split_name == "all":
        chosen = samples
    else:
        split_seed = run.model.seeds[0] if "seeds" in run.model.model_fields_set else cfg.seeds[0]
        chosen = getattr(trainer.split_dataset(samples, split_seed), split_name)
    metrics = trainer.evaluate(params, chosen, table, cfg, kind)
    atomic_write_text(run.out_dir / f"eval_{split_name}.json", metrics.model_dump_json(indent=2) + "\n")
    click.echo(f"[OK] {split_name}: acc={metrics.accuracy:.4f} precision={metrics.precision:.4f} "
               f"recall={metrics.recall:.4f} f1={metrics.f1:.4f}")


# gradcheck roda num grafo minúsculo; valem quando nem flag nem --config definem a chave
GRADCHECK_DEFAULTS = {
    "embedding_dim": 8, "local_hidden": 4, "global_hidden": 4, "mlp_hidden": 4,
    "pool_blocks": 2, "pool_ratio": 0.5, "loss_weight": 0.5,
}


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Arquivo JSON de configuração.")
@click.option("--n", "num_nodes", type=int, default=6, show_default=True)
@click.option("--t", "num_snapshots", type=int, default=3, show_default=True)
@click.option("--d", "embedding_dim", type=int, help="Padrão: 8.")
@click.option("--hidden", type=int, help="Padrão: 4.")
@click.option("--global-hidden", type=int, help="Padrão: 4.")
@click.option("--pool-blocks", type=int, help="Padrão: 2.")
@click.option("--pool-ratio", type=float, help="Padrão: 0.5.")
@click.option("--rnn", type=click.Choice(["lstm", "gru"]))
@click.option("--gnn", type=click.Choice(["gcn", "sage", "gat"]))
@click.option("--loss-alpha", type=float, help="Padrão: 0.5.")
@click.option("--seed", type=int, default=None, help=f"Padrão: --config, ${SEED_ENV} ou 0.")
@click.option("--tol", type=float, default=1e-4, show_default=True)
@boundary
def gradcheck(config_path, num_nodes, num_snapshots, seed, tol, **flags):
    """Diferenças finitas centrais contra o gradiente analítico da perda total."""
    overrides = {MODEL_FLAGS[k]: v for k, v in flags.items()}
    if seed is not None:
        overrides["seeds"] = [seed]
    model_cfg = load_run_config(config_path, overrides).model
    cfg = model_cfg.evolve(**{k: v for k, v in GRADCHECK_DEFAULTS.items() if k not in model_cfg.model_fields_set})
    seed = cfg.seeds[0]
    spec = SyntheticSpec.build(
        num_nodes=num_nodes, num_snapshots=num_snapshots, embedding_dim=cfg.embedding_dim, edge_prob=0.4,
        motif_size=min(3, num_nodes), num_samples=1, positive_fraction=1.0, seed=seed,
    )
    samples, _, table = generate_synthetic(spec)
    sample = samples[0]
    model = DyGCL(cfg, num_snapshots)
    params = model.build_params(np.random.default_rng(seed))
    features = SemanticFeatures.from_embeddings(sample, table)
    report = grad_check(lambda p: model.sample_loss(sample, features, p).loss, params)

    for module, err in sorted(report.by_module().items()):
        click.echo(f"{module:<8} {err:.3e}")
    if report.max_rel_err >= tol:
        click.echo(f"max_rel_err = {report.max_rel_err:.3e} >= {_sci(tol)}")
        sys.exit(1)
    click.echo(f"max_rel_err < {_sci(tol)} ({report.max_rel_err:.3e})")


@cli.command()
@model_options
@click.option("--axis", type=click.Choice(list(trainer.SWEEP_AXES)), required=True)
@click.option("--values", "raw_values", default=None,
              help="Lista separada por vírgulas, ex.: 1,2,3 (padrão: grade do eixo, se houver).")
@click.option("--baseline", is_flag=True)
@boundary
def sweep(axis, raw_values, baseline, **options):
    """Retreina por valor do eixo e grava a tabela de sensibilidade."""
    run = _run_config(**options)
    values = None
    if raw_values is not None:
        cast = int if axis in ("historic_days", "lead_days", "local_hidden") else float
        try:
            values = [cast(v) for v in raw_values.split(",")]
        except ValueError:
            raise ConfigError(f"--values deve ser uma lista de números separados por vírgula: {raw_values}") from None
    samples = read_dataset(_require(run.dataset, "--dataset"))
    table = _embedding_table(run.embeddings, samples, run.model)
    frame = trainer.sensitivity_sweep(samples, table, run.model, axis, values,
                                      kind="static_gcn" if baseline else "dygcl")
    out = atomic_write_text(run.out_dir / f"sweep_{axis}.csv",
                            frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))
    click.echo(f"[OK] {len(frame)} linhas salvas em {out}")


@cli.command(name="export-pooled")
@click.option("--model", "model_path", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Arquivo JSON (caminhos).")
@click.option("--dataset", type=click.Path(path_type=Path), default=None)
@click.option("--embeddings", type=click.Path(path_type=Path), default=None)
@click.option("--sample-id", required=True)
@click.option("--out-dir", type=click.Path(path_type=Path), default=None)
@boundary
def export_pooled(model_path, config_path, dataset, embeddings, sample_id, out_dir):
    """Grava os grafos de cada bloco de pooling, por snapshot, em índices originais. Aceita amostra sem rótulo."""
    params, cfg, kind, _ = read_model(model_path)
    if kind != "dygcl":
        raise UsageError(f"modelo do tipo '{kind}' não tem blocos de pooling")
    run = _inference_config(model_path, config_path, dataset, embeddings, out_dir, None)
    dataset = _require(run.dataset, "--dataset")
    samples = read_dataset(dataset)
    chosen = [s for s in samples if s.sample_id == sample_id]
    if not chosen:
        raise UsageError(f"amostra '{sample_id}' não encontrada em {dataset}")
    table = _embedding_table(run.embeddings, samples, cfg)
    (output,) = trainer.predict_probabilities(params, chosen, table, cfg, kind)

    written = 0
    for trace in output.traces:
        for level, block in enumerate(trace.blocks, start=1):
            lines = [f"# sample {sample_id} snapshot {trace.snapshot} block {level}"]
            lines += [f"node {int(i)} {s:.17g}" for i, s in zip(block.indices, block.scores)]
            lines += [f"edge {int(block.indices[u])} {int(block.indices[v])}" for u, v in block.adjacency.edges]
            atomic_write_text(run.out_dir / f"sample_{sample_id}_t{trace.snapshot}_block{level}.edges",
                              "\n".join(lines) + "\n")
            written += 1
    click.echo(f"[OK] {written} arquivos de grafos agrupados em {run.out_dir} (p={output.prob:.4f})")


if __name__ == "__main__":
    cli()
