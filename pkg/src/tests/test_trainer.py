import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dygcl.autodiff import ParamStore
from dygcl.config import ModelConfig
from dygcl.errors import ConfigError, StructuralError, TrainingDivergedError, UsageError
from dygcl.optim import Adam, EarlyStopping
from dygcl import trainer
from dygcl.trainer import Metrics, split_dataset
from pipeline.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture
def few(tiny_synthetic):
    samples, _, table = tiny_synthetic
    return samples[:12], table


class TestMetrics:
    def test_hand_built_confusion(self):
        m = Metrics.from_counts(tp=3, fp=1, fn=1, tn=5)
        assert m.precision == 0.75
        assert m.recall == 0.75
        assert m.f1 == pytest.approx(0.75)
        assert m.accuracy == 0.8
        assert m.zero_division == []

    def test_zero_division_is_flagged(self):
        m = Metrics.from_predictions([0, 0, 0], [0.1, 0.2, 0.3])
        assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
        assert m.accuracy == 1.0
        assert set(m.zero_division) == {"precision", "recall", "f1"}

    def test_threshold(self):
        m = Metrics.from_predictions([1, 0, 1, 0], [0.5, 0.49, 0.9, 0.7])
        assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 0, 1)


class TestSplit:
    def test_proportions(self, tiny_synthetic):
        samples = tiny_synthetic[0]
        split = split_dataset(samples, seed=0)
        assert (len(split.train), len(split.val), len(split.test)) == (28, 6, 6)
        ids = [s.sample_id for part in split for s in part]
        assert sorted(ids) == sorted(s.sample_id for s in samples)

    def test_seeded(self, tiny_synthetic):
        samples = tiny_synthetic[0]
        a, b = split_dataset(samples, 4), split_dataset(samples, 4)
        assert [s.sample_id for s in a.test] == [s.sample_id for s in b.test]

    def test_too_small(self, tiny_synthetic):
        with pytest.raises(ConfigError):
            split_dataset(tiny_synthetic[0][:9], 0)


class TestOptim:
    def test_zero_gradient_leaves_params(self, rng):
        store = ParamStore()
        w = store.glorot("w", 2, 2, rng)
        before = w.data.copy()
        opt = Adam(store, lr=0.1)
        opt.zero_grad()
        opt.step()
        assert_array_equal(w.data, before)

    def test_first_step_moves_by_learning_rate(self):
        store = ParamStore()
        w = store.add("w", np.array([[1.0, -2.0]]))
        w.grad = np.array([[0.5, -3.0]])
        Adam(store, lr=0.01).step()
        np.testing.assert_allclose(w.data, [[0.99, -1.99]], atol=1e-9)

    def test_weight_decay_pulls_towards_zero(self):
        store = ParamStore()
        w = store.add("w", np.array([[2.0]]))
        Adam(store, lr=0.1, weight_decay=1.0).step()
        assert w.data[0, 0] < 2.0

    def test_early_stopping_after_patience(self):
        stopper = EarlyStopping(patience=50)
        epochs = 0
        for epoch in range(200):
            stopper(1.0, epoch)
            epochs += 1
            if stopper.early_stop:
                break
        assert epochs == 51
        assert stopper.best_epoch == 0

    def test_improvement_resets_counter(self):
        stopper = EarlyStopping(patience=2)
        assert stopper(1.0, 0)
        assert not stopper(1.0, 1)
        assert stopper(0.5, 2)
        assert stopper.counter == 0
        assert not stopper.early_stop

    def test_delta_requires_a_real_improvement(self):
        stopper = EarlyStopping(patience=5, delta=0.1)
        assert stopper(1.0, 0)
        assert not stopper(0.95, 1)
        assert not stopper(0.9, 2)
        assert stopper(0.85, 3)
        assert stopper.best_epoch == 3

    def test_min_delta_reaches_the_stopper(self, few, tiny_config):
        samples, table = few
        split = split_dataset(samples, 0)
        _, history = trainer.train(split, table, tiny_config.evolve(max_epochs=4, patience=1, min_delta=1e6))
        assert len(history.epochs) == 2
        assert history.stopped_early and history.best_epoch == 0

    def test_zero_patience(self):
        stopper = EarlyStopping(patience=0)
        stopper(1.0, 0)
        stopper(2.0, 1)
        assert stopper.early_stop


class TestTrain:
    def test_history_and_determinism(self, tiny_synthetic, tiny_config):
        samples, _, table = tiny_synthetic
        split = split_dataset(samples, 0)
        cfg = tiny_config.evolve(dropout=0.0)
        params, history = trainer.train(split, table, cfg, seed=0)
        assert len(history.epochs) == 5
        assert history.epochs[-1].train_loss < history.epochs[0].train_loss
        _, again = trainer.train(split, table, cfg, seed=0)
        assert again.model_dump() == history.model_dump()
        frame = history.to_frame()
        assert list(frame["epoch"]) == [0, 1, 2, 3, 4]

    def test_frozen_validation_stops_after_patience(self, few, tiny_config):
        samples, table = few
        cfg = tiny_config.evolve(learning_rate=0.0, weight_decay=0.0, max_epochs=200, patience=50)
        best = []
        _, history = trainer.train(split_dataset(samples, 0), table, cfg, on_best=lambda p, e: best.append(e))
        assert len(history.epochs) == 51
        assert history.best_epoch == 0
        assert history.stopped_early
        assert best == [0]

    def test_full_weight_bitwise_matches_supervised_only(self, few, tiny_config):
        samples, table = few
        split = split_dataset(samples, 1)
        p_a, h_a = trainer.train(split, table, tiny_config.evolve(loss_weight=1.0), seed=1)
        p_b, h_b = trainer.train(split, table, tiny_config.evolve(supervised_only=True), seed=1)
        assert [r.train_loss for r in h_a.epochs] == [r.train_loss for r in h_b.epochs]
        assert [r.val_loss for r in h_a.epochs] == [r.val_loss for r in h_b.epochs]
        for (name, a), (_, b) in zip(p_a.items(), p_b.items()):
            assert_array_equal(a.data, b.data, err_msg=name)

    def test_divergence_is_reported(self, few, tiny_config):
        samples, table = few
        cfg = tiny_config.evolve(learning_rate=1e300, batch_size=4, dropout=0.0)
        with pytest.raises(TrainingDivergedError) as err:
            trainer.train(split_dataset(samples, 0), table, cfg)
        assert err.value.epoch == 0

    def test_embedding_dim_mismatch(self, few, tiny_config):
        samples, table = few
        with pytest.raises(ConfigError):
            trainer.train(split_dataset(samples, 0), table[:, :3], tiny_config)

    def test_evaluate_empty_split(self, tiny_config):
        with pytest.raises(UsageError):
            trainer.evaluate(ParamStore(), [], np.zeros((1, 6)), tiny_config)


class TestExperiments:
    def test_single_seed_aggregate_is_the_run(self, few, tiny_config):
        samples, table = few
        result = trainer.run_experiment(samples, table, tiny_config.evolve(max_epochs=2))
        assert result.seeds == [0]
        for key in trainer.METRIC_KEYS:
            assert result.mean[key] == getattr(result.runs[0], key)
            assert result.std[key] == 0.0

    def test_seed_list_is_averaged(self, few, tiny_config):
        samples, table = few
        result = trainer.run_experiment(samples, table, tiny_config.evolve(max_epochs=1, seeds=[0, 1]))
        accs = [r.accuracy for r in result.runs]
        assert result.mean["accuracy"] == pytest.approx(np.mean(accs))
        assert result.std["accuracy"] == pytest.approx(np.std(accs))

    def test_baseline(self, few, tiny_config):
        samples, table = few
        metrics = trainer.baseline_static_gcn(samples, table, tiny_config.evolve(max_epochs=2))
        assert metrics.tp + metrics.fp + metrics.fn + metrics.tn == 1

    def test_sweep_table(self, few, tiny_config):
        samples, table = few
        frame = trainer.sensitivity_sweep(samples, table, tiny_config.evolve(max_epochs=1), "lead_days", [1, 2])
        assert list(frame["lead_days"]) == [1, 2]
        assert {"precision_mean", "recall_mean", "f1_mean", "f1_std"} <= set(frame.columns)

    def test_sweep_rejects_long_windows(self, few, tiny_config):
        samples, table = few
        with pytest.raises(ConfigError):
            trainer.sensitivity_sweep(samples, table, tiny_config, "historic_days", [4])

    def test_sweep_rejects_unknown_axis(self, few, tiny_config):
        samples, table = few
        with pytest.raises(ConfigError):
            trainer.sensitivity_sweep(samples, table, tiny_config, "dropout", [0.1])

    def test_sweep_default_grid(self, few, tiny_config):
        samples, table = few
        frame = trainer.sensitivity_sweep(samples, table, tiny_config.evolve(max_epochs=1), "weight_decay")
        assert list(frame["weight_decay"]) == list(trainer.SWEEP_GRIDS["weight_decay"])
        with pytest.raises(ConfigError):
            trainer.sensitivity_sweep(samples, table, tiny_config, "lead_days")

    def test_unlabeled_samples_can_be_scored(self, few, tiny_config):
        samples, table = few
        params, _ = trainer.train(split_dataset(samples, 0), table, tiny_config.evolve(max_epochs=1))
        unlabeled = [s.with_label(None) for s in samples[:3]]
        outputs = trainer.predict_probabilities(params, unlabeled, table, tiny_config)
        assert [o.loss for o in outputs] == [None, None, None]
        assert all(0.0 < o.prob < 1.0 for o in outputs)
        assert all(len(o.traces) == samples[0].num_snapshots for o in outputs)
        with pytest.raises(StructuralError):
            trainer.evaluate(params, unlabeled, table, tiny_config)


class TestInitialization:
    @pytest.mark.parametrize("seed", range(5))
    def test_one_epoch_at_default_widths(self, tiny_synthetic, seed):
        samples, _, table = tiny_synthetic
        cfg = ModelConfig.build(embedding_dim=table.shape[1], max_epochs=1, batch_size=8)
        params, history = trainer.train(split_dataset(samples, seed), table, cfg, seed=seed)
        assert len(history.epochs) == 1
        assert np.isfinite(history.epochs[0].train_loss)

    @pytest.mark.parametrize("rnn", ["lstm", "gru"])
    def test_contrastive_term_is_reported(self, few, tiny_config, rnn):
        samples, table = few
        cfg = tiny_config.evolve(rnn_kind=rnn, max_epochs=1)
        params, _ = trainer.train(split_dataset(samples, 2), table, cfg, seed=2)
        outputs = trainer.predict_probabilities(params, samples, table, cfg)
        assert all(o.contra is not None and 0.0 <= o.contra <= 2.0 for o in outputs)


@pytest.mark.slow
class TestLearning:
    """Dados sintéticos com precursor plantado: DyGCL aprende e supera a referência estática."""

    def test_planted_precursor(self):
        spec = SyntheticSpec.build(num_nodes=30, num_snapshots=5, embedding_dim=16, edge_prob=0.05,
                                   motif_size=6, num_samples=400, negative_schedule="reversed", seed=11)
        samples, _, table = generate_synthetic(spec)
        cfg = ModelConfig.build(embedding_dim=16, max_epochs=60, patience=15, seeds=[0, 1, 2, 3, 4])
        dygcl = trainer.run_experiment(samples, table, cfg)
        static = trainer.run_experiment(samples, table, cfg, kind="static_gcn")
        assert dygcl.mean["accuracy"] >= 0.90
        assert dygcl.mean["accuracy"] >= static.mean["accuracy"] + 0.05

    def test_contrastive_is_not_worse(self):
        spec = SyntheticSpec.build(num_nodes=30, num_snapshots=5, embedding_dim=16, num_samples=400, seed=12)
        samples, _, table = generate_synthetic(spec)
        cfg = ModelConfig.build(embedding_dim=16, max_epochs=60, patience=15, seeds=[0, 1, 2, 3, 4])
        joint = trainer.run_experiment(samples, table, cfg.evolve(loss_weight=0.5))
        sup = trainer.run_experiment(samples, table, cfg.evolve(loss_weight=1.0))
        assert joint.mean["accuracy"] >= sup.mean["accuracy"] - 0.01
