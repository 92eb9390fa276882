import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dygcl import autodiff as ad
from dygcl.autodiff import ParamStore, Tape, Tensor, backward
from dygcl.config import ModelConfig
from dygcl.errors import ConfigError, NumericError
from dygcl.global_encoder import GlobalEncoderParams, global_forward
from dygcl.graph_core import SemanticFeatures
from dygcl.local_encoder import LocalEncoderParams, local_forward
from dygcl.model import DyGCL, StaticGCN, make_model
from dygcl.objective import (
    PROB_EPS,
    HeadParams,
    contrastive_loss,
    fuse,
    predict,
    supervised_loss,
    total_loss,
)


def zero_head(h: int = 1, mlp: int = 1) -> HeadParams:
    w = 2 * h
    shapes = [(w, w), (1, w), (w, w), (1, w), (2 * w, mlp), (1, mlp), (mlp, 1), (1, 1)]
    return HeadParams(*(Tensor(np.zeros(s)) for s in shapes))


class TestContrastiveLoss:
    @pytest.mark.parametrize("a, b, expected", [([1, 2], [1, 2], 0.0), ([1, 0], [0, 1], 1.0), ([1, 2], [-1, -2], 2.0)])
    def test_examples(self, a, b, expected):
        assert contrastive_loss(Tensor(a), Tensor(b)).item() == pytest.approx(expected, abs=1e-15)

    def test_range_and_scale_invariance(self, rng):
        for _ in range(1000):
            a, b = rng.normal(size=6), rng.normal(size=6)
            value = contrastive_loss(Tensor(a), Tensor(b)).item()
            assert 0.0 <= value <= 2.0
            scaled = contrastive_loss(Tensor(rng.uniform(0.1, 10.0) * a), Tensor(b)).item()
            assert abs(scaled - value) < 1e-12

    def test_zero_norm(self):
        with pytest.raises(NumericError):
            contrastive_loss(Tensor([0.0, 0.0]), Tensor([1.0, 1.0]))

    def test_tiny_view_is_finite(self):
        value = contrastive_loss(Tensor([1e-9, 0.0]), Tensor([1.0, 1.0])).item()
        assert 0.0 <= value <= 2.0


class TestFuseAndPredict:
    def test_zero_params(self, rng):
        z = fuse(Tensor(rng.normal(size=2)), Tensor(rng.normal(size=2)), zero_head())
        assert_array_equal(z.data, np.zeros((1, 4)))
        assert predict(z, zero_head()).item() == 0.5

    def test_identity_weights(self):
        p = zero_head()
        p.W_l.data[...] = np.eye(2)
        p.W_g.data[...] = np.eye(2)
        z_l, z_g = np.array([0.1, -0.2]), np.array([0.05, 0.3])
        assert_allclose(fuse(Tensor(z_l), Tensor(z_g), p).data, np.tanh([np.concatenate([z_l, z_g])]))

    def test_swapping_views(self, rng):
        p = HeadParams.register(ParamStore(), ModelConfig.build(local_hidden=1, mlp_hidden=2), rng)
        swapped = HeadParams(p.W_g, p.b_g, p.W_l, p.b_l, p.mlp_W1, p.mlp_b1, p.mlp_W2, p.mlp_b2)
        z_l, z_g = Tensor(rng.normal(size=2)), Tensor(rng.normal(size=2))
        base = fuse(z_l, z_g, p).data
        assert_allclose(fuse(z_g, z_l, swapped).data, base[:, [2, 3, 0, 1]])

    def test_saturated_logit_is_clamped(self):
        p = zero_head()
        p.mlp_b2.data[...] = 1000.0
        prob = predict(Tensor(np.zeros((1, 4))), p).item()
        assert prob == 1.0 - PROB_EPS

    def test_scalar_mlp_by_hand(self):
        p = zero_head(mlp=1)
        p.mlp_W1.data[...] = 1.0
        p.mlp_W2.data[...] = 1.0
        z = Tensor([[0.1, 0.2, 0.3, 0.4]])
        assert predict(z, p).item() == pytest.approx(1 / (1 + np.exp(-np.tanh(1.0))))


class TestSupervisedLoss:
    def test_examples(self):
        assert supervised_loss(Tensor([[0.5]]), 1).item() == pytest.approx(np.log(2))
        assert supervised_loss(Tensor([[0.5]]), 0).item() == pytest.approx(np.log(2))
        assert supervised_loss(Tensor([[1 - PROB_EPS]]), 1).item() < 1e-6

    def test_batch_mean(self):
        loss = supervised_loss([Tensor([[0.5]]), Tensor([[0.9]])], [1, 1]).item()
        assert loss == pytest.approx((np.log(2) - np.log(0.9)) / 2)

    def test_out_of_range(self):
        with pytest.raises(NumericError):
            supervised_loss(Tensor([[1.0]]), 1)

    def test_monotone_for_positive_label(self):
        values = [supervised_loss(Tensor([[p]]), 1).item() for p in np.linspace(0.05, 0.95, 19)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert min(values) >= 0


class TestTotalLoss:
    def test_examples(self):
        sup, contra = Tensor([[0.6931]]), Tensor([[1.0]])
        assert total_loss(sup, contra, 1.0).item() == 0.6931
        assert total_loss(sup, contra, 0.0).item() == 1.0
        assert total_loss(sup, contra, 0.5).item() == pytest.approx(0.84655)

    @pytest.mark.parametrize("weight", [-0.1, 1.5])
    def test_weight_out_of_range(self, weight):
        with pytest.raises(ConfigError):
            total_loss(Tensor([[1.0]]), Tensor([[1.0]]), weight)

    def test_affine_in_weight(self):
        sup, contra = Tensor([[0.3]]), Tensor([[1.7]])
        values = {w: total_loss(sup, contra, w).item() for w in (0.0, 0.25, 0.5, 1.0)}
        for w, v in values.items():
            assert v == pytest.approx(values[0.0] + w * (values[1.0] - values[0.0]))

    def test_gradient_is_weighted_sum(self, rng):
        w = Tensor(rng.normal(size=(1, 3)), requires_grad=True)
        target = Tensor(rng.normal(size=(1, 3)))

        def grad_of(build):
            w.grad = None
            with Tape() as tape:
                loss = build()
            backward(loss, tape)
            return w.grad.copy()

        sup = lambda: ad.sum_all(ad.mul(w, w))  # noqa: E731
        contra = lambda: contrastive_loss(w, target)  # noqa: E731
        combined = grad_of(lambda: total_loss(sup(), contra(), 0.25))
        assert_allclose(combined, 0.25 * grad_of(sup) + 0.75 * grad_of(contra), atol=1e-14)


class TestModels:
    def test_make_model(self, small_config):
        assert isinstance(make_model("dygcl", small_config, 3), DyGCL)
        assert isinstance(make_model("static_gcn", small_config, 3), StaticGCN)
        with pytest.raises(ConfigError):
            make_model("diffpool", small_config, 3)

    def test_full_weight_matches_supervised_only(self, rng, small_config, small_sample, small_features):
        model = DyGCL(small_config.evolve(loss_weight=1.0), 3)
        params = model.build_params(np.random.default_rng(0))
        sup_only = DyGCL(small_config.evolve(supervised_only=True), 3)
        a = model.sample_loss(small_sample, small_features, params)
        b = sup_only.sample_loss(small_sample, small_features, params)
        assert a.loss.item() == b.loss.item()
        assert b.contra is None

    def test_full_weight_survives_a_zero_global_view(self, small_config, small_sample, small_features):
        params = DyGCL(small_config, 3).build_params(np.random.default_rng(0))
        for name, t in params.items():
            if name.startswith("global.rnn"):
                t.data[...] = 0.0
        full = DyGCL(small_config.evolve(loss_weight=1.0), 3).sample_loss(small_sample, small_features, params)
        sup_only = DyGCL(small_config.evolve(supervised_only=True), 3).sample_loss(small_sample, small_features, params)
        assert full.loss.item() == sup_only.loss.item()
        assert full.contra is None
        with pytest.raises(NumericError):
            DyGCL(small_config, 3).sample_loss(small_sample, small_features, params)

    @pytest.mark.parametrize("seed", range(5))
    def test_global_view_is_not_collapsed_at_init(self, seed, tiny_synthetic):
        samples, _, table = tiny_synthetic
        cfg = ModelConfig.build(embedding_dim=table.shape[1], local_hidden=4, global_hidden=4, mlp_hidden=4)
        model = DyGCL(cfg, samples[0].num_snapshots)
        params = model.build_params(np.random.default_rng(seed))
        glob = GlobalEncoderParams.from_store(params, cfg)
        local = LocalEncoderParams.from_store(params, cfg, samples[0].num_snapshots)
        for s in samples:
            feats = SemanticFeatures.from_embeddings(s, table)
            _, h_l = local_forward(s, feats, local, cfg)
            z_global, _ = global_forward(s, h_l, glob, cfg)
            assert np.linalg.norm(z_global.data) > 1e-3

    def test_unlabeled_sample_has_probability_only(self, small_config, small_sample, small_features):
        for model in (DyGCL(small_config, 3), StaticGCN(small_config, 3)):
            params = model.build_params(np.random.default_rng(0))
            out = model.sample_loss(small_sample.with_label(None), small_features, params)
            assert out.loss is None and out.sup is None
            assert 0.0 < out.prob < 1.0

    def test_end_to_end_gradient(self, small_config, small_sample, small_features):
        model = DyGCL(small_config, 3)
        params = model.build_params(np.random.default_rng(5))
        report = ad.grad_check(lambda p: model.sample_loss(small_sample, small_features, p).loss, params)
        assert report.max_rel_err < 1e-4
        assert set(report.by_module()) == {"local", "global", "head"}

    def test_static_baseline_gradient(self, small_config, small_sample, small_features):
        model = StaticGCN(small_config, 3)
        params = model.build_params(np.random.default_rng(5))
        report = ad.grad_check(lambda p: model.sample_loss(small_sample, small_features, p).loss, params)
        assert report.max_rel_err < 1e-4
        assert isinstance(small_features, SemanticFeatures)
