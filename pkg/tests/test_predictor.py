import math

import numpy as np
import pytest

from compfeat.encoding import encode_of
from compfeat.errors import DataError, SingleClassError
from compfeat.metrics import score_labels
from compfeat.oracle import make_smooth_synthetic
from compfeat.predictor import (
    LrModel,
    assemble,
    loss_and_grad,
    predict,
    train,
)
from compfeat.propagation import init_marginal, run_comp

from test_propagation import observed_dataset


class TestAssemble:
    def test_hard_mode_one_hot(self):
        ds = observed_dataset([3], 10, seed=0)
        res = run_comp(ds, 0)
        design = assemble(ds, "hard", result=res)
        block = design.values[:, design.blocks["s0"][0]:design.blocks["s0"][1]]
        for i in range(10):
            expected = np.zeros(3)
            expected[res.hard_estimates[i, 0] - 1] = 1.0
            np.testing.assert_array_equal(block[i], expected)

    def test_ord_equals_hard_with_perfect_estimates(self):
        ds = observed_dataset([3, 4], 12, seed=1)
        res = run_comp(ds, 0)
        perfect = type(res)(confidences=res.confidences,
                            hard_estimates=ds.cf_truth,
                            method="proposed", hyperparams={})
        np.testing.assert_array_equal(
            assemble(ds, "ord").values,
            assemble(ds, "hard", result=perfect).values,
        )

    def test_soft_blocks_row_stochastic(self):
        ds = observed_dataset([3, 5], 15, seed=2)
        res = run_comp(ds, 0)
        design = assemble(ds, "soft", result=res)
        for name in ("s0", "s1"):
            start, stop = design.blocks[name]
            np.testing.assert_allclose(design.values[:, start:stop].sum(axis=1), 1.0)

    def test_comp_mode_uses_initial_confidences(self):
        ds = observed_dataset([4], 9, seed=3)
        design = assemble(ds, "comp")
        start, stop = design.blocks["s0"]
        np.testing.assert_array_equal(design.values[:, start:stop],
                                      init_marginal(ds)[0].values)

    def test_column_order_ofs_then_cfs(self):
        ds = observed_dataset([3], 8, seed=4)
        enc = encode_of(ds)
        design = assemble(ds, "comp", enc_of=enc)
        assert design.dim == enc.dim + 3
        assert design.blocks["s0"] == (enc.dim, enc.dim + 3)

    def test_csv_export(self, tmp_path):
        ds = observed_dataset([3], 5, seed=5)
        design = assemble(ds, "comp")
        path = tmp_path / "design.csv"
        design.export_csv(path)
        header = path.read_text().splitlines()[0].split(",")
        assert len(header) == design.dim
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data, design.values)


class TestTrain:
    def test_separable_pair_drives_loss_down(self):
        x = np.array([[-1.0], [1.0]])
        y = np.array([1, 2])
        model = train(x, y, l2=0.0, epochs=500)
        assert model.trace[-1] < 0.01

    def test_heavy_regularization_recovers_prior(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(200, 3))
        y = (rng.uniform(size=200) < 0.75).astype(np.int64) + 1
        model = train(x, y, l2=1e6, epochs=200)
        assert np.abs(model.weights).max() < 1e-4
        probs = predict(model, x)
        prior = np.mean(y == 2)
        np.testing.assert_allclose(probs, prior, atol=1e-3)

    def test_gradient_matches_central_differences(self):
        """Analytic gradient against (f(p+h e_i) - f(p-h e_i)) / 2h."""
        rng = np.random.default_rng(7)
        x = rng.normal(size=(40, 4))
        t = (rng.uniform(size=40) < 0.5).astype(float)
        step = 1e-6
        for _ in range(10):
            params = rng.normal(scale=0.8, size=5)
            _, grad = loss_and_grad(params, x, t, l2=1e-3)
            fd = np.empty_like(grad)
            for i in range(5):
                up, down = params.copy(), params.copy()
                up[i] += step
                down[i] -= step
                fd[i] = (loss_and_grad(up, x, t, 1e-3)[0]
                         - loss_and_grad(down, x, t, 1e-3)[0]) / (2 * step)
            rel = np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-8)
            assert rel <= 1e-6

    def test_loss_trace_non_increasing(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(100, 5))
        y = (x[:, 0] + 0.3 * rng.normal(size=100) > 0).astype(np.int64) + 1
        model = train(x, y, epochs=300)
        diffs = np.diff(model.trace)
        assert diffs.max() <= 1e-9

    def test_instance_order_invariance(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(60, 3))
        y = (x[:, 1] > 0).astype(np.int64) + 1
        model = train(x, y, epochs=100)
        perm = rng.permutation(60)
        shuffled = train(x[perm], y[perm], epochs=100)
        np.testing.assert_allclose(shuffled.weights, model.weights, atol=1e-10)
        assert shuffled.bias == pytest.approx(model.bias, abs=1e-10)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            train(np.zeros((4, 2)), np.ones(4, dtype=np.int64))

    def test_multiclass_rejected(self):
        with pytest.raises(DataError):
            train(np.zeros((3, 2)), np.array([1, 2, 3]))


class TestPredict:
    def test_zero_weights_give_half(self):
        model = LrModel(weights=np.zeros(2), bias=0.0, l2=0.0, trace=(0.0,))
        np.testing.assert_array_equal(predict(model, np.ones((3, 2))), 0.5)

    def test_large_bias_saturates(self):
        model = LrModel(weights=np.zeros(1), bias=50.0, l2=0.0, trace=(0.0,))
        assert predict(model, np.zeros((1, 1)))[0] == pytest.approx(1.0)

    def test_matches_hand_computation(self):
        model = LrModel(weights=np.array([0.5, -1.0]), bias=0.25, l2=0.0, trace=(0.0,))
        x = np.array([[2.0, 1.0]])
        z = 0.5 * 2.0 - 1.0 * 1.0 + 0.25
        assert predict(model, x)[0] == pytest.approx(1.0 / (1.0 + math.exp(-z)))

    def test_model_json_round_trip(self, tmp_path):
        model = LrModel(weights=np.array([1.0, 2.0]), bias=-0.5, l2=1e-4,
                        trace=(1.0, 0.5))
        path = tmp_path / "m.json"
        model.save(path)
        loaded = LrModel.load(path)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        assert loaded.bias == model.bias and loaded.trace == model.trace


class TestDirectionalSanity:
    def test_true_values_beat_uniform_baseline_inputs(self):
        """Macro-F1 with true CF values at least matches the baseline
        representation on smoothly generated data."""
        ord_scores, comp_scores = [], []
        for seed in range(3):
            ds, _ = make_smooth_synthetic(400, [3, 4], n_of=3,
                                          roughness=0.5, seed=seed)
            half = ds.n // 2
            train_idx = np.arange(half)
            test_idx = np.arange(half, ds.n)
            for mode, sink in (("ord", ord_scores), ("comp", comp_scores)):
                design = assemble(ds, mode)
                model = train(design.values[train_idx], ds.labels[train_idx])
                probs = predict(model, design.values[test_idx])
                sink.append(score_labels(probs, ds.labels[test_idx]))
        assert np.mean(ord_scores) >= np.mean(comp_scores)
