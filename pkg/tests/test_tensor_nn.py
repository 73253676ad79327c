"""TCL 网络: 结构、梯度（有限差分校验）、训练"""

import numpy as np
import pytest
import torch

from core.errors import TensorShapeError
from core.numerics import RandomSource
from core.tensor_core import vectorize
from core.tensor_nn import (NnSettings, TclNetwork, accuracy, build_network, fit_network,
                            tnn_forward, tnn_gradient, tnn_logits, tnn_loss)


def _toy(n, shape, rng, shift=1.5):
    """两类: class 1 在第一个元素上平移"""
    X = rng.standard_normal((n,) + shape)
    y = (np.arange(n) % 2).astype(np.float64)
    X[:, 0, 0] += shift * (2 * y - 1)
    return X, y


class TestStructure:

    def test_parameter_count(self):
        net = TclNetwork((5, 4, 3), [(2, 3, 2)], hidden=7)
        expected = (2 * 5 + 3 * 4 + 2 * 3) + 12 * 7 + 7 + 7 + 1
        assert net.parameter_count() == expected

    def test_default_ranks_capped(self):
        ranks = NnSettings().resolve_ranks((15, 15, 3))
        assert ranks == [(8, 8, 3)]

    def test_identity_contraction_is_mlp(self, np_rng):
        shape = (3, 2, 2)
        net = build_network(shape, NnSettings(tcl_ranks=[shape], hidden=5), RandomSource(1))
        with torch.no_grad():
            for V, d in zip(net.contractions, shape):
                V.copy_(torch.eye(d, dtype=torch.float64))
        X = np_rng.standard_normal((4,) + shape)
        W1 = net.hidden.weight.detach().numpy()
        b1 = net.hidden.bias.detach().numpy()
        W2 = net.output.weight.detach().numpy()
        b2 = net.output.bias.detach().numpy()
        expected = [(W2 @ np.maximum(W1 @ vectorize(x) + b1, 0) + b2).item() for x in X]
        np.testing.assert_allclose(tnn_logits(net, X), expected, atol=1e-12)

    def test_forward_range_and_single_input(self, np_rng):
        net = build_network((3, 4), NnSettings(hidden=4), RandomSource(2))
        X = np_rng.standard_normal((6, 3, 4))
        probs = tnn_forward(net, X)
        assert probs.shape == (6,)
        assert np.all((probs > 0) & (probs < 1))
        assert tnn_forward(net, X[2]) == pytest.approx(probs[2], abs=1e-15)

    def test_shape_mismatch(self, np_rng):
        net = build_network((3, 4), NnSettings(hidden=4), RandomSource(2))
        with pytest.raises(TensorShapeError):
            tnn_forward(net, np_rng.standard_normal((2, 4, 3)))

    def test_stacked_layers(self, np_rng):
        net = build_network((6, 5), NnSettings(tcl_ranks=[(4, 4), (2, 3)], hidden=4), RandomSource(3))
        assert net.core_dims == (2, 3)
        assert tnn_logits(net, np_rng.standard_normal((3, 6, 5))).shape == (3,)

    def test_bad_settings(self):
        with pytest.raises(ValueError):
            NnSettings(hidden=0)
        with pytest.raises(ValueError):
            NnSettings(link="probit")


class TestGradient:

    def test_matches_finite_differences(self, np_rng):
        shape = (3, 4, 2)
        net = build_network(shape, NnSettings(tcl_ranks=[(2, 3, 2)], hidden=4), RandomSource(5))
        X, y = _toy(8, shape, np_rng)
        grads = tnn_gradient(net, X, y)
        h = 1e-6
        params = dict(net.named_parameters())
        for name, p in params.items():
            flat = p.data.view(-1)
            for i in range(0, flat.numel(), max(1, flat.numel() // 5)):
                original = flat[i].item()
                with torch.no_grad():
                    flat[i] = original + h
                    up = tnn_loss(net, X, y).item()
                    flat[i] = original - h
                    down = tnn_loss(net, X, y).item()
                    flat[i] = original
                numeric = (up - down) / (2 * h)
                assert grads[name].reshape(-1)[i] == pytest.approx(numeric, rel=1e-5, abs=1e-7)

    def test_tcl_gradients_present(self, np_rng):
        net = build_network((3, 4), NnSettings(hidden=4), RandomSource(6))
        X, y = _toy(6, (3, 4), np_rng)
        grads = tnn_gradient(net, X, y)
        assert {"contractions.0", "contractions.1"} <= set(grads)
        assert grads["contractions.0"].shape == (3, 3)


class TestTraining:

    def test_learns_separable_problem(self, np_rng):
        X, y = _toy(400, (4, 3), np_rng, shift=3.0)
        Xv, yv = _toy(100, (4, 3), np_rng, shift=3.0)
        settings = NnSettings(hidden=8, epochs=15, batch=32, rate=0.01)
        result = fit_network(X, y, Xv, yv, settings, RandomSource(8))
        assert 1 <= result.best_epoch <= 15
        assert len(result.val_accuracy) == 15
        assert max(result.val_accuracy) == result.val_accuracy[result.best_epoch - 1]
        assert result.val_accuracy.index(max(result.val_accuracy)) == result.best_epoch - 1
        assert accuracy(result.network, Xv, yv) == pytest.approx(max(result.val_accuracy))
        assert max(result.val_accuracy) > 0.9

    def test_deterministic(self, np_rng):
        X, y = _toy(60, (3, 3), np_rng)
        settings = NnSettings(hidden=4, epochs=3, batch=16)
        a = fit_network(X, y, X[:20], y[:20], settings, RandomSource(4))
        b = fit_network(X, y, X[:20], y[:20], settings, RandomSource(4))
        np.testing.assert_array_equal(tnn_logits(a.network, X), tnn_logits(b.network, X))

    def test_empty_validation(self, np_rng):
        X, y = _toy(10, (2, 2), np_rng)
        with pytest.raises(ValueError):
            fit_network(X, y, X[:0], y[:0], NnSettings(epochs=1), RandomSource(1))
