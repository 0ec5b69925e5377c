import math

import numpy as np
import pytest

from penn.arch import Penn
from penn.nn import Architecture, Mlp
from penn.training import (
    EarlyStopping,
    LambdaResult,
    Split,
    TrainConfig,
    lambda_sweep,
    magnitude_prune,
    reinitialize_survivors,
    select_lambda,
    train_with_early_stopping,
    warm_train,
)


def linear_split(rng, n=256, slope=3.0):
    x = rng.uniform(-1, 1, size=(n, 1))
    return Split(x, np.ones_like(x), slope * x[:, 0])


def small_penn_builder(d):
    arch = (Architecture([d, 6, 4]), Architecture([d, 4, 2]), Architecture([6, 6, 1]))
    return lambda rng: Penn.init(*arch, rng)


def toy_problem(seed=0, n=300, d=3):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, d))
    om = (rng.random((n, d)) < 0.7).astype(float)
    y = np.sin(2 * x[:, 0]) + om[:, 1] + 0.1 * rng.normal(size=n)
    z = x * om
    return Split(z[:200], om[:200], y[:200]), Split(z[200:], om[200:], y[200:])


class TestWarm:
    def test_zero_epochs(self, rng):
        net = Mlp.init(Architecture([1, 1]), rng)
        out, losses = warm_train(net, linear_split(rng), TrainConfig(warm_epochs=0), rng)
        np.testing.assert_array_equal(out.theta, net.theta)
        assert losses == []

    def test_convex_descent(self):
        rng = np.random.default_rng(0)
        net = Mlp.init(Architecture([1, 1]), rng)
        cfg = TrainConfig(warm_epochs=10, lr=0.01, batch_size=256)
        _, losses = warm_train(net, linear_split(rng), cfg, rng)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_deterministic(self):
        out = []
        for _ in range(2):
            rng = np.random.default_rng(4)
            net = Mlp.init(Architecture([1, 4, 1]), rng)
            out.append(warm_train(net, linear_split(rng), TrainConfig(warm_epochs=3), rng)[0].theta)
        np.testing.assert_array_equal(out[0], out[1])


class TestPrune:
    def test_full_keep(self, rng):
        net = magnitude_prune(Mlp.init(Architecture([3, 4, 1]), rng), 1.0)
        assert net.mask.all()

    def test_hand_example(self):
        net = Mlp.from_layers([[[0.5, -2.0, 0.1, 1.0]]], [[0.3]])
        pruned = magnitude_prune(net, 0.5)
        np.testing.assert_array_equal(pruned.weights[0], [[0.0, -2.0, 0.0, 1.0]])
        assert pruned.biases[0][0] == 0.3
        assert pruned.mask[-1]

    @pytest.mark.parametrize("lam", [0.1, 0.2, 0.4, 0.8, 0.33])
    def test_exact_count(self, lam, rng):
        net = Penn.init(Architecture([5, 7, 3]), Architecture([5, 4, 2]), Architecture([5, 6, 1]), rng)
        pruned = magnitude_prune(net, lam)
        flags = net.weight_flags()
        assert np.count_nonzero(pruned.mask & flags) == math.ceil(lam * flags.sum())
        assert pruned.mask[~flags].all()

    def test_ties_go_to_earlier_index(self):
        net = Mlp.from_layers([[[1.0, 1.0, 1.0]]], [[0.0]])
        np.testing.assert_array_equal(magnitude_prune(net, 0.5).weights[0], [[1.0, 1.0, 0.0]])

    @pytest.mark.parametrize("lam", [0.0, 1.5])
    def test_invalid_lambda(self, lam, rng):
        with pytest.raises(ValueError):
            magnitude_prune(Mlp.init(Architecture([2, 1]), rng), lam)


class TestReinitialize:
    def test_masked_layer_stays_zero(self, rng):
        net = Mlp.init(Architecture([3, 4, 1]), rng)
        mask = np.ones(net.theta.size, bool)
        mask[:12] = False
        out = reinitialize_survivors(net.with_mask(mask), rng)
        np.testing.assert_array_equal(out.weights[0], 0.0)
        np.testing.assert_array_equal(out.mask, mask)

    def test_seeds_change_values_not_support(self, rng):
        pruned = magnitude_prune(Mlp.init(Architecture([3, 4, 1]), rng), 0.4)
        a = reinitialize_survivors(pruned, np.random.default_rng(1))
        b = reinitialize_survivors(pruned, np.random.default_rng(2))
        np.testing.assert_array_equal(a.theta != 0, b.theta != 0)
        assert not np.array_equal(a.theta, b.theta)

    def test_needs_mask(self, rng):
        with pytest.raises(ValueError):
            reinitialize_survivors(Mlp.init(Architecture([2, 1]), rng), rng)


class TestEarlyStopping:
    def test_constant_curve(self):
        stop = EarlyStopping(0.001, 10)
        epoch = next(e for e in range(1, 100) if stop.update(1.0))
        assert epoch == 11

    def test_small_improvements_do_not_count(self):
        stop = EarlyStopping(0.001, 3)
        losses = [1.0, 0.9995, 0.9993, 0.9991]
        assert [stop.update(v) for v in losses] == [False, False, False, True]
        assert stop.lowest_epoch == 4

    def test_max_epochs(self, rng):
        net = magnitude_prune(Mlp.init(Architecture([1, 1]), rng), 1.0)
        data = linear_split(rng)
        cfg = TrainConfig(max_epochs=5, early_stop_patience=10)
        _, stop, tl, vl, _ = train_with_early_stopping(net, data, data, cfg, rng)
        assert stop == 5 and len(vl) == 5 and len(tl) == 5

    def test_returns_best_snapshot(self, rng):
        net = magnitude_prune(Mlp.init(Architecture([1, 3, 1]), rng), 1.0)
        train = linear_split(rng)
        val = linear_split(rng, 64)
        cfg = TrainConfig(max_epochs=40, lr=0.05, batch_size=16)
        best, _, _, vl, best_epoch = train_with_early_stopping(net, train, val, cfg, rng)
        final = np.mean((best.predict(val.z)[:, 0] - val.y) ** 2)
        assert final == pytest.approx(min(vl), rel=1e-12)
        assert vl[best_epoch - 1] == min(vl)


class TestSweep:
    def test_select_argmin(self):
        res = [LambdaResult(lam, [], [], v, 1, 1, 0) for lam, v in [(0.1, 0.5), (0.2, 0.3), (0.4, 0.3), (0.8, 0.9)]]
        assert select_lambda(res).lam == 0.2

    def test_single_lambda_matches_manual(self):
        train, val = toy_problem()
        cfg = TrainConfig(warm_epochs=2, lambda_grid=(1.0,), max_epochs=8, seed=3)
        builder = small_penn_builder(3)
        report = lambda_sweep(builder, train, val, cfg)
        seeds = np.random.SeedSequence(3).spawn(3)
        net = builder(np.random.default_rng(seeds[0]))
        warm, _ = warm_train(net, train, cfg, np.random.default_rng(seeds[1]))
        rng = np.random.default_rng(seeds[2])
        fresh = reinitialize_survivors(magnitude_prune(warm, 1.0), rng)
        manual = train_with_early_stopping(fresh, train, val, cfg, rng)[0]
        np.testing.assert_array_equal(report.selected_network.param_vector(), manual.param_vector())

    def test_grid_and_determinism(self):
        train, val = toy_problem(1)
        cfg = TrainConfig(warm_epochs=2, max_epochs=6, seed=5)
        a = lambda_sweep(small_penn_builder(3), train, val, cfg)
        b = lambda_sweep(small_penn_builder(3), train, val, cfg)
        assert [r.lam for r in a.results] == [0.1, 0.2, 0.4, 0.8]
        assert a.selected.best_val_loss == min(r.best_val_loss for r in a.results)
        assert a.selected_lambda == b.selected_lambda
        np.testing.assert_array_equal(a.selected_network.param_vector(), b.selected_network.param_vector())

    def test_report_serialises(self):
        train, val = toy_problem(2)
        report = lambda_sweep(small_penn_builder(3), train, val, TrainConfig(warm_epochs=1, max_epochs=2,
                                                                              lambda_grid=(0.5,)))
        doc = report.to_dict()
        assert doc["selected_lambda"] == 0.5
        assert report.curves_csv().splitlines()[0].startswith("lambda")


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"lambda_grid": ()}, {"lambda_grid": (0.0,)}, {"early_stop_patience": 0},
        {"batch_size": 0}, {"loss": "hinge"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)
