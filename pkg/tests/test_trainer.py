import logging
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from compgcf.config import TrainConfig
from compgcf.data import InteractionDataset, planted_communities, split_validation
from compgcf.embedding import MetaCodebook
from compgcf.trainer import (TrainState, Triplets, adam_step, bpr_loss_and_grad, codebook_gradient,
                             init_state, sample_triplets, train)

from .helpers import random_bpr_instance, fd_codebook_gradient


def small_cfg(**kw):
    base = dict(d=8, c=4, t=2, L=2, lr=1e-2, l2=1e-4, w_star=0.7, epochs_pretrain_max=5,
                epochs_main_max=5, patience=100, batch_size_triplets=512, scalar_width=64, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestSampling:
    def test_complement_only(self):
        data = InteractionDataset(1, 3, np.array([[0, 0]]), np.empty((0, 2)))
        trip = sample_triplets(data, 50, seed=0)
        assert set(trip.neg.tolist()) <= {2, 3}  # entity ids of items 1 and 2
        assert np.all(trip.pos == 1) and np.all(trip.user == 0)

    def test_count(self):
        data = planted_communities(30, 30, 2, p_in=0.3, seed=1)
        assert len(sample_triplets(data, 5, seed=0)) == 5 * len(data.train)

    def test_negatives_never_positive(self):
        data = planted_communities(30, 30, 2, p_in=0.6, seed=2)
        trip = sample_triplets(data, 5, seed=3)
        pos = set(map(tuple, data.train.tolist()))
        assert not any((u, n - 30) in pos for u, n in zip(trip.user, trip.neg))

    def test_uniform_chi_square(self):
        data = InteractionDataset(1, 101, np.array([[0, 100]]), np.empty((0, 2)))
        trip = sample_triplets(data, 100_000, seed=4)
        counts = np.bincount(trip.neg - 1, minlength=101)[:100]
        assert counts.sum() == 100_000
        assert chisquare(counts).pvalue > 0.01

    def test_deterministic_per_seed(self):
        data = planted_communities(20, 20, 2, p_in=0.3, seed=5)
        a, b = sample_triplets(data, 3, [7, 2]), sample_triplets(data, 3, [7, 2])
        c = sample_triplets(data, 3, [7, 3])
        assert np.array_equal(a.neg, b.neg) and not np.array_equal(a.neg, c.neg)

    def test_full_user_skipped(self, caplog):
        data = InteractionDataset(2, 2, np.array([[0, 0], [0, 1], [1, 0]]), np.empty((0, 2)))
        with caplog.at_level(logging.WARNING):
            trip = sample_triplets(data, 4, seed=0)
        assert len(trip) == 4 and np.all(trip.user == 1)
        assert "skipping" in caplog.text


class TestBpr:
    def test_equal_scores_give_ln2(self):
        h = np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]])
        batch = Triplets(np.array([0]), np.array([1]), np.array([2]))
        loss, _, _ = bpr_loss_and_grad(batch, h, h, 0.0)
        assert loss == pytest.approx(math.log(2))

    @pytest.mark.parametrize("scale", [50.0, 800.0])
    def test_limits(self, scale):
        h = np.array([[1.0], [scale], [-scale]])
        batch = Triplets(np.array([0]), np.array([1]), np.array([2]))
        good, _, _ = bpr_loss_and_grad(batch, h, h, 0.0)
        bad, _, _ = bpr_loss_and_grad(Triplets(batch.user, batch.neg, batch.pos), h, h, 0.0)
        assert good == pytest.approx(0.0, abs=1e-20)
        assert bad == pytest.approx(2 * scale)
        assert np.isfinite(good) and np.isfinite(bad)

    def test_gradient_matches_finite_differences(self):
        state, batch, layers, l2 = random_bpr_instance(np.random.default_rng(0), n_users=3, n_items=5,
                                                       c=4, d=4, layers=2, n_trip=6, l2=1e-3)
        _, analytic = codebook_gradient(state, batch, layers, l2)
        numeric = fd_codebook_gradient(state, batch, layers, l2)
        assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-4


class TestAdam:
    def _state(self, w):
        w = np.array(w, dtype=np.float64)
        return TrainState(MetaCodebook(w), None, None, None, np.zeros_like(w), np.zeros_like(w))

    def test_first_step_scalar(self):
        st = self._state([[0.0]])
        adam_step(st, np.array([[1.0]]), lr=0.1)
        assert st.codebook.weights[0, 0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
        assert st.step == 1

    def test_zero_gradient_is_a_no_op(self):
        st = self._state([[1.0, -2.0]])
        for _ in range(10):
            adam_step(st, np.zeros((1, 2)), lr=0.1)
        np.testing.assert_array_equal(st.codebook.weights, [[1.0, -2.0]])

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        grads = [rng.standard_normal((3, 2)) for _ in range(20)]
        runs = []
        for _ in range(2):
            st = self._state(np.ones((3, 2)))
            for g in grads:
                adam_step(st, g, lr=1e-2)
            runs.append(st.codebook.weights.tobytes())
        assert runs[0] == runs[1]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(self._state([[0.0]]), np.zeros((2, 1)), lr=0.1)


class TestTrain:
    data = planted_communities(60, 60, 2, p_in=0.4, p_out=0.02, popularity_skew=1.0, seed=3)

    def test_zero_epochs_returns_initial_state(self):
        cfg = small_cfg(epochs_pretrain_max=0, epochs_main_max=0)
        res = train(self.data, cfg)
        fit, valid = split_validation(self.data, cfg.validation_fraction, cfg.seed)
        init = init_state(InteractionDataset(60, 60, fit, valid), cfg)
        np.testing.assert_array_equal(res.state.codebook.weights, init.codebook.weights)
        assert res.state.assignment == init.assignment
        assert res.log_lines == [] and res.state.step == 0

    def test_pretrain_keeps_assignment_frozen(self):
        cfg = small_cfg(epochs_main_max=0)
        seen = []
        res = train(self.data, cfg, on_log=seen.append)
        fit, valid = split_validation(self.data, cfg.validation_fraction, cfg.seed)
        init = init_state(InteractionDataset(60, 60, fit, valid), cfg)
        assert res.state.assignment == init.assignment
        assert len(seen) == 5 and all(line.split("\t")[1] == "pretrain" for line in seen)
        assert res.update_epochs == []

    @pytest.mark.parametrize("m,expected", [(1, [0, 1, 2, 3, 4, 5, 6]), (3, [0, 3, 6]), (10, [0])])
    def test_update_cadence(self, m, expected):
        res = train(self.data, small_cfg(epochs_pretrain_max=1, epochs_main_max=7, m=m))
        assert res.update_epochs == expected

    def test_nnz_bound_in_log(self):
        res = train(self.data, small_cfg(epochs_pretrain_max=2, epochs_main_max=4))
        n = self.data.num_entities
        for line in res.log_lines:
            assert int(line.split("\t")[7]) <= 2 * n

    def test_reproducible(self):
        cfg = small_cfg(log_wall_time=False)
        assert train(self.data, cfg).log_text == train(self.data, cfg).log_text

    def test_early_stopping(self):
        cfg = small_cfg(epochs_pretrain_max=200, epochs_main_max=0, patience=2, lr=0.05)
        res = train(self.data, cfg)
        assert len(res.log_lines) < 200

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_loss_decreases(self, seed):
        data = planted_communities(200, 200, 4, p_in=0.08, p_out=0.005, popularity_skew=1.0, seed=seed)
        cfg = small_cfg(d=16, c=16, L=3, epochs_pretrain_max=20, epochs_main_max=0, patience=100,
                        batch_size_triplets=2048, seed=seed)
        res = train(data, cfg)
        assert len(res.epoch_losses) == 20
        assert res.epoch_losses[-1] < res.epoch_losses[0]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_planted_blocks_recovered(self, seed):
        # every in-block item is a positive, so after train exclusion the test
        # items are the only in-block candidates left
        data = planted_communities(40, 40, 2, p_in=1.0, p_out=0.0, seed=seed)
        cfg = small_cfg(c=4, t=2, d=8, L=2, epochs_pretrain_max=30, epochs_main_max=10, seed=seed,
                        patience=10)
        assert train(data, cfg).test_metrics["ndcg@10"] > 0.8

    def test_config_checked_against_data(self):
        tiny = InteractionDataset(2, 1, np.array([[0, 0], [1, 0]]), np.empty((0, 2)))
        with pytest.raises(ValueError, match="c=4"):
            train(tiny, small_cfg())

    def test_float32_path(self):
        res = train(self.data, small_cfg(scalar_width=32, epochs_pretrain_max=2, epochs_main_max=2))
        assert res.state.codebook.weights.dtype == np.float32
        assert np.isfinite(res.state.codebook.weights).all()
