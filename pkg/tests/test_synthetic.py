"""Generator invariants, determinism, and signal-strength properties."""

import math

import numpy as np
import pytest

from trendrec.dataset import split_leave_one_out
from trendrec.errors import ValidationError
from trendrec.evaluation import auc, pair_counts
from trendrec.model import Model
from trendrec.synthetic import SynthConfig, generate
from trendrec.trainer import coordinate_ascent

from conftest import make_config


def small_config(**kw):
    base = dict(num_users=60, num_items=150, num_events=1500, feature_dim=32,
                true_visual_dims=3, epoch_boundaries=(10_000_000, 20_000_000),
                num_categories=4, temperature=0.8, seed=0)
    base.update(kw)
    return SynthConfig(**base)


class TestInvariants:
    def test_loader_invariants_hold(self):
        log, store, tax, _ = generate(small_config())
        counts = np.bincount(log.users, minlength=log.num_users)
        assert np.all(counts >= 5)
        pairs = set(zip(log.users.tolist(), log.items.tolist()))
        assert len(pairs) == log.num_events
        assert store.num_items == log.num_items
        assert len(tax.category_of) == log.num_items
        assert log.t_min >= 0 and log.t_max <= 30_000_000

    def test_features_sparse_nonnegative(self):
        _, store, _, _ = generate(small_config())
        assert np.all(store.values >= 0)
        assert 0 < store.density < 0.2

    def test_deterministic(self):
        a = generate(small_config())
        b = generate(small_config())
        assert np.array_equal(a[0].users, b[0].users)
        assert np.array_equal(a[0].items, b[0].items)
        assert np.array_equal(a[0].timestamps, b[0].timestamps)
        assert np.array_equal(a[1].values, b[1].values)
        assert np.array_equal(a[2].category_of, b[2].category_of)

    def test_seed_changes_output(self):
        a = generate(small_config())
        b = generate(small_config(seed=1))
        assert not np.array_equal(a[0].items, b[0].items)

    def test_infeasible_event_count(self):
        with pytest.raises(ValidationError, match="events"):
            generate(small_config(num_events=60 * 4))

    def test_bad_boundaries(self):
        with pytest.raises(ValidationError):
            small_config(epoch_boundaries=(20_000_000, 10_000_000)).validate()
        with pytest.raises(ValidationError):
            small_config(epoch_boundaries=(0,)).validate()


def bayes_auc(log, truth, split):
    """AUC of the planted utilities themselves, the ceiling for any model."""
    per_user = []
    for u in range(split.num_users):
        scores = truth.user_scores(u, int(split.test_times[u]))
        excluded = np.concatenate([split.train_items[u],
                                   [split.val_items[u], split.test_items[u]]])
        wins, total = pair_counts(scores, int(split.test_items[u]), excluded)
        per_user.append(wins / total)
    return float(np.mean(per_user))


class TestSignal:
    def test_bayes_auc_monotone_in_temperature(self):
        values = []
        for temp in (0.3, 3.0, math.inf):
            cfg = small_config(temperature=temp, num_users=150, num_items=300,
                               num_events=3500)
            log, _, _, truth = generate(cfg)
            split = split_leave_one_out(log, seed=1)
            values.append(bayes_auc(log, truth, split))
        assert values[0] >= values[1] >= values[2] - 0.02
        assert values[0] > 0.8
        assert abs(values[2] - 0.5) < 0.03

    def test_infinite_temperature_trains_to_chance(self, warm_kernels):
        cfg = small_config(temperature=math.inf, num_users=300, num_items=400,
                           num_events=5000)
        log, store, tax, _ = generate(cfg)
        split = split_leave_one_out(log, seed=2)
        train_cfg = make_config(variant="bpr-mf", latent_dims=4, iterations=5,
                                check_period=10, num_epochs=1, num_bins=1,
                                learning_rate=0.05, seed=3)
        params, seg, _ = coordinate_ascent(split, None, None, train_cfg)
        report = auc(Model(params), seg, split)
        assert abs(report.auc - 0.5) < 0.04

    def test_orthogonal_weights_flip_at_boundary(self):
        # with two planted segments of opposed weightings, the better-fitting
        # segment label must flip exactly at the planted boundary
        weights = np.asarray([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]])
        cfg = small_config(num_users=150, num_items=300, num_events=4000,
                           epoch_boundaries=(15_000_000,), true_weights=weights,
                           temperature=0.3)
        log, _, _, truth = generate(cfg)
        edges = np.linspace(0, 30_000_000, 11)
        bins = np.clip(np.searchsorted(edges, log.timestamps, side="right") - 1, 0, 9)
        for b in range(10):
            mask = bins == b
            if not np.any(mask):
                continue
            util = np.zeros(2)
            for seg_id in range(2):
                w = truth.weights[seg_id]
                vals = [float(truth.style[i] @ (w * truth.user_factors[u]))
                        for u, i in zip(log.users[mask], log.items[mask])]
                util[seg_id] = np.mean(vals)
            preferred = int(np.argmax(util))
            expected = 0 if edges[b] < 15_000_000 else 1
            assert preferred == expected, (b, util)


class TestTruthSidecar:
    def test_roundtrip_file(self, tmp_path):
        from trendrec.synthetic import write_truth
        import json
        _, _, _, truth = generate(small_config())
        write_truth(truth, tmp_path / "truth.json")
        payload = json.loads((tmp_path / "truth.json").read_text())
        assert payload["format"].endswith("v1")
        assert np.allclose(payload["weights"], truth.weights)
        assert payload["boundaries"] == list(truth.boundaries)
