"""Shared builders for tests: small logs, splits, stores, and random models."""

import numpy as np
import pytest

from trendrec.dataset import Split
from trendrec.features import FeatureStore
from trendrec.model import Model, TrainConfig, init_params
from trendrec.segmentation import EpochSegmentation


def random_feature_store(rng, num_items, dim, density=0.2):
    rows = []
    for _ in range(num_items):
        nnz = max(1, rng.binomial(dim, density))
        idx = np.sort(rng.choice(dim, size=nnz, replace=False)).astype(np.int32)
        val = rng.exponential(1.0, size=nnz).astype(np.float32)
        rows.append((idx, val))
    return FeatureStore.from_rows(dim, rows)


def random_split(rng, num_users, num_items, train_per_user=6, t_min=0, t_max=1_000_000):
    """Directly assembled split with random items and times per user."""
    train_items, train_times = [], []
    val_items = np.empty(num_users, dtype=np.int32)
    val_times = np.empty(num_users, dtype=np.int64)
    test_items = np.empty(num_users, dtype=np.int32)
    test_times = np.empty(num_users, dtype=np.int64)
    for u in range(num_users):
        picks = rng.choice(num_items, size=train_per_user + 2, replace=False)
        times = rng.integers(t_min, t_max + 1, size=train_per_user + 2)
        train_items.append(picks[:train_per_user].astype(np.int32))
        train_times.append(times[:train_per_user].astype(np.int64))
        val_items[u], val_times[u] = picks[-2], times[-2]
        test_items[u], test_times[u] = picks[-1], times[-1]
    return Split(
        train_items=train_items, train_times=train_times,
        val_items=val_items, val_times=val_times,
        test_items=test_items, test_times=test_times,
        num_users=num_users, num_items=num_items, t_min=t_min, t_max=t_max,
    )


def make_config(variant="tvbpr+", **kw):
    base = dict(variant=variant, latent_dims=2, visual_dims=2, feature_dim=8,
                num_epochs=3, num_bins=6, iterations=5, check_period=2,
                learning_rate=0.05, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def random_model(rng_seed, variant="tvbpr+", num_users=4, num_items=6, num_categories=3,
                 latent_dims=2, visual_dims=2, feature_dim=8, num_epochs=3,
                 dtype=np.float64, density=0.4):
    """A randomly initialized model over a random feature store and categories."""
    rng = np.random.default_rng(rng_seed)
    config = make_config(variant=variant, latent_dims=latent_dims, visual_dims=visual_dims,
                         feature_dim=feature_dim, num_epochs=num_epochs,
                         num_bins=max(num_epochs, 2))
    params = init_params(config, num_users, num_items, num_categories,
                         seed=int(rng.integers(1 << 30)), dtype=dtype)
    store = random_feature_store(rng, num_items, feature_dim, density=density)
    categories = rng.integers(0, num_categories, size=num_items).astype(np.int32)
    flags = config.flags
    return Model(params,
                 features=store if flags.use_visual else None,
                 categories=categories if flags.use_taxonomy else None)


def trivial_segmentation(t_min=0, t_max=1_000_000, num_bins=6, num_epochs=3):
    return EpochSegmentation.initial(t_min, t_max, num_bins, num_epochs)


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the numba kernels once so timed tests exclude compilation."""
    from trendrec.trainer import run_iteration
    from trendrec.segmentation import build_likelihood_matrix

    rng = np.random.default_rng(0)
    split = random_split(rng, num_users=4, num_items=12, train_per_user=4)
    for variant in ("bpr-mf", "tvbpr+"):
        for dtype in (np.float32, np.float64):
            model = random_model(1, variant=variant, num_users=4, num_items=12, dtype=dtype)
            seg = trivial_segmentation(num_epochs=model.params.num_epochs)
            cfg = make_config(variant=variant)
            run_iteration(model, split, seg, cfg, np.random.default_rng(0))
            build_likelihood_matrix(model, split, seg.bin_edges, model.params.num_epochs,
                                    4, np.random.default_rng(0))
    return True
