"""Desk-scale dataset generator with planted visual structure.

Items get sparse non-negative feature vectors; a hidden embedding maps
them into a low-dimensional style space; users carry Gaussian taste
vectors. The timeline is cut by planted boundaries, each segment
owning its own style-dimension weighting. At a uniformly drawn event
time, the user picks an item by softmax over

    <taste_u, (E_true f_i) * weights(segment(t))>

at the configured noise temperature (infinite temperature degenerates
to uniform choice). Choices are drawn without replacement per user, so
the resulting log satisfies the loader's invariants directly, and the
ground truth comes back for assertions.

The softmax choice model is deliberately not the trainer's own
pairwise likelihood, so recovery tests do not test the model against
literally its own generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import InteractionLog, Taxonomy
from .errors import ValidationError
from .features import FeatureStore

TRUTH_FORMAT = "trendrec-synth-truth-v1"


@dataclass
class SynthConfig:
    num_users: int = 200
    num_items: int = 500
    num_events: int = 4000
    feature_dim: int = 64
    true_visual_dims: int = 4
    epoch_boundaries: tuple = ()        # interior timestamps, ascending
    t_start: int = 0
    t_end: int = 30_000_000
    feature_density: float = 0.05
    num_categories: int = 6
    temperature: float = 1.0            # math.inf for pure noise
    taste_mean_scale: float = 1.5       # shared taste component, drives popularity skew
    taste_scale: float = 1.0            # per-user taste spread
    true_weights: np.ndarray = None     # (num_segments, true_visual_dims), optional
    true_embedding: np.ndarray = None   # (true_visual_dims, feature_dim), optional
    seed: int = 0

    @property
    def num_segments(self):
        return len(self.epoch_boundaries) + 1

    def validate(self):
        if self.num_events < 5 * self.num_users:
            raise ValidationError(
                f"{self.num_events} events cannot give {self.num_users} users >= 5 each")
        if self.num_events > self.num_users * self.num_items:
            raise ValidationError("more events than distinct (user, item) pairs")
        if self.true_visual_dims > self.feature_dim:
            raise ValidationError("true_visual_dims must be <= feature_dim")
        if not 0 < self.feature_density <= 1:
            raise ValidationError("feature_density must be in (0, 1]")
        if self.t_end <= self.t_start:
            raise ValidationError("t_end must be > t_start")
        bounds = list(self.epoch_boundaries)
        if bounds != sorted(bounds) or len(set(bounds)) != len(bounds):
            raise ValidationError("epoch boundaries must be strictly ascending")
        if bounds and (bounds[0] <= self.t_start or bounds[-1] >= self.t_end):
            raise ValidationError("epoch boundaries must lie strictly inside the timeline")
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive (or inf)")
        if self.num_categories < 1:
            raise ValidationError("num_categories must be >= 1")
        if self.true_weights is not None:
            expect = (self.num_segments, self.true_visual_dims)
            if np.shape(self.true_weights) != expect:
                raise ValidationError(f"true_weights must have shape {expect}")
        if self.true_embedding is not None:
            expect = (self.true_visual_dims, self.feature_dim)
            if np.shape(self.true_embedding) != expect:
                raise ValidationError(f"true_embedding must have shape {expect}")


@dataclass
class SynthTruth:
    """Planted quantities, aligned to the generated log's item indices."""

    embedding: np.ndarray       # (K'_true, F)
    weights: np.ndarray         # (num_segments, K'_true)
    boundaries: tuple           # interior timestamps
    user_factors: np.ndarray    # (num_users, K'_true), log user order
    style: np.ndarray           # (num_log_items, K'_true) = embedding @ f_i, log item order
    taste_mean: np.ndarray      # (K'_true,)
    temperature: float
    config: SynthConfig = field(repr=False, default=None)

    def segment_of(self, t):
        return int(np.searchsorted(np.asarray(self.boundaries), t, side="right"))

    def user_scores(self, user, t):
        """Planted utility of every log item for a user at time t."""
        w = self.weights[self.segment_of(t)]
        return self.style @ (w * self.user_factors[user])


def _kmeans_labels(points, k, rng, iters=15):
    """Plain Lloyd's iterations, deterministic under the given rng."""
    n = len(points)
    k = min(k, n)
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                centers[c] = points[int(rng.integers(0, n))]
    return labels


def generate(config):
    """Build (InteractionLog, FeatureStore, Taxonomy, SynthTruth) from a config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_items = config.num_items
    n_users = config.num_users
    f_dim = config.feature_dim
    k_true = config.true_visual_dims

    # sparse non-negative features
    indptr = [0]
    all_idx, all_val = [], []
    for _ in range(n_items):
        nnz = max(1, int(rng.binomial(f_dim, config.feature_density)))
        idx = np.sort(rng.choice(f_dim, size=nnz, replace=False)).astype(np.int32)
        val = rng.exponential(1.0, size=nnz).astype(np.float32)
        all_idx.append(idx)
        all_val.append(val)
        indptr.append(indptr[-1] + nnz)
    gen_store = FeatureStore(
        dim=f_dim,
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.concatenate(all_idx),
        values=np.concatenate(all_val),
    )
    dense = gen_store.matrix().toarray()

    # hidden embedding, scaled so each style dimension has unit spread
    embedding = (np.asarray(config.true_embedding, dtype=np.float64)
                 if config.true_embedding is not None
                 else rng.normal(0.0, 1.0, size=(k_true, f_dim)))
    style = dense @ embedding.T
    spread = style.std(axis=0)
    spread[spread == 0] = 1.0
    embedding = embedding / spread[:, None]
    style = style / spread

    weights = (np.asarray(config.true_weights, dtype=np.float64)
               if config.true_weights is not None
               else rng.normal(0.0, 1.0, size=(config.num_segments, k_true)))

    taste_mean = rng.normal(0.0, 1.0, size=k_true)
    taste_mean /= np.linalg.norm(taste_mean)
    user_factors = (config.taste_mean_scale * taste_mean
                    + config.taste_scale * rng.normal(0.0, 1.0, size=(n_users, k_true)))

    labels = _kmeans_labels(dense, config.num_categories, rng)

    # per-user event counts: everyone gets five, the rest spread uniformly
    counts = np.full(n_users, 5, dtype=np.int64)
    counts += rng.multinomial(config.num_events - 5 * n_users, np.full(n_users, 1.0 / n_users))

    boundaries = np.asarray(config.epoch_boundaries, dtype=np.int64)
    users_out, items_out, times_out = [], [], []
    for u in range(n_users):
        n_u = int(counts[u])
        times = rng.integers(config.t_start, config.t_end, size=n_u, endpoint=True)
        segs = np.searchsorted(boundaries, times, side="right")
        if math.isinf(config.temperature):
            utilities = np.zeros((config.num_segments, n_items))
        else:
            utilities = (style @ (weights * user_factors[u]).T).T / config.temperature
        taken = np.zeros(n_items, dtype=bool)
        for t, s in zip(times, segs):
            gumbel = rng.gumbel(0.0, 1.0, size=n_items)
            pick_scores = utilities[s] + gumbel
            pick_scores[taken] = -np.inf
            item = int(np.argmax(pick_scores))
            taken[item] = True
            users_out.append(u)
            items_out.append(item)
            times_out.append(int(t))

    user_ids = [f"u{u:05d}" for u in range(n_users)]
    gen_item_ids = [f"i{i:05d}" for i in range(n_items)]

    # re-index items in first-appearance order, the loader's convention
    item_map = {}
    log_items = []
    for raw in items_out:
        if raw not in item_map:
            item_map[raw] = len(item_map)
        log_items.append(item_map[raw])
    order = sorted(item_map, key=item_map.get)
    log = InteractionLog.from_arrays(
        user_ids=user_ids,
        item_ids=[gen_item_ids[g] for g in order],
        users=users_out,
        items=log_items,
        timestamps=times_out,
    )

    store = FeatureStore.from_rows(
        f_dim, [gen_store.item_vector(g) for g in order])
    category_ids = ["(unknown)"] + [f"c{c:02d}" for c in range(config.num_categories)]
    taxonomy = Taxonomy(
        category_of=np.asarray([labels[g] + 1 for g in order], dtype=np.int32),
        category_ids=category_ids,
    )
    truth = SynthTruth(
        embedding=embedding,
        weights=weights,
        boundaries=tuple(int(b) for b in config.epoch_boundaries),
        user_factors=user_factors,
        style=style[order],
        taste_mean=taste_mean,
        temperature=config.temperature,
        config=config,
    )
    return log, store, taxonomy, truth


def write_truth(truth, path):
    """Versioned JSON sidecar with the planted quantities."""
    payload = {
        "format": TRUTH_FORMAT,
        "boundaries": list(truth.boundaries),
        "temperature": truth.temperature if math.isfinite(truth.temperature) else "inf",
        "weights": truth.weights.tolist(),
        "embedding": truth.embedding.tolist(),
        "taste_mean": truth.taste_mean.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def config_from_dict(d):
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown synth config keys: {sorted(unknown)}")
    if "epoch_boundaries" in d:
        d = dict(d, epoch_boundaries=tuple(d["epoch_boundaries"]))
    return SynthConfig(**d)
