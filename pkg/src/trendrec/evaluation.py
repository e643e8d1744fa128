"""Time-dependent ranking evaluation and analysis exports.

Per-user AUC counts, for the held-out positive at its own timestamp,
the fraction of items outside the user's entire feedback set that
score strictly below it; ties count as failures. The report averages
per user, then over users. Cold mode restricts the average to users
whose held-out item has fewer than ``cold_threshold`` training
occurrences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import cold_items
from .errors import UnsupportedVariantError, ValidationError
from .model import VARIANTS, Model, ModelParams, build_score_table

_CHUNK = 256


@dataclass
class EvalReport:
    mode: str                 # "all" or "cold"
    target: str               # "test" or "validation"
    auc: float
    per_user_auc: np.ndarray  # (num_users,), NaN where a user is outside the mode or had no pairs
    num_users_evaluated: int
    num_users_excluded: int   # users with no eligible ranking pairs
    num_cold_items: int       # held-out positives that are cold, regardless of mode
    variant: str
    num_epochs: int


def pair_counts(scores, pos_item, excluded_items):
    """(wins, total) for one user: strict wins of the positive over eligible items.

    ``excluded_items`` are the user's own feedback items (including the
    positive itself); everything else is an eligible negative.
    """
    pos = scores[pos_item]
    wins = int(np.count_nonzero(scores < pos))
    wins -= int(np.count_nonzero(scores[excluded_items] < pos))
    total = len(scores) - len(excluded_items)
    return wins, total


def _heldout(split, target):
    if target == "test":
        return split.test_items, split.test_times
    if target == "validation":
        return split.val_items, split.val_times
    raise ValidationError(f"unknown target {target!r}")


def _mode_users(split, target, mode, cold_threshold):
    """Users included in the average, and the overall cold-positive count."""
    items, _ = _heldout(split, target)
    cold = np.zeros(split.num_items, dtype=bool)
    cold[cold_items(split, cold_threshold)] = True
    is_cold = cold[items]
    if mode == "all":
        users = np.arange(split.num_users)
    elif mode == "cold":
        users = np.flatnonzero(is_cold)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return users, int(np.count_nonzero(is_cold))


def _user_theta(model, user, t):
    if model.params.variant.use_visual:
        return model.user_visual_factors(user, t)
    return np.zeros(0, dtype=np.float64)


def _excluded(split, user):
    return np.concatenate([split.train_items[user],
                           [split.val_items[user], split.test_items[user]]])


def _finish(split, target, mode, cold_threshold, per_user, model, seg):
    users, num_cold = _mode_users(split, target, mode, cold_threshold)
    vals = per_user[users]
    evaluated = vals[~np.isnan(vals)]
    masked = np.full(split.num_users, np.nan)
    masked[users] = per_user[users]
    return EvalReport(
        mode=mode,
        target=target,
        auc=float(np.mean(evaluated)) if len(evaluated) else float("nan"),
        per_user_auc=masked,
        num_users_evaluated=int(len(evaluated)),
        num_users_excluded=int(len(users) - len(evaluated)),
        num_cold_items=num_cold,
        variant=model.params.label,
        num_epochs=seg.num_epochs,
    )


def auc(model, seg, split, mode="all", target="test", cold_threshold=5):
    """Exact AUC over every eligible negative, per user then averaged."""
    items, times = _heldout(split, target)
    eps = np.asarray(seg.epoch_of(times))
    table = build_score_table(model)
    p = model.params
    per_user = np.full(split.num_users, np.nan)

    for e in np.unique(eps):
        users_e = np.flatnonzero(eps == e)
        for lo in range(0, len(users_e), _CHUNK):
            chunk = users_e[lo:lo + _CHUNK]
            block = np.repeat(table.base[e][None, :], len(chunk), axis=0)
            block += (p.global_offset.astype(np.float64)
                      + p.user_bias[chunk].astype(np.float64))[:, None]
            if p.latent_dims:
                block += p.user_factors[chunk].astype(np.float64) @ table.gamma_items.T
            if p.variant.use_visual:
                thetas = np.stack([_user_theta(model, int(u), int(times[u])) for u in chunk])
                block += thetas @ table.theta_items[e].T
            for row, u in enumerate(chunk):
                wins, total = pair_counts(block[row], int(items[u]), _excluded(split, int(u)))
                if total > 0:
                    per_user[u] = wins / total
    return _finish(split, target, mode, cold_threshold, per_user, model, seg)


def auc_sampled(model, seg, split, negatives_per_user, rng, mode="all", target="test",
                cold_threshold=5):
    """Unbiased AUC estimate from sampled eligible negatives.

    Users whose eligible set is no larger than the request are scored
    exactly over the whole set.
    """
    if negatives_per_user < 1:
        raise ValidationError("negatives_per_user must be >= 1")
    items, times = _heldout(split, target)
    eps = np.asarray(seg.epoch_of(times))
    table = build_score_table(model)
    p = model.params
    per_user = np.full(split.num_users, np.nan)

    for u in range(split.num_users):
        excluded = _excluded(split, u)
        n_eligible = split.num_items - len(excluded)
        if n_eligible <= 0:
            continue
        e = int(eps[u])
        if negatives_per_user >= n_eligible:
            mask = np.ones(split.num_items, dtype=bool)
            mask[excluded] = False
            negs = np.flatnonzero(mask)
        else:
            negs = rng.integers(0, split.num_items, size=negatives_per_user, dtype=np.int64)
            bad = np.flatnonzero(split.in_any(np.full(len(negs), u, dtype=np.int64), negs))
            while len(bad):
                negs[bad] = rng.integers(0, split.num_items, size=len(bad), dtype=np.int64)
                bad = bad[split.in_any(np.full(len(bad), u, dtype=np.int64), negs[bad])]
        cols = np.concatenate([[items[u]], negs])
        scores = table.base[e][cols].copy()
        if p.latent_dims:
            scores += table.gamma_items[cols] @ p.user_factors[u].astype(np.float64)
        if p.variant.use_visual:
            scores += table.theta_items[e][cols] @ _user_theta(model, u, int(times[u]))
        per_user[u] = float(np.count_nonzero(scores[1:] < scores[0])) / len(negs)
    return _finish(split, target, mode, cold_threshold, per_user, model, seg)


def pop_scores(split):
    """Training popularity of each item, the baseline ranking score."""
    return split.item_train_counts().astype(np.float64)


def pop_params(split):
    """Item-bias-only parameters ranking by popularity; shares the evaluation path."""
    zeros = lambda *shape: np.zeros(shape, dtype=np.float32)
    counts = pop_scores(split)
    return ModelParams(
        variant=VARIANTS["pop"],
        num_epochs=1,
        label="pop",
        global_offset=np.zeros((), dtype=np.float32),
        user_bias=zeros(split.num_users),
        user_factors=zeros(split.num_users, 0),
        item_factors=zeros(split.num_items, 0),
        visual_user_factors=zeros(split.num_users, 0),
        embedding=zeros(0, 0),
        visual_bias=zeros(0),
        embedding_drift=zeros(0, 0, 0),
        dim_weights=zeros(0, 0),
        visual_bias_weights=zeros(0, 0),
        visual_bias_drift=zeros(0, 0),
        item_bias=counts[None, :].astype(np.float32),
        category_bias=zeros(1, 0),
        drift_directions=zeros(split.num_users, 0),
        user_mean_time=np.zeros(split.num_users, dtype=np.float64),
    )


def pop_model(split):
    return Model(pop_params(split))


def mean_user_visual_factor(params):
    if not params.variant.use_visual:
        raise UnsupportedVariantError("visual scores need a visual variant")
    return params.visual_user_factors.astype(np.float64).mean(axis=0)


def visual_score(model, item, ep):
    """Population-average visual appeal of an item in an epoch.

    The average over users of their visual interaction with the item,
    computed exactly through the mean user factor, plus the item's
    visual bias.
    """
    theta_mean = mean_user_visual_factor(model.params)
    return float(theta_mean @ model.item_visual_factors(item, ep)) + model.visual_bias(item, ep)


def visual_scores(model, items, ep):
    """Vectorized visual_score over an item array."""
    p = model.params
    theta_mean = mean_user_visual_factor(p)
    p.check_epoch(ep)
    feats = model.features.matrix()[np.asarray(items)]
    base = feats @ np.ascontiguousarray(p.embedding.T, dtype=np.float64)
    if p.variant.use_temporal_visual:
        theta_items = (base * p.dim_weights[ep].astype(np.float64)
                       + feats @ np.ascontiguousarray(p.embedding_drift[ep].T, dtype=np.float64))
        bias_vec = (p.visual_bias.astype(np.float64)
                    * p.visual_bias_weights[ep].astype(np.float64)
                    + p.visual_bias_drift[ep].astype(np.float64))
    else:
        theta_items = base
        bias_vec = p.visual_bias.astype(np.float64)
    return theta_items @ theta_mean + feats @ bias_vec


def normalized_visual_scores(model, items, ep):
    """Visual scores centered over the given item set (sums to zero)."""
    items = np.asarray(items)
    if len(items) == 0:
        raise ValidationError("cannot normalize over an empty item set")
    scores = visual_scores(model, items, ep)
    return scores - scores.mean()


def top_items_per_dimension(model, dim, count, items=None):
    """Items with maximal base-embedding response on one style dimension.

    Ties break toward the lower item index. Returns (items, scores)
    sorted by descending score.
    """
    p = model.params
    if not p.variant.use_visual:
        raise UnsupportedVariantError("dimension rankings need a visual variant")
    if not 0 <= dim < p.visual_dims:
        raise ValidationError(f"dimension {dim} out of range [0, {p.visual_dims})")
    items = np.arange(p.num_items) if items is None else np.asarray(items)
    scores = model.features.matrix()[items] @ p.embedding[dim].astype(np.float64)
    order = np.lexsort((items, -scores))[:count]
    return items[order], scores[order]


def style_vectors(model, items=None):
    """Stationary style-space positions (base embedding of the features)."""
    p = model.params
    if not p.variant.use_visual:
        raise UnsupportedVariantError("style vectors need a visual variant")
    items = np.arange(p.num_items) if items is None else np.asarray(items)
    return model.features.matrix()[items] @ np.ascontiguousarray(p.embedding.T, dtype=np.float64)


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"mode\t{report.mode}\n")
        fh.write(f"target\t{report.target}\n")
        fh.write(f"variant\t{report.variant}\n")
        fh.write(f"num_epochs\t{report.num_epochs}\n")
        fh.write(f"auc\t{report.auc:.6f}\n")
        fh.write(f"num_users_evaluated\t{report.num_users_evaluated}\n")
        fh.write(f"num_users_excluded\t{report.num_users_excluded}\n")
        fh.write(f"num_cold_items\t{report.num_cold_items}\n")


def write_per_user_csv(report, user_ids, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "auc"])
        for u, val in enumerate(report.per_user_auc):
            if not np.isnan(val):
                writer.writerow([user_ids[u], f"{val:.6f}"])


def write_heatmap_csv(model, item_ids, path, items=None):
    """Per-epoch normalized visual scores: item_id,epoch,normalized_score."""
    items = np.arange(model.params.num_items) if items is None else np.asarray(items)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "epoch", "normalized_score"])
        for ep in range(model.params.num_epochs):
            scores = normalized_visual_scores(model, items, ep)
            for item, s in zip(items, scores):
                writer.writerow([item_ids[item], ep, f"{s:.6f}"])


def write_dimension_csv(model, item_ids, path, top_n=10, items=None):
    """Top-ranked items per style dimension: dimension,rank,item_id,score."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "rank", "item_id", "score"])
        for dim in range(model.params.visual_dims):
            top, scores = top_items_per_dimension(model, dim, top_n, items=items)
            for rank, (item, s) in enumerate(zip(top, scores), start=1):
                writer.writerow([dim, rank, item_ids[item], f"{s:.6f}"])


def write_weight_csv(params, path):
    """Per-epoch style-dimension weight trajectories: dimension,epoch,weight."""
    if not params.variant.use_temporal_visual:
        raise UnsupportedVariantError("weight trajectories need a temporally-visual variant")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "epoch", "weight"])
        for dim in range(params.visual_dims):
            for ep in range(params.num_epochs):
                writer.writerow([dim, ep, f"{float(params.dim_weights[ep, dim]):.6f}"])


def write_style_csv(model, item_ids, path, items=None):
    """Stationary style vectors, one row per item."""
    items = np.arange(model.params.num_items) if items is None else np.asarray(items)
    vecs = style_vectors(model, items)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id"] + [f"s{k}" for k in range(vecs.shape[1])])
        for item, row in zip(items, vecs):
            writer.writerow([item_ids[item]] + [f"{v:.6f}" for v in row])
