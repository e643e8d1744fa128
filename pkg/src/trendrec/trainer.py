"""Pairwise ranking training by stochastic gradient ascent.

Each training example is a quadruple (user, positive item, negative
item, timestamp): users uniform, the positive uniform over the user's
training items with its recorded timestamp, the negative uniform over
items outside the user's training set (rejection sampling). One
iteration performs as many updates as there are training positives.

The outer loop alternates parameter fitting with epoch-segmentation
refits and validation checks every ``check_period`` iterations,
returning the parameters from the best validation checkpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import load_taxonomy  # noqa: F401  (re-export convenience)
from .errors import UnsupportedVariantError, ValidationError
from .model import Model, init_params
from .segmentation import EpochSegmentation, build_likelihood_matrix, dp_segment

logger = logging.getLogger(__name__)


@dataclass
class TrainingQuadruple:
    user: int
    pos_item: int
    neg_item: int
    timestamp: int


@dataclass
class TrainerState:
    """Progress bookkeeping for the coordinate-ascent loop."""

    iteration: int = 0
    best_val_auc: float = -np.inf
    checks_since_improvement: int = 0
    rng: np.random.Generator = None


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    val_auc: float    # most recent validation AUC, NaN before the first check


def sample_negatives(split, users, rng, per_row=None):
    """Items outside each user's training set, uniform via rejection.

    ``users`` has one entry per row; with ``per_row`` set, returns a
    (len(users), per_row) matrix instead of a vector.
    """
    shape = len(users) if per_row is None else (len(users), per_row)
    flat_users = np.asarray(users, dtype=np.int64)
    if per_row is not None:
        flat_users = np.repeat(flat_users, per_row)
    out = rng.integers(0, split.num_items, size=shape, dtype=np.int64).reshape(-1)
    bad = np.flatnonzero(split.in_train(flat_users, out))
    while len(bad):
        out[bad] = rng.integers(0, split.num_items, size=len(bad), dtype=np.int64)
        bad = bad[split.in_train(flat_users[bad], out[bad])]
    return out.reshape(shape).astype(np.int32)


def sample_quadruples(split, rng, count):
    """Vectorized draw of training quadruples; returns (u, i, j, t) arrays."""
    lens = np.asarray([len(a) for a in split.train_items], dtype=np.int64)
    if np.any(lens == 0):
        raise ValidationError("every user must have a non-empty training set")
    if split.num_items <= int(lens.max()):
        raise ValidationError("need at least one item outside every training set")
    users = rng.integers(0, split.num_users, size=count, dtype=np.int64)
    picks = rng.integers(0, lens[users])
    indptr = np.concatenate([[0], np.cumsum(lens)])
    flat_items = np.concatenate(split.train_items).astype(np.int64)
    flat_times = np.concatenate(split.train_times)
    pos_items = flat_items[indptr[users] + picks]
    pos_times = flat_times[indptr[users] + picks]
    neg_items = sample_negatives(split, users, rng).astype(np.int64)
    return users, pos_items, neg_items, pos_times


def sample_quadruple(split, rng):
    """One training quadruple, as documented above."""
    u, i, j, t = sample_quadruples(split, rng, 1)
    return TrainingQuadruple(int(u[0]), int(i[0]), int(j[0]), int(t[0]))


def _kernel_args(model):
    p = model.params
    v = p.variant
    if v.use_visual:
        store = model.features
        feat = (store.indptr, store.indices.astype(np.int64), store.values)
    else:
        feat = (np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.float32))
    cats = model.categories.astype(np.int64) if v.use_taxonomy else np.zeros(0, dtype=np.int64)
    return (p.user_factors, p.item_factors, p.visual_user_factors,
            p.embedding, p.visual_bias,
            p.embedding_drift, p.dim_weights, p.visual_bias_weights, p.visual_bias_drift,
            p.item_bias, p.category_bias, cats,
            *feat,
            v.use_visual, v.use_temporal_visual, v.use_temporal_nonvisual, v.use_taxonomy)


def _check_trainable(model):
    p = model.params
    if p.variant.use_personal_drift and np.any(p.drift_directions):
        raise UnsupportedVariantError(
            "training with nonzero personal-drift directions is not supported; "
            "drift directions receive no pairwise gradient and must stay zero")


def sgd_step(model, quad, seg, config):
    """Apply one ranking update in place; see the kernel for the exact rule.

    Only parameters appearing in the sampled pair's score difference
    are touched: the two item biases (and category biases when they
    differ), the user's and both items' factors, and, for visual
    variants, the embedding families of the quadruple's epoch. The
    offset and user bias cancel out of the difference and are left
    alone.
    """
    _check_trainable(model)
    ep = np.asarray([seg.epoch_of(quad.timestamp)], dtype=np.int64)
    _kernels.sgd_kernel(
        np.asarray([quad.user], dtype=np.int64),
        np.asarray([quad.pos_item], dtype=np.int64),
        np.asarray([quad.neg_item], dtype=np.int64),
        ep,
        *_kernel_args(model),
        config.learning_rate, config.lambda_theta, config.lambda_temporal)


def run_iteration(model, split, seg, config, rng):
    """One pass of |P| sampled updates; returns the mean log-sigmoid objective."""
    _check_trainable(model)
    count = split.num_train_pairs
    users, pos, neg, times = sample_quadruples(split, rng, count)
    eps = seg.epoch_of(times).astype(np.int64)
    return float(_kernels.sgd_kernel(
        users, pos, neg, eps,
        *_kernel_args(model),
        config.learning_rate, config.lambda_theta, config.lambda_temporal))


def coordinate_ascent(split, features, taxonomy, config, progress=None, dtype=np.float32):
    """Alternate SGD on the parameters with epoch-segmentation refits.

    Every ``check_period`` iterations the segmentation is refit (when
    there is more than one epoch) and a sampled validation AUC decides
    early stopping and which snapshot to return. Runs are deterministic
    for a fixed seed.
    """
    from .evaluation import auc_sampled

    config.validate()
    if config.variant == "pop":
        raise ValidationError("the popularity baseline has no trainable parameters")
    flags = config.flags
    n_eff = config.effective_epochs()
    num_categories = taxonomy.num_categories if taxonomy is not None else 0
    if flags.use_taxonomy and taxonomy is None:
        raise ValidationError("taxonomy-aware variants need a taxonomy")

    params = init_params(config, split.num_users, split.num_items, num_categories,
                         seed=config.seed, dtype=dtype)
    if flags.use_personal_drift:
        params.user_mean_time = np.asarray(
            [float(np.mean(t)) if len(t) else 0.0 for t in split.train_times])
    model = Model(params,
                  features=features if flags.use_visual else None,
                  categories=taxonomy.category_of if flags.use_taxonomy else None)
    seg = EpochSegmentation.initial(split.t_min, split.t_max, config.num_bins, n_eff)

    train_rng, seg_rng, val_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)]
    state = TrainerState(rng=train_rng)
    history = []
    best_params, best_seg = params.copy(), seg.copy()
    checked = False
    latest_val = float("nan")

    for it in range(1, config.iterations + 1):
        state.iteration = it
        objective = run_iteration(model, split, seg, config, train_rng)
        stop = False
        if it % config.check_period == 0 or it == config.iterations:
            if n_eff > 1:
                matrix = build_likelihood_matrix(
                    model, split, seg.bin_edges, n_eff, config.seg_negatives, seg_rng)
                seg = dp_segment(matrix)
            report = auc_sampled(model, seg, split, config.val_negatives, val_rng,
                                 target="validation")
            latest_val = report.auc
            checked = True
            if report.auc > state.best_val_auc:
                state.best_val_auc = report.auc
                state.checks_since_improvement = 0
                best_params, best_seg = params.copy(), seg.copy()
            else:
                state.checks_since_improvement += 1
                if state.checks_since_improvement > config.patience:
                    stop = True
        record = IterationRecord(iteration=it, objective=objective, val_auc=latest_val)
        history.append(record)
        if progress is not None:
            progress(record)
        if stop:
            logger.info("stopping at iteration %d: no validation improvement for %d checks",
                        it, state.checks_since_improvement)
            break

    if not checked:
        best_params, best_seg = params.copy(), seg.copy()
    return best_params, best_seg, history
