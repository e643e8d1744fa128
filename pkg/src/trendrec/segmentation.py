"""Timeline binning and epoch discovery.

The timeline is cut into B equal-duration bins. A segmentation assigns
bins to N contiguous epochs (non-decreasing, every epoch non-empty).
Refitting builds a B x N matrix of sampled ranking log-likelihoods at
fixed parameters and solves the optimal contiguous assignment with a
dynamic program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from . import _kernels

logger = logging.getLogger(__name__)


def make_bins(t_min, t_max, num_bins):
    """B+1 ascending edges of equal-duration bins spanning [t_min, t_max].

    Bins are left-closed and right-open except that t_max itself falls
    into the last bin. A degenerate timeline collapses to a single bin.
    """
    if num_bins < 1:
        raise ValidationError("num_bins must be >= 1")
    if t_max < t_min:
        raise ValidationError("t_max must be >= t_min")
    if t_max == t_min:
        logger.warning("degenerate timeline [%s, %s]; falling back to a single bin", t_min, t_max)
        return np.asarray([t_min, t_min + 1], dtype=np.float64)
    return np.linspace(t_min, t_max, num_bins + 1, dtype=np.float64)


def bin_of(bin_edges, t):
    """Bin index of timestamp(s) t; out-of-range values clip to the end bins."""
    idx = np.searchsorted(bin_edges, np.asarray(t, dtype=np.float64), side="right") - 1
    return np.clip(idx, 0, len(bin_edges) - 2).astype(np.int64)


@dataclass
class EpochSegmentation:
    """Partition of the binned timeline into contiguous epochs."""

    bin_edges: np.ndarray     # (B + 1,) float64
    epoch_of_bin: np.ndarray  # (B,) int32, non-decreasing, steps of at most 1
    num_epochs: int

    @property
    def num_bins(self):
        return len(self.epoch_of_bin)

    def validate(self):
        e = self.epoch_of_bin
        if len(self.bin_edges) != len(e) + 1:
            raise ValidationError("bin_edges length must be num_bins + 1")
        if len(e) < self.num_epochs:
            raise ValidationError("need at least one bin per epoch")
        if e[0] != 0 or e[-1] != self.num_epochs - 1:
            raise ValidationError("segmentation must start at epoch 0 and end at the last epoch")
        steps = np.diff(e)
        if np.any(steps < 0) or np.any(steps > 1):
            raise ValidationError("epoch assignment must be non-decreasing with steps of at most 1")

    def epoch_of(self, t):
        """Epoch index of timestamp(s) t."""
        return self.epoch_of_bin[bin_of(self.bin_edges, t)]

    def epoch_bounds(self):
        """Per-epoch (start, end) timestamps, end exclusive except for the last."""
        bounds = []
        for e in range(self.num_epochs):
            bins = np.flatnonzero(self.epoch_of_bin == e)
            bounds.append((float(self.bin_edges[bins[0]]), float(self.bin_edges[bins[-1] + 1])))
        return bounds

    def boundary_bins(self):
        """Bin indices where a new epoch starts (excluding bin 0)."""
        return np.flatnonzero(np.diff(self.epoch_of_bin) == 1) + 1

    def copy(self):
        return EpochSegmentation(self.bin_edges.copy(), self.epoch_of_bin.copy(), self.num_epochs)

    @classmethod
    def initial(cls, t_min, t_max, num_bins, num_epochs):
        """Equal consecutive blocks of bins per epoch, the coordinate-ascent start."""
        if num_bins < num_epochs:
            raise ValidationError(f"num_bins ({num_bins}) must be >= num_epochs ({num_epochs})")
        edges = make_bins(t_min, t_max, num_bins)
        b = len(edges) - 1
        assignment = np.minimum((np.arange(b) * num_epochs) // b, num_epochs - 1).astype(np.int32)
        seg = cls(bin_edges=edges, epoch_of_bin=assignment, num_epochs=num_epochs)
        seg.validate()
        return seg


@dataclass
class LikelihoodMatrix:
    """Sampled per-(bin, epoch) log-likelihood contributions, all entries <= 0."""

    values: np.ndarray    # (B, N) float64
    sample_size: int
    bin_edges: np.ndarray

    @property
    def num_bins(self):
        return self.values.shape[0]

    @property
    def num_epochs(self):
        return self.values.shape[1]


def build_likelihood_matrix(model, split, bin_edges, num_epochs, sample_size, rng,
                            exhaustive=False):
    """Score every training positive under every candidate epoch.

    For each positive (u, i, t) falling in bin b and each epoch e, adds
    the mean over ``sample_size`` negatives j of log sigmoid(x_ui(e) -
    x_uj(e)) to entry (b, e). Negatives are drawn uniformly outside the
    user's training items, fresh per call but shared across the epoch
    columns of the same positive. ``exhaustive`` averages over all
    eligible negatives instead (small instances only).
    """
    from .model import build_score_table  # deferred to avoid an import cycle
    from .trainer import sample_negatives

    if sample_size < 1 and not exhaustive:
        raise ValidationError("sample_size must be >= 1")
    params = model.params
    if num_epochs != params.num_epochs:
        raise ValidationError(
            f"segmentation epochs ({num_epochs}) must match the model ({params.num_epochs})")
    table = build_score_table(model)
    users, items, times = split.flat_train()
    bins = bin_of(bin_edges, times)
    num_bins = len(bin_edges) - 1
    values = np.zeros((num_bins, num_epochs), dtype=np.float64)

    gamma_u = params.user_factors[users].astype(np.float64)
    if params.variant.use_visual and params.variant.use_personal_drift:
        theta_u = np.stack([model.user_visual_factors(int(u), int(t))
                            for u, t in zip(users, times)])
    else:
        theta_u = params.visual_user_factors[users].astype(np.float64)

    if exhaustive:
        # average over every eligible negative; only viable on tiny instances
        for n in range(len(users)):
            u, i, b = int(users[n]), int(items[n]), int(bins[n])
            eligible = np.setdiff1d(np.arange(split.num_items, dtype=np.int64),
                                    split.train_items[u])
            for e in range(num_epochs):
                scores = (table.base[e] + table.gamma_items @ gamma_u[n]
                          + table.theta_items[e] @ theta_u[n])
                diffs = scores[i] - scores[eligible]
                values[b, e] += float(np.mean(_log_sigmoid(diffs)))
        return LikelihoodMatrix(values=values, sample_size=0, bin_edges=np.asarray(bin_edges))

    negatives = sample_negatives(split, users, rng, per_row=sample_size)
    _kernels.likelihood_kernel(
        items.astype(np.int64), bins, negatives,
        gamma_u, theta_u,
        table.base, table.gamma_items, table.theta_items,
        values,
    )
    return LikelihoodMatrix(values=values, sample_size=sample_size, bin_edges=np.asarray(bin_edges))


def _log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


def segmentation_value(matrix_values, epoch_of_bin):
    """Objective of an assignment: left-to-right sum of its (bin, epoch) entries."""
    acc = 0.0
    for b in range(matrix_values.shape[0]):
        acc += matrix_values[b, epoch_of_bin[b]]
    return acc


def dp_segment(likelihood):
    """Optimal contiguous assignment of bins to epochs.

    Maximizes the summed matrix entries subject to the assignment being
    non-decreasing, starting at epoch 0, ending at the last epoch, and
    using every epoch. O(B*N) given the matrix.
    """
    values = likelihood.values
    num_bins, num_epochs = values.shape
    if num_bins < num_epochs:
        raise ValidationError(f"cannot fit {num_epochs} epochs into {num_bins} bins")

    neg_inf = -np.inf
    best = np.full((num_bins, num_epochs), neg_inf, dtype=np.float64)
    came_from_prev = np.zeros((num_bins, num_epochs), dtype=bool)
    best[0, 0] = values[0, 0]
    for b in range(1, num_bins):
        e_lo = max(0, num_epochs - (num_bins - b))
        e_hi = min(b, num_epochs - 1)
        for e in range(e_lo, e_hi + 1):
            stay = best[b - 1, e]
            switch = best[b - 1, e - 1] if e > 0 else neg_inf
            if switch > stay:
                best[b, e] = values[b, e] + switch
                came_from_prev[b, e] = True
            else:
                best[b, e] = values[b, e] + stay

    assignment = np.empty(num_bins, dtype=np.int32)
    e = num_epochs - 1
    for b in range(num_bins - 1, -1, -1):
        assignment[b] = e
        if came_from_prev[b, e]:
            e -= 1
    seg = EpochSegmentation(
        bin_edges=np.asarray(likelihood.bin_edges, dtype=np.float64),
        epoch_of_bin=assignment,
        num_epochs=num_epochs,
    )
    seg.validate()
    return seg


def write_segments(seg, path):
    """Export epoch boundaries as ``epoch<TAB>start<TAB>end`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for e, (start, end) in enumerate(seg.epoch_bounds()):
            fh.write(f"{e}\t{start!r}\t{end!r}\n")
