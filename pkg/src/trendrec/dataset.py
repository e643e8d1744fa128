"""Implicit-feedback log ingestion, user filtering, and leave-one-out splits.

The interaction file is UTF-8 text, one event per line:

    user_id<TAB>item_id<TAB>timestamp

with integer timestamps in seconds. Lines starting with ``#`` are
ignored. Duplicate (user, item) pairs collapse to their earliest
timestamp; users with fewer than ``min_actions`` distinct items are
dropped in a single pass. Raw IDs are opaque strings; dense indices
are assigned in first-appearance order so that reloading a written
log reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EmptyDatasetError, ParseError, ValidationError


class Interaction(NamedTuple):
    user: int
    item: int
    timestamp: int


@dataclass
class InteractionLog:
    """Dense-indexed positive-feedback events with ID maps and timeline bounds."""

    user_ids: list          # dense user index -> raw id
    item_ids: list          # dense item index -> raw id
    user_index: dict        # raw id -> dense index
    item_index: dict        # raw id -> dense index
    users: np.ndarray       # (n_events,) int32
    items: np.ndarray       # (n_events,) int32
    timestamps: np.ndarray  # (n_events,) int64

    @property
    def num_users(self):
        return len(self.user_ids)

    @property
    def num_items(self):
        return len(self.item_ids)

    @property
    def num_events(self):
        return len(self.users)

    @property
    def t_min(self):
        return int(self.timestamps.min())

    @property
    def t_max(self):
        return int(self.timestamps.max())

    @property
    def interactions(self):
        return [Interaction(int(u), int(i), int(t))
                for u, i, t in zip(self.users, self.items, self.timestamps)]

    @classmethod
    def from_arrays(cls, user_ids, item_ids, users, items, timestamps):
        users = np.asarray(users, dtype=np.int32)
        items = np.asarray(items, dtype=np.int32)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        if not (len(users) == len(items) == len(timestamps)):
            raise ValidationError("event arrays must have equal length")
        return cls(
            user_ids=list(user_ids),
            item_ids=list(item_ids),
            user_index={uid: n for n, uid in enumerate(user_ids)},
            item_index={iid: n for n, iid in enumerate(item_ids)},
            users=users,
            items=items,
            timestamps=timestamps,
        )


def load_interactions(path, min_actions=5):
    """Parse an interaction file and drop users with too few distinct items.

    The user filter is a single pass: items left with no remaining
    events are simply absent from the index, and no iterated pruning
    is performed.
    """
    earliest = {}     # (raw_user, raw_item) -> timestamp
    order = []        # first-appearance order of pairs
    per_user = {}     # raw_user -> distinct item count
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            raw_u, raw_i, raw_t = parts
            if not raw_u or not raw_i:
                raise ParseError(path, lineno, "empty user or item id")
            try:
                ts = int(raw_t)
            except ValueError:
                raise ParseError(path, lineno, f"timestamp {raw_t!r} is not an integer") from None
            key = (raw_u, raw_i)
            if key in earliest:
                if ts < earliest[key]:
                    earliest[key] = ts
            else:
                earliest[key] = ts
                order.append(key)
                per_user[raw_u] = per_user.get(raw_u, 0) + 1

    kept = {u for u, n in per_user.items() if n >= min_actions}
    user_ids, item_ids = [], []
    user_index, item_index = {}, {}
    users, items, stamps = [], [], []
    for raw_u, raw_i in order:
        if raw_u not in kept:
            continue
        if raw_u not in user_index:
            user_index[raw_u] = len(user_ids)
            user_ids.append(raw_u)
        if raw_i not in item_index:
            item_index[raw_i] = len(item_ids)
            item_ids.append(raw_i)
        users.append(user_index[raw_u])
        items.append(item_index[raw_i])
        stamps.append(earliest[(raw_u, raw_i)])

    if not users:
        raise EmptyDatasetError(f"{path}: no users with at least {min_actions} interactions")
    return InteractionLog(
        user_ids=user_ids,
        item_ids=item_ids,
        user_index=user_index,
        item_index=item_index,
        users=np.asarray(users, dtype=np.int32),
        items=np.asarray(items, dtype=np.int32),
        timestamps=np.asarray(stamps, dtype=np.int64),
    )


def write_interactions(log, path):
    with open(path, "w", encoding="utf-8") as fh:
        for u, i, t in zip(log.users, log.items, log.timestamps):
            fh.write(f"{log.user_ids[u]}\t{log.item_ids[i]}\t{int(t)}\n")


@dataclass
class Split:
    """Per-user leave-one-out partition of the log into train/validation/test.

    ``train_items[u]`` / ``train_times[u]`` hold the user's training
    items with their timestamps; validation and test are one item per
    user. The timeline bounds and counts are copied from the source
    log so the split is self-contained for training and evaluation.
    """

    train_items: list       # per user, np.ndarray int32
    train_times: list       # per user, np.ndarray int64
    val_items: np.ndarray   # (num_users,) int32
    val_times: np.ndarray   # (num_users,) int64
    test_items: np.ndarray  # (num_users,) int32
    test_times: np.ndarray  # (num_users,) int64
    num_users: int
    num_items: int
    t_min: int
    t_max: int
    _train_keys: np.ndarray = field(default=None, repr=False)
    _all_keys: np.ndarray = field(default=None, repr=False)

    @property
    def num_train_pairs(self):
        return sum(len(a) for a in self.train_items)

    def flat_train(self):
        """All training positives as (users, items, times) arrays."""
        users = np.concatenate([
            np.full(len(a), u, dtype=np.int32) for u, a in enumerate(self.train_items)
        ])
        items = np.concatenate(self.train_items)
        times = np.concatenate(self.train_times)
        return users, items, times

    def item_train_counts(self):
        """Number of users holding each item in their training set."""
        counts = np.zeros(self.num_items, dtype=np.int64)
        for a in self.train_items:
            np.add.at(counts, a, 1)
        return counts

    def _keys(self, include_heldout):
        # composite (user * num_items + item) keys allow vectorized
        # membership tests via searchsorted
        users, items, _ = self.flat_train()
        keys = users.astype(np.int64) * self.num_items + items
        if include_heldout:
            all_u = np.arange(self.num_users, dtype=np.int64) * self.num_items
            keys = np.concatenate([keys, all_u + self.val_items, all_u + self.test_items])
        keys.sort()
        return keys

    def train_keys(self):
        if self._train_keys is None:
            self._train_keys = self._keys(include_heldout=False)
        return self._train_keys

    def all_keys(self):
        if self._all_keys is None:
            self._all_keys = self._keys(include_heldout=True)
        return self._all_keys

    def in_train(self, users, items):
        """Vectorized membership test against the training positives."""
        return _key_member(self.train_keys(), users, items, self.num_items)

    def in_any(self, users, items):
        """Membership against train plus the held-out validation/test items."""
        return _key_member(self.all_keys(), users, items, self.num_items)


def _key_member(sorted_keys, users, items, num_items):
    q = np.asarray(users, dtype=np.int64) * num_items + np.asarray(items, dtype=np.int64)
    pos = np.searchsorted(sorted_keys, q)
    pos = np.minimum(pos, len(sorted_keys) - 1)
    return sorted_keys[pos] == q


def split_leave_one_out(log, seed):
    """Reserve one uniformly sampled item per user for validation and one for test."""
    per_user_items = [[] for _ in range(log.num_users)]
    per_user_times = [[] for _ in range(log.num_users)]
    for u, i, t in zip(log.users, log.items, log.timestamps):
        per_user_items[u].append(i)
        per_user_times[u].append(t)

    rng = np.random.default_rng(seed)
    n_users = log.num_users
    train_items, train_times = [], []
    val_items = np.empty(n_users, dtype=np.int32)
    val_times = np.empty(n_users, dtype=np.int64)
    test_items = np.empty(n_users, dtype=np.int32)
    test_times = np.empty(n_users, dtype=np.int64)
    for u in range(n_users):
        items = np.asarray(per_user_items[u], dtype=np.int32)
        times = np.asarray(per_user_times[u], dtype=np.int64)
        if len(items) < 3:
            raise ValidationError(f"user {log.user_ids[u]!r} has {len(items)} interactions, need >= 3 to split")
        pick = rng.choice(len(items), size=2, replace=False)
        val_items[u], val_times[u] = items[pick[0]], times[pick[0]]
        test_items[u], test_times[u] = items[pick[1]], times[pick[1]]
        keep = np.ones(len(items), dtype=bool)
        keep[pick] = False
        train_items.append(items[keep])
        train_times.append(times[keep])

    return Split(
        train_items=train_items,
        train_times=train_times,
        val_items=val_items,
        val_times=val_times,
        test_items=test_items,
        test_times=test_times,
        num_users=n_users,
        num_items=log.num_items,
        t_min=log.t_min,
        t_max=log.t_max,
    )


def cold_items(split, threshold=5):
    """Item indices appearing in fewer than ``threshold`` users' training sets."""
    if threshold < 1:
        raise ValidationError("cold-item threshold must be >= 1")
    counts = split.item_train_counts()
    return np.flatnonzero(counts < threshold)


UNKNOWN_CATEGORY = 0


@dataclass
class Taxonomy:
    """Item -> subcategory map; index 0 is reserved for items missing from the file."""

    category_of: np.ndarray  # (num_items,) int32
    category_ids: list       # dense category index -> raw id; [0] is the unknown bucket

    @property
    def num_categories(self):
        return len(self.category_ids)


def load_taxonomy(path, item_index):
    """Read ``item_id<TAB>category_id`` lines; unknown items map to category 0."""
    category_of = np.zeros(len(item_index), dtype=np.int32)
    category_ids = ["(unknown)"]
    cat_index = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 2 tab-separated fields, got {len(parts)}")
            raw_i, raw_c = parts
            item = item_index.get(raw_i)
            if item is None:
                continue
            if raw_c not in cat_index:
                cat_index[raw_c] = len(category_ids)
                category_ids.append(raw_c)
            category_of[item] = cat_index[raw_c]
    return Taxonomy(category_of=category_of, category_ids=category_ids)


def write_taxonomy(taxonomy, item_ids, path):
    with open(path, "w", encoding="utf-8") as fh:
        for item, cat in enumerate(taxonomy.category_of):
            if cat != UNKNOWN_CATEGORY:
                fh.write(f"{item_ids[item]}\t{taxonomy.category_ids[cat]}\n")
