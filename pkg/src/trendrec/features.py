"""Per-item sparse visual feature vectors.

The feature file is UTF-8 text. Its first line declares the
dimensionality as ``#dim F``; each following line is

    item_id idx:val idx:val ...

with ascending integer indices below F and finite decimal values.
Values are stored at single precision; vectors for items unknown to
the interaction log are skipped, and every item the log references
must be present.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import FeatureCoverageError, ParseError, ValidationError


@dataclass
class FeatureStore:
    """CSR-style storage of item feature vectors, immutable after load."""

    dim: int
    indptr: np.ndarray   # (num_items + 1,) int64
    indices: np.ndarray  # int32, ascending within each item
    values: np.ndarray   # float32
    _csr: sp.csr_matrix = field(default=None, repr=False)

    @property
    def num_items(self):
        return len(self.indptr) - 1

    @property
    def density(self):
        if self.num_items == 0 or self.dim == 0:
            return 0.0
        return len(self.values) / (self.num_items * self.dim)

    def item_vector(self, item):
        """Nonzeros of one item as (indices, values) views."""
        if not 0 <= item < self.num_items:
            raise ValidationError(f"unknown item index {item}")
        lo, hi = self.indptr[item], self.indptr[item + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def dense(self, item):
        idx, val = self.item_vector(item)
        out = np.zeros(self.dim, dtype=np.float64)
        out[idx] = val
        return out

    def matrix(self):
        """The full (num_items, dim) matrix as scipy CSR, float64, cached."""
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values.astype(np.float64), self.indices, self.indptr),
                shape=(self.num_items, self.dim),
            )
        return self._csr

    @classmethod
    def from_rows(cls, dim, rows):
        """Build from an iterable of (indices, values) pairs, one per item."""
        indptr = [0]
        all_idx, all_val = [], []
        for idx, val in rows:
            idx = np.asarray(idx, dtype=np.int32)
            val = np.asarray(val, dtype=np.float32)
            if len(idx) and (np.any(idx < 0) or np.any(idx >= dim)):
                raise ValidationError(f"feature index out of range for dim {dim}")
            if len(idx) > 1 and np.any(np.diff(idx) <= 0):
                raise ValidationError("feature indices must be strictly increasing")
            all_idx.append(idx)
            all_val.append(val)
            indptr.append(indptr[-1] + len(idx))
        return cls(
            dim=dim,
            indptr=np.asarray(indptr, dtype=np.int64),
            indices=np.concatenate(all_idx) if all_idx else np.empty(0, dtype=np.int32),
            values=np.concatenate(all_val) if all_val else np.empty(0, dtype=np.float32),
        )


def load_features(path, item_index):
    """Load feature vectors for every item in ``item_index``.

    Raises FeatureCoverageError listing the missing raw IDs if any
    expected item has no vector.
    """
    dim = None
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#dim"):
                    try:
                        dim = int(line.split()[1])
                    except (IndexError, ValueError):
                        raise ParseError(path, lineno, "malformed #dim header") from None
                continue
            if dim is None:
                raise ParseError(path, lineno, "feature data before #dim header")
            parts = line.split()
            raw_id = parts[0]
            item = item_index.get(raw_id)
            if item is None:
                continue
            idx = np.empty(len(parts) - 1, dtype=np.int32)
            val = np.empty(len(parts) - 1, dtype=np.float32)
            for n, tok in enumerate(parts[1:]):
                try:
                    i_str, v_str = tok.split(":", 1)
                    idx[n] = int(i_str)
                    val[n] = float(v_str)
                except ValueError:
                    raise ParseError(path, lineno, f"malformed entry {tok!r}") from None
            if np.any(idx >= dim) or np.any(idx < 0):
                raise ParseError(path, lineno, f"feature index out of range [0, {dim})")
            if len(idx) > 1 and np.any(np.diff(idx) <= 0):
                raise ParseError(path, lineno, "feature indices must be strictly increasing")
            if not np.all(np.isfinite(val)):
                raise ParseError(path, lineno, "non-finite feature value")
            rows[item] = (idx, val)

    if dim is None:
        raise ParseError(path, 1, "missing #dim header")
    missing = [raw for raw, item in item_index.items() if item not in rows]
    if missing:
        raise FeatureCoverageError(missing)
    empty = (np.empty(0, dtype=np.int32), np.empty(0, dtype=np.float32))
    ordered = [rows.get(item, empty) for item in range(len(item_index))]
    return FeatureStore.from_rows(dim, ordered)


def write_features(store, item_ids, path):
    """Write the textual feature format; reloading reproduces the store bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {store.dim}\n")
        for item, raw_id in enumerate(item_ids):
            idx, val = store.item_vector(item)
            entries = " ".join(f"{i}:{float(v)!r}" for i, v in zip(idx, val))
            fh.write(f"{raw_id} {entries}\n" if entries else f"{raw_id}\n")


def dot_embed(row, store, item):
    """Inner product of a dense length-F row with item's sparse features.

    Iterates only the item's nonzeros and accumulates in double
    precision, so the cost scales with nnz rather than F.
    """
    row = np.asarray(row)
    if row.shape != (store.dim,):
        raise ValidationError(f"row has shape {row.shape}, expected ({store.dim},)")
    idx, val = store.item_vector(item)
    return float(np.dot(row[idx].astype(np.float64), val.astype(np.float64)))
