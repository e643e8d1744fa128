"""Parameter set and time-dependent preference predictor.

One predictor serves every model variant. A score for (user, item) at
epoch ep is the sum of a global offset, user bias, item bias, optional
subcategory bias, optional visual bias, a latent interaction, and an
optional visual interaction:

    offset + user_bias + item_bias(ep) + category_bias(ep)
    + <visual_bias(ep), f_i> + <user_factors, item_factors>
    + <visual_user_factors(t), item_visual_factors(ep)>

Temporal parameters are stored stacked with a leading epoch axis. When
a variant has no temporal component the item (and category) biases
collapse to a single shared epoch row, so the static predictors are
strict special cases rather than separate code paths. The visual-bias
term and the drift/weighting of the embedding belong to the
temporally-visual variants only; the plain visually-aware variant
scores with the stationary embedding alone.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import (CheckpointFormatError, UnsupportedVariantError,
                     ValidationError)


@dataclass(frozen=True)
class ModelVariant:
    """Feature flags selecting which predictor terms exist."""

    use_visual: bool = False
    use_temporal_visual: bool = False
    use_temporal_nonvisual: bool = False
    use_taxonomy: bool = False
    use_personal_drift: bool = False

    @property
    def temporal(self):
        return self.use_temporal_visual or self.use_temporal_nonvisual

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# Canonical variant names. "pop" ranks by training popularity and trains
# no parameters; it shares the all-flags-off parameter layout.
VARIANTS = {
    "pop": ModelVariant(),
    "bpr-mf": ModelVariant(),
    "bpr-tmf": ModelVariant(use_temporal_nonvisual=True, use_taxonomy=True),
    "vbpr": ModelVariant(use_visual=True),
    "tvbpr": ModelVariant(use_visual=True, use_temporal_visual=True),
    "tvbpr+": ModelVariant(use_visual=True, use_temporal_visual=True,
                           use_temporal_nonvisual=True, use_taxonomy=True),
}


def variant_flags(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValidationError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


@dataclass
class TrainConfig:
    """Dimensions, regularizers, and schedule for one training run."""

    variant: str = "tvbpr+"
    latent_dims: int = 10        # K, non-visual factor dimensionality
    visual_dims: int = 10        # K', visual factor dimensionality
    feature_dim: int = 0         # F, from the feature store
    num_epochs: int = 10         # N
    num_bins: int = 40           # B
    lambda_theta: float = 1.0
    lambda_temporal: float = 1e-4
    learning_rate: float = 0.01
    iterations: int = 100
    seg_negatives: int = 200     # negatives per positive when refitting epochs
    val_negatives: int = 200     # negatives per user for the validation AUC proxy
    check_period: int = 10       # iterations between refit/validation checks
    patience: int = 3            # consecutive non-improving checks tolerated
    seed: int = 0
    threads: int = 1
    drift_exponent: float = 0.5  # personal-drift time exponent, in (0, 1]

    @property
    def flags(self):
        return variant_flags(self.variant)

    def effective_epochs(self):
        """Temporal variants keep N epochs; static ones collapse to one."""
        return self.num_epochs if self.flags.temporal else 1

    def validate(self):
        variant_flags(self.variant)
        if self.latent_dims < 0 or self.visual_dims < 0:
            raise ValidationError("dimensions must be >= 0")
        if self.flags.use_visual and self.visual_dims < 1:
            raise ValidationError("visual variants need visual_dims >= 1")
        if self.flags.use_visual and self.feature_dim < 1:
            raise ValidationError("visual variants need feature_dim >= 1")
        if self.num_epochs < 1:
            raise ValidationError("num_epochs must be >= 1")
        if self.num_bins < self.num_epochs:
            raise ValidationError("num_bins must be >= num_epochs")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.seg_negatives < 1 or self.val_negatives < 1:
            raise ValidationError("negative sample sizes must be >= 1")
        if self.check_period < 1:
            raise ValidationError("check_period must be >= 1")
        if self.patience < 0:
            raise ValidationError("patience must be >= 0")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if not 0 < self.drift_exponent <= 1:
            raise ValidationError("drift_exponent must be in (0, 1]")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# Array fields in checkpoint order. Kept stable so checkpoints are
# byte-reproducible across runs.
_ARRAY_FIELDS = (
    "global_offset", "user_bias", "user_factors", "item_factors",
    "visual_user_factors", "embedding", "visual_bias",
    "embedding_drift", "dim_weights", "visual_bias_weights", "visual_bias_drift",
    "item_bias", "category_bias",
    "drift_directions", "user_mean_time",
)


@dataclass
class ModelParams:
    """Every learned array, plus the flags describing which ones are live.

    Shapes (N = num_epochs, Nb = N when the non-visual biases are
    temporal, else 1; absent families have a zero-sized axis):

      global_offset        ()            scalar offset, inert for ranking
      user_bias            (U,)          inert for ranking
      user_factors         (U, K)
      item_factors         (I, K)
      visual_user_factors  (U, K')
      embedding            (K', F)       feature-space -> style-space map
      visual_bias          (F,)          stationary visual bias vector
      embedding_drift      (N, K', F)    per-epoch embedding deviation
      dim_weights          (N, K')       per-epoch style-dimension weights
      visual_bias_weights  (N, F)        per-epoch visual-bias weights
      visual_bias_drift    (N, F)        per-epoch visual-bias deviation
      item_bias            (Nb, I)
      category_bias        (Nb, C)
      drift_directions     (U, K')       personal drift, zero unless trained externally
      user_mean_time       (U,)          per-user mean feedback time (seconds)
    """

    variant: ModelVariant
    num_epochs: int
    label: str
    global_offset: np.ndarray
    user_bias: np.ndarray
    user_factors: np.ndarray
    item_factors: np.ndarray
    visual_user_factors: np.ndarray
    embedding: np.ndarray
    visual_bias: np.ndarray
    embedding_drift: np.ndarray
    dim_weights: np.ndarray
    visual_bias_weights: np.ndarray
    visual_bias_drift: np.ndarray
    item_bias: np.ndarray
    category_bias: np.ndarray
    drift_directions: np.ndarray
    user_mean_time: np.ndarray
    drift_exponent: float = 0.5

    @property
    def num_users(self):
        return len(self.user_bias)

    @property
    def num_items(self):
        return self.item_bias.shape[1]

    @property
    def num_categories(self):
        return self.category_bias.shape[1]

    @property
    def latent_dims(self):
        return self.user_factors.shape[1]

    @property
    def visual_dims(self):
        return self.visual_user_factors.shape[1]

    @property
    def feature_dim(self):
        return self.embedding.shape[1]

    @property
    def dtype(self):
        return self.user_bias.dtype

    def bias_epoch(self, ep):
        """Row of item_bias/category_bias used at epoch ep."""
        return ep if self.variant.use_temporal_nonvisual else 0

    def epoch(self, ep):
        """Views of all per-epoch parameters for one epoch."""
        self.check_epoch(ep)
        eb = self.bias_epoch(ep)
        tv = self.variant.use_temporal_visual
        return EpochParams(
            embedding_drift=self.embedding_drift[ep] if tv else None,
            visual_bias_drift=self.visual_bias_drift[ep] if tv else None,
            dim_weights=self.dim_weights[ep] if tv else None,
            visual_bias_weights=self.visual_bias_weights[ep] if tv else None,
            item_bias=self.item_bias[eb],
            category_bias=self.category_bias[eb] if self.variant.use_taxonomy else None,
        )

    def check_epoch(self, ep):
        if not 0 <= ep < self.num_epochs:
            raise ValidationError(f"epoch {ep} out of range [0, {self.num_epochs})")

    def drift(self):
        """The personal-drift parameter group, or None when the flag is off."""
        if not self.variant.use_personal_drift:
            return None
        return PersonalDriftParams(
            drift_directions=self.drift_directions,
            drift_exponent=self.drift_exponent,
            user_mean_time=self.user_mean_time,
        )

    def arrays(self):
        return {name: getattr(self, name) for name in _ARRAY_FIELDS}

    def copy(self):
        kwargs = {name: getattr(self, name).copy() for name in _ARRAY_FIELDS}
        return replace(self, **kwargs)


@dataclass
class EpochParams:
    """Per-epoch parameter views; fields are None when a variant lacks them."""

    embedding_drift: np.ndarray
    visual_bias_drift: np.ndarray
    dim_weights: np.ndarray
    visual_bias_weights: np.ndarray
    item_bias: np.ndarray
    category_bias: np.ndarray


@dataclass
class PersonalDriftParams:
    """Optional user-taste drift extension; directions stay zero unless set."""

    drift_directions: np.ndarray
    drift_exponent: float
    user_mean_time: np.ndarray


SECONDS_PER_DAY = 86400.0


def init_params(config, num_users, num_items, num_categories, seed, dtype=np.float32):
    """Allocate parameters for a variant; learned entries are iid uniform [0, 1).

    Draw order is fixed (the field order of ModelParams) so a seed pins
    every entry. Personal-drift directions and the user mean feedback
    times start at zero; they are bookkeeping, not learned entries.
    """
    config.validate()
    flags = config.flags
    rng = np.random.default_rng(seed)
    n_eff = config.effective_epochs()
    n_bias = config.num_epochs if flags.use_temporal_nonvisual else 1
    k = config.latent_dims
    kv = config.visual_dims if flags.use_visual else 0
    f = config.feature_dim if flags.use_visual else 0
    n_vis = n_eff if flags.use_temporal_visual else 0
    n_cat = num_categories if flags.use_taxonomy else 0

    def draw(*shape):
        return rng.random(shape, dtype=dtype)

    return ModelParams(
        variant=flags,
        num_epochs=n_eff,
        label=config.variant,
        global_offset=draw().reshape(()),
        user_bias=draw(num_users),
        user_factors=draw(num_users, k),
        item_factors=draw(num_items, k),
        visual_user_factors=draw(num_users, kv),
        embedding=draw(kv, f),
        visual_bias=draw(f),
        embedding_drift=draw(n_vis, kv, f),
        dim_weights=draw(n_vis, kv),
        visual_bias_weights=draw(n_vis, f),
        visual_bias_drift=draw(n_vis, f),
        item_bias=draw(n_bias, num_items),
        category_bias=draw(n_bias, n_cat),
        drift_directions=np.zeros((num_users, kv), dtype=dtype),
        user_mean_time=np.zeros(num_users, dtype=np.float64),
        drift_exponent=config.drift_exponent,
    )


@dataclass
class Model:
    """Parameters bundled with the item data they score against."""

    params: ModelParams
    features: object = None    # FeatureStore, required for visual variants
    categories: np.ndarray = None  # item -> subcategory, required with taxonomy

    def __post_init__(self):
        v = self.params.variant
        if v.use_visual and self.features is None:
            raise ValidationError("visual variant requires a feature store")
        if v.use_taxonomy and self.categories is None:
            raise ValidationError("taxonomy variant requires item categories")

    def _require_visual(self):
        if not self.params.variant.use_visual:
            raise UnsupportedVariantError(f"variant {self.params.label!r} has no visual parameters")

    def item_visual_factors(self, item, ep):
        """Style-space position of an item at an epoch.

        Stationary embedding of the item's features, reweighted per
        dimension and shifted by the epoch's embedding deviation when
        the variant is temporally visual.
        """
        self._require_visual()
        p = self.params
        p.check_epoch(ep)
        idx, val = self.features.item_vector(item)
        val64 = val.astype(np.float64)
        base = p.embedding[:, idx].astype(np.float64) @ val64
        if not p.variant.use_temporal_visual:
            return base
        drift = p.embedding_drift[ep][:, idx].astype(np.float64) @ val64
        return base * p.dim_weights[ep].astype(np.float64) + drift

    def user_visual_factors(self, user, t=None):
        """Visual taste of a user, including personal drift when enabled."""
        self._require_visual()
        p = self.params
        theta = p.visual_user_factors[user].astype(np.float64)
        if not p.variant.use_personal_drift or t is None:
            return theta
        dt_days = (float(t) - float(p.user_mean_time[user])) / SECONDS_PER_DAY
        scale = np.sign(dt_days) * abs(dt_days) ** p.drift_exponent
        return theta + scale * p.drift_directions[user].astype(np.float64)

    def visual_bias(self, item, ep):
        """Appearance bias of an item at an epoch (stationary form if non-temporal)."""
        self._require_visual()
        p = self.params
        p.check_epoch(ep)
        idx, val = self.features.item_vector(item)
        if p.variant.use_temporal_visual:
            vec = (p.visual_bias[idx].astype(np.float64)
                   * p.visual_bias_weights[ep][idx].astype(np.float64)
                   + p.visual_bias_drift[ep][idx].astype(np.float64))
        else:
            vec = p.visual_bias[idx].astype(np.float64)
        return float(vec @ val.astype(np.float64))

    def predict(self, user, item, ep, t=None):
        """Preference score of (user, item) at epoch ep (and time t for drift)."""
        p = self.params
        v = p.variant
        p.check_epoch(ep)
        if not 0 <= user < p.num_users:
            raise ValidationError(f"unknown user index {user}")
        if not 0 <= item < p.num_items:
            raise ValidationError(f"unknown item index {item}")
        eb = p.bias_epoch(ep)
        x = float(p.global_offset) + float(p.user_bias[user]) + float(p.item_bias[eb, item])
        if v.use_taxonomy:
            x += float(p.category_bias[eb, self.categories[item]])
        if p.latent_dims:
            x += float(p.user_factors[user].astype(np.float64)
                       @ p.item_factors[item].astype(np.float64))
        if v.use_visual:
            x += float(self.user_visual_factors(user, t) @ self.item_visual_factors(item, ep))
            if v.use_temporal_visual:
                x += self.visual_bias(item, ep)
        return x


@dataclass
class ItemScoreTable:
    """Per-epoch item-side score components for batch evaluation.

    base[e, i] collects every user-independent term at epoch e (item
    bias, category bias, visual bias). The remaining terms are dot
    products against the per-user vectors.
    """

    base: np.ndarray         # (N, I) float64
    gamma_items: np.ndarray  # (I, K) float64
    theta_items: np.ndarray  # (N, I, K') float64

    def user_scores(self, model, user, ep, t=None):
        """Scores of every item for one user at epoch ep."""
        p = model.params
        s = self.base[ep] + float(p.global_offset) + float(p.user_bias[user])
        if p.latent_dims:
            s = s + self.gamma_items @ p.user_factors[user].astype(np.float64)
        if p.variant.use_visual:
            s = s + self.theta_items[ep] @ model.user_visual_factors(user, t)
        return s


def build_score_table(model):
    """Precompute item-side score components for all epochs."""
    p = model.params
    n = p.num_epochs
    num_items = p.num_items
    base = np.zeros((n, num_items), dtype=np.float64)
    for e in range(n):
        eb = p.bias_epoch(e)
        base[e] = p.item_bias[eb].astype(np.float64)
        if p.variant.use_taxonomy:
            base[e] += p.category_bias[eb].astype(np.float64)[model.categories]
    gamma_items = p.item_factors.astype(np.float64)
    if p.variant.use_visual:
        feats = model.features.matrix()
        embed_t = np.ascontiguousarray(p.embedding.T, dtype=np.float64)
        theta_base = feats @ embed_t  # (I, K')
        theta_items = np.empty((n, num_items, p.visual_dims), dtype=np.float64)
        for e in range(n):
            if p.variant.use_temporal_visual:
                drift_t = np.ascontiguousarray(p.embedding_drift[e].T, dtype=np.float64)
                theta_items[e] = (theta_base * p.dim_weights[e].astype(np.float64)
                                  + feats @ drift_t)
                bias_vec = (p.visual_bias.astype(np.float64)
                            * p.visual_bias_weights[e].astype(np.float64)
                            + p.visual_bias_drift[e].astype(np.float64))
                base[e] += feats @ bias_vec
            else:
                theta_items[e] = theta_base
    else:
        theta_items = np.zeros((n, num_items, 0), dtype=np.float64)
    return ItemScoreTable(base=base, gamma_items=gamma_items, theta_items=theta_items)


CHECKPOINT_MAGIC = b"TVBPR1"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """A trained model with everything needed to reload and evaluate it."""

    params: ModelParams
    segmentation: object     # EpochSegmentation
    config: TrainConfig
    user_ids: list
    item_ids: list
    category_ids: list


def save_checkpoint(checkpoint, path):
    """Versioned binary dump; round trips bit-exactly."""
    p = checkpoint.params
    manifest = []
    buffers = []
    for name, arr in p.arrays().items():
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        buffers.append(arr.tobytes(order="C"))
    header = {
        "version": CHECKPOINT_VERSION,
        "config": checkpoint.config.as_dict(),
        "variant": p.variant.as_dict(),
        "label": p.label,
        "num_epochs": p.num_epochs,
        "drift_exponent": p.drift_exponent,
        "segmentation": {
            "bin_edges": [float(x) for x in checkpoint.segmentation.bin_edges],
            "epoch_of_bin": [int(x) for x in checkpoint.segmentation.epoch_of_bin],
            "num_epochs": checkpoint.segmentation.num_epochs,
        },
        "ids": {
            "users": list(checkpoint.user_ids),
            "items": list(checkpoint.item_ids),
            "categories": list(checkpoint.category_ids),
        },
        "arrays": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.uint32(CHECKPOINT_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path):
    from .segmentation import EpochSegmentation

    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
        version = int(np.frombuffer(_read_exact(fh, 4, path), dtype=np.uint32)[0])
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {version}")
        blob_len = int(np.frombuffer(_read_exact(fh, 8, path), dtype=np.uint64)[0])
        try:
            header = json.loads(_read_exact(fh, blob_len, path).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointFormatError(f"{path}: corrupt header: {exc}") from None
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            buf = _read_exact(fh, nbytes, path)
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()

    params = ModelParams(
        variant=ModelVariant.from_dict(header["variant"]),
        num_epochs=int(header["num_epochs"]),
        label=header["label"],
        drift_exponent=float(header["drift_exponent"]),
        **arrays,
    )
    seg = EpochSegmentation(
        bin_edges=np.asarray(header["segmentation"]["bin_edges"], dtype=np.float64),
        epoch_of_bin=np.asarray(header["segmentation"]["epoch_of_bin"], dtype=np.int32),
        num_epochs=int(header["segmentation"]["num_epochs"]),
    )
    config = TrainConfig.from_dict(header["config"])
    ids = header["ids"]
    return Checkpoint(params=params, segmentation=seg, config=config,
                      user_ids=ids["users"], item_ids=ids["items"],
                      category_ids=ids["categories"])


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"{path}: truncated file")
    return buf


def export_visual_params_text(params, path):
    """Human-readable dump of the embedding rows and per-epoch weights."""
    if not params.variant.use_visual:
        raise UnsupportedVariantError("text export needs a visual variant")
    with io.open(path, "w", encoding="utf-8") as fh:
        fh.write("# embedding rows, one style dimension per line\n")
        for k in range(params.visual_dims):
            row = " ".join(repr(float(v)) for v in params.embedding[k])
            fh.write(f"embedding\t{k}\t{row}\n")
        if params.variant.use_temporal_visual:
            for e in range(params.num_epochs):
                row = " ".join(repr(float(v)) for v in params.dim_weights[e])
                fh.write(f"dim_weights\t{e}\t{row}\n")
            for e in range(params.num_epochs):
                row = " ".join(repr(float(v)) for v in params.visual_bias_weights[e])
                fh.write(f"visual_bias_weights\t{e}\t{row}\n")
