"""One-class collaborative filtering with temporally-evolving visual preferences."""

__version__ = "0.1.0"

from .dataset import (InteractionLog, Interaction, Split, Taxonomy, cold_items,
                      load_interactions, load_taxonomy, split_leave_one_out)
from .errors import ValidationError
from .features import FeatureStore, dot_embed, load_features
from .model import (Checkpoint, Model, ModelParams, ModelVariant, TrainConfig,
                    init_params, load_checkpoint, save_checkpoint, variant_flags)
from .segmentation import (EpochSegmentation, LikelihoodMatrix,
                           build_likelihood_matrix, dp_segment, make_bins)
from .evaluation import (EvalReport, auc, auc_sampled, normalized_visual_scores,
                         pop_model, pop_scores, top_items_per_dimension, visual_score)
from .synthetic import SynthConfig, SynthTruth, generate
from .trainer import (TrainingQuadruple, coordinate_ascent, run_iteration,
                      sample_quadruple, sgd_step)

__all__ = [
    "Checkpoint", "EpochSegmentation", "EvalReport", "FeatureStore", "Interaction",
    "InteractionLog", "LikelihoodMatrix", "Model", "ModelParams", "ModelVariant",
    "Split", "SynthConfig", "SynthTruth", "Taxonomy", "TrainConfig",
    "TrainingQuadruple", "ValidationError", "auc", "auc_sampled",
    "build_likelihood_matrix", "cold_items", "coordinate_ascent", "dot_embed",
    "dp_segment", "generate", "init_params", "load_checkpoint", "load_features",
    "load_interactions", "load_taxonomy", "make_bins", "normalized_visual_scores",
    "pop_model", "pop_scores", "run_iteration", "sample_quadruple", "save_checkpoint",
    "sgd_step", "split_leave_one_out", "top_items_per_dimension", "variant_flags",
    "visual_score",
]
