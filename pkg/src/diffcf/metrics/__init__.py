from .encoders import (
    ClassifierFeatureEncoder,
    CosineFeatureDistance,
    FeatureEncoder,
    IdentityEncoder,
    TwinViewEncoder,
    load_twin_view_encoder,
    save_twin_view_encoder,
    train_twin_view_encoder,
)
from .frechet import GaussianStats, fid, frechet_distance, sfid
from .report import MetricReport, evaluate_runs, flip_rate
from .similarity import SimilarityResult, diversity, embedding_similarity
from .transition import cout, transition_sequence

__all__ = [
    "ClassifierFeatureEncoder",
    "CosineFeatureDistance",
    "FeatureEncoder",
    "GaussianStats",
    "IdentityEncoder",
    "MetricReport",
    "SimilarityResult",
    "TwinViewEncoder",
    "cout",
    "diversity",
    "embedding_similarity",
    "evaluate_runs",
    "fid",
    "flip_rate",
    "frechet_distance",
    "load_twin_view_encoder",
    "save_twin_view_encoder",
    "sfid",
    "train_twin_view_encoder",
    "transition_sequence",
]
