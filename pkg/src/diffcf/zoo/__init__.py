from .classifier import (
    ClassifierTrainConfig,
    ConvClassifier,
    load_classifier,
    predict_probs,
    save_classifier,
    train_classifier,
)
from .datasets import (
    BUILTIN_NAME,
    DatasetDescriptor,
    ImageDataset,
    build_builtin_dataset,
    ingest_dataset,
)
from .synthetic import generate_curves, render_curve_image

__all__ = [
    "BUILTIN_NAME",
    "ClassifierTrainConfig",
    "ConvClassifier",
    "DatasetDescriptor",
    "ImageDataset",
    "build_builtin_dataset",
    "generate_curves",
    "ingest_dataset",
    "load_classifier",
    "predict_probs",
    "render_curve_image",
    "save_classifier",
    "train_classifier",
]
