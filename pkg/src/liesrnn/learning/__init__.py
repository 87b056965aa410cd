"""Dataset generation, learned dynamics, loss and training."""
from .dataset import Dataset, DatasetError, generate_dataset, load_dataset, perturb, save_dataset, split_counts
from .loss import DIVERGED_LOSS, LossReport, sample_terms, srnn_loss
from .model import (
    LearnedDynamics,
    LearnedForcing,
    LearnedPotential,
    Normalizer,
    encode_forcing_input,
    encode_potential_input,
    fit_normalizers,
    load_model,
    predict_rollout,
    save_model,
)
from .train import TrainConfig, TrainingDiverged, TrainResult, baseline_train_matrix, batch_loss, evaluate_loss, train

__all__ = [
    "DIVERGED_LOSS",
    "Dataset",
    "DatasetError",
    "LearnedDynamics",
    "LearnedForcing",
    "LearnedPotential",
    "LossReport",
    "Normalizer",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "baseline_train_matrix",
    "batch_loss",
    "encode_forcing_input",
    "encode_potential_input",
    "evaluate_loss",
    "fit_normalizers",
    "generate_dataset",
    "load_dataset",
    "load_model",
    "perturb",
    "predict_rollout",
    "sample_terms",
    "save_dataset",
    "save_model",
    "split_counts",
    "srnn_loss",
    "train",
]
