"""
ner-transfer - De-identification NER with Layer-Prefix Transfer Learning
========================================================================

A numpy char/token BiLSTM-CRF tagger, checkpoint-based transfer of its
layers from a source to a target corpus, a synthetic patient-note corpus
generator and the experiment grids measuring transfer gains.
"""

__version__ = "1.0.0"

from .data import Corpus, Vocabulary, build_vocabulary, read_column_file, write_column_file
from .evaluation import binary_phi_prf, entity_prf, extract_spans, token_accuracy
from .harness import ExperimentConfig, run_experiment1, run_experiment2, train_model
from .network import Hyperparameters, LayerId, NerModel, fit, predict
from .synthetic import SynthSpec, generate_synthetic
from .transfer import TransferPlan, load_checkpoint, prefix_plans, save_checkpoint, transfer_parameters

__all__ = [
    "Corpus",
    "Vocabulary",
    "build_vocabulary",
    "read_column_file",
    "write_column_file",
    "binary_phi_prf",
    "entity_prf",
    "extract_spans",
    "token_accuracy",
    "ExperimentConfig",
    "run_experiment1",
    "run_experiment2",
    "train_model",
    "Hyperparameters",
    "LayerId",
    "NerModel",
    "fit",
    "predict",
    "SynthSpec",
    "generate_synthetic",
    "TransferPlan",
    "load_checkpoint",
    "prefix_plans",
    "save_checkpoint",
    "transfer_parameters",
]
