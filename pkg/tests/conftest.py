"""Shared fixtures: tiny hyperparameters, toy corpora and small models."""

import numpy as np
import pytest

from ner_transfer.core_math import SeededRng
from ner_transfer.data import Corpus, Document, Sentence, build_vocabulary
from ner_transfer.harness import ExperimentConfig
from ner_transfer.network import Hyperparameters, NerModel
from ner_transfer.synthetic import SynthSpec, generate_synthetic


def make_corpus(*sentences, inventory=()):
    """One document per sentence; each sentence is a list of (surface, label) pairs."""
    docs = tuple(Document(f"doc-{k}", (Sentence.from_pairs(pairs),)) for k, pairs in enumerate(sentences))
    return Corpus(docs, tuple(inventory))


@pytest.fixture
def tiny_hp():
    return Hyperparameters(
        token_emb_dim=4,
        char_emb_dim=3,
        char_lstm_hidden=3,
        token_lstm_hidden=4,
        learning_rate=0.05,
        max_epochs=3,
        patience=2,
    )


@pytest.fixture
def toy_corpus():
    return make_corpus(
        [("Patient", "O"), ("John", "B-NAME"), ("Smith", "I-NAME"), ("seen", "O")],
        [("Call", "O"), ("555-1234", "B-PHONE"), ("today", "O")],
        [("Seen", "O"), ("on", "O"), ("03/14", "B-DATE"), ("by", "O"), ("Dr.", "O"), ("Lee", "B-NAME")],
    )


@pytest.fixture
def tiny_synth():
    return SynthSpec(num_notes=10, target_num_notes=10, min_sentences=1, max_sentences=2, lexicon_size=5, seed=3)


@pytest.fixture
def tiny_corpora(tiny_synth):
    return generate_synthetic(tiny_synth)


@pytest.fixture
def tiny_model(toy_corpus, tiny_hp):
    return NerModel.initialize(build_vocabulary(toy_corpus), tiny_hp, SeededRng(7))


@pytest.fixture
def tiny_experiment(tmp_path, tiny_synth, tiny_hp):
    return ExperimentConfig(
        seeds=(1,),
        fractions=(0.3, 0.6),
        hyperparameters=Hyperparameters(
            token_emb_dim=4, char_emb_dim=3, char_lstm_hidden=3, token_lstm_hidden=4, max_epochs=2, patience=1
        ),
        synth=tiny_synth,
        output_dir=tmp_path / "results",
    )


def params_equal(a: NerModel, b: NerModel) -> bool:
    return all(np.array_equal(x, y) for (_, _, x), (_, _, y) in zip(a.named_arrays(), b.named_arrays()))
