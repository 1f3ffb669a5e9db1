from dataclasses import replace

import pytest

from ner_transfer.config import ConfigError
from ner_transfer.core_math import SeededRng
from ner_transfer.data import OFFICIAL_TRAIN_FRACTION, format_column_text, schema_labels
from ner_transfer.errors import ContractViolation
from ner_transfer.synthetic import (
    SynthSpec,
    build_lexicons,
    fill_template,
    generate_synthetic,
    shift_lexicons,
    template_slots,
)


def test_generation_is_deterministic(tiny_synth):
    a, b = generate_synthetic(tiny_synth), generate_synthetic(tiny_synth)
    for side in ("source", "target"):
        assert format_column_text(getattr(a, side).merged()) == format_column_text(getattr(b, side).merged())
    assert a.target_lexicons == b.target_lexicons


def test_seed_changes_the_corpus(tiny_synth):
    a = generate_synthetic(tiny_synth)
    b = generate_synthetic(replace(tiny_synth, seed=tiny_synth.seed + 1))
    assert format_column_text(a.source.merged()) != format_column_text(b.source.merged())


def test_note_counts_and_splits(tiny_synth):
    corpora = generate_synthetic(replace(tiny_synth, num_notes=20, target_num_notes=10))
    assert [len(c.documents) for _, c in corpora.source.items()] == [12, 4, 4]
    assert [len(c.documents) for _, c in corpora.target.items()] == [6, 2, 2]
    assert OFFICIAL_TRAIN_FRACTION == 0.6


def test_labels_follow_the_schema(tiny_corpora, tiny_synth):
    allowed = set(schema_labels(tiny_synth.phi_types))
    for splits in (tiny_corpora.source, tiny_corpora.target):
        corpus = splits.merged()
        assert corpus.label_inventory == schema_labels(tiny_synth.phi_types)
        for labels in corpus.label_sequences():
            assert set(labels) <= allowed


def test_sentence_counts_respect_bounds(tiny_corpora, tiny_synth):
    for doc in tiny_corpora.source.merged().documents:
        assert tiny_synth.min_sentences <= len(doc.sentences) <= tiny_synth.max_sentences


def test_zero_shift_keeps_lexicons_and_templates(tiny_synth):
    corpora = generate_synthetic(replace(tiny_synth, lexical_shift=0.0))
    assert corpora.target_lexicons == corpora.source_lexicons
    assert corpora.target_templates == corpora.source_templates


def test_full_shift_replaces_every_entry(tiny_synth):
    corpora = generate_synthetic(replace(tiny_synth, lexical_shift=1.0))
    for phi, entries in corpora.source_lexicons.items():
        assert not set(entries) & set(corpora.target_lexicons[phi])
        assert len(corpora.target_lexicons[phi]) == len(entries)
    assert not set(corpora.target_templates) & set(corpora.source_templates)


def test_partial_shift_draws_fresh_entries(tiny_synth):
    source = build_lexicons(replace(tiny_synth, lexicon_size=20), SeededRng(0))
    shifted = shift_lexicons(source, 0.5, SeededRng(1))
    for phi, entries in source.items():
        kept = [a == b for a, b in zip(entries, shifted[phi])]
        fresh = [b for a, b in zip(entries, shifted[phi]) if a != b]
        assert 0 < sum(kept) < len(entries)
        assert not set(fresh) & set(entries)


def test_fill_template_labels_multiword_entries():
    sentence = fill_template("Seen by {NAME} today", {"NAME": ("Ann Lee",)}, SeededRng(0))
    assert sentence.surfaces == ["Seen", "by", "Ann", "Lee", "today"]
    assert sentence.labels == ["O", "O", "B-NAME", "I-NAME", "O"]
    assert template_slots("Seen by {NAME} on {DATE}") == ["NAME", "DATE"]


def test_custom_lexicons_are_used():
    spec = SynthSpec(
        num_notes=5, min_sentences=1, max_sentences=1, phi_types=("NAME",),
        lexicons={"NAME": ("Zed",)}, templates=("Seen by {NAME} .",), lexical_shift=1.0, seed=2,
    )
    corpora = generate_synthetic(spec)
    names = {t.surface for s in corpora.source.merged().sentences() for t in s.tokens if t.label != "O"}
    assert names == {"Zed"}
    # no generator for custom entries, so the target keeps them
    assert corpora.target_lexicons["NAME"] == ("Zed",)


def test_empty_lexicon_is_rejected():
    with pytest.raises(ContractViolation):
        SynthSpec(phi_types=("NAME",), lexicons={"NAME": ()})


def test_invalid_settings_are_rejected():
    with pytest.raises(ContractViolation):
        SynthSpec(lexical_shift=1.5)
    with pytest.raises(ContractViolation):
        SynthSpec(min_sentences=4, max_sentences=2)
    with pytest.raises(ContractViolation):
        SynthSpec(phi_types=("BLOODTYPE",))


def test_from_mapping_reads_prefixed_keys():
    spec, consumed = SynthSpec.from_mapping({"synth.num_notes": "12", "lexical_shift": "0.5", "phi_types": "NAME,DATE"})
    assert spec.num_notes == 12
    assert spec.lexical_shift == 0.5
    assert spec.phi_types == ("NAME", "DATE")
    assert {"synth.num_notes", "lexical_shift", "phi_types"} <= consumed


def test_from_mapping_wraps_invalid_values():
    with pytest.raises(ConfigError):
        SynthSpec.from_mapping({"synth.lexical_shift": "2.0"})
