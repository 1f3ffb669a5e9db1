import pytest

from conftest import make_corpus

from ner_transfer.core_math import SeededRng
from ner_transfer.data import (
    INFER,
    TRAIN,
    Corpus,
    Document,
    Sentence,
    TokenAnn,
    build_vocabulary,
    canonical_label_order,
    corpus_stats,
    encode_sentence,
    format_column_text,
    parse_column_lines,
    read_column_file,
    schema_labels,
    split_documents,
    subsample_size,
    subsample_train,
    write_column_file,
)
from ner_transfer.errors import ContractViolation, ParseError
from ner_transfer.layers import PAD_ID, UNK_ID

SAMPLE = "-DOCSTART- O\n\nJohn B-NAME\nsmiled O\n\nHe O\nleft O\n\n-DOCSTART- O\n\nCall O\n911 B-PHONE\n\n"


def test_parse_column_text():
    corpus = parse_column_lines(SAMPLE.splitlines(keepends=True))
    assert len(corpus.documents) == 2
    assert corpus.num_sentences == 3
    first = corpus.documents[0].sentences[0]
    assert first.surfaces == ["John", "smiled"]
    assert first.labels == ["B-NAME", "O"]
    assert corpus.label_inventory == ("O", "B-NAME", "B-PHONE")


def test_column_text_round_trip_is_a_fixpoint():
    corpus = parse_column_lines(SAMPLE.splitlines(keepends=True))
    assert format_column_text(corpus) == SAMPLE


def test_generated_corpus_file_round_trip(tmp_path, tiny_corpora):
    corpus = tiny_corpora.source.merged()
    first, second = tmp_path / "a.txt", tmp_path / "b.txt"
    write_column_file(corpus, first)
    write_column_file(read_column_file(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_parse_error_names_the_line():
    lines = ["-DOCSTART- O\n", "\n", "John\n"]
    with pytest.raises(ParseError) as info:
        parse_column_lines(lines)
    assert info.value.line_number == 3
    assert "line 3" in str(info.value)


def test_malformed_label_is_rejected():
    with pytest.raises(ParseError):
        parse_column_lines(["John B-name\n"])


def test_token_surface_rules():
    with pytest.raises(ContractViolation):
        TokenAnn("two words", "O")
    with pytest.raises(ContractViolation):
        Sentence(())


def test_canonical_label_order():
    assert canonical_label_order(["I-NAME", "B-DATE", "O", "B-NAME"]) == ("O", "B-DATE", "B-NAME", "I-NAME")
    assert schema_labels(["NAME", "AGE"]) == ("O", "B-AGE", "I-AGE", "B-NAME", "I-NAME")


def test_label_ids_do_not_depend_on_first_seen_order():
    phone_first = make_corpus([("Call", "O"), ("555", "B-PHONE")], [("Dr.", "O"), ("Lee", "B-NAME")])
    name_first = make_corpus([("Dr.", "O"), ("Lee", "B-NAME")], [("Call", "O"), ("555", "B-PHONE")])
    a, b = build_vocabulary(phone_first), build_vocabulary(name_first)
    assert a.id_to_label == b.id_to_label == ["O", "B-NAME", "B-PHONE"]


def test_corpus_inventory_must_cover_labels():
    with pytest.raises(ContractViolation):
        make_corpus([("John", "B-NAME")], inventory=("O",))


def test_note_ids_must_be_unique():
    doc = Document("n", (Sentence.from_pairs([("a", "O")]),))
    with pytest.raises(ContractViolation):
        Corpus((doc, doc))


def test_build_vocabulary(toy_corpus):
    v = build_vocabulary(toy_corpus)
    assert v.id_to_token[PAD_ID] == v.PAD and v.id_to_token[UNK_ID] == v.UNK
    assert v.id_to_token[2:5] == ["Patient", "John", "Smith"]
    assert v.id_to_label[0] == "O"
    assert v.id_to_label == ["O"] + list(toy_corpus.label_inventory[1:])
    assert "Patient" in v.singletons
    assert v.char_id("P") >= 2


def test_min_token_freq_drops_rare_tokens():
    corpus = make_corpus([("a", "O"), ("a", "O"), ("b", "O")])
    v = build_vocabulary(corpus, min_token_freq=2)
    assert v.token_id("a") >= 2
    assert v.token_id("b") == UNK_ID


def test_encode_infer_maps_unknowns_to_unk(toy_corpus):
    v = build_vocabulary(toy_corpus)
    encoded = encode_sentence(v, Sentence.from_pairs([("Zork", "O"), ("John", "B-NAME")]), INFER)
    assert encoded.token_ids[0] == UNK_ID
    assert encoded.char_ids[0][0] == UNK_ID  # 'Z' never seen
    assert list(encoded.label_ids) == [v.label_id("O"), v.label_id("B-NAME")]


def test_encode_infer_with_unknown_label_leaves_labels_empty(toy_corpus):
    v = build_vocabulary(toy_corpus)
    encoded = encode_sentence(v, Sentence.from_pairs([("John", "B-AGE")]), INFER)
    assert encoded.label_ids is None
    with pytest.raises(ContractViolation):
        encode_sentence(v, Sentence.from_pairs([("John", "B-AGE")]), TRAIN, SeededRng(0))


def test_singleton_unk_replacement_rate():
    corpus = make_corpus([("rare", "O"), ("common", "O"), ("common", "O")])
    v = build_vocabulary(corpus)
    sentence = Sentence.from_pairs([("rare", "O"), ("common", "O")])
    rng = SeededRng(123)
    trials = 10_000
    replaced = 0
    for _ in range(trials):
        encoded = encode_sentence(v, sentence, TRAIN, rng, unk_replace_prob=0.5)
        replaced += encoded.token_ids[0] == UNK_ID
        assert encoded.token_ids[1] == v.token_id("common")
    assert abs(replaced / trials - 0.5) <= 0.02


def naive_stats(corpus):
    surfaces, tokens, instances, phi_tokens = set(), 0, 0, 0
    for sentence in corpus.sentences():
        previous = "O"
        for token in sentence.tokens:
            surfaces.add(token.surface)
            tokens += 1
            if token.label != "O":
                phi_tokens += 1
                kind = token.label[2:]
                if token.label.startswith("B-") or previous == "O" or previous[2:] != kind:
                    instances += 1
            previous = token.label
    return len(surfaces), len(corpus.documents), tokens, instances, phi_tokens


def test_corpus_stats_match_recount(tiny_corpora):
    for splits in (tiny_corpora.source, tiny_corpora.target):
        corpus = splits.merged()
        stats = corpus_stats(corpus)
        assert (
            stats.vocabulary_size, stats.num_notes, stats.num_tokens, stats.num_phi_instances, stats.num_phi_tokens
        ) == naive_stats(corpus)


def test_split_documents_sixty_twenty_twenty(tiny_corpora):
    docs = tiny_corpora.source.merged().documents
    splits = split_documents(docs, tiny_corpora.source.train.label_inventory)
    assert [len(c.documents) for _, c in splits.items()] == [6, 2, 2]


def test_subsample_size():
    assert subsample_size(60, 0.05) == 5
    assert subsample_size(60, 0.6) == 60
    assert subsample_size(6, 0.01) == 1
    with pytest.raises(ContractViolation):
        subsample_size(60, 0.7)


def test_subsamples_are_nested_and_ordered(tiny_corpora):
    train = tiny_corpora.source.train
    small = subsample_train(train, 0.2, seed=4)
    large = subsample_train(train, 0.4, seed=4)
    full = subsample_train(train, 0.6, seed=4)
    small_ids = [d.note_id for d in small.documents]
    large_ids = [d.note_id for d in large.documents]
    assert set(small_ids) <= set(large_ids)
    assert small_ids == sorted(small_ids)
    assert full.documents == train.documents
    assert small.label_inventory == train.label_inventory
    assert [d.note_id for d in subsample_train(train, 0.2, seed=4).documents] == small_ids


def test_stats_count_orphan_inside_as_instance():
    corpus = make_corpus([("x", "I-DATE"), ("y", "O"), ("z", "B-NAME"), ("w", "I-DATE")])
    stats = corpus_stats(corpus)
    assert stats.num_phi_instances == 3
    assert stats.num_phi_tokens == 3
