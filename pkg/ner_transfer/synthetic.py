"""
Synthetic De-identification Corpora
===================================

Seeded generator of annotated patient-note corpora standing in for
access-restricted clinical datasets.

Notes are built from carrier-sentence templates whose `{TYPE}` slots are
filled with lexicon entries; BIO tags are correct by construction. A source
and a target corpus share the PHI schema; the target resamples a
`lexical_shift` fraction of lexicon entries and templates.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .config import dataclass_from_mapping
from .core_math import SeededRng
from .data import CorpusSplits, Document, Sentence, TokenAnn, schema_labels, split_documents
from .errors import ContractViolation, require

logger = logging.getLogger(__name__)

DEFAULT_PHI_TYPES = ("NAME", "DATE", "PHONE", "ID", "ADDRESS", "HOSPITAL", "AGE")

SOURCE_TEMPLATES = (
    "Patient {NAME} was admitted to {HOSPITAL} on {DATE} .",
    "{NAME} is a {AGE} year old male with a history of hypertension .",
    "She is a {AGE} year old female presenting with chest pain .",
    "Seen in clinic on {DATE} by Dr. {NAME} .",
    "Medical record number {ID} .",
    "Contact the patient at {PHONE} for follow up .",
    "Home address is {ADDRESS} .",
    "Transferred from {HOSPITAL} for further management .",
    "Discharged home on {DATE} in stable condition .",
    "Follow up with Dr. {NAME} at {HOSPITAL} in two weeks .",
    "Daughter {NAME} can be reached at {PHONE} .",
    "Unit number {ID} , admission date {DATE} .",
    "Lives alone at {ADDRESS} and walks with a cane .",
    "Blood pressure was stable overnight .",
    "No acute distress on examination .",
    "Labs were within normal limits .",
)

ALTERNATE_TEMPLATES = (
    "Pt {NAME} presented to {HOSPITAL} ED {DATE} .",
    "{AGE} yo man , {NAME} , known HTN , DM2 .",
    "{AGE} yo woman w/ intermittent palpitations .",
    "Evaluated {DATE} , attending {NAME} .",
    "MRN : {ID}",
    "Callback number {PHONE} .",
    "Resides at {ADDRESS} with spouse .",
    "Outside records from {HOSPITAL} reviewed .",
    "D/C {DATE} , tolerating diet .",
    "RTC w/ {NAME} , {HOSPITAL} clinic , 2 wks .",
    "Son {NAME} , phone {PHONE} .",
    "Acct {ID} ; adm {DATE} .",
    "Address on file : {ADDRESS} .",
    "Vitals unremarkable today .",
    "Afebrile , comfortable .",
    "CBC and BMP unremarkable .",
)

_SYLLABLES = (
    "an", "bel", "cor", "da", "el", "fen", "gar", "hal", "is", "jor", "kel", "lin", "mar",
    "nor", "os", "per", "quin", "ros", "sal", "tor", "ul", "val", "wen", "yor", "zel",
)
_MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
_STREET_SUFFIXES = ("St", "Ave", "Rd", "Blvd", "Lane", "Court")
_HOSPITAL_SUFFIXES = ("Memorial Hospital", "General Hospital", "Medical Center", "Clinic", "Health")


def _name(rng: SeededRng) -> str:
    return rng.choice(_SYLLABLES).capitalize() + rng.choice(_SYLLABLES)


def _person(rng: SeededRng) -> str:
    if rng.random() < 0.3:
        return _name(rng)
    return f"{_name(rng)} {_name(rng)}"


def _date(rng: SeededRng) -> str:
    month, day, year = int(rng.integers(1, 13)), int(rng.integers(1, 29)), int(rng.integers(2050, 2100))
    if rng.random() < 0.5:
        return f"{month:02d}/{day:02d}/{year}"
    return f"{_MONTHS[month - 1]} {day}"


def _phone(rng: SeededRng) -> str:
    return f"({int(rng.integers(200, 1000))}) {int(rng.integers(200, 1000))}-{int(rng.integers(0, 10000)):04d}"


def _identifier(rng: SeededRng) -> str:
    return str(int(rng.integers(1_000_000, 10_000_000)))


def _address(rng: SeededRng) -> str:
    return f"{int(rng.integers(1, 1000))} {_name(rng)} {rng.choice(_STREET_SUFFIXES)}"


def _hospital(rng: SeededRng) -> str:
    return f"{_name(rng)} {rng.choice(_HOSPITAL_SUFFIXES)}"


def _age(rng: SeededRng) -> str:
    return str(int(rng.integers(1, 111)))


LEXICON_MAKERS: Dict[str, Callable[[SeededRng], str]] = {
    "NAME": _person,
    "DATE": _date,
    "PHONE": _phone,
    "ID": _identifier,
    "ADDRESS": _address,
    "HOSPITAL": _hospital,
    "AGE": _age,
}

MAX_DRAW_ATTEMPTS = 1000


@dataclass(frozen=True)
class SynthSpec:
    num_notes: int = 100
    target_num_notes: Optional[int] = None  # defaults to num_notes
    min_sentences: int = 3
    max_sentences: int = 6
    phi_types: Tuple[str, ...] = DEFAULT_PHI_TYPES
    lexicon_size: int = 40
    lexical_shift: float = 0.3
    seed: int = 1
    lexicons: Optional[Dict[str, Tuple[str, ...]]] = field(default=None, compare=False)
    templates: Tuple[str, ...] = SOURCE_TEMPLATES
    alternate_templates: Tuple[str, ...] = ALTERNATE_TEMPLATES

    def __post_init__(self):
        require(self.num_notes >= 1, "num_notes must be >= 1")
        require(self.target_notes >= 1, "target_num_notes must be >= 1")
        require(1 <= self.min_sentences <= self.max_sentences, "need 1 <= min_sentences <= max_sentences")
        require(0.0 <= self.lexical_shift <= 1.0, f"lexical_shift must be in [0, 1], got {self.lexical_shift}")
        require(len(self.phi_types) > 0, "at least one PHI type is required")
        require(self.lexicon_size >= 1, "lexicon_size must be >= 1")
        for phi in self.phi_types:
            require(
                phi in LEXICON_MAKERS or (self.lexicons is not None and phi in self.lexicons),
                f"no lexicon source for PHI type {phi}",
            )
        if self.lexicons is not None:
            for phi, entries in self.lexicons.items():
                if not entries:
                    raise ContractViolation(f"lexicon for {phi} is empty")

    @property
    def target_notes(self) -> int:
        return self.num_notes if self.target_num_notes is None else self.target_num_notes

    @classmethod
    def from_mapping(cls, mapping: Dict[str, str], base: Optional["SynthSpec"] = None) -> Tuple["SynthSpec", Set[str]]:
        return dataclass_from_mapping(cls, mapping, "synth", base)


Lexicons = Dict[str, Tuple[str, ...]]


@dataclass(frozen=True)
class SyntheticCorpora:
    source: CorpusSplits
    target: CorpusSplits
    source_lexicons: Lexicons
    target_lexicons: Lexicons
    source_templates: Tuple[str, ...]
    target_templates: Tuple[str, ...]


def template_slots(template: str) -> List[str]:
    return [tok[1:-1] for tok in template.split() if tok.startswith("{") and tok.endswith("}")]


def _usable_templates(templates: Sequence[str], phi_types: Sequence[str]) -> List[str]:
    allowed = set(phi_types)
    return [t for t in templates if set(template_slots(t)) <= allowed]


def build_lexicons(spec: SynthSpec, rng: SeededRng) -> Lexicons:
    """Source lexicons: the spec's own, else `lexicon_size` distinct generated entries per type."""
    lexicons: Lexicons = {}
    for phi in spec.phi_types:
        if spec.lexicons is not None and phi in spec.lexicons:
            lexicons[phi] = tuple(spec.lexicons[phi])
            continue
        maker = LEXICON_MAKERS[phi]
        type_rng = rng.fork(phi)
        entries: Dict[str, None] = {}
        attempts = 0
        while len(entries) < spec.lexicon_size:
            attempts += 1
            require(attempts <= MAX_DRAW_ATTEMPTS * spec.lexicon_size, f"cannot draw {spec.lexicon_size} distinct {phi} entries")
            entries.setdefault(maker(type_rng), None)
        lexicons[phi] = tuple(entries)
    return lexicons


def shift_lexicons(source: Lexicons, shift: float, rng: SeededRng) -> Lexicons:
    """
    Replace each entry with probability `shift` by a freshly generated entry
    that does not occur in the source lexicon of that type.
    """
    shifted: Lexicons = {}
    for phi, entries in source.items():
        type_rng = rng.fork(phi)
        taken = set(entries)
        out = []
        for entry in entries:
            if type_rng.random() >= shift:
                out.append(entry)
                continue
            maker = LEXICON_MAKERS.get(phi)
            if maker is None:
                out.append(entry)  # custom lexicons have no generator to resample from
                continue
            for _ in range(MAX_DRAW_ATTEMPTS):
                candidate = maker(type_rng)
                if candidate not in taken:
                    break
            else:
                raise ContractViolation(f"cannot draw a fresh {phi} entry")
            taken.add(candidate)
            out.append(candidate)
        shifted[phi] = tuple(out)
    return shifted


def shift_templates(templates: Sequence[str], alternates: Sequence[str], shift: float, rng: SeededRng) -> Tuple[str, ...]:
    """Swap template k for alternate k (cycling) with probability `shift`."""
    if not alternates:
        return tuple(templates)
    out = []
    for k, template in enumerate(templates):
        out.append(alternates[k % len(alternates)] if rng.random() < shift else template)
    return tuple(out)


def fill_template(template: str, lexicons: Lexicons, rng: SeededRng) -> Sentence:
    tokens: List[TokenAnn] = []
    for piece in template.split():
        if piece.startswith("{") and piece.endswith("}"):
            phi = piece[1:-1]
            words = rng.choice(lexicons[phi]).split()
            tokens.extend(TokenAnn(w, ("B-" if k == 0 else "I-") + phi) for k, w in enumerate(words))
        else:
            tokens.append(TokenAnn(piece, "O"))
    return Sentence(tuple(tokens))


def generate_notes(
    spec: SynthSpec, count: int, lexicons: Lexicons, templates: Sequence[str], rng: SeededRng, prefix: str
) -> List[Document]:
    usable = _usable_templates(templates, spec.phi_types)
    require(len(usable) > 0, "no carrier template fits the PHI schema")
    documents = []
    for n in range(count):
        num_sentences = int(rng.integers(spec.min_sentences, spec.max_sentences + 1))
        sentences = tuple(fill_template(rng.choice(usable), lexicons, rng) for _ in range(num_sentences))
        documents.append(Document(f"{prefix}-{n:05d}", sentences))
    return documents


def generate_synthetic(spec: SynthSpec) -> SyntheticCorpora:
    """
    Build the source and target corpora, each split 60/20/20 by note.

    Deterministic given `spec.seed`.
    """
    rng = SeededRng(spec.seed)
    labels = schema_labels(spec.phi_types)

    source_lex = build_lexicons(spec, rng.fork("lexicon/source"))
    target_lex = shift_lexicons(source_lex, spec.lexical_shift, rng.fork("lexicon/shift"))
    source_templates = tuple(spec.templates)
    target_templates = shift_templates(
        spec.templates, spec.alternate_templates, spec.lexical_shift, rng.fork("templates/shift")
    )

    source_docs = generate_notes(spec, spec.num_notes, source_lex, source_templates, rng.fork("notes/source"), "src")
    target_docs = generate_notes(spec, spec.target_notes, target_lex, target_templates, rng.fork("notes/target"), "tgt")
    logger.info(
        "generated %d source and %d target notes (lexical shift %.2f)", len(source_docs), len(target_docs), spec.lexical_shift
    )
    return SyntheticCorpora(
        source=split_documents(source_docs, labels),
        target=split_documents(target_docs, labels),
        source_lexicons=source_lex,
        target_lexicons=target_lex,
        source_templates=source_templates,
        target_templates=target_templates,
    )
