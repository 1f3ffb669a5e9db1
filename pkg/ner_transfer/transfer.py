"""
Checkpoints and Transfer
========================

Binary checkpoints of a trained NerModel and initialization of a target
model from all or some of a source model's parameter groups.

Checkpoint layout (little-endian):

    b"NERTL" | u32 version
    str hyperparameters (JSON)
    u32 min_token_freq | list tokens | list chars | list labels | list singletons
    u32 block count, then per block:
        u8 layer id | u32 array count, then per array:
            str name | u32 ndim | u64 dims... | float64 data
    u64 checksum (blake2b-64 over everything before it)

Strings are u32-length-prefixed UTF-8; lists are a u32 count of strings.
"""

import hashlib
import io
import json
import logging
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Tuple, Union

import numpy as np

from .core_math import SeededRng
from .data import Vocabulary
from .errors import (
    CheckpointIntegrityError,
    CheckpointVersionError,
    ConfigError,
    ContractViolation,
    LabelMismatchError,
    require,
)
from .layers import PAD_ID, UNK_ID
from .network import Hyperparameters, LayerId, NerModel

logger = logging.getLogger(__name__)

MAGIC = b"NERTL"
FORMAT_VERSION = 1

OVERLAP_REMAP = "overlap_remap"
REQUIRE_IDENTICAL = "require_identical"
REINIT_LABEL_LAYERS = "reinit_label_layers"
LABEL_POLICIES = (REQUIRE_IDENTICAL, REINIT_LABEL_LAYERS)

TRANSFERRED = "transferred"
REINITIALIZED = "reinitialized"
PARTIAL = "partially transferred"

LABEL_LAYERS = (LayerId.Dense, LayerId.SeqOpt)

Blocks = Dict[LayerId, Dict[str, np.ndarray]]


# ---------------------------------------------------------------------------
# Checkpoint encoding
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self):
        self.buffer = io.BytesIO()

    def u8(self, value: int) -> None:
        self.buffer.write(struct.pack("<B", value))

    def u32(self, value: int) -> None:
        self.buffer.write(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self.buffer.write(struct.pack("<Q", value))

    def string(self, value: str) -> None:
        data = value.encode("utf-8")
        self.u32(len(data))
        self.buffer.write(data)

    def strings(self, values: Iterable[str]) -> None:
        values = list(values)
        self.u32(len(values))
        for value in values:
            self.string(value)

    def array(self, name: str, array: np.ndarray) -> None:
        self.string(name)
        self.u32(array.ndim)
        for dim in array.shape:
            self.u64(dim)
        self.buffer.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointIntegrityError("checkpoint is truncated")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointIntegrityError("invalid UTF-8 in checkpoint string") from None

    def strings(self) -> List[str]:
        return [self.string() for _ in range(self.u32())]

    def array(self) -> Tuple[str, np.ndarray]:
        name = self.string()
        shape = tuple(self.u64() for _ in range(self.u32()))
        count = int(np.prod(shape)) if shape else 1
        array = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
        return name, array


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


@dataclass
class Checkpoint:
    """Self-describing, immutable snapshot of a model."""

    format_version: int
    hyperparameters: Hyperparameters
    vocabulary: Vocabulary
    blocks: Blocks
    checksum: int = 0

    @classmethod
    def from_model(cls, model: NerModel) -> "Checkpoint":
        blocks: Blocks = {}
        for layer, name, array in model.named_arrays():
            frozen = array.copy()
            frozen.flags.writeable = False
            blocks.setdefault(layer, {})[name] = frozen
        checkpoint = cls(FORMAT_VERSION, model.hyperparameters, model.vocabulary, blocks)
        checkpoint.checksum = _checksum(checkpoint.to_bytes()[:-8])
        return checkpoint

    def to_bytes(self) -> bytes:
        w = _Writer()
        w.buffer.write(MAGIC)
        w.u32(self.format_version)
        w.string(json.dumps(self.hyperparameters.to_dict(), sort_keys=True))
        v = self.vocabulary
        w.u32(v.min_token_freq)
        w.strings(v.id_to_token)
        w.strings(v.id_to_char)
        w.strings(v.id_to_label)
        w.strings(sorted(v.singletons))
        w.u32(len(self.blocks))
        for layer in LayerId:
            arrays = self.blocks[layer]
            w.u8(int(layer))
            w.u32(len(arrays))
            for name, array in arrays.items():
                w.array(name, array)
        body = w.buffer.getvalue()
        return body + struct.pack("<Q", _checksum(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < len(MAGIC) + 12 or not data.startswith(MAGIC):
            raise CheckpointIntegrityError("not a checkpoint file (bad magic header)")
        body, trailer = data[:-8], data[-8:]
        stored = struct.unpack("<Q", trailer)[0]
        if _checksum(body) != stored:
            raise CheckpointIntegrityError("checkpoint checksum mismatch")

        r = _Reader(body)
        r.take(len(MAGIC))
        version = r.u32()
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(version, FORMAT_VERSION)
        try:
            hyperparameters = Hyperparameters(**json.loads(r.string()))
        except (TypeError, ValueError) as e:
            raise CheckpointIntegrityError(f"bad hyperparameter record: {e}") from None
        min_freq = r.u32()
        tokens, chars, labels, singletons = r.strings(), r.strings(), r.strings(), r.strings()
        vocabulary = Vocabulary(tokens, chars, labels, min_freq, singletons)

        blocks: Blocks = {}
        for _ in range(r.u32()):
            try:
                layer = LayerId(r.u8())
            except ValueError:
                raise CheckpointIntegrityError("unknown layer id in checkpoint") from None
            arrays = {}
            for _ in range(r.u32()):
                name, array = r.array()
                array.flags.writeable = False
                arrays[name] = array
            blocks[layer] = arrays
        if r.offset != len(body):
            raise CheckpointIntegrityError("trailing bytes after the last parameter block")
        if set(blocks) != set(LayerId):
            raise CheckpointIntegrityError("checkpoint does not hold all six parameter blocks")
        return cls(version, hyperparameters, vocabulary, blocks, stored)

    def to_model(self) -> NerModel:
        """A new model holding copies of the checkpoint's parameters."""
        model = NerModel.initialize(self.vocabulary, self.hyperparameters, SeededRng(0))
        for layer, name, array in model.named_arrays():
            stored = self.blocks[layer].get(name)
            if stored is None or stored.shape != array.shape:
                raise CheckpointIntegrityError(f"{layer.name}.{name}: block missing or inconsistent with its vocabulary")
            array[...] = stored
        return model


def write_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint.to_bytes())
    os.replace(tmp, path)
    logger.debug("saved checkpoint %s", path)


def save_checkpoint(model: NerModel, path: Union[str, Path]) -> Checkpoint:
    """Write `model` to `path` atomically; returns the in-memory checkpoint."""
    checkpoint = Checkpoint.from_model(model)
    write_checkpoint(checkpoint, path)
    return checkpoint


def load_checkpoint(path: Union[str, Path]) -> Tuple[NerModel, Checkpoint]:
    checkpoint = Checkpoint.from_bytes(Path(path).read_bytes())
    return checkpoint.to_model(), checkpoint


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferPlan:
    layers: FrozenSet[LayerId] = frozenset()
    vocab_policy: str = OVERLAP_REMAP
    label_policy: str = REQUIRE_IDENTICAL

    def __post_init__(self):
        object.__setattr__(self, "layers", frozenset(LayerId(l) for l in self.layers))
        require(self.vocab_policy == OVERLAP_REMAP, f"unsupported vocab policy {self.vocab_policy!r}")
        require(self.label_policy in LABEL_POLICIES, f"label policy must be one of {LABEL_POLICIES}")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def is_prefix(self) -> bool:
        return self.layers == frozenset(LayerId(k) for k in range(1, self.num_layers + 1))

    def describe(self) -> str:
        if not self.layers:
            return "none"
        return "+".join(layer.name for layer in sorted(self.layers))

    def to_dict(self) -> Dict:
        return {
            "layers": [layer.name for layer in sorted(self.layers)],
            "vocab_policy": self.vocab_policy,
            "label_policy": self.label_policy,
        }


def prefix_plans(label_policy: str = REQUIRE_IDENTICAL) -> List[TransferPlan]:
    """Plans for 0..6 layers, bottommost first."""
    return [
        TransferPlan(frozenset(LayerId(k) for k in range(1, n + 1)), label_policy=label_policy)
        for n in range(len(LayerId) + 1)
    ]


def parse_plan(text: str, label_policy: str = REQUIRE_IDENTICAL) -> TransferPlan:
    """
    Parse a --plan value: "none", "all", a prefix length 0-6, or a comma
    separated list of layer names/ids.
    """
    text = (text or "").strip()
    if text.lower() in ("", "none"):
        return TransferPlan(label_policy=label_policy)
    if text.lower() == "all":
        return prefix_plans(label_policy)[-1]
    if text.isdigit():
        n = int(text)
        if not 0 <= n <= len(LayerId):
            raise ConfigError(f"plan prefix must be 0-{len(LayerId)}, got {n}")
        return prefix_plans(label_policy)[n]
    try:
        layers = frozenset(LayerId.parse(part) for part in text.split(",") if part.strip())
    except ContractViolation as e:
        raise ConfigError(str(e)) from None
    return TransferPlan(layers, label_policy=label_policy)


@dataclass
class TransferReport:
    plan: Dict
    layers: Dict[str, str] = field(default_factory=dict)
    token_rows_transferred: int = 0
    token_rows_reinitialized: int = 0
    char_rows_transferred: int = 0
    char_rows_reinitialized: int = 0
    label_layers: str = "not planned"

    def to_dict(self) -> Dict:
        return asdict(self)


def _remap_rows(
    source_table: np.ndarray, source_ids: Dict[str, int], target_table: np.ndarray, target_surfaces: List[str]
) -> int:
    copied = 0
    for target_id, surface in enumerate(target_surfaces):
        source_id = source_ids.get(surface)
        if source_id is not None:
            target_table[target_id] = source_table[source_id]
            copied += 1
    return copied


def _outcome(copied: int, total: int) -> str:
    if copied == 0:
        return REINITIALIZED
    return TRANSFERRED if copied == total else PARTIAL


def _copy_block(source: Checkpoint, target: NerModel, layer: LayerId) -> None:
    target_arrays = target.params[layer].named_arrays()
    source_arrays = source.blocks[layer]
    require(
        set(target_arrays) == set(source_arrays),
        f"{layer.name}: source and target differ in structure (directionality?)",
    )
    for name, array in target_arrays.items():
        require(
            source_arrays[name].shape == array.shape,
            f"{layer.name}.{name}: source shape {source_arrays[name].shape} != target shape {array.shape}",
        )
    for name, array in target_arrays.items():
        np.copyto(array, source_arrays[name])


def transfer_parameters(source: Checkpoint, target: NerModel, plan: TransferPlan) -> TransferReport:
    """
    Initialize the planned layers of `target` from `source`.

    Embedding rows are matched by surface form (token or character) and
    copied; unmatched rows keep their fresh initialization. LSTM blocks are
    copied whole. Dense and SeqOpt are copied only when the ordered label
    vocabularies are identical, else handled per the plan's label policy.
    The source is never modified.
    """
    sv, tv = source.vocabulary, target.vocabulary
    report = TransferReport(plan=plan.to_dict())
    report.token_rows_reinitialized = tv.num_tokens
    report.char_rows_reinitialized = tv.num_chars
    for layer in LayerId:
        report.layers[layer.name] = REINITIALIZED

    labels_identical = sv.id_to_label == tv.id_to_label
    if any(layer in plan.layers for layer in LABEL_LAYERS) and not labels_identical:
        if plan.label_policy == REQUIRE_IDENTICAL:
            raise LabelMismatchError(
                f"label vocabularies differ (source {sv.id_to_label}, target {tv.id_to_label}); "
                f"use label policy {REINIT_LABEL_LAYERS} to reinitialize Dense and SeqOpt"
            )

    for layer in sorted(plan.layers):
        if layer == LayerId.TokenEmb:
            source_table = source.blocks[layer]["table"]
            require(
                source_table.shape[1] == target.token_emb.dim,
                f"TokenEmb: source dim {source_table.shape[1]} != target dim {target.token_emb.dim}",
            )
            copied = _remap_rows(source_table, sv.token_to_id, target.token_emb.table, tv.id_to_token)
            report.token_rows_transferred = copied
            report.token_rows_reinitialized = tv.num_tokens - copied
            report.layers[layer.name] = _outcome(copied, tv.num_tokens)
        elif layer == LayerId.CharEmb:
            source_table = source.blocks[layer]["table"]
            require(
                source_table.shape[1] == target.char_emb.dim,
                f"CharEmb: source dim {source_table.shape[1]} != target dim {target.char_emb.dim}",
            )
            copied = _remap_rows(source_table, sv.char_to_id, target.char_emb.table, tv.id_to_char)
            report.char_rows_transferred = copied
            report.char_rows_reinitialized = tv.num_chars - copied
            report.layers[layer.name] = _outcome(copied, tv.num_chars)
        elif layer in LABEL_LAYERS:
            if labels_identical:
                _copy_block(source, target, layer)
                report.layers[layer.name] = TRANSFERRED
        else:
            _copy_block(source, target, layer)
            report.layers[layer.name] = TRANSFERRED

    if any(layer in plan.layers for layer in LABEL_LAYERS):
        report.label_layers = TRANSFERRED if labels_identical else REINITIALIZED
    logger.info("transfer %s: %s", plan.describe(), report.layers)
    return report


def load_pretrained_embeddings(model: NerModel, path: Union[str, Path]) -> int:
    """
    Copy vectors from a whitespace-separated text file (`token v1 ... vd`,
    optional word2vec `count dim` header) into the token embedding rows of
    tokens the model knows.

    Returns:
        number of rows loaded
    """
    table = model.token_emb.table
    loaded = 0
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if line_number == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            token, values = parts[0], parts[1:]
            if len(values) != model.token_emb.dim:
                raise ContractViolation(
                    f"{path}:{line_number}: vector has {len(values)} dims, model uses {model.token_emb.dim}"
                )
            token_id = model.vocabulary.token_to_id.get(token)
            if token_id is None or token_id in (PAD_ID, UNK_ID):
                continue
            table[token_id] = np.asarray(values, dtype=np.float64)
            loaded += 1
    logger.info("loaded %d pretrained token vectors from %s", loaded, path)
    return loaded
