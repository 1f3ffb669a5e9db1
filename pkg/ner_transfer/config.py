"""
Configuration Loading
=====================

Key=value config files, typed coercion into the package's dataclasses and
the spec files shipped with the package.

File format:

    # comment
    num_notes = 300
    hp.learning_rate = 0.01

A key may carry a section prefix (`hp.`, `synth.`, `experiment.`); a
prefixed key wins over the bare key for that section.
"""

import dataclasses
import logging
import typing
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple, Type, TypeVar, Union

from .errors import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

SPECS_DIR = Path(__file__).parent / "specs"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

T = TypeVar("T")


def parse_key_value_lines(lines: Iterable[str], path: Optional[Union[str, Path]] = None) -> Dict[str, str]:
    where = str(path) if path is not None else "<config>"
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:line {line_number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{where}:line {line_number}: empty key")
        if key in values:
            raise ConfigError(f"{where}:line {line_number}: duplicate key {key!r}")
        values[key] = value
    return values


def load_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_key_value_lines(f, path)


def list_packaged_specs() -> List[str]:
    return sorted(p.stem for p in SPECS_DIR.glob("*.cfg"))


def load_packaged_spec(name: str) -> Dict[str, str]:
    """Load a spec shipped in the package's specs/ directory by name."""
    spec_path = SPECS_DIR / f"{name}.cfg"
    if not spec_path.exists():
        raise ConfigError(f"unknown packaged spec {name!r}; available: {', '.join(list_packaged_specs())}")
    return load_key_value_file(spec_path)


def load_config(source: Union[str, Path]) -> Dict[str, str]:
    """A config file path, or the name of a packaged spec."""
    path = Path(source)
    if path.exists() or path.suffix:
        return load_key_value_file(path)
    return load_packaged_spec(str(source))


# ---------------------------------------------------------------------------
# Coercion
# ---------------------------------------------------------------------------


def coerce_value(text: str, annotation: Any, key: str) -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)

    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if text.lower() in ("", "none"):
            return None
        return coerce_value(text, inner[0], key)
    if origin in (tuple, Tuple):
        item_type = args[0] if args else str
        return tuple(coerce_value(part.strip(), item_type, key) for part in text.split(",") if part.strip())

    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is str:
            return text
        if annotation is Path:
            return Path(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {annotation.__name__}") from None
    raise ConfigError(f"{key}: not settable from a config file")


def dataclass_from_mapping(
    cls: Type[T], mapping: Dict[str, str], prefix: str, base: Optional[T] = None
) -> Tuple[T, Set[str]]:
    """
    Build `cls` (or update `base`) from the keys of `mapping` naming its
    fields, bare or as `<prefix>.<field>`.

    Returns:
        (instance, keys consumed)
    """
    hints = typing.get_type_hints(cls)
    values: Dict[str, Any] = {}
    consumed: Set[str] = set()
    for f in dataclasses.fields(cls):
        for key in (f.name, f"{prefix}.{f.name}"):
            if key in mapping:
                values[f.name] = coerce_value(mapping[key], hints[f.name], key)
                consumed.add(key)
    try:
        instance = dataclasses.replace(base, **values) if base is not None else cls(**values)
    except ContractViolation as e:
        raise ConfigError(f"invalid {prefix} settings: {e}") from None
    return instance, consumed


def reject_unknown_keys(mapping: Dict[str, str], consumed: Set[str]) -> None:
    unknown = sorted(set(mapping) - consumed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
