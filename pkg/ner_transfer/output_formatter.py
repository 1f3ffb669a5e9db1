"""
Output Formatting
=================

Key=value metric blocks, CSV rows and console tables.
"""

import csv
import io
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from tabulate import tabulate

from .evaluation import MetricReport, PrfScores


def format_value(value: Any) -> str:
    """Stable text for result files: fixed 6-digit floats, empty for None/NaN."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6f}"
    return str(value)


def format_fraction(fraction: float) -> str:
    return f"{fraction:g}"


def format_key_value_block(values: Mapping[str, Any]) -> str:
    return "".join(f"{key}={format_value(value)}\n" for key, value in values.items())


def _prf_fields(prefix: str, scores: PrfScores) -> Dict[str, Any]:
    return {f"{prefix}_{key}": value for key, value in scores.to_dict().items()}


def metric_report_fields(report: MetricReport) -> Dict[str, Any]:
    """Flat, ordered view of a MetricReport."""
    fields: Dict[str, Any] = {}
    fields.update(_prf_fields("entity", report.entity))
    fields.update(_prf_fields("binary", report.binary))
    fields["token_accuracy"] = report.token_accuracy
    fields["num_sentences"] = report.num_sentences
    fields["num_tokens"] = report.num_tokens
    return fields


def csv_line(values: Sequence[Any]) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerow([format_value(v) for v in values])
    return buffer.getvalue()


def append_csv_row(path: Union[str, Path], columns: Sequence[str], values: Mapping[str, Any]) -> None:
    """Append one row, writing the header first when the file is new or empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as f:
        if new_file:
            f.write(csv_line(columns))
        f.write(csv_line([values.get(c) for c in columns]))
        f.flush()
        os.fsync(f.fileno())


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    """Write a whole CSV atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = csv_line(columns) + "".join(csv_line([row.get(c) for c in columns]) for row in rows)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_csv_rows(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def format_table(rows: Sequence[Mapping[str, Any]], columns: Sequence[str], tablefmt: str = "simple") -> str:
    data = [[format_value(row.get(c)) for c in columns] for row in rows]
    return tabulate(data, headers=list(columns), tablefmt=tablefmt)
