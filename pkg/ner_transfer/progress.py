"""
Progress Display
================

Console banners and summaries for training runs, transfers and experiment
grids.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Sequence

from .output_formatter import format_table, format_value, read_csv_rows
from .transfer import TransferReport


def print_run_header(title: str, detail: str = "") -> None:
    """Print a formatted header for a command or run."""
    print("\n" + "=" * 70)
    print(f"  {title}")
    if detail:
        print(f"  {detail}")
    print("=" * 70)
    print()


def print_training_report(report: Mapping[str, Any], wall_time: float) -> None:
    print(
        f"\nTraining stopped ({report['stop_reason']}) after {report['epochs_run']} epochs "
        f"in {wall_time:.1f}s; best dev F1 {report['best_dev_f1']:.4f} at epoch {report['best_epoch']}"
    )


def print_transfer_report(report: TransferReport) -> None:
    print(f"\nTransfer plan: {', '.join(report.plan['layers']) or 'none'} (label policy {report.plan['label_policy']})")
    rows = [{"layer": name, "outcome": outcome} for name, outcome in report.layers.items()]
    print(format_table(rows, ["layer", "outcome"]))
    print(
        f"token rows: {report.token_rows_transferred} transferred, {report.token_rows_reinitialized} reinitialized; "
        f"char rows: {report.char_rows_transferred} transferred, {report.char_rows_reinitialized} reinitialized; "
        f"label layers: {report.label_layers}"
    )


def count_completed_runs(csv_path: Path) -> tuple[int, int]:
    """
    Count successful and total rows in an experiment CSV.

    Returns:
        (ok_count, total_count)
    """
    if not csv_path.exists():
        return 0, 0
    rows = read_csv_rows(csv_path)
    return sum(1 for row in rows if row.get("status") == "ok"), len(rows)


def print_grid_progress(done: int, total: int, cell: Dict[str, Any], status: str, wall_time: float) -> None:
    label = ", ".join(f"{k}={format_value(v)}" for k, v in cell.items())
    marker = "✅" if status == "ok" else "❌"
    print(f"[{done}/{total}] {marker} {label} ({wall_time:.1f}s)")


def print_resume_status(csv_path: Path, pending: int) -> None:
    ok, total = count_completed_runs(csv_path)
    if total:
        print(f"Resuming: {total} runs already in {csv_path.name} ({ok} ok), {pending} to go")


def print_experiment_summary(title: str, rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> None:
    separator = "━" * 70
    print(f"\n{separator}")
    print(f"📊 {title}")
    print(f"{separator}\n")
    print(format_table(rows, columns))
    print()
