"""CSV ingestion of (category, target) streams with mini-batch chunking.

File order is chronology and chronology is load-bearing for streaming
encoding, so batches preserve row order exactly and reads are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

__all__ = ["StreamConfig", "RawBatch", "ReadStats", "DataFormatError", "read_stream", "write_rows"]


class DataFormatError(ValueError):
    """Malformed input row; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class StreamConfig:
    source: str | Path
    batch_size: int = 3000
    category_column: str = "category"
    target_column: str = "target"
    delimiter: str = ","

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class RawBatch:
    """Up to batch_size consecutive rows, in file order."""

    index: int
    categories: list
    targets: np.ndarray
    start_row: int  # 0-based offset of the first row within the stream


@dataclass
class ReadStats:
    rows: int = 0
    skipped_missing_target: int = 0
    negative_targets: int = 0


def read_stream(config: StreamConfig, stats: ReadStats | None = None) -> Iterator[RawBatch]:
    """Yield batches of <= batch_size rows preserving file order.

    Rows with an empty target are skipped (counted in stats); a row with a
    non-numeric target or missing fields is an error carrying its line
    number. Negative targets are legal but counted, since the problem domain
    expects nonnegative values.
    """
    path = Path(config.source)
    stats = stats if stats is not None else ReadStats()
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=config.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            return
        try:
            cat_ix = header.index(config.category_column)
            tgt_ix = header.index(config.target_column)
        except ValueError:
            raise DataFormatError(
                1,
                f"header {header!r} lacks column "
                f"{config.category_column!r} or {config.target_column!r}",
            )

        index = 0
        start_row = 0
        categories: list = []
        targets: list = []
        for line_number, row in enumerate(reader, start=2):
            if len(row) <= max(cat_ix, tgt_ix):
                raise DataFormatError(line_number, f"expected >= {max(cat_ix, tgt_ix) + 1} fields, got {len(row)}")
            raw_target = row[tgt_ix].strip()
            if raw_target == "":
                stats.skipped_missing_target += 1
                continue
            try:
                target = float(raw_target)
            except ValueError:
                raise DataFormatError(line_number, f"target {raw_target!r} is not a number")
            if target < 0:
                stats.negative_targets += 1
            categories.append(row[cat_ix])
            targets.append(target)
            stats.rows += 1
            if len(categories) == config.batch_size:
                yield RawBatch(index, categories, np.asarray(targets), start_row)
                index += 1
                start_row += len(categories)
                categories, targets = [], []
        if categories:
            yield RawBatch(index, categories, np.asarray(targets), start_row)


def write_rows(path, rows, category_column="category", target_column="target", delimiter=","):
    """Write (category, target) pairs in the schema read_stream expects."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow([category_column, target_column])
        for category, target in rows:
            writer.writerow([category, repr(float(target))])
