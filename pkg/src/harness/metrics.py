"""
Append-only CSV writers for the training curve and its timing sidecar.

The metrics header is fixed by ``MetricsRow``'s field order; missing values
are written as empty cells and floats with ``repr`` so repeated runs with the
same seed produce byte-identical files.
"""
import csv
from pathlib import Path
from typing import Generic, TypeVar

from pydantic import BaseModel

from src.models.dto.metrics import MetricsRow, TimingRow

RowT = TypeVar("RowT", bound=BaseModel)

METRICS_HEADER = tuple(MetricsRow.model_fields)
TIMING_HEADER = tuple(TimingRow.model_fields)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class CsvRowWriter(Generic[RowT]):
    def __init__(self, path: str | Path, row_type: type[RowT]):
        self.path = Path(path)
        self.header = tuple(row_type.model_fields)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(self.header)
        self.rows = 0

    def write(self, row: RowT) -> None:
        data = row.model_dump()
        with self.path.open("a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow([_cell(data[key]) for key in self.header])
        self.rows += 1


class MetricsWriter(CsvRowWriter[MetricsRow]):
    def __init__(self, path: str | Path):
        super().__init__(path, MetricsRow)


class TimingWriter(CsvRowWriter[TimingRow]):
    def __init__(self, path: str | Path):
        super().__init__(path, TimingRow)


def read_metrics(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
