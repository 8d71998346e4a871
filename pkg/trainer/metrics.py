"""
Поток метрик: CSV с заголовком, строка на точку оценки
"""
import csv
import logging
from pathlib import Path
from typing import Optional

from shared.config import METRICS_HEADER
from shared.models import EpochRecord

logger = logging.getLogger(__name__)


class MetricsWriter:
    """Пишет EpochRecord инкрементально, с flush после каждой строки"""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file)
        self._writer.writerow(METRICS_HEADER)
        self._file.flush()
        self.rows = 0

    def write(self, record: EpochRecord):
        self._writer.writerow(record.csv_row())
        self._file.flush()
        self.rows += 1

    def close(self):
        if not self._file.closed:
            self._file.close()
            logger.debug(f"Metrics closed: {self.rows} rows in {self.path}")

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def read_metrics(path: Path) -> list:
    """Прочитать CSV метрик как список словарей (redundancy None при пустом поле)"""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        value: Optional[str] = row.get("redundancy")
        row["redundancy"] = float(value) if value else None
    return rows
