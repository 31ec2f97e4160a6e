"""Incident dataset: CSV with a header row, ``#`` comment lines allowed."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path

from .bytecode import Selector
from .state import normalize_address

log = logging.getLogger(__name__)

REQUIRED = ("date", "name", "logic_address", "entry_selector", "block")
OPTIONAL = ("loss_usd", "storage_address", "expected_verdict")
VERDICTS = ("vulnerable", "not_detected")


class DatasetError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, slots=True)
class IncidentRecord:
    date: dt.date
    name: str
    logic_address: str
    storage_address: str
    entry_selector: Selector
    block: int
    loss_usd: float | None = None
    expected_verdict: str | None = None
    line: int = 0

    @property
    def sort_key(self) -> tuple:
        return (self.date, self.name, self.logic_address, self.entry_selector.hex, self.block)


def _record(row: dict[str, str], line: int) -> IncidentRecord:
    def field(name: str) -> str:
        return (row.get(name) or "").strip()

    try:
        date = dt.date.fromisoformat(field("date"))
    except ValueError:
        raise DatasetError(line, f"bad date {field('date')!r}") from None
    try:
        logic = normalize_address(field("logic_address"))
        storage = normalize_address(field("storage_address")) if field("storage_address") else logic
    except ValueError as exc:
        raise DatasetError(line, str(exc)) from None
    try:
        selector = Selector.parse(field("entry_selector"))
    except ValueError as exc:
        raise DatasetError(line, str(exc)) from None
    try:
        block = int(field("block"))
    except ValueError:
        raise DatasetError(line, f"bad block {field('block')!r}") from None
    if block <= 0:
        raise DatasetError(line, f"block must be positive, got {block}")
    loss = None
    if field("loss_usd"):
        try:
            loss = float(field("loss_usd"))
        except ValueError:
            raise DatasetError(line, f"bad loss_usd {field('loss_usd')!r}") from None
    expected = field("expected_verdict") or None
    if expected is not None and expected not in VERDICTS:
        raise DatasetError(line, f"expected_verdict must be one of {', '.join(VERDICTS)}, got {expected!r}")
    if not field("name"):
        raise DatasetError(line, "empty name")
    return IncidentRecord(date, field("name"), logic, storage, selector, block, loss, expected, line)


def parse_dataset(text: str) -> list[IncidentRecord]:
    """Parse dataset text; raises DatasetError naming the offending line."""
    header: list[str] | None = None
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cells = next(csv.reader([raw]))
        if header is None:
            header = [c.strip() for c in cells]
            missing = [c for c in REQUIRED if c not in header]
            if missing:
                raise DatasetError(lineno, f"header lacks column(s) {', '.join(missing)}")
            extra = [c for c in header if c not in REQUIRED + OPTIONAL]
            if extra:
                log.warning("ignoring unknown dataset column(s): %s", ", ".join(extra))
            continue
        if len(cells) != len(header):
            raise DatasetError(lineno, f"expected {len(header)} cells, got {len(cells)}")
        records.append(_record(dict(zip(header, cells)), lineno))
    return records


def load_dataset(path: str | Path) -> list[IncidentRecord]:
    return parse_dataset(Path(path).read_text())
