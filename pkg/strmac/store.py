"""Deterministic JSON, JSON Lines and CSV persistence for strmac artifacts."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from pathlib import Path
from typing import TYPE_CHECKING, Any

from .exceptions import ContractError
from .simenv import Scenario

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

_LOGGER = logging.getLogger(__name__)


def dumps_document(document: Any) -> str:
    """Render a JSON document byte-stably."""
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, document: Any) -> Path:
    """Write one JSON document, creating parent directories."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_document(document), encoding="utf-8")
    _LOGGER.debug("Wrote %s", path)
    return path


def read_json(path: Path) -> Any:
    """
    Read one JSON document.

    :raises ContractError: if the file is missing or not valid JSON
    """
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        message = f"Cannot read JSON from {path}: {err}"
        raise ContractError(message) from err


def write_jsonl(path: Path, records: Iterable[Any]) -> Path:
    """Write JSON Lines, one compact sorted-key record per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            handle.write("\n")
    _LOGGER.debug("Wrote %s", path)
    return path


def read_jsonl(path: Path) -> list[Any]:
    """
    Read JSON Lines, skipping blank lines.

    :raises ContractError: if the file is missing or a line is not valid JSON
    """
    try:
        with Path(path).open(encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]
    except (OSError, json.JSONDecodeError) as err:
        message = f"Cannot read JSON Lines from {path}: {err}"
        raise ContractError(message) from err


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV file with a header row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def save_dataset(path: Path, scenarios: Sequence[Scenario]) -> Path:
    """Write scenarios as a dataset file, one task per line."""
    return write_jsonl(path, (scenario.to_record() for scenario in scenarios))


def load_dataset(path: Path) -> list[Scenario]:
    """
    Load a dataset file.

    :raises ContractError: if the file is empty, malformed, mixes seeds,
        or repeats a task id
    """
    records = read_jsonl(path)
    if not records:
        message = f"Dataset {path} holds no tasks"
        raise ContractError(message)
    try:
        scenarios = [Scenario.from_record(record) for record in records]
    except (KeyError, TypeError) as err:
        message = f"Malformed dataset record in {path}: {err!r}"
        raise ContractError(message) from err
    if len({scenario.seed for scenario in scenarios}) != 1:
        message = f"Dataset {path} mixes environment seeds"
        raise ContractError(message)
    counts = Counter(scenario.task_id for scenario in scenarios)
    if repeated := sorted(task_id for task_id, count in counts.items() if count > 1):
        message = f"Dataset {path} repeats task ids: {', '.join(repeated)}"
        raise ContractError(message)
    return scenarios
