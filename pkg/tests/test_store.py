"""Tests for artifact persistence."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

from strmac.exceptions import ContractError
from strmac.simenv import EnvConfig, generate_tasks, rollout
from strmac.store import (
    dumps_document,
    load_dataset,
    read_json,
    read_jsonl,
    save_dataset,
    write_csv,
    write_json,
    write_jsonl,
)

if TYPE_CHECKING:
    from pathlib import Path

    from strmac.simenv import Scenario


def test_documents_are_key_sorted() -> None:
    """Key order in the input does not change the bytes."""
    assert dumps_document({"b": 1, "a": 2}) == dumps_document({"a": 2, "b": 1})
    assert dumps_document({}).endswith("\n")


def test_json_round_trip(tmp_path: Path) -> None:
    """Documents come back as written, parent directories are created."""
    path = write_json(tmp_path / "nested" / "doc.json", {"x": [1.5, 2]})
    assert read_json(path) == {"x": [1.5, 2]}


def test_jsonl_skips_blank_lines(tmp_path: Path) -> None:
    """One record per line; blank lines are ignored on read."""
    path = write_jsonl(tmp_path / "rows.jsonl", [{"a": 1}, {"a": 2}])
    path.write_text(path.read_text(encoding="utf-8") + "\n\n", encoding="utf-8")
    assert read_jsonl(path) == [{"a": 1}, {"a": 2}]


@pytest.mark.parametrize("content", ["{", "[1,\n"])
def test_malformed_json_is_a_contract_error(tmp_path: Path, content: str) -> None:
    """Unparseable files are reported with their path."""
    path = tmp_path / "bad.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ContractError, match="bad.json"):
        read_json(path)
    with pytest.raises(ContractError):
        read_jsonl(path)


def test_missing_file_is_a_contract_error(tmp_path: Path) -> None:
    """A path that does not exist cannot be read."""
    with pytest.raises(ContractError):
        read_json(tmp_path / "absent.json")


def test_csv_header_and_rows(tmp_path: Path) -> None:
    """The header comes first and rows follow in order."""
    rows = [(1, 0.5), (2, 0.25)]
    path = write_csv(tmp_path / "loss.csv", ("epoch", "mean_loss"), rows)
    assert path.read_text(encoding="utf-8") == "epoch,mean_loss\n1,0.5\n2,0.25\n"


def test_dataset_round_trip(tmp_path: Path, scenarios: list[Scenario]) -> None:
    """A saved dataset reloads into scenarios that roll out identically."""
    path = save_dataset(tmp_path / "dataset.jsonl", scenarios)
    loaded = load_dataset(path)

    assert [s.task_id for s in loaded] == [s.task_id for s in scenarios]
    for original, restored in zip(scenarios, loaded, strict=True):
        assert rollout(restored, [1, 3, 0]) == rollout(original, [1, 3, 0])


def test_dataset_bytes_are_stable(tmp_path: Path) -> None:
    """Generating and saving twice gives byte-identical files."""
    config = EnvConfig(seed=21)
    first = save_dataset(tmp_path / "a.jsonl", generate_tasks(config, 5))
    second = save_dataset(tmp_path / "b.jsonl", generate_tasks(config, 5))
    assert first.read_bytes() == second.read_bytes()


def test_empty_dataset_rejected(tmp_path: Path) -> None:
    """A dataset without tasks is an error."""
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ContractError):
        load_dataset(path)


def test_dataset_with_mixed_seeds_rejected(tmp_path: Path) -> None:
    """All tasks of a dataset share one environment seed."""
    mixed = [
        *generate_tasks(EnvConfig(seed=1), 1),
        *generate_tasks(EnvConfig(seed=2), 1),
    ]
    path = save_dataset(tmp_path / "mixed.jsonl", mixed)
    with pytest.raises(ContractError, match="mixes"):
        load_dataset(path)


def test_malformed_dataset_record(tmp_path: Path) -> None:
    """Records missing fields are reported, not crashed on."""
    path = write_jsonl(tmp_path / "broken.jsonl", [{"task_id": "task-00000"}])
    with pytest.raises(ContractError):
        load_dataset(path)


def test_dataset_with_repeated_task_ids_rejected(tmp_path: Path) -> None:
    """Task ids key searches and reports, so each must appear once."""
    tasks = generate_tasks(EnvConfig(seed=3), 2)
    path = save_dataset(tmp_path / "repeated.jsonl", [*tasks, tasks[0]])
    with pytest.raises(ContractError, match=tasks[0].task_id):
        load_dataset(path)


def test_dataset_with_single_class_task_rejected(tmp_path: Path) -> None:
    """A record with fewer than two classes fails to load."""
    record = generate_tasks(EnvConfig(seed=3), 1)[0].to_record()
    path = write_jsonl(tmp_path / "single.jsonl", [{**record, "n_classes": 1}])
    with pytest.raises(ContractError):
        load_dataset(path)
