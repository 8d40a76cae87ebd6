"""Tests for furnace_control.bin.cli."""

from __future__ import annotations

from typing import TYPE_CHECKING
from unittest.mock import patch

import pytest

from furnace_control.bin.cli import VERBS, main

if TYPE_CHECKING:
    from pathlib import Path


def test_no_verb_prints_usage(capsys: pytest.CaptureFixture[str]) -> None:
    assert main([]) == 1
    out = capsys.readouterr().out
    assert out.startswith("usage: furnace <verb>")
    for verb in VERBS:
        assert f"  {verb}" in out


def test_help_succeeds(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["--help"]) == 0
    assert "verbs:" in capsys.readouterr().out


def test_unknown_verb(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["melt"]) == 1
    assert "ERROR: unknown verb 'melt'" in capsys.readouterr().err


def test_dispatches_the_remaining_arguments() -> None:
    with patch("furnace_control.bin.report.main", return_value=0) as report:
        assert main(["report", "trace.csv", "--out", "plots"]) == 0
    report.assert_called_once_with(["trace.csv", "--out", "plots"])


def test_verb_exit_status_is_returned(tmp_path: Path) -> None:
    assert main(["manage", "--store", str(tmp_path), "show"]) == 0
    assert main(["correlate", str(tmp_path / "missing.csv")]) == 2


@pytest.mark.parametrize("verb", sorted(VERBS))
def test_every_verb_has_help(verb: str) -> None:
    with pytest.raises(SystemExit) as info:
        main([verb, "--help"])
    assert info.value.code == 0
