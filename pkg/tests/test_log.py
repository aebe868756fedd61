"""Tests for run log placement and the file handler."""

import logging
from datetime import datetime

from s2sreid.log import LOGGER_NAME, log_dir, run_log_path, setup_logging

STAMP = datetime(2026, 3, 4, 5, 6, 7)


def test_log_dir_follows_xdg_data_home(tmp_path, monkeypatch):
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path))
    assert log_dir() == tmp_path / "s2sreid" / "logs"


def test_log_dir_defaults_to_local_share(tmp_path, monkeypatch):
    monkeypatch.delenv("XDG_DATA_HOME", raising=False)
    monkeypatch.setenv("HOME", str(tmp_path))
    assert log_dir() == tmp_path / ".local" / "share" / "s2sreid" / "logs"


def test_run_log_is_named_after_command(tmp_path, monkeypatch):
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path))
    path = run_log_path("train", STAMP)
    assert path == tmp_path / "s2sreid" / "logs" / "s2sreid-train-20260304-050607.log"
    assert path.parent.is_dir()


def test_runs_in_the_same_second_get_distinct_files(tmp_path, monkeypatch):
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path))
    first = run_log_path("eval", STAMP)
    first.touch()
    second = run_log_path("eval", STAMP)
    second.touch()
    third = run_log_path("eval", STAMP)
    assert second.name == "s2sreid-eval-20260304-050607-1.log"
    assert third.name == "s2sreid-eval-20260304-050607-2.log"


def test_file_handler_records_debug_messages(tmp_path):
    path = tmp_path / "run.log"
    logger = setup_logging(logging.WARNING, log_file=path)
    logger.debug("mined %d triplets", 12)
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
    text = path.read_text(encoding="utf-8")
    assert "mined 12 triplets" in text
    assert "DEBUG" in text
    assert logger.name == LOGGER_NAME
