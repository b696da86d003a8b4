from __future__ import annotations

import logging
from pathlib import Path

from gaussfestoon.log_setup import LOGGER_NAME, build_logger, reset_logger


def test_build_logger_writes_run_log(tmp_path: Path) -> None:
    reset_logger()
    try:
        logger = build_logger(tmp_path / "logs")
        logger.info("hello from the test")
        for handler in logger.handlers:
            handler.flush()

        assert logger.name == LOGGER_NAME
        assert logger.propagate is False
        assert "hello from the test" in (tmp_path / "logs" / "run.log").read_text(encoding="utf-8")
        assert build_logger(tmp_path / "elsewhere") is logger
        assert len(logger.handlers) == 1
    finally:
        reset_logger()


def test_build_logger_falls_back_to_stderr() -> None:
    reset_logger()
    try:
        logger = build_logger(None)

        assert len(logger.handlers) == 1
        assert type(logger.handlers[0]) is logging.StreamHandler
    finally:
        reset_logger()
