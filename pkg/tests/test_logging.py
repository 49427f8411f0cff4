"""
Tests for log record tagging.
"""

from loguru import logger

from src.utils.logger import get_logger, run_context


def test_run_context_tags_records():
    runs = []
    sink = logger.add(lambda message: runs.append(message.record["extra"].get("run")), level="DEBUG")
    try:
        log = get_logger("tests")
        with run_context("mu1", "taylor"):
            log.info("inside")
        log.info("outside")
    finally:
        logger.remove(sink)
    assert runs == ["mu1/taylor", None]
