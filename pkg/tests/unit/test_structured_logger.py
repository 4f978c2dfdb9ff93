"""
Unit tests for structured logging
"""

import logging

import numpy as np

from src.utils.structured_logger import get_logger, log_call, log_duration


class TestStructuredLogger:
    """Test message formatting"""

    def test_plain_message(self, caplog):
        """Messages without context are unchanged"""
        caplog.set_level(logging.INFO)
        get_logger("denet.test").info("hello")
        assert caplog.records[-1].getMessage() == "hello"

    def test_context_block(self, caplog):
        """Keyword fields are appended as JSON"""
        caplog.set_level(logging.INFO)
        get_logger("denet.test").info("epoch finished", epoch=3, loss=np.float64(1.5))
        assert caplog.records[-1].getMessage() == 'epoch finished | {"epoch": 3, "loss": 1.5}'

    def test_with_context(self, caplog):
        """Bound context is merged into every message"""
        caplog.set_level(logging.INFO)
        log = get_logger("denet.test").with_context(variant="denet")
        log.warning("slow", seconds=2)
        record = caplog.records[-1]
        assert record.levelno == logging.WARNING
        assert record.getMessage() == 'slow | {"variant": "denet", "seconds": 2}'

    def test_large_arrays_summarized(self, caplog):
        """Big arrays are logged by shape"""
        caplog.set_level(logging.INFO)
        get_logger("denet.test").info("shape", value=np.zeros((3, 4)))
        assert "ndarray(3, 4)" in caplog.records[-1].getMessage()

    def test_debug_suppressed(self, caplog):
        """Debug messages are dropped above DEBUG"""
        caplog.set_level(logging.INFO, logger="denet.quiet")
        get_logger("denet.quiet").debug("hidden")
        assert not [r for r in caplog.records if r.name == "denet.quiet"]


class TestHelpers:
    """Test timing and call logging"""

    def test_log_duration(self, caplog):
        """The block's wall time is logged"""
        caplog.set_level(logging.INFO)
        with log_duration("corpus", get_logger("denet.test"), entries=4):
            pass
        message = caplog.records[-1].getMessage()
        assert message.startswith("corpus finished | ")
        assert '"entries": 4' in message

    def test_log_call(self, caplog):
        """Calls and results are logged at the requested level"""
        caplog.set_level(logging.INFO)

        @log_call("INFO")
        def add(a, b):
            return a + b

        assert add(2, 3) == 5
        messages = [r.getMessage() for r in caplog.records]
        assert any(m.startswith("Calling add") for m in messages)
        assert any(m.startswith("add returned") and '"result": "5"' in m for m in messages)
