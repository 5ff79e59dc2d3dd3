"""Tests for error classification, retry logic and address parsing."""

import pytest

from app.infra.config import parse_address
from app.infra.error_handler import (
    ConflictError,
    ErrorCategory,
    ParseError,
    ProtocolError,
    TransportError,
    ValidationError,
    classify_error,
    error_code,
    retry_with_backoff,
)


class TestClassifyError:
    """Categories and retryability."""

    def test_pipeline_errors(self):
        assert classify_error(ConflictError("dup")) == (ErrorCategory.CONFLICT, False, None)
        assert classify_error(ParseError("bad", line=3))[0] == ErrorCategory.VALIDATION
        assert classify_error(TransportError("down", retry_after=1.5)) == (ErrorCategory.NETWORK, True, 1.5)

    def test_builtin_network_errors(self):
        assert classify_error(ConnectionRefusedError())[:2] == (ErrorCategory.NETWORK, True)
        assert classify_error(TimeoutError())[:2] == (ErrorCategory.NETWORK, True)
        assert classify_error(RuntimeError("connection reset by peer"))[:2] == (ErrorCategory.NETWORK, True)

    def test_unknown(self):
        assert classify_error(KeyError("x")) == (ErrorCategory.UNKNOWN, False, None)

    def test_parse_error_message(self):
        error = ParseError("non-numeric value", line=4)
        assert error.line == 4
        assert error.message == "line 4: non-numeric value"
        assert error_code(error) == 2


class TestRetryWithBackoff:
    """Retries with an injected sleep."""

    def test_success_after_transient_failures(self):
        calls, sleeps, retries = [], [], []

        def flaky():
            calls.append(1)
            if len(calls) < 3:
                raise TransportError("refused")
            return "ok"

        result = retry_with_backoff(
            flaky, max_retries=3, initial_delay=0.1, sleep=sleeps.append,
            on_retry=lambda e, attempt: retries.append(attempt),
        )
        assert result == "ok"
        assert len(calls) == 3
        assert retries == [1, 2]
        assert 0.1 <= sleeps[0] <= 0.11
        assert 0.2 <= sleeps[1] <= 0.22

    def test_gives_up(self):
        sleeps = []

        def down():
            raise TransportError("refused")

        with pytest.raises(TransportError):
            retry_with_backoff(down, max_retries=2, sleep=sleeps.append)
        assert len(sleeps) == 2

    def test_not_retryable(self):
        sleeps = []

        def invalid():
            raise ValidationError("bad input")

        with pytest.raises(ValidationError):
            retry_with_backoff(invalid, sleep=sleeps.append)
        assert sleeps == []

    def test_retry_after_capped(self):
        sleeps = []
        attempts = iter([TransportError("busy", retry_after=30.0), None])

        def busy():
            error = next(attempts)
            if error:
                raise error
            return 1

        assert retry_with_backoff(busy, max_delay=2.0, sleep=sleeps.append) == 1
        assert 2.0 <= sleeps[0] <= 2.2

    def test_protocol_errors_are_final(self):
        def broken():
            raise ProtocolError("bad magic")

        with pytest.raises(ProtocolError):
            retry_with_backoff(broken, sleep=lambda _: pytest.fail("slept"))


class TestParseAddress:
    @pytest.mark.parametrize(
        "value, expected",
        [
            ("127.0.0.1:7420", ("127.0.0.1", 7420)),
            (":9000", ("127.0.0.1", 9000)),
            ("example.org", ("example.org", 7420)),
            ("", ("127.0.0.1", 7420)),
        ],
    )
    def test_parse(self, value, expected):
        assert parse_address(value) == expected
