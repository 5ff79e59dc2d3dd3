"""Error hierarchy, wire error codes and retry logic."""

import random
import time
from enum import Enum
from typing import Callable, Dict, Optional, Tuple, Type, Any


class ErrorCategory(str, Enum):
    """Categories of errors for better handling."""
    NETWORK = "network"  # Connection issues, timeouts
    VALIDATION = "validation"  # Input validation errors
    CODING = "coding"  # Error-correcting code failures
    CRYPTO = "crypto"  # Key, parameter or noise problems in the HE layer
    CONFLICT = "conflict"  # Insert-once violations
    NOT_FOUND = "not_found"  # Missing stored records
    REJECTED = "rejected"  # Requests refused by server policy
    PROTOCOL = "protocol"  # Malformed frames or payloads
    BUSINESS_LOGIC = "business_logic"  # Invariant violations
    UNKNOWN = "unknown"  # Unknown errors


class HeadcountError(Exception):
    """Base exception for all pipeline errors."""
    category: ErrorCategory = ErrorCategory.UNKNOWN

    def __init__(self, message: str, retryable: bool = False, retry_after: Optional[float] = None):
        self.message = message
        self.retryable = retryable
        self.retry_after = retry_after
        super().__init__(message)


class ValidationError(HeadcountError):
    """Precondition or parameter validation failure."""
    category = ErrorCategory.VALIDATION


class ParseError(ValidationError):
    """Malformed input file; carries the offending line number."""
    line: Optional[int] = None

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CalibrationError(ValidationError):
    """Noise calibration cannot reach the requested flip ratio."""


class ParameterMismatchError(ValidationError):
    """Objects built under different parameters were combined."""


class CodeSelectionError(HeadcountError):
    """No BCH code reaches the requested correction capability."""
    category = ErrorCategory.CODING
    max_t: Optional[int] = None

    def __init__(self, message: str, max_t: Optional[int] = None):
        self.max_t = max_t
        super().__init__(message)


class DecodeFailure(HeadcountError):
    """Received word is not within decoding radius of any codeword."""
    category = ErrorCategory.CODING


class KeyMismatchError(HeadcountError):
    """Ciphertext was produced under a different key pair."""
    category = ErrorCategory.CRYPTO


class DecryptionError(HeadcountError):
    """Ciphertext cannot be decrypted to a trustworthy value."""
    category = ErrorCategory.CRYPTO


class UnsupportedParamsError(HeadcountError):
    """HE parameter combination the backend cannot realize."""
    category = ErrorCategory.CRYPTO


class ConflictError(HeadcountError):
    """Duplicate insert or replayed epoch."""
    category = ErrorCategory.CONFLICT


class NotFoundError(HeadcountError):
    """Requested record does not exist."""
    category = ErrorCategory.NOT_FOUND


class RejectedError(HeadcountError):
    """Request refused, e.g. unregistered parameter digest."""
    category = ErrorCategory.REJECTED


class ProtocolError(HeadcountError):
    """Malformed frame or payload."""
    category = ErrorCategory.PROTOCOL


class TransportError(HeadcountError):
    """Network-related errors (connection, timeout)."""
    category = ErrorCategory.NETWORK

    def __init__(self, message: str, retry_after: Optional[float] = None):
        super().__init__(message, retryable=True, retry_after=retry_after)


class InvariantViolation(HeadcountError):
    """A checked pipeline invariant did not hold."""
    category = ErrorCategory.BUSINESS_LOGIC


# Stable codes carried in Error frames. Order matters: codes are part of the wire format.
ERROR_CODES: Dict[int, Type[HeadcountError]] = {
    1: ValidationError,
    2: ParseError,
    3: CalibrationError,
    4: ParameterMismatchError,
    5: CodeSelectionError,
    6: DecodeFailure,
    7: KeyMismatchError,
    8: DecryptionError,
    9: UnsupportedParamsError,
    10: ConflictError,
    11: NotFoundError,
    12: RejectedError,
    13: ProtocolError,
    14: TransportError,
    15: InvariantViolation,
}
INTERNAL_ERROR_CODE = 0


def error_code(error: Exception) -> int:
    """Return the wire code of an exception (0 for anything unexpected)."""
    for code, cls in ERROR_CODES.items():
        if type(error) is cls:
            return code
    for code, cls in ERROR_CODES.items():
        if isinstance(error, cls):
            return code
    return INTERNAL_ERROR_CODE


def error_from_code(code: int, message: str) -> HeadcountError:
    """Rebuild the exception a peer reported in an Error frame."""
    cls = ERROR_CODES.get(code)
    if cls is None:
        return HeadcountError(f"server error: {message}")
    error = cls.__new__(cls)
    HeadcountError.__init__(error, message, retryable=cls is TransportError)
    return error


def classify_error(error: Exception) -> Tuple[ErrorCategory, bool, Optional[float]]:
    """
    Classify an error into a category and determine if it's retryable.

    Args:
        error: The exception to classify

    Returns:
        Tuple of (category, retryable, retry_after_seconds)
    """
    if isinstance(error, HeadcountError):
        return error.category, error.retryable, error.retry_after

    if isinstance(error, (ConnectionError, TimeoutError)):
        return ErrorCategory.NETWORK, True, None

    error_str = str(error).lower()
    if any(keyword in error_str for keyword in ['connection', 'timeout', 'refused', 'reset']):
        return ErrorCategory.NETWORK, True, None

    return ErrorCategory.UNKNOWN, False, None


def retry_with_backoff(
    func: Callable[[], Any],
    max_retries: int = 3,
    initial_delay: float = 0.2,
    max_delay: float = 5.0,
    exponential_base: float = 2.0,
    on_retry: Optional[Callable[[Exception, int], None]] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Any:
    """
    Retry a function with exponential backoff.

    Args:
        func: Zero-argument callable to retry
        max_retries: Maximum number of retry attempts
        initial_delay: Initial delay in seconds
        max_delay: Maximum delay in seconds
        exponential_base: Base for exponential backoff
        on_retry: Optional callback called on each retry (exception, attempt_number)
        sleep: Sleep function (replaceable in tests)

    Returns:
        Result of the function call

    Raises:
        Last exception if all retries fail or the error is not retryable
    """
    for attempt in range(max_retries + 1):
        try:
            return func()
        except Exception as e:
            _, retryable, retry_after = classify_error(e)
            if not retryable or attempt >= max_retries:
                raise

            if retry_after:
                delay = min(retry_after, max_delay)
            else:
                delay = min(initial_delay * (exponential_base ** attempt), max_delay)

            # Add jitter to avoid thundering herd
            delay += random.uniform(0, delay * 0.1)

            if on_retry:
                on_retry(e, attempt + 1)
            sleep(delay)
