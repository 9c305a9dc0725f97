from typing import Any, Optional


class AppellError(Exception):
    """Base error; exit_code is what the CLI returns when it surfaces"""

    exit_code: int = 3

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class InvalidArgumentError(AppellError, ValueError):
    """A precondition of an operation was violated"""


class ConfigError(AppellError):
    """Run configuration or generating-function document is unusable"""


class DataIOError(AppellError):
    """An input file is missing or unreadable"""


class PrecisionError(AppellError):
    """Working precision is too low for the requested computation"""

    exit_code = 2


class NonConvergenceError(AppellError):
    """An iterative method ran out of budget; partial carries its last state"""

    exit_code = 2

    def __init__(self, detail: str, partial: Any = None):
        super().__init__(detail)
        self.partial = partial


class InsufficientSampleError(AppellError):
    """Too few zeros were selected to build a histogram"""

    exit_code = 1
