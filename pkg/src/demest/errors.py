"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration and data-format problems
exit with 1, estimator/runtime failures with 2.
"""


class ConfigError(ValueError):
    """Invalid experiment configuration (bad field, missing key, bad value)."""


class DataFormatError(ValueError):
    """Malformed flight-log or data file; message carries the offending row."""


class DivergenceError(RuntimeError):
    """An estimator produced non-finite values."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        msg = f"estimator diverged at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ObserverDesignError(RuntimeError):
    """Observer synthesis failed (existence condition or self-check)."""
