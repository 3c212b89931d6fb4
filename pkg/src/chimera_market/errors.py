"""Exception hierarchy shared by every pipeline stage."""


class ChimeraMarketError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(ChimeraMarketError, ValueError):
    exit_code = 1


class DataError(ChimeraMarketError, ValueError):
    exit_code = 2


class NumericalError(ChimeraMarketError, ArithmeticError):
    exit_code = 3


class StageError(ChimeraMarketError):
    """Wraps a failure with the stage name and, when known, the window index."""

    def __init__(self, stage, cause, window_index=None):
        self.stage = stage
        self.cause = cause
        self.window_index = window_index
        where = f"stage '{stage}'"
        if window_index is not None:
            where += f", window {window_index}"
        super().__init__(f"{where}: {cause}")

    @property
    def exit_code(self):
        return getattr(self.cause, "exit_code", 2)
