"""Exception hierarchy shared by every module."""


class NashNetError(Exception):
    """Base class for all package errors."""


class ConstantMatrix(NashNetError, ValueError):
    pass


class DegenerateGame(NashNetError, ValueError):
    pass


class EmptyEquilibriumList(NashNetError, ValueError):
    pass


class NotCoordinationGame(NashNetError, ValueError):
    pass


class TracingFailure(NashNetError, RuntimeError):
    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t


class NonFiniteUpdate(NashNetError, FloatingPointError):
    def __init__(self, message, step=None, game_index=None):
        super().__init__(message)
        self.step = step
        self.game_index = game_index


class InsufficientData(NashNetError, ValueError):
    pass


class EmptyTestSet(NashNetError, ValueError):
    pass


class ConfigError(NashNetError, ValueError):
    pass


class CheckpointFormatError(NashNetError, ValueError):
    pass


class ShapeMismatch(NashNetError, ValueError):
    pass


class ParseError(NashNetError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
