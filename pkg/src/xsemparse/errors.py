"""Exception hierarchy shared across the package."""


class XSemParseError(Exception):
    pass


class ShapeError(XSemParseError, ValueError):
    pass


class ParameterError(XSemParseError, ValueError):
    pass


class DegenerateInputError(XSemParseError, ValueError):
    pass


class ArityError(XSemParseError, ValueError):
    pass


class ConfigurationError(XSemParseError, ValueError):
    pass


class VocabularyError(XSemParseError, KeyError):
    pass


class DataError(XSemParseError, ValueError):
    pass


class DatasetError(DataError):
    pass


class CapacityError(DataError):
    pass


class CheckpointError(XSemParseError):
    pass


class LFParseError(XSemParseError, ValueError):
    """Malformed logical form. ``index`` is the offending token position."""

    def __init__(self, message, index):
        super().__init__(f"{message} (at token {index})")
        self.index = index


class ExecutionError(XSemParseError, ValueError):
    pass
