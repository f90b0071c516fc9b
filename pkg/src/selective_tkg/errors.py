"""Exception hierarchy shared by all modules."""


class TKGError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TKGError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ValidationError(TKGError):
    pass


class TemporalLeakError(TKGError):
    """Information from the query timestamp or later reached a scorer."""


class DumpLookupError(TKGError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class FormatError(TKGError):
    pass


class UndefinedMetricError(TKGError):
    pass


class CalibrationError(TKGError):
    pass


class BatchPredictionError(TKGError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"query #{index}: {cause}")
