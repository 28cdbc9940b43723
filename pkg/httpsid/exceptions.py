class HttpsIdError(Exception):
    """Base class of every error raised on purpose by httpsid"""


class CaptureFormatError(HttpsIdError, ValueError):
    pass


class TLSParseError(HttpsIdError, ValueError):
    pass


class SchemaMismatchError(HttpsIdError, ValueError):
    pass


class LabelError(HttpsIdError, ValueError):
    pass


class TrainingError(HttpsIdError, ValueError):
    pass


class ModelFormatError(HttpsIdError, ValueError):
    pass


class ConfigError(HttpsIdError, ValueError):
    pass


class DatasetFormatError(HttpsIdError, ValueError):
    """Malformed dataset file, located by path, line and column when known"""

    def __init__(self, msg: str, path=None, line: int | None = None, column: str | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = [str(p) for p in (path,) if p is not None]
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column '{column}'")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
