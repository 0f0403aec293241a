"""Exception hierarchy shared by all engines and loaders."""


class KrakenError(Exception):
    """Base class for every error raised by kraken_sim."""


class InvalidEncoding(KrakenError, ValueError):
    pass


class OutOfBounds(KrakenError, IndexError):
    pass


class MemoryBudgetExceeded(KrakenError):
    pass


class ChannelMismatch(KrakenError, ValueError):
    pass


class UnsupportedShape(KrakenError, ValueError):
    pass


class DegenerateInput(KrakenError, ValueError):
    """A model input would lead to a division by zero or an empty workload."""


class DegenerateWorkload(DegenerateInput):
    pass


class DegenerateActivity(DegenerateInput):
    pass


class DegenerateThroughput(DegenerateInput):
    pass


class InvalidRange(KrakenError, ValueError):
    pass


class InvalidDims(KrakenError, ValueError):
    pass


class ParseError(KrakenError, ValueError):
    def __init__(self, message, *, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ": ".join([", ".join(where)]) + ": " if where else ""
        super().__init__(prefix + message)


class SchemaViolation(ParseError):
    pass


class UnsortedStream(KrakenError, ValueError):
    pass
