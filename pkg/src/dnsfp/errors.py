"""Exception hierarchy. Everything raised on bad input derives from DnsfpError."""


class DnsfpError(Exception):
    """Base class for data errors (CLI exit code 1)."""


class ParseError(DnsfpError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateTraceId(DnsfpError):
    pass


class UnreadableCapture(DnsfpError):
    pass


class NoMatchingTraffic(DnsfpError):
    pass


class MalformedTls(DnsfpError):
    pass


class ZeroGap(DnsfpError, ValueError):
    pass


class EmptySequence(DnsfpError):
    pass


class EmptyTraining(DnsfpError):
    pass


class DegenerateTraining(DnsfpError):
    pass


class VocabularyMismatch(DnsfpError):
    pass


class ClassTooSmall(DnsfpError):
    def __init__(self, label: str, count: int, k: int):
        super().__init__(f"class {label!r} has {count} traces, need >= {k}")
        self.label = label


class NoLabelOverlap(DnsfpError):
    pass


class InsufficientData(DnsfpError):
    pass


class NameTooLong(DnsfpError, ValueError):
    pass


class UnencodableBlock(DnsfpError, ValueError):
    pass


class WireFormatError(DnsfpError):
    pass
