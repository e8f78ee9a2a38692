class MeshStyleError(Exception):
    """Base class for data errors raised by this package."""


class FormatError(MeshStyleError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class EmptyMeshError(MeshStyleError, ValueError):
    pass


class LabelError(MeshStyleError, ValueError):
    pass


class NumericalAbort(MeshStyleError, FloatingPointError):
    """A loss went non-finite; ``trace`` holds whatever was recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
