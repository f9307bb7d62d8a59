"""Error hierarchy. Value-type errors also subclass ValueError."""


class TueError(Exception):
    """Base class for every error raised by tue_lab."""


class ZeroVector(TueError, ValueError):
    pass


class NonFiniteValue(TueError, ValueError):
    pass


class BadDims(TueError, ValueError):
    pass


class BadConfig(TueError, ValueError):
    pass


class ShapeMismatch(TueError, ValueError):
    pass


class BadTemperature(TueError, ValueError):
    pass


class CollapsedCentroids(TueError, ValueError):
    """Two class centroids are closer than the epsilon floor."""

    def __init__(self, i: int, j: int, distance: float):
        super().__init__(f"centroids of classes {i} and {j} collapsed (distance={distance:.3e})")
        self.i = i
        self.j = j
        self.distance = distance


class EmptySourceClass(TueError, ValueError):
    pass


class ClassTooSmall(TueError, ValueError):
    pass


class UnknownMethod(TueError, ValueError):
    pass


class BadAssignment(TueError, ValueError):
    pass


class FormatError(TueError, ValueError):
    """A binary artifact has bad magic, version or length."""


class SchemaError(TueError, ValueError):
    """A config document violates the schema; `key_path` names the offending key."""

    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path
