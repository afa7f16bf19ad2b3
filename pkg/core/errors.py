## core/errors.py

from typing import Iterable, Optional


class TextLocError(Exception):
    """Base class for every error raised by this package"""


class ShapeError(TextLocError):
    def __init__(self, primitive: str, *shapes: tuple):
        self.primitive = primitive
        self.shapes = shapes
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{primitive}: incompatible shapes {joined}")


class GradientError(TextLocError):
    def __init__(self, name: str, reason: str = "non-finite gradient"):
        self.name = name
        super().__init__(f"{reason} for parameter '{name}'")


class NonFiniteError(TextLocError):
    pass


class ConfigError(TextLocError):
    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


class MissingArtifactError(TextLocError):
    def __init__(self, path, hint: Optional[str] = None):
        self.path = str(path)
        self.hint = hint
        msg = f"missing artifact: {self.path}"
        if hint:
            msg += f" (run '{hint}' first)"
        super().__init__(msg)


class SceneError(TextLocError):
    pass


class InsufficientInstancesError(TextLocError):
    pass


class GroundingError(TextLocError):
    pass


class OracleConfigError(TextLocError):
    pass


class StreetLookupError(TextLocError):
    pass
