"""Exception types shared across the package."""


class InvalidInput(ValueError):
    pass


class ShapeError(ValueError):
    pass


class NumericsError(ArithmeticError):
    pass


class ParseError(ValueError):
    """Malformed input file; ``location`` names the offending line or byte."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class FormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass
