from typing import Optional


class FoliageEchoError(Exception):
    """Base class for simulator errors."""


class RejectedInputError(FoliageEchoError, ValueError):
    """An operation precondition was violated."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class UnknownSymbolError(RejectedInputError):
    def __init__(self, symbol: str):
        self.symbol = symbol
        super().__init__(f"unknown symbol {symbol!r}", field="symbol")


class ParseError(FoliageEchoError, ValueError):
    """Malformed text input; carries a 1-based line or a 0-based index."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        index: Optional[int] = None,
        source: Optional[str] = None,
    ):
        self.line = line
        self.index = index
        self.source = source
        where = []
        if source:
            where.append(source)
        if line is not None:
            where.append(f"line {line}")
        if index is not None:
            where.append(f"index {index}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class GeometryValidationError(FoliageEchoError, ValueError):
    """Reference geometry violates an invariant."""


class IntensityBoundError(FoliageEchoError, ValueError):
    """The intensity field exceeds its declared upper bound."""

    def __init__(self, value: float, lambda_max: float, location: tuple):
        self.value = value
        self.lambda_max = lambda_max
        self.location = location
        super().__init__(
            f"lambda({location[0]:.3f}, {location[1]:.3f}) = {value:.6g} "
            f"exceeds lambda_max = {lambda_max:.6g}"
        )


class SpectrumValidationError(FoliageEchoError, ValueError):
    """Spectrum is not Hermitian-symmetric."""


class ConfigError(FoliageEchoError, ValueError):
    """Run configuration problem; names the offending field path."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
