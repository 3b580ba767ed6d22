class ArticapError(Exception):
    """Base class for toolkit errors."""


class DataError(ArticapError, ValueError):
    """Malformed input data, schema violations, bad asset files."""


class ParameterError(DataError):
    """Parameter vector has the wrong shape or non-finite entries."""


class CoverageError(DataError):
    """Predictions do not cover every evaluated frame."""

    def __init__(self, gaps):
        self.gaps = list(gaps)
        lines = [f"{seq}: {why}" for seq, why in self.gaps]
        super().__init__("missing coverage:\n  " + "\n  ".join(lines))


class NumericalError(ArticapError, ArithmeticError):
    """A solve cannot proceed because the problem is degenerate."""


class DegenerateInputError(NumericalError):
    pass


class UnobservableError(NumericalError):
    pass


class TooFewMarkersError(NumericalError):
    pass
