class InvalidParameter(Exception):
    """Raised when a model or run parameter is outside its valid range."""
    pass


class InvalidThreshold(InvalidParameter):
    """Raised when the activation threshold k is too small for a predictor."""
    pass


class InvalidProbability(InvalidParameter):
    """Raised when an edge probability falls outside [0, 1]."""
    pass


class InhibitionOnly(InvalidParameter):
    """Raised when every vertex is inhibitory and the threshold is undefined."""
    pass


class DegenerateBias(InvalidParameter):
    """Raised when the walk bias evaluates to 0/0."""
    pass


class TooLargeForEagerMode(InvalidParameter):
    """Raised when a materialized graph would exceed the edge budget."""
    pass


class RegimeError(Exception):
    """Raised when parameters fall outside the regime a predictor covers."""
    pass


class Subcritical(RegimeError):
    """Raised when the starting set is not above the threshold."""
    pass


class OutOfRegime(RegimeError):
    """Raised when a quantity the predictor needs lies outside its range."""
    pass


class NoEscape(RegimeError):
    """Raised when the expected trajectory stalls below the cut."""
    pass


class WrongRegime(RegimeError):
    """Raised when the chaotic regime is required but not present."""
    pass


class TargetUnreachable(RegimeError):
    """Raised when no starting factor reaches the requested final size.

    :param message: Human readable reason.
    :type message: str
    :param plateaus: Achievable final-size interval per plateau,
        defaults to None.
    :type plateaus: list, optional
    """

    def __init__(self, message: str, plateaus: list | None = None) -> None:
        """Initialize TargetUnreachable."""
        super().__init__(message)
        self.plateaus = plateaus or []


class OutputNotWritable(InvalidParameter):
    """Raised when an output path cannot be written."""
    pass
