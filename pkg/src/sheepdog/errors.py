"""Exceptions raised by the sheepdog library."""


class SheepdogError(Exception):
    """Base class for all library errors."""


class SingularSeparation(SheepdogError):
    """Two agents are closer than the minimum separation entering a 1/r^3 term."""


class DegenerateDenominator(SheepdogError):
    """A gain condition has a zero denominator at the initial state."""


class IllConditioned(SheepdogError):
    """The active-set linear algebra became numerically unreliable."""


class BoundsViolated(SheepdogError):
    """A state lies outside the bounds declared for the feasibility certificate."""


class DegenerateOffset(SheepdogError):
    """Unicycle offset distance must be strictly positive."""


class SamplerExhausted(SheepdogError):
    """Rejection sampling failed to produce a valid initial state."""


class ConfigError(SheepdogError):
    """Malformed scenario or batch file."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
