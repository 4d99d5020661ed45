"""Exception types shared across the library."""


class HestonSvvError(Exception):
    """Base class for all library errors."""


class InvalidParameters(HestonSvvError, ValueError):
    """Model or configuration parameters violate their invariants."""


class DegenerateFrequency(HestonSvvError):
    """A transform denominator fell below the configured floor."""


class ContourViolation(HestonSvvError, ValueError):
    """Transform contour placed outside its region of validity."""


class QuadratureDivergence(HestonSvvError):
    """Panel contributions failed to decay below tolerance before truncation."""


class QuadratureFailure(HestonSvvError):
    """Tail truncation of a quadrature left too much mass behind."""


class InfeasibleVix(HestonSvvError, ValueError):
    """Observed VIX level inconsistent with (kappa, m): vix^2 < m*(1-theta)."""


class OutOfBounds(HestonSvvError, ValueError):
    """Price outside static no-arbitrage bounds for implied-vol inversion.

    ``bound`` is "lower" or "upper".
    """

    def __init__(self, message: str, bound: str):
        super().__init__(message)
        self.bound = bound


class PricingFailure(HestonSvvError):
    """A pricing call failed inside a larger computation (quote identified)."""

    def __init__(self, message: str, quote=None):
        super().__init__(message)
        self.quote = quote


class ParseError(HestonSvvError, ValueError):
    """Malformed market-data input; carries line number and column name."""

    def __init__(self, message: str, line: int, column: str):
        super().__init__(message)
        self.line = line
        self.column = column


class NoStraddle(HestonSvvError):
    """No strike of an expiry has both a call and a put quote."""


class NonConvergence(HestonSvvError):
    """Optimizer hit its iteration budget; partial result attached."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class UnresolvedFastScale(HestonSvvError, ValueError):
    """Simulation step count too coarse to resolve the fast factor."""
