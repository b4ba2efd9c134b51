"""Exception types shared across the package.

Every error carries a ``module`` attribute naming the subsystem it belongs
to, which the CLI uses to prefix its error messages and pick exit codes.
"""


class LdsslError(Exception):
    """Base class for all package errors."""

    module = "ldssl"


class ConfigError(LdsslError):
    module = "cli"


# -- geometry ----------------------------------------------------------


class ZeroNormVector(LdsslError):
    """A vector with (near-)zero Euclidean norm has no direction."""

    module = "geometry"


class InsufficientAnchors(LdsslError):
    """Fewer labeled latents than the requested anchor count k."""

    module = "geometry"


# -- network -----------------------------------------------------------


class ShapeMismatch(LdsslError):
    module = "network"


class NoCachedForward(LdsslError):
    """backward() called without a preceding forward() on this batch."""

    module = "network"


class NonFiniteGradient(LdsslError):
    module = "network"


# -- pairing -----------------------------------------------------------


class ClassTooSmall(LdsslError):
    """A class has too few labeled samples to draw a same-class partner."""

    module = "pairing"

    def __init__(self, label, count):
        super().__init__(
            f"class {label!r} has only {count} labeled sample(s); need at least 2"
        )
        self.label = label
        self.count = count


# -- training ----------------------------------------------------------


class DivergedTraining(LdsslError):
    module = "training"


# -- data --------------------------------------------------------------


class BadParam(LdsslError):
    module = "data"


class ParseError(LdsslError):
    """A CSV cell failed to parse. Line and column are 1-based."""

    module = "data"

    def __init__(self, line, column, detail=""):
        msg = f"line {line}, column {column}: {detail}" if detail else (
            f"line {line}, column {column}"
        )
        super().__init__(msg)
        self.line = line
        self.column = column


class UnknownLabelToken(LdsslError):
    module = "data"


class EmptyDataset(LdsslError):
    module = "data"


class TooFewSamples(LdsslError):
    module = "data"


# -- eval --------------------------------------------------------------


class LengthMismatch(LdsslError):
    module = "eval"


class EmptyInput(LdsslError):
    module = "eval"


class DegenerateCovariance(LdsslError):
    module = "eval"
