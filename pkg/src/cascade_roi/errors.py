"""Exception types raised across the package."""


class CascadeError(Exception):
    """Base class for every error raised by cascade_roi."""


# geometry ------------------------------------------------------------------


class GridMismatch(CascadeError, ValueError):
    def __init__(self, axis, values):
        self.axis = axis
        self.values = values
        super().__init__(f"grid dims differ on axis {axis}: {values[0]} vs {values[1]}")


class SpacingMismatch(CascadeError, ValueError):
    def __init__(self, a, b):
        self.values = (tuple(a), tuple(b))
        super().__init__(f"voxel spacing differs: {tuple(a)} vs {tuple(b)}")


class ValueOutOfRange(CascadeError, ValueError):
    pass


class BoxMismatch(CascadeError, ValueError):
    pass


class UnknownLabel(CascadeError, KeyError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"no component with label {label}")

    def __str__(self):
        return self.args[0]


class TooManyComponents(CascadeError, OverflowError):
    pass


class EmptyLungMask(CascadeError, ValueError):
    pass


# uncertainty ---------------------------------------------------------------


class TooFewSamples(CascadeError, ValueError):
    pass


class NegativeUncertainty(CascadeError, ValueError):
    pass


# statistics ----------------------------------------------------------------


class LengthMismatch(CascadeError, ValueError):
    pass


class DegenerateVariance(CascadeError, ValueError):
    pass


class EmptyInput(CascadeError, ValueError):
    pass


# io ------------------------------------------------------------------------


class UnsupportedDatatype(CascadeError, ValueError):
    pass


class MalformedHeader(CascadeError, ValueError):
    pass


class DimensionUnsupported(CascadeError, ValueError):
    pass


class IoFailure(CascadeError, OSError):
    pass


class UnknownKey(CascadeError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown config key {name!r}")

    def __str__(self):
        return self.args[0]


class OutOfRange(CascadeError, ValueError):
    def __init__(self, key, value):
        self.key = key
        self.value = value
        super().__init__(f"config value out of range: {key} = {value!r}")


class ParseFailure(CascadeError, ValueError):
    def __init__(self, line, lineno=None):
        self.line = line
        self.lineno = lineno
        where = f" (line {lineno})" if lineno is not None else ""
        super().__init__(f"cannot parse config line{where}: {line!r}")


# pipeline ------------------------------------------------------------------


class SpecInfeasible(CascadeError, ValueError):
    pass


class MissingGroundTruth(CascadeError, ValueError):
    pass


class MissingRoiPrediction(CascadeError, ValueError):
    pass
