"""Exception hierarchy.

Two families matter to callers: configuration problems (bad inputs, bad
shapes, missing columns) and numeric degeneracy (the data cannot support
the requested statistic). The CLI maps them to distinct exit codes.
"""


class RTInvertError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RTInvertError, ValueError):
    """Invalid user input or configuration."""


class NumericDegeneracy(RTInvertError, ArithmeticError):
    """The data make the requested statistic undefined or unusable."""


# algebra
class ZeroPolynomial(NumericDegeneracy):
    pass


class DimensionCap(ConfigError):
    pass


# design / cli
class UnequalBlocks(ConfigError):
    pass


class MissingColumn(ConfigError):
    pass


class NonNumericCell(ConfigError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric value {value!r} in column {column!r}, row {row}")


# stats
class DegenerateVariance(NumericDegeneracy):
    pass


class SingularAtZero(NumericDegeneracy):
    pass


class SingularSigma(NumericDegeneracy):
    pass


class SingularXX(NumericDegeneracy):
    pass


# invert
class IdenticalAbsLines(NumericDegeneracy):
    pass


class IdenticalStatistics(NumericDegeneracy):
    pass


class DenominatorZero(NumericDegeneracy):
    def __init__(self, g: int, beta: float):
        self.g = g
        self.beta = beta
        super().__init__(f"denominator of statistic {g} vanishes at beta={beta!r}")
