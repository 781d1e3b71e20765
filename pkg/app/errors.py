"""Exception hierarchy and the CLI exit code of each error family."""

from __future__ import annotations


class CurviqaError(Exception):
    exit_code = 1


class InputError(CurviqaError):
    exit_code = 2


class ConfigError(CurviqaError):
    exit_code = 3


class StatisticsError(CurviqaError):
    exit_code = 4


class ModelError(CurviqaError):
    exit_code = 5


class IoError(CurviqaError):
    exit_code = 6


class NoInputs(CurviqaError):
    exit_code = 7


class SelfTestFailed(CurviqaError):
    exit_code = 8


# Input validation
class DecodeError(InputError):
    pass


class TooSmall(InputError):
    pass


class ShapeError(InputError):
    pass


class SchemaError(InputError):
    pass


class MissingFile(InputError):
    pass


class ScoreOutOfRange(InputError):
    pass


class EmptyInput(InputError):
    pass


class LengthMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class InsufficientSamples(InputError):
    pass


class TooFewReferences(InputError):
    pass


class TooFewSamples(InputError):
    pass


class UnpairedRounds(InputError):
    pass


class NonFinite(InputError):
    pass


# Configuration
class InvalidParameter(ConfigError):
    pass


class RunMismatch(ConfigError):
    pass


# Statistics
class DegenerateScale(StatisticsError):
    pass


class DegenerateVariance(StatisticsError):
    pass


class AllZeroDifferences(StatisticsError):
    pass


class ScaleOutOfRange(StatisticsError):
    pass


# Models
class SingleClass(ModelError):
    pass


class UntrainedModel(ModelError):
    pass


class MissingClass(ModelError):
    pass


class VersionMismatch(ModelError):
    pass
