# -*- coding: utf-8 -*-
"""
Exceptions raised by dynaweight.
"""


class DynaweightError(Exception):
    "Base class for all dynaweight errors"


# geometry

class DepthInvalid(DynaweightError):
    "Depth missing or not strictly positive"


class BehindCamera(DynaweightError):
    "Point has z <= 0 in the camera frame"


class DegenerateTranslation(DynaweightError):
    "Relative translation too small to define a fundamental matrix"


class DegenerateLine(DynaweightError):
    "Epipolar line with A = B = 0"


class InsufficientCorrespondences(DynaweightError):
    "Fewer than eight correspondences"


class NoConsensus(DynaweightError):
    "RANSAC consensus set smaller than eight"


# probabilities

class InvalidResidual(DynaweightError):
    "Negative squared residual"


class ThresholdUnavailable(DynaweightError):
    "No residuals to derive an adaptive threshold from"


# optimisation and evaluation

class PoseUnderconstrained(DynaweightError):
    "Too few weighted observations to solve for a pose"


class EvalUnderconstrained(DynaweightError):
    "Too few matched poses to evaluate a trajectory"


# input

class ConfigError(DynaweightError):
    "Bad configuration file or value"


class InputError(DynaweightError):
    """
    Unusable input file. `line` is the 1-based line number when known.
    """

    def __init__(self, reason, line=None):
        self.reason = reason
        self.line = line
        if line is None:
            message = reason
        else:
            message = "line %i: %s" % (line, reason)
        super(InputError, self).__init__(message)


class ParseError(InputError):
    pass


class SchemaViolation(InputError):
    pass


class SpecWarning(UserWarning):
    "Scene specification that generates a degenerate scene"
