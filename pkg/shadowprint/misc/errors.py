# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

"""
Exception hierarchy shared by every shadowprint sub-package.
The concrete classes also derive from the matching builtin, so callers may
simply catch ValueError/OSError/etc.
"""


class ShadowPrintError(Exception):
    """ Base class for all shadowprint errors """


class ConfigError(ShadowPrintError, ValueError):
    """ Invalid configuration, spec or parameter value """


class DimensionError(ShadowPrintError, ValueError):
    """ Shape or length mismatch """


class ContractError(ShadowPrintError, ValueError):
    """ A documented precondition of an operation was violated """


class LabelIndexError(ContractError, IndexError):
    """ Class index outside [0, num_classes) """


class DataError(ShadowPrintError, ValueError):
    """ Dataset content is invalid """


class FormatError(DataError):
    """ A file does not follow its binary/text format """


class CalibrationError(ShadowPrintError, ValueError):
    """ A detector could not be calibrated from the supplied reference data """


class StateError(ShadowPrintError, RuntimeError):
    """ Operation invoked in an invalid state """


class NumericError(ShadowPrintError, ArithmeticError):
    """ Non-finite or undefined numeric result """


class DatasetIOError(ShadowPrintError, OSError):
    """
    Missing or truncated data file
    """

    def __init__(self, message, filename=None, offset=None):
        """
        Initialise object
        :param message: error description
        :param filename: path of the offending file
        :param offset: byte offset at which the problem was detected
        """
        super().__init__(f'{message} [file={filename}, offset={offset}]')
        self.filename = filename
        self.offset = offset
