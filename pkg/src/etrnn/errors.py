"""Exception hierarchy shared by every module.

Each error carries a stable ``code`` which the command-line front end uses as
its process exit status (codes 0-2 are reserved for verdicts).
"""

from __future__ import annotations


class EtrnnError(Exception):
    code = 3


class ParseError(EtrnnError):
    code = 4

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class UnknownFunctionError(EtrnnError):
    code = 4


class UnsupportedConstructError(EtrnnError):
    code = 5


class PossibleDivisionByZero(EtrnnError):
    code = 6


class ExactEvalUnavailable(EtrnnError):
    code = 7


class ValidationError(EtrnnError):
    code = 8


class MalformedSolutionError(EtrnnError):
    code = 9
