"""Exception hierarchy.

Two base classes so the CLI can map failures to exit codes:
ValidationError -> 1 (bad input), NumericalError -> 2 (computation failed).
"""


class BladetrapError(Exception):
    pass


class ValidationError(BladetrapError):
    pass


class NumericalError(BladetrapError):
    pass
