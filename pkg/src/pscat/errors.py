"""Error taxonomy shared by the whole package.

Preconditions that the caller violated raise PreconditionError (CLI exit
code 2); failures of the numerics themselves (stalled descent, singular
spreading, unresolvable zeros, ...) raise NumericalError (CLI exit code 3).
"""


class PscatError(Exception):
    exit_code = 1


class PreconditionError(PscatError):
    exit_code = 2


class NumericalError(PscatError):
    exit_code = 3
