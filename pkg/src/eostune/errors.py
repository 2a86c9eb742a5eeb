"""Exception types shared across the tuning framework."""


class EosError(Exception):
    """Base class for every framework error."""


class SpecError(EosError):
    """Registration or spec-file problem. ``line_no`` is set when the error
    was raised while parsing a spec file."""

    line_no: int | None = None

    def at_line(self, line_no: int) -> "SpecError":
        self.line_no = line_no
        return self

    def __str__(self) -> str:
        base = super().__str__()
        if self.line_no is not None:
            return f"line {self.line_no}: {base}"
        return base


class DuplicateName(SpecError):
    pass


class InvalidRange(SpecError):
    pass


class UnknownSubsystem(SpecError):
    pass


class UnknownGuardParent(SpecError):
    pass


class GuardValueOutOfParentRange(SpecError):
    pass


class ParseError(SpecError):
    pass


class MissingParentAssignment(EosError):
    pass


class FieldCountMismatch(EosError):
    pass


class CorruptCacheFile(EosError):
    pass


class ProbeFailure(EosError):
    def __init__(self, subsystem: str, cause: BaseException | None = None):
        super().__init__(f"probe failed for subsystem {subsystem!r}: {cause}")
        self.subsystem = subsystem
        self.cause = cause


class ActivationFailure(EosError):
    def __init__(self, param: str, cause: BaseException | None = None):
        super().__init__(f"failed to activate parameter {param!r}: {cause}")
        self.param = param
        self.cause = cause


class OutOfRangeSetting(EosError):
    pass


class OverlapError(EosError):
    pass
