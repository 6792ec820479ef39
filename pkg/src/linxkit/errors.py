"""Exception types shared across linxkit."""


class LinxError(Exception):
    """Base class for all linxkit errors."""


class MissingFile(LinxError):
    pass


class SchemaViolation(LinxError):
    """Input does not conform to the on-disk schema.

    ``field`` names the offending location (e.g. ``turns[3].kind``).
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DanglingAssetRef(LinxError):
    pass


class DuplicateUid(LinxError):
    pass


class UnknownUid(LinxError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class NoElementAtPoint(LinxError):
    pass


class MissingBBox(LinxError):
    pass


class NoParsableAction(LinxError, ValueError):
    pass


class InvalidAction(LinxError, ValueError):
    pass


class GoldUidAbsentFromCorpus(LinxError):
    pass


class DegenerateData(LinxError, ValueError):
    pass


class MissingVector(LinxError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class BudgetExceeded(LinxError):
    pass
