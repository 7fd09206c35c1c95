"""Exception hierarchy.

Data problems (bad input files, infeasible splits) derive from ``DataError``;
model and numerical problems derive from ``ModelError``. The CLI maps the two
families to distinct exit codes.
"""


class DampfError(Exception):
    """Base class for all package errors."""


class DataError(DampfError):
    pass


class ModelError(DampfError):
    pass


# ---- ingestion -----------------------------------------------------------

class FileUnreadable(DataError):
    pass


class BadTimestamp(DataError):
    def __init__(self, row: int, value: str):
        super().__init__(f"row {row}: unparseable timestamp {value!r}")
        self.row = row
        self.value = value


class DuplicateTimestamp(DataError):
    def __init__(self, ts):
        super().__init__(f"duplicate timestamp {ts}")
        self.ts = ts


class UnknownColumn(DataError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} not present in input")
        self.name = name


class BadValue(DataError):
    pass


# ---- preparation ---------------------------------------------------------

class ColumnAllMissing(DataError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} has no observations")
        self.name = name


class ColumnTooSparse(DataError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} has fewer than 2 observations")
        self.name = name


class EmptyColumn(DataError):
    pass


class InvalidBounds(DataError):
    pass


class DegenerateColumn(DataError):
    pass


class FrameTooShort(DataError):
    pass


class InvalidWindow(DataError):
    pass


class InsufficientHistory(DataError):
    def __init__(self, needed_days: int, available_days: int):
        super().__init__(
            f"insufficient history: need {needed_days} training days, "
            f"{available_days} available"
        )
        self.needed_days = needed_days
        self.available_days = available_days


class MonthNotCovered(DataError):
    pass


# ---- models --------------------------------------------------------------

class LengthMismatch(ModelError, ValueError):
    pass


class EmptyDataset(ModelError):
    pass


class FeatureCountMismatch(ModelError):
    pass


class DimensionMismatch(ModelError, ValueError):
    pass


class EmptySample(ModelError):
    pass


class ScheduleEmpty(ModelError):
    pass


class LearnerFailure(ModelError):
    pass


class ModelFormatError(ModelError):
    pass


# ---- metrics -------------------------------------------------------------

class EmptyInput(ModelError, ValueError):
    pass


class ConstantActualsForR2(ModelError, ValueError):
    pass


class ZeroPersistenceRmse(ModelError, ValueError):
    pass


# ---- runner --------------------------------------------------------------

class NoFeasibleCells(DataError):
    pass


class OutputUnwritable(DataError):
    pass


class ConfigError(DataError):
    pass
