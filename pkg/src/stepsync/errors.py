"""Exception hierarchy shared by all stepsync modules."""


class StepSyncError(ValueError):
    """Base class for data and validation errors raised by stepsync."""


class EmptySeries(StepSyncError):
    pass


class InsufficientBaseline(StepSyncError):
    pass


class InvalidWindow(StepSyncError):
    pass


class BumpOverlap(StepSyncError):
    pass


class MalformedTrace(StepSyncError):
    pass


class InsufficientData(StepSyncError):
    pass


class DegenerateRegressor(StepSyncError):
    pass


class UndefinedBaselinePerturbation(StepSyncError):
    pass


class EmptyCell(StepSyncError):
    def __init__(self, cell):
        super().__init__(f"all trials excluded in cell {cell!r}")
        self.cell = cell


class MissingCue(StepSyncError):
    pass


class SchemaError(StepSyncError):
    """A CSV or JSON file does not follow its documented schema."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(StepSyncError):
    """Configuration failed validation; ``problems`` lists (field path, message)."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{path}: {msg}" for path, msg in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
