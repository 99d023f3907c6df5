"""Exception hierarchy shared by every stage of the pipeline."""


class HCHCError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HCHCError, ValueError):
    """An argument has the wrong shape, range or type."""


class TrainingDivergenceError(HCHCError, RuntimeError):
    """A loss or gradient became non-finite during optimisation."""


class DegenerateDistanceError(HCHCError, ValueError):
    """Cluster dissimilarities cannot be normalised (all similarities equal 1)."""


class ExactSolverLimitError(InvalidInputError):
    """Too many clusters for the exact Hamiltonian-cycle solver."""


class ConfigError(HCHCError, ValueError):
    """A configuration key is unknown, unparsable or out of range."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ParseError(HCHCError, ValueError):
    """A data file could not be parsed; carries the offending location."""

    def __init__(self, message, row=None, column=None, path=None):
        self.row = row
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
