class SolverException(Exception):
    """Base exception for solver, data and configuration errors."""
    pass


class InvalidProblemError(SolverException):
    """Raised when a problem instance or solver input is not admissible."""
    pass


class NumericalError(SolverException):
    """Raised when an update cannot be completed in floating point."""
    pass


class DatasetFormatError(SolverException):
    """Raised on malformed dataset or model files."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class ConfigException(SolverException):
    """Raised when config.ini holds an invalid value."""
    pass


class ExperimentException(SolverException):
    """Raised when an experiment definition file is missing or invalid."""
    pass
