"""Exception hierarchy shared by every stage of the pipeline."""


class CardiCatError(Exception):
    """Base class for all package errors."""


class DataError(CardiCatError):
    """Malformed input data, schema violations, or unusable files."""


class SchemaError(DataError):
    pass


class CheckpointError(DataError):
    pass


class NumericalError(CardiCatError):
    """A non-finite value appeared in a loss, gradient, or parameter."""


class GraphError(CardiCatError):
    """Misuse of a recorded computation graph."""
