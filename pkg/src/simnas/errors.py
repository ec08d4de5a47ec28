"""Exception types raised across the package."""


class ArchParseError(ValueError):
    """Malformed architecture string."""


class ShapeError(ValueError):
    """Incompatible matrix or stack shapes."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class TableLookupError(LookupError):
    """Architecture or column missing from a benchmark table."""


class HaltingError(RuntimeError):
    """Rejection sampling gave up before filling the population."""

    def __init__(self, kept, attempts):
        super().__init__(f"rejection sampling halted after {attempts} draws with only {kept} feasible")
        self.kept = kept
        self.attempts = attempts


class SchemaError(ValueError):
    """Benchmark file does not follow the CSV contract."""


class DuplicateKeyError(SchemaError):
    """Same architecture string appears twice in a benchmark file."""


class ConfigError(ValueError):
    """Invalid search configuration."""
