"""Exception types shared across the package."""


class SocEkfError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SocEkfError):
    """A configuration file is missing, malformed, or violates an invariant.

    ``key`` names the offending entry (dotted path into the file) when known.
    """

    def __init__(self, message, key=None):
        self.message = message
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DataError(SocEkfError):
    """An input data file cannot be parsed or fails validation.

    ``row`` and ``column`` locate the offending cell when known (1-based row
    index counting the header as row 1).
    """

    def __init__(self, message, row=None, column=None):
        self.message = message
        self.row = row
        self.column = column
        locus = []
        if row is not None:
            locus.append(f"row {row}")
        if column is not None:
            locus.append(f"column {column!r}")
        if locus:
            message = f"{message} ({', '.join(locus)})"
        super().__init__(message)


class NumericalError(SocEkfError):
    """A filter step failed numerically (e.g. non-positive innovation variance).

    ``stage`` names the sub-step; ``step_index`` is filled in by the run loop.
    """

    def __init__(self, message, stage=None, step_index=None):
        self.message = message
        self.stage = stage
        self.step_index = step_index
        parts = [message]
        if stage is not None:
            parts.append(f"stage={stage}")
        if step_index is not None:
            parts.append(f"step={step_index}")
        super().__init__("; ".join(parts))


class SimulationError(SocEkfError):
    """The truth-model simulation left its valid operating region."""

    def __init__(self, message, sample_index=None):
        self.message = message
        self.sample_index = sample_index
        if sample_index is not None:
            message = f"{message} (sample {sample_index})"
        super().__init__(message)
