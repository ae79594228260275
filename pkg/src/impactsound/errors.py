"""Exception hierarchy.

Data errors (bad files, bad geometry) and numeric failures (flat spectra,
degenerate inputs) are kept apart so the CLI can map them to distinct exit
codes.
"""


class ImpactSoundError(Exception):
    """Base class for all package errors."""


class DataError(ImpactSoundError):
    """Input data is malformed or inconsistent."""


class NumericError(ImpactSoundError):
    """A computation hit a degenerate or non-finite case."""


class WavFormatError(DataError):
    def __init__(self, chunk, message):
        self.chunk = chunk
        super().__init__(f"malformed WAV ({chunk!r} chunk): {message}")


class UnsupportedFormatError(DataError):
    pass


class EmptySignalError(DataError):
    pass


class ManifestError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class EmptyBandError(DataError):
    pass


class GridCollisionError(DataError):
    def __init__(self, first_id, second_id, cell):
        self.ids = (first_id, second_id)
        self.cell = cell
        super().__init__(f"points {first_id!r} and {second_id!r} both map to cell {cell}")


class FlatSpectrumError(NumericError):
    def __init__(self, message, record_id=None):
        self.record_id = record_id
        if record_id is not None:
            message = f"{record_id}: {message}"
        super().__init__(message)


class DegenerateInputError(NumericError):
    pass


class NonFiniteError(NumericError):
    pass
