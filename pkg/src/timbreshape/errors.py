"""Exception hierarchy shared by the library and the command line front end."""


class TimbreShapeError(Exception):
    """Base class for all errors raised by this package."""


class AudioError(TimbreShapeError):
    """Audio could not be read or is in an unsupported format."""


class DegenerateInputError(TimbreShapeError):
    """Input carries too little signal to build features (silence, too short)."""


class DegenerateBlockError(DegenerateInputError):
    """All points of a block coincide, so it has no shape."""


class SongTooShortError(DegenerateInputError):
    """No tempo bias yields enough beats to form a single block."""


class ManifestError(TimbreShapeError):
    """Benchmark manifests or ground truth are empty, mismatched or malformed."""
