"""Exception hierarchy shared across the package.

Every error raised deliberately by fpcg derives from :class:`FpcgError`,
so callers can catch one base type at pipeline boundaries. File-not-found
conditions use the builtin ``FileNotFoundError``.
"""


class FpcgError(Exception):
    """Base class for all fpcg errors."""


# --- audio io ---------------------------------------------------------------

class UnsupportedEncodingError(FpcgError):
    """WAV file is not PCM or uses an encoding we do not read."""


class EmptyAudioError(FpcgError):
    """Audio file contains zero frames."""


class InvalidRateError(FpcgError, ValueError):
    """Sample rate is not a positive integer."""


class TooShortError(FpcgError):
    """Recording is too short to segment."""


# --- manifest / dataset -----------------------------------------------------

class ManifestParseError(FpcgError):
    """Malformed manifest row; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownGenderError(ManifestParseError):
    """Gender token is neither M nor F."""


class MissingFileError(FpcgError):
    """Manifest references an audio file that does not exist."""


# --- transforms -------------------------------------------------------------

class InvalidWindowError(FpcgError, ValueError):
    """STFT window/hop configuration violates its preconditions."""


class NonInvertibleConfigError(FpcgError):
    """Time-frequency grid cannot be inverted (COLA violated)."""


class InvalidConfigError(FpcgError, ValueError):
    """Transform or model configuration out of range."""


class TooManyLevelsError(FpcgError, ValueError):
    """Requested wavelet depth exceeds what the signal length supports."""


class UnknownWaveletError(FpcgError, ValueError):
    """Wavelet name is not in the supported coiflet family."""


class InconsistentCoefficientsError(FpcgError):
    """Wavelet coefficient arrays do not describe a valid decomposition."""


# --- features ---------------------------------------------------------------

class EmptyInputError(FpcgError, ValueError):
    """Statistic requested on an empty vector."""


class TooFewSamplesError(FpcgError, ValueError):
    """Statistic needs more samples than were given."""


class ZeroVarianceError(FpcgError):
    """Moment statistic undefined because the sample variance is zero."""


class ZeroSpectrumError(FpcgError):
    """Spectral entropy undefined because the spectrum has no power."""


class InvalidFrameError(FpcgError, ValueError):
    """Frame length for the zero-crossing rate must be at least 2."""


class EmptyMatrixError(FpcgError, ValueError):
    """Acoustic matrix reduction requested on an empty matrix."""


# --- denoising --------------------------------------------------------------

class EmptyTrainingSetError(FpcgError, ValueError):
    """Trainer called with no training examples."""


class DivergedLossError(FpcgError):
    """Training loss became NaN or infinite."""


class ShapeMismatchError(FpcgError, ValueError):
    """Array shapes incompatible with the model or operation."""


class LengthMismatchError(FpcgError, ValueError):
    """Waveforms must share length (and sample rate) for this operation."""


# --- classifiers / ensemble -------------------------------------------------

class SingleClassError(FpcgError, ValueError):
    """Training labels contain only one class."""


class SchemaMismatchError(FpcgError):
    """Feature vector schema differs from what the model was fit on."""


class InsufficientSubjectsError(FpcgError, ValueError):
    """Not enough subjects per class for grouped training."""


class MissingModelError(FpcgError):
    """Pipeline stage requires a model that was not provided."""


# --- evaluation -------------------------------------------------------------

class EmptyEvaluationError(FpcgError, ValueError):
    """Metrics requested over zero predictions."""


class TooFewSubjectsError(FpcgError, ValueError):
    """Split cannot honor grouping with this few subjects."""


# --- synthesis --------------------------------------------------------------

class InvalidSpecError(FpcgError, ValueError):
    """Synthetic generator parameters are out of range."""


# --- persistence ------------------------------------------------------------

class ContainerFormatError(FpcgError):
    """Model container is corrupt or has an unsupported version."""
