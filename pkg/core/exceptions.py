"""
Error types raised by the road anomaly library
"""


class RoadAnomalyError(Exception):
    """Base class for every error raised by core"""


class ConfigError(RoadAnomalyError, ValueError):
    """A configuration value violates its invariants"""


class FormatError(RoadAnomalyError, ValueError):
    """A data file does not match its declared format"""


class DomainError(RoadAnomalyError, ValueError):
    """A function was called outside its mathematical domain"""


class DegenerateGeometry(RoadAnomalyError):
    """Sampson denominator vanished (point sits on the epipole)"""


class InsufficientCorrespondences(RoadAnomalyError):
    def __init__(self, available: int, required: int):
        self.available = available
        self.required = required
        super().__init__(f"{available} usable correspondences, {required} required")


class EmptyTrack(RoadAnomalyError):
    """No frame of a vehicle track has a valid point"""


class LengthMismatch(RoadAnomalyError, ValueError):
    """Two aligned series have different lengths"""


class SeriesTooShort(RoadAnomalyError, ValueError):
    """A series is shorter than the requested window"""


class DegenerateFit(RoadAnomalyError):
    """Least-squares basis is rank deficient"""


class SingleClassError(RoadAnomalyError):
    """Only one class is present in a labelled set"""


class TooFewEvents(RoadAnomalyError):
    """Not enough events per class for the requested number of folds"""


class MissingSequence(RoadAnomalyError, KeyError):
    def __init__(self, sequence: str):
        self.sequence = sequence
        super().__init__(sequence)

    def __str__(self):
        return f"unknown sequence id: {self.sequence}"


class UndefinedResponse(RoadAnomalyError):
    """Scoring window falls entirely inside the response warm-up"""
