"""Exception hierarchy."""


class LeukosegError(Exception):
    """Base class for all package errors."""


class ImageIOError(LeukosegError, OSError):
    pass


class ImageNotFoundError(ImageIOError, FileNotFoundError):
    pass


class UnsupportedFormatError(ImageIOError):
    pass


class CorruptImageError(ImageIOError):
    pass


class ImageWriteError(ImageIOError):
    pass


class DimensionMismatchError(LeukosegError, ValueError):
    pass


class ChannelCountError(LeukosegError, ValueError):
    pass


class ClusteringError(LeukosegError, ValueError):
    """Raised when k-means cannot run on the given domain."""


class WatershedError(LeukosegError, ValueError):
    pass


class NoSeedsError(WatershedError):
    pass


class StageError(LeukosegError):
    """Wraps a failure inside the pipeline with the stage that raised it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


class PlacementError(LeukosegError, RuntimeError):
    """The synthetic generator could not fit the requested cells."""
