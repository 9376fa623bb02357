"""Exception types shared across the simulator."""


class XRayError(Exception):
    pass


class EmptyPlacement(XRayError):
    """The placed footprint clips to nothing on the workspace."""


class UnknownId(XRayError, KeyError):
    pass


class NoTarget(XRayError):
    pass


class DimensionMismatch(XRayError, ValueError):
    pass


class DatasetFormatError(XRayError):
    pass


class CorruptMagic(DatasetFormatError):
    pass


class VersionMismatch(DatasetFormatError):
    pass


class TruncatedFile(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


class DatasetWriteError(XRayError, OSError):
    """A shard failed to write; a partial manifest has been left on disk."""
