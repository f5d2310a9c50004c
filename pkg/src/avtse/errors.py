"""Exception taxonomy.

ShapeError      -- tensor/argument dimension mismatches (programming errors).
DataError       -- bad external inputs: files, sample rates, value ranges.
ManifestError   -- weight archive disagrees with the architecture manifest.
ChecksumError   -- weight archive failed integrity verification.
"""


class AvtseError(Exception):
    pass


class ShapeError(AvtseError, ValueError):
    pass


class DataError(AvtseError, ValueError):
    pass


class ManifestError(AvtseError, ValueError):
    pass


class ChecksumError(ManifestError):
    pass
