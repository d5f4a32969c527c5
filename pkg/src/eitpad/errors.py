"""Exception types shared across the package."""


class EitpadError(ValueError):
    """Base class for domain errors raised by this package."""


class ElectrodeLayoutError(EitpadError):
    """Electrodes cannot be placed: they would overlap on the boundary."""


class MeshResolutionError(EitpadError):
    """Mesh is too coarse for the requested electrode layout."""


class DimensionMismatchError(EitpadError):
    """Array sizes are inconsistent with the mesh/protocol they refer to."""


class IllPosedError(EitpadError):
    """Unregularized solve requested on a rank-deficient system."""


class LatticeConnectivityError(EitpadError):
    """A lattice pattern disconnects one or more electrodes from the
    conductive network."""


class BlobCountMismatchError(EitpadError):
    """Blob report and ground-truth center list have different sizes."""


class ConfigError(EitpadError):
    """Invalid experiment configuration."""
