"""Exception types shared across the engine.

Every error raised on bad external input derives from :class:`DataError`,
which the CLI maps to exit code 2 and the service maps to a 4xx response.
"""


class DataError(Exception):
    """Invalid input data (files, manifests, payloads)."""


class BlobError(DataError):
    """Malformed tensor container file."""


class BadMagic(BlobError):
    """File does not start with the GPMT magic bytes."""


class UnsupportedVersion(BlobError):
    """Container version is not 1."""


class BadDtype(BlobError):
    """Dtype code is neither f32 (1) nor f16 (2)."""


class TruncatedFile(BlobError):
    """File ends before the header or payload is complete."""


class StackError(DataError):
    """Invalid stack manifest or stack contents."""


class MissingTensor(StackError):
    """A referenced (image, layer, timestep, which) tensor is absent."""


class ShapeMismatch(StackError):
    """Tensor or layer geometry disagrees with the manifest."""


class ImageSizeMismatch(StackError):
    """A stack image does not match the declared (width, height)."""


class LayerNotFound(DataError):
    """Referenced layer id is not in the manifest."""


class TimestepNotFound(DataError):
    """Referenced timestep (or timestep range) is not in the manifest."""


class DimensionMismatch(DataError):
    """Feature vector length does not match the fitted model."""


class GridNotDivisible(DataError):
    """Image size is not an integer multiple of the feature grid."""


class NoBoundary(DataError):
    """Blend region covers the whole image; no boundary values exist."""
