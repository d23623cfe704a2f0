"""Exception hierarchy shared across the pipeline."""


class SpatialPromptError(Exception):
    """Base class for all pipeline errors."""


# -- scene loading ------------------------------------------------------------

class MalformedManifest(SpatialPromptError):
    """Manifest violates the documented JSON schema; message names the field path."""


class NonRigidPose(SpatialPromptError):
    """Pose matrix fails the rigid-transform checks; message names the frame_id."""


class MissingFile(SpatialPromptError):
    """A file referenced by the manifest does not exist."""


class DimensionMismatch(SpatialPromptError):
    """Raster dimensions disagree with the declared intrinsics."""


class UnsupportedDepthEncoding(SpatialPromptError):
    """Depth file is not a 16-bit single-channel raster in the declared format."""


class UnsupportedColorEncoding(SpatialPromptError):
    """Color file does not decode as an 8-bit 3-channel raster."""


class ImageTooSmall(SpatialPromptError):
    """Image has no interior pixels for the 3x3 sharpness kernel."""


# -- embedding store -----------------------------------------------------------

class HeaderMismatch(SpatialPromptError):
    """Embedding header disagrees with the binary payload size."""


class FrameCoverageError(SpatialPromptError):
    """Embedding rows do not cover the scene's frame ids exactly."""


class NonFiniteEmbedding(SpatialPromptError):
    """An embedding row contains non-finite entries or is all zero."""


class UnknownFrame(SpatialPromptError):
    """A frame_id is not present in the referenced collection."""


# -- selection ----------------------------------------------------------------

class DegenerateStats(SpatialPromptError):
    """Point-cloud statistics come from too few points to support a distance."""


class EmptyInput(SpatialPromptError):
    """Operation requires at least one element."""


# -- evaluation ---------------------------------------------------------------

class EmptyBank(SpatialPromptError):
    """Answer bank holds no answers for any question type."""


# -- chat backends -------------------------------------------------------------

class BackendUnavailable(SpatialPromptError):
    """Backend cannot be reached or refuses authentication."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class ReplayMiss(SpatialPromptError):
    """Replay file holds no response for the request fingerprint."""

    def __init__(self, fingerprint: str):
        super().__init__(f"no recorded response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class ProviderError(SpatialPromptError):
    """Provider answered with a non-2xx status."""

    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"provider returned HTTP {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt
