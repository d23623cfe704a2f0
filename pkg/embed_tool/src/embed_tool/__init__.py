"""Vision-language embedding export: one embedding row per scene frame,
written in the sidecar format the selection engine consumes."""

__version__ = "0.1.0"


class ModelLoadError(Exception):
    """Encoder weights or preprocessing config could not be loaded."""


class ImageDecodeError(Exception):
    """A frame's color image failed to decode; message names the frame."""
