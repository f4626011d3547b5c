"""Line-delimited JSON subprocess kernel for the delegation runtime's
execution layer."""

from .shim import Kernel, serve  # noqa: F401

__version__ = "0.1.0"
