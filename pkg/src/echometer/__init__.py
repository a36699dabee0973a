"""echometer: quantify the echo of strategic communications in an
utterance stream via semantic similarity."""

__version__ = "0.1.0"

from .echo import EchoAnalyzer, WindowConfig  # noqa: F401
