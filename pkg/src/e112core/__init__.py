"""e112-core: citizen-to-authority emergency coordination service."""

__version__ = "0.1.0"
