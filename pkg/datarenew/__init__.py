"""Init the python module."""

try:
    from datarenew._version import __version__
except ImportError:  # pragma: no cover
    __version__ = "0.0.0"
