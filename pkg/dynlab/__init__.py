"""dynlab: a measurable-dynamics laboratory for interval maps."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("dynlab")
except PackageNotFoundError:
    __version__ = "development"
