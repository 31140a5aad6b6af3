"""Ginzburg-Landau minimizers with prescribed boundary degrees on multiply
connected planar domains: meshes, degrees, energies, degree mutation,
series oracles and energy descent."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:          # running from a source tree
    __version__ = "0.1.0"
