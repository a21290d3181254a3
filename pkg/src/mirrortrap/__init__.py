"""Design and analysis tools for surface-electrode ion traps with integrated micromirrors.

Subpackages: ``fields`` (electrostatics, pseudopotential, transport),
``optimize`` (rail-edge genetic algorithm) and ``optics`` (ray tracing and
collection efficiency).  ``analytic`` holds closed-form design relations and
``photometry`` the fluorescence analyses.
"""
from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
