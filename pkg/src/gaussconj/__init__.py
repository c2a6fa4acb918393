"""Extremes of conjunctions of stationary Gaussian processes."""

from __future__ import annotations

from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0+unknown"
