"""HTTP service exposing the benchmark driver."""

from .app import app

__all__ = ["app"]
