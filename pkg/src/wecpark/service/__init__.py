"""HTTP service exposing the optimization runners."""

from . import app  # noqa: F401
