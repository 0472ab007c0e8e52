"""HTTP service wrapping the survaudit pipeline."""
from .app import app

__all__ = ["app"]
