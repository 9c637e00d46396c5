"""Exact birational geometry of curve configurations on rational surfaces."""
from __future__ import annotations

__version__ = "0.1.0"
