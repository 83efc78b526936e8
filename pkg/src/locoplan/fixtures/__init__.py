"""Bundled fixture data (models, scenes, depth captures, point clouds).

All lookups go through :func:`path` so an alternate fixture tree can be
substituted with the ``LOCOPLAN_FIXTURES`` environment variable.
"""

import os
from pathlib import Path

_ROOT = Path(__file__).resolve().parent


def root() -> Path:
    override = os.environ.get("LOCOPLAN_FIXTURES")
    if override:
        return Path(override)
    return _ROOT


def path(rel: str) -> Path:
    """Resolve a fixture-relative path, raising if it does not exist."""
    p = root() / rel
    if not p.exists():
        raise FileNotFoundError(f"fixture not found: {p}")
    return p
