"""Expression-driven mesh sequence generation with spiral mesh convolutions."""

from ._meshmotion import *  # noqa: F401,F403
from ._meshmotion import MeshMotionError

__all__ = [name for name in dir() if not name.startswith("_")]
