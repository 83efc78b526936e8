"""Keyframe-guided whole-body trajectory optimization for humanoid
loco-manipulation, with geometric contact transfer and IK retargeting."""

__version__ = "0.1.0"

from . import kinematics, rotations  # noqa: F401
