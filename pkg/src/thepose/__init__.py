"""Desk-scale category-level 6D pose pipeline on procedural synthetic shapes."""

from .errors import Error
from .geometry import Intrinsics, Pose, RigidTransform

__all__ = ["Error", "Intrinsics", "Pose", "RigidTransform"]
