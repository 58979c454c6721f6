"""Cuboid proposal generation and order-invariant subset search for noisy point clouds."""

from boxfinder.cuboid import Cuboid
from boxfinder.geometry import NNIndex, PointCloud, estimate_normals, load_ply, save_ply

__version__ = "0.1.0"

__all__ = ["Cuboid", "NNIndex", "PointCloud", "estimate_normals", "load_ply", "save_ply"]
