from .index import SpatialIndex, mesh_intersects, nearest_surface_distance, signed_distance
from .io import load_mesh, save_mesh
from .mesh import RigidTransform, TriMesh, merge_meshes, rotation_about
from .pca import PcaResult, canonical_sign, pca


def farthest_point_sample(points, k, start=0):
    """Indices of a farthest-point subsample of size ``min(k, n)``."""
    import numpy as np

    from ._kernels import farthest_point_order

    p = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
    if len(p) <= k:
        return np.arange(len(p))
    return farthest_point_order(p, int(k), int(start))


__all__ = [
    "PcaResult", "RigidTransform", "SpatialIndex", "TriMesh", "canonical_sign",
    "farthest_point_sample", "load_mesh", "mesh_intersects", "merge_meshes",
    "nearest_surface_distance", "pca", "rotation_about", "save_mesh", "signed_distance",
]
