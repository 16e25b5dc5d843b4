"""Turn part-decomposed static meshes into articulated URDF assets."""

__version__ = "0.1.0"
