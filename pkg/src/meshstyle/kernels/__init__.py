"""Hot loops with numba and pure-numpy implementations."""
from .nn import METRIC_L1, METRIC_L2, nearest
from .raster import rasterize_triangles

__all__ = ["METRIC_L1", "METRIC_L2", "nearest", "rasterize_triangles"]
