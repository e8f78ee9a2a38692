"""Part-aware geometric and texture style transfer between labelled textured meshes."""

__version__ = "0.1.0"

from .asset_io import (PartLabeling, RunConfig, TexturedMesh, TextureImage, load_config,
                       load_mesh, load_part_labels, load_texture, save_mesh, save_texture)
from .part_field import (Ellipsoid, blend_weights, fit_ellipsoid, gaussian_weight,
                         refine_ellipsoids, sample_ellipsoid_surface)
from .renderer import Camera, RenderOutput, camera_ring, rasterize, render_all
from .sampling_metrics import (LabeledPointSet, NnIndex, chamfer_l1, f_score, part_distance,
                               sample_surface, symmetry_distance)
from .texture_style import (ColorStats, ColorTransform, apply_color_transform, color_stats,
                            content_loss, pyramid_features, solve_wct, style_loss,
                            uv_coverage_mask)
from .warp_optimizer import (OptimizerTrace, PartTransforms, geometric_loss, optimize_transforms,
                             warp_mesh, warp_points)
from .pipeline import StylizeResult, stylize_joint, transfer_geometry, transfer_texture

__all__ = [
    "Camera", "ColorStats", "ColorTransform", "Ellipsoid", "LabeledPointSet", "NnIndex",
    "OptimizerTrace", "PartLabeling", "PartTransforms", "RenderOutput", "RunConfig",
    "StylizeResult", "TexturedMesh", "TextureImage", "apply_color_transform", "blend_weights",
    "camera_ring", "chamfer_l1", "color_stats", "content_loss", "f_score", "fit_ellipsoid",
    "gaussian_weight", "geometric_loss", "load_config", "load_mesh", "load_part_labels",
    "load_texture", "optimize_transforms", "part_distance", "pyramid_features", "rasterize",
    "refine_ellipsoids", "render_all", "sample_ellipsoid_surface", "sample_surface",
    "save_mesh", "save_texture", "solve_wct", "stylize_joint", "style_loss",
    "symmetry_distance", "transfer_geometry", "transfer_texture", "uv_coverage_mask",
    "warp_mesh", "warp_points",
]
