"""Multi-expert planning and generation at desk scale.

Library surface: prompt planning (mepg.planner), geometry/layouts
(mepg.geometry), toy denoisers and training (mepg.neural), diffusion
sampling (mepg.diffusion), sparse expert routing (mepg.moe), the
cross-denoising scheduler (mepg.scheduler), and the HTTP service + CLI
(mepg.service, mepg.cli).
"""

__version__ = "0.1.0"

from .geometry import (BoundingBox, Layout, RegionSpec, coverage,
                       layout_from_dict, layout_to_dict, rasterize,
                       repair_layout, swap_regions, validate_box,
                       validate_layout)

__all__ = [
    "__version__",
    "BoundingBox", "RegionSpec", "Layout",
    "validate_box", "validate_layout", "repair_layout", "rasterize",
    "coverage", "swap_regions", "layout_to_dict", "layout_from_dict",
]
