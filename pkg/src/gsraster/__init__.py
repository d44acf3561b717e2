"""CPU 3D Gaussian splatting with a scalar tile rasterizer and a grouped fragment-GEMM rasterizer."""

from .binning import GroupConfig, GroupEntries, SortedGroupLists, build_group_entries, sort_entries, tiles_overlapped
from .errors import ConfigError, FormatError, ValidationError
from .kernel import PrecisionMode, RasterConstants
from .metrics import OpReport, ReuseReport, entry_overhead, load_reduction, max_abs_diff, psnr
from .pipeline import RenderResult, render
from .projection import ProjectedGaussians, project_gaussian, project_scene
from .scene import Camera, Gaussian3D, ImageBuffer, Scene, canonical_camera, gen_synthetic_scene, load_camera, load_scene, save_scene, write_image

__version__ = "0.1.0"
