"""End-to-end rendering: cull, project, bin, sort, rasterize."""

from __future__ import annotations

from dataclasses import dataclass

from .binning import GroupConfig, SortedGroupLists, bin_projected
from .errors import ConfigError
from .half import FRAG
from .kernel import DEFAULT_CONSTANTS, PrecisionMode, RasterConstants
from .metrics import OpReport
from .projection import ProjectedGaussians, ProjectionReport, project_scene
from .raster_scalar import rasterize_tiles_scalar
from .raster_tensor import rasterize_grouped
from .scene import Camera, ImageBuffer, Scene

BACKENDS = ("scalar", "tensor")


@dataclass
class RenderResult:
    image: ImageBuffer
    ops: OpReport
    projection: ProjectionReport
    projected: ProjectedGaussians
    lists: SortedGroupLists


def render(
    scene: Scene,
    cam: Camera,
    group: int = 1,
    mode: PrecisionMode | str = PrecisionMode.FP32,
    backend: str = "tensor",
    workers: int = 1,
    chunk_size: int = FRAG,
    constants: RasterConstants = DEFAULT_CONSTANTS,
) -> RenderResult:
    mode = PrecisionMode(mode)
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}")
    if backend == "scalar" and group != 1:
        raise ConfigError("the scalar backend only supports 1x1 groups")
    cfg = GroupConfig.square(group, cam.width, cam.height)
    projected, proj_report = project_scene(scene, cam)
    lists = bin_projected(projected, cfg)
    ops = OpReport(backend=backend, group=group, precision=mode.value)
    if backend == "scalar":
        image = rasterize_tiles_scalar(lists, projected, cam, constants, mode, workers, ops)
    else:
        image = rasterize_grouped(lists, projected, cfg, mode, constants, chunk_size, workers, ops)
    return RenderResult(image.finalize(), ops, proj_report, projected, lists)
