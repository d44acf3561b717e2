"""Frustum culling and per-Gaussian screen-space features.

All geometry is evaluated in float64 and the results are stored as float32,
which is the precision the rasterizers consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import SH_C0, Camera, Gaussian3D, Scene

DILATION = 0.3
GUARD_BAND = 1.3
MIN_DET = 1e-12

SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def _as_scene(g: Gaussian3D | Scene) -> Scene:
    return g if isinstance(g, Scene) else Scene.from_gaussians([g])


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, np.float64).reshape(-1, 4)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def cov3d_batch(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Full (n, 3, 3) covariances R S S^T R^T."""
    scales = np.asarray(scales, np.float64).reshape(-1, 3)
    if not np.all(scales > 0):
        raise ValidationError("scales must be strictly positive")
    m = quat_to_rotmat(rotations) * scales[:, None, :]
    return m @ m.transpose(0, 2, 1)


def compute_cov3d(scale, rotation) -> np.ndarray:
    """Unique entries (xx, xy, xz, yy, yz, zz) of the world-space covariance."""
    cov = cov3d_batch(scale, rotation)[0]
    return cov[np.triu_indices(3)]


def sh_color(sh_dc: np.ndarray, sh_rest: np.ndarray | None, dirs: np.ndarray) -> np.ndarray:
    """Evaluate real SH (degree 0 or 3) for unit directions; returns (n, 3)."""
    rgb = SH_C0 * np.asarray(sh_dc, np.float64)
    if sh_rest is not None:
        s = np.asarray(sh_rest, np.float64)
        x, y, z = (dirs[:, i : i + 1] for i in range(3))
        xx, yy, zz = x * x, y * y, z * z
        basis = [
            -SH_C1 * y,
            SH_C1 * z,
            -SH_C1 * x,
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
            SH_C3[0] * y * (3 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4 * zz - xx - yy),
            SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
            SH_C3[4] * x * (4 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3 * yy),
        ]
        for k, b in enumerate(basis):
            rgb = rgb + b * s[:, k, :]
    return np.maximum(rgb + 0.5, 0.0)


def eval_sh_color(g: Gaussian3D, view_dir) -> np.ndarray:
    scene = _as_scene(g)
    d = np.asarray(view_dir, np.float64).reshape(1, 3)
    return sh_color(scene.sh_dc, scene.sh_rest, d)[0]


def _camera_space(means: np.ndarray, cam: Camera) -> np.ndarray:
    return np.asarray(means, np.float64) @ cam.rotation.T + cam.translation


def cull_mask(scene: Scene, cam: Camera, guard: float = GUARD_BAND) -> np.ndarray:
    p = _camera_space(scene.means, cam)
    z = p[:, 2]
    in_depth = (z > cam.near) & (z < cam.far)
    zs = np.where(in_depth, z, 1.0)
    ndc_x = cam.focal_x * p[:, 0] / zs / (cam.width / 2.0)
    ndc_y = cam.focal_y * p[:, 1] / zs / (cam.height / 2.0)
    return in_depth & (np.abs(ndc_x) <= guard) & (np.abs(ndc_y) <= guard)


def frustum_cull(g: Gaussian3D, cam: Camera, guard: float = GUARD_BAND) -> bool:
    """True when the Gaussian is kept."""
    return bool(cull_mask(_as_scene(g), cam, guard)[0])


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: tuple[float, float]
    conic: tuple[float, float, float]
    color: tuple[float, float, float]
    opacity: float
    depth: float
    radius: int


@dataclass
class ProjectedGaussians:
    """Columnar splat data in render order; ``index`` maps back into the scene."""

    mean2d: np.ndarray  # (n, 2) float32
    conic: np.ndarray  # (n, 3) float32: a, b, c
    color: np.ndarray  # (n, 3) float32
    opacity: np.ndarray  # (n,) float32
    depth: np.ndarray  # (n,) float32
    radius: np.ndarray  # (n,) int32
    index: np.ndarray  # (n,) int64
    cov2d: np.ndarray | None = None  # (n, 3) float64, dilated

    def __len__(self) -> int:
        return len(self.depth)

    def __getitem__(self, i: int) -> ProjectedGaussian:
        return ProjectedGaussian(
            mean2d=tuple(self.mean2d[i].tolist()),
            conic=tuple(self.conic[i].tolist()),
            color=tuple(self.color[i].tolist()),
            opacity=float(self.opacity[i]),
            depth=float(self.depth[i]),
            radius=int(self.radius[i]),
        )

    @classmethod
    def from_list(cls, items: list[ProjectedGaussian]) -> "ProjectedGaussians":
        n = len(items)
        return cls(
            mean2d=np.array([p.mean2d for p in items], np.float32).reshape(n, 2),
            conic=np.array([p.conic for p in items], np.float32).reshape(n, 3),
            color=np.array([p.color for p in items], np.float32).reshape(n, 3),
            opacity=np.array([p.opacity for p in items], np.float32).reshape(n),
            depth=np.array([p.depth for p in items], np.float32).reshape(n),
            radius=np.array([p.radius for p in items], np.int32).reshape(n),
            index=np.arange(n),
        )


@dataclass(frozen=True)
class ProjectionReport:
    n_input: int
    n_culled: int
    n_degenerate: int

    @property
    def n_visible(self) -> int:
        return self.n_input - self.n_culled - self.n_degenerate


def project_scene(scene: Scene, cam: Camera, guard: float = GUARD_BAND) -> tuple[ProjectedGaussians, ProjectionReport]:
    keep = np.flatnonzero(cull_mask(scene, cam, guard))
    p = _camera_space(scene.means[keep], cam)
    x, y, z = p.T
    fx, fy = cam.focal_x, cam.focal_y
    cx, cy = cam.principal_point

    with np.errstate(invalid="ignore", over="ignore"):
        cov = cov3d_batch(scene.scales[keep], scene.rotations[keep])
    w = cam.rotation
    jac = np.zeros((len(keep), 2, 3))
    jac[:, 0, 0] = fx / z
    jac[:, 0, 2] = -fx * x / (z * z)
    jac[:, 1, 1] = fy / z
    jac[:, 1, 2] = -fy * y / (z * z)
    t = jac @ w
    with np.errstate(invalid="ignore", over="ignore"):
        cov2 = t @ cov @ t.transpose(0, 2, 1)
    sxx = cov2[:, 0, 0] + DILATION
    sxy = cov2[:, 0, 1]
    syy = cov2[:, 1, 1] + DILATION

    det = sxx * syy - sxy * sxy
    ok = det >= MIN_DET
    n_degenerate = int((~ok).sum())
    keep, x, y, z, sxx, sxy, syy, det = (v[ok] for v in (keep, x, y, z, sxx, sxy, syy, det))

    conic = np.stack([syy / det, -sxy / det, sxx / det], axis=1)
    mid = 0.5 * (sxx + syy)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = np.maximum(np.ceil(3.0 * np.sqrt(lam_max)), 1).astype(np.int32)

    means = np.asarray(scene.means[keep], np.float64)
    dirs = means - cam.center
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    rest = None if scene.sh_rest is None else scene.sh_rest[keep]
    color = sh_color(scene.sh_dc[keep], rest, dirs)

    proj = ProjectedGaussians(
        mean2d=np.stack([fx * x / z + cx, fy * y / z + cy], axis=1).astype(np.float32),
        conic=conic.astype(np.float32),
        color=color.astype(np.float32),
        opacity=scene.opacities[keep].astype(np.float32),
        depth=z.astype(np.float32),
        radius=radius,
        index=keep.astype(np.int64),
        cov2d=np.stack([sxx, sxy, syy], axis=1),
    )
    report = ProjectionReport(len(scene), len(scene) - len(ok), n_degenerate)
    return proj, report


def project_gaussian(g: Gaussian3D, cam: Camera) -> ProjectedGaussian | None:
    """Project a single Gaussian; ``None`` when it is culled or degenerate."""
    proj, _ = project_scene(_as_scene(g), cam)
    return proj[0] if len(proj) else None
