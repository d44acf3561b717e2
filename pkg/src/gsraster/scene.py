"""Scenes, cameras, images and their file formats.

``.gsb`` layout (little endian)::

    header   magic "GSB1" | u32 count | u32 sh_degree (0 or 3) | u32 reserved
    record   mean f32x3 | scale f32x3 | quat (w,x,y,z) f32x4 | opacity f32
             | sh_dc f32x3 | sh_rest f32x45 (only when sh_degree == 3)

``sh_rest`` holds 15 coefficients x RGB, coefficient-major.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"GSB1"
HEADER = struct.Struct("<4sIII")
BASE_FLOATS = 14
REST_FLOATS = 45
SH_C0 = 0.28209479177387814

QUAT_TOL = 1e-6
ORTHO_TOL = 1e-4


@dataclass(frozen=True)
class Gaussian3D:
    mean: tuple[float, float, float]
    scale: tuple[float, float, float]
    rotation: tuple[float, float, float, float]
    opacity: float
    sh_dc: tuple[float, float, float]
    sh_rest: tuple[float, ...] | None = None


@dataclass(eq=False)
class Scene:
    """Columnar storage for a list of Gaussians (float32 throughout).

    Indexing and iteration yield :class:`Gaussian3D` records, so a ``Scene``
    can stand in wherever a list of Gaussians is expected.
    """

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh_dc: np.ndarray
    sh_rest: np.ndarray | None = None

    def __post_init__(self):
        self.means = np.asarray(self.means, np.float32).reshape(-1, 3)
        n = len(self.means)
        self.scales = np.asarray(self.scales, np.float32).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, np.float32).reshape(n, 4)
        self.opacities = np.asarray(self.opacities, np.float32).reshape(n)
        self.sh_dc = np.asarray(self.sh_dc, np.float32).reshape(n, 3)
        if self.sh_rest is not None:
            self.sh_rest = np.asarray(self.sh_rest, np.float32).reshape(n, 15, 3)

    @property
    def sh_degree(self) -> int:
        return 0 if self.sh_rest is None else 3

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Gaussian3D:
        rest = None if self.sh_rest is None else tuple(self.sh_rest[i].ravel().tolist())
        return Gaussian3D(
            mean=tuple(self.means[i].tolist()),
            scale=tuple(self.scales[i].tolist()),
            rotation=tuple(self.rotations[i].tolist()),
            opacity=float(self.opacities[i]),
            sh_dc=tuple(self.sh_dc[i].tolist()),
            sh_rest=rest,
        )

    def __iter__(self) -> Iterator[Gaussian3D]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        if self.sh_degree != other.sh_degree:
            return False
        pairs = [
            (self.means, other.means),
            (self.scales, other.scales),
            (self.rotations, other.rotations),
            (self.opacities, other.opacities),
            (self.sh_dc, other.sh_dc),
        ]
        if self.sh_rest is not None:
            pairs.append((self.sh_rest, other.sh_rest))
        return all(a.shape == b.shape and np.array_equal(a.view(np.uint32), b.view(np.uint32)) for a, b in pairs)

    @classmethod
    def empty(cls, sh_degree: int = 0) -> "Scene":
        z = np.zeros((0, 3), np.float32)
        rest = np.zeros((0, 15, 3), np.float32) if sh_degree == 3 else None
        return cls(z, z, np.zeros((0, 4), np.float32), np.zeros(0, np.float32), z, rest)

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[Gaussian3D]) -> "Scene":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        has_rest = [g.sh_rest is not None for g in gaussians]
        if any(has_rest) and not all(has_rest):
            raise ValidationError("either every Gaussian carries sh_rest or none does")
        rest = np.array([g.sh_rest for g in gaussians], np.float32) if has_rest[0] else None
        return cls(
            np.array([g.mean for g in gaussians]),
            np.array([g.scale for g in gaussians]),
            np.array([g.rotation for g in gaussians]),
            np.array([g.opacity for g in gaussians]),
            np.array([g.sh_dc for g in gaussians]),
            rest,
        )


def _validate_records(scene: Scene) -> None:
    bad = np.flatnonzero(~((scene.opacities >= 0) & (scene.opacities <= 1)))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"record {i}: opacity {scene.opacities[i]} outside [0, 1]")
    bad = np.flatnonzero(~np.all(scene.scales > 0, axis=1))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"record {i}: scales must be strictly positive")
    norms = np.linalg.norm(scene.rotations.astype(np.float64), axis=1)
    bad = np.flatnonzero(~(norms > 0))
    if bad.size:
        raise ValidationError(f"record {int(bad[0])}: zero-length rotation quaternion")


def _renormalize(rot: np.ndarray) -> np.ndarray:
    # leave already-unit quaternions untouched so save/load is bit-exact
    norms = np.linalg.norm(rot.astype(np.float64), axis=1)
    off = np.abs(norms - 1.0) > QUAT_TOL
    if off.any():
        rot = rot.copy()
        rot[off] = (rot[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return rot


def _record_dtype(sh_degree: int) -> np.dtype:
    return np.dtype((np.dtype("<f4"), (BASE_FLOATS + (REST_FLOATS if sh_degree == 3 else 0),)))


def save_scene(gaussians: Scene | Sequence[Gaussian3D], path: str | os.PathLike) -> None:
    scene = gaussians if isinstance(gaussians, Scene) else Scene.from_gaussians(gaussians)
    n = len(scene)
    cols = [scene.means, scene.scales, scene.rotations, scene.opacities[:, None], scene.sh_dc]
    if scene.sh_rest is not None:
        cols.append(scene.sh_rest.reshape(n, REST_FLOATS))
    body = np.concatenate(cols, axis=1).astype("<f4") if n else np.zeros((0, 0), "<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, n, scene.sh_degree, 0))
            fh.write(body.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write scene to {path}: {exc}") from exc


def load_scene(path: str | os.PathLike) -> Scene:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise FormatError("truncated header", offset=len(data))
    magic, count, degree, _ = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if degree not in (0, 3):
        raise FormatError(f"unsupported sh_degree {degree}", offset=8)
    rec = _record_dtype(degree)
    need = HEADER.size + count * rec.itemsize
    if len(data) < need:
        whole = (len(data) - HEADER.size) // rec.itemsize
        raise FormatError(
            f"truncated payload: header declares {count} records, found {whole}",
            offset=HEADER.size + whole * rec.itemsize,
        )
    if len(data) > need:
        raise FormatError("trailing bytes after last record", offset=need)
    if count == 0:
        return Scene.empty(degree)
    body = np.frombuffer(data, dtype="<f4", count=count * rec.shape[0], offset=HEADER.size)
    body = body.reshape(count, rec.shape[0]).astype(np.float32)
    scene = Scene(
        body[:, 0:3],
        body[:, 3:6],
        body[:, 6:10],
        body[:, 10],
        body[:, 11:14],
        body[:, 14:].reshape(count, 15, 3) if degree == 3 else None,
    )
    _validate_records(scene)
    scene.rotations = _renormalize(scene.rotations)
    return scene


@dataclass(frozen=True)
class Camera:
    view: np.ndarray
    focal_x: float
    focal_y: float
    width: int
    height: int
    near: float
    far: float

    def __post_init__(self):
        view = np.asarray(self.view, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "view", view)
        if not (0 < self.near < self.far):
            raise ValidationError(f"need 0 < near < far, got near={self.near} far={self.far}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image dimensions must be positive")
        if self.focal_x <= 0 or self.focal_y <= 0:
            raise ValidationError("focal lengths must be positive")
        rot = view[:3, :3]
        err = np.linalg.norm(rot.T @ rot - np.eye(3))
        if err > ORTHO_TOL:
            raise ValidationError(f"view rotation is not orthonormal (|R^T R - I|_F = {err:.3g})")

    @property
    def rotation(self) -> np.ndarray:
        return self.view[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.view[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera position in world space."""
        return -self.rotation.T @ self.translation

    @property
    def principal_point(self) -> tuple[float, float]:
        return self.width / 2.0, self.height / 2.0


CAMERA_KEYS = ("view_row0", "view_row1", "view_row2", "view_row3", "focal_x", "focal_y", "width", "height", "near", "far")


def parse_camera(text: str) -> Camera:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"camera line {lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    missing = [k for k in CAMERA_KEYS if k not in values]
    if missing:
        raise ValidationError(f"camera config missing key(s): {', '.join(missing)}")
    try:
        rows = [[float(v) for v in values[f"view_row{i}"].replace(",", " ").split()] for i in range(4)]
        if any(len(r) != 4 for r in rows):
            raise ValidationError("each view_row needs exactly 4 numbers")
        return Camera(
            view=np.array(rows),
            focal_x=float(values["focal_x"]),
            focal_y=float(values["focal_y"]),
            width=int(values["width"]),
            height=int(values["height"]),
            near=float(values["near"]),
            far=float(values["far"]),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"camera config: {exc}") from exc


def load_camera(path: str | os.PathLike) -> Camera:
    return parse_camera(Path(path).read_text())


def format_camera(cam: Camera) -> str:
    lines = [f"view_row{i}=" + " ".join(repr(float(v)) for v in cam.view[i]) for i in range(4)]
    lines += [
        f"focal_x={cam.focal_x!r}",
        f"focal_y={cam.focal_y!r}",
        f"width={cam.width}",
        f"height={cam.height}",
        f"near={cam.near!r}",
        f"far={cam.far!r}",
    ]
    return "\n".join(lines) + "\n"


def save_camera(cam: Camera, path: str | os.PathLike) -> None:
    Path(path).write_text(format_camera(cam))


def canonical_camera(width: int = 512, height: int = 512, extent: float = 1.0) -> Camera:
    """Identity view looking down +z; the synthetic volume spans depths [2, 4] * extent.

    With focal length equal to the width, the horizontal half field of view
    has tangent 0.5, which frames the generated volume edge to edge.
    """
    return Camera(
        view=np.eye(4),
        focal_x=float(width),
        focal_y=float(width),
        width=width,
        height=height,
        near=0.01 * extent,
        far=100.0 * extent,
    )


# splitmix64: counter-based so any draw can be addressed directly by index.
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    """Outputs number ``counters`` of the splitmix64 stream started at ``seed``."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (np.asarray(counters, np.uint64) + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform_draws(seed: int, counters: np.ndarray) -> np.ndarray:
    """Doubles in [0, 1) built from the top 53 bits of each splitmix64 output."""
    return (splitmix64(seed, counters) >> np.uint64(11)).astype(np.float64) * 2.0**-53


DRAWS_PER_GAUSSIAN = 16


def gen_synthetic_scene(
    seed: int,
    count: int,
    extent: float = 1.0,
    scale_range: tuple[float, float] = (0.005, 0.03),
    sh_degree: int = 0,
) -> Scene:
    """Deterministic random scene placed in front of :func:`canonical_camera`.

    Gaussian ``i`` consumes draws ``16*i .. 16*i+15`` of the seeded stream:
    3 for the mean, 3 for the scales, 3 for a uniform random rotation, 1 for
    opacity, 3 for the color; the rest are unused. Degree-3 scenes take their
    higher-order coefficients from a second stream seeded with ``seed ^ 0x5348``.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if extent <= 0:
        raise ValueError("extent must be positive")
    lo, hi = scale_range
    if not 0 < lo <= hi:
        raise ValueError("scale_range must satisfy 0 < min <= max")
    if sh_degree not in (0, 3):
        raise ValueError("sh_degree must be 0 or 3")
    if count == 0:
        return Scene.empty(sh_degree)

    u = uniform_draws(seed, np.arange(count * DRAWS_PER_GAUSSIAN, dtype=np.uint64))
    u = u.reshape(count, DRAWS_PER_GAUSSIAN)
    means = (2.0 * u[:, 0:3] - 1.0) * extent
    means[:, 2] += 3.0 * extent
    scales = lo + (hi - lo) * u[:, 3:6]

    # Shoemake's uniform random unit quaternion
    u1, u2, u3 = u[:, 6], 2 * np.pi * u[:, 7], 2 * np.pi * u[:, 8]
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    quats = np.stack([b * np.cos(u3), a * np.sin(u2), a * np.cos(u2), b * np.sin(u3)], axis=1)

    opacities = 0.2 + 0.75 * u[:, 9]
    colors = u[:, 10:13]
    sh_dc = (colors - 0.5) / SH_C0

    rest = None
    if sh_degree == 3:
        r = uniform_draws(seed ^ 0x5348, np.arange(count * 45, dtype=np.uint64))
        rest = (r.reshape(count, 15, 3) - 0.5) * 0.2
    return Scene(means, scales, quats, opacities, sh_dc, rest)


@dataclass
class ImageBuffer:
    """Row-major RGB image, stored as an (height, width, 3) float32 array."""

    width: int
    height: int
    rgb: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rgb is None:
            self.rgb = np.zeros((self.height, self.width, 3), np.float32)
        else:
            self.rgb = np.asarray(self.rgb, np.float32).reshape(self.height, self.width, 3)

    def finalize(self) -> "ImageBuffer":
        return ImageBuffer(self.width, self.height, np.clip(self.rgb, 0.0, 1.0))

    def to_bytes(self) -> np.ndarray:
        v = np.clip(self.rgb.astype(np.float64), 0.0, 1.0) * 255.0
        return np.rint(v).astype(np.uint8)

    @classmethod
    def from_bytes(cls, pixels: np.ndarray) -> "ImageBuffer":
        h, w, _ = pixels.shape
        return cls(w, h, pixels.astype(np.float32) / np.float32(255.0))


def ppm_bytes(img: ImageBuffer) -> bytes:
    return f"P6\n{img.width} {img.height}\n255\n".encode() + img.to_bytes().tobytes()


def write_image(img: ImageBuffer, path: str | os.PathLike) -> None:
    try:
        Path(path).write_bytes(ppm_bytes(img))
    except OSError as exc:
        raise OSError(f"cannot write image to {path}: {exc}") from exc


def _ppm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header", offset=pos)
        tokens.append(data[start:pos])
    return tokens, pos + 1  # single whitespace byte before the raster


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary P6 PPM with maxval 255 into an (h, w, 3) uint8 array."""
    data = Path(path).read_bytes()
    tokens, start = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise FormatError(f"not a P6 PPM (magic {tokens[0]!r})", offset=0)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad PPM header: {exc}") from exc
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}")
    need = w * h * 3
    if len(data) - start < need:
        raise FormatError("truncated PPM raster", offset=len(data))
    return np.frombuffer(data, np.uint8, count=need, offset=start).reshape(h, w, 3)


def read_image(path: str | os.PathLike) -> ImageBuffer:
    return ImageBuffer.from_bytes(read_ppm(path))
