"""Binary voxel masks with physical geometry, and raw NRRD files for them."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np


class NrrdError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VolumetricMask:
    """Binary image; ``voxels[i, j, k]`` is the voxel whose centre is ``origin + (i, j, k) * spacing``.

    On disk the voxels are written x-fastest (Fortran order of this array).
    """

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        vox = np.asarray(self.voxels).astype(bool)
        if vox.ndim != 3:
            raise ValueError(f"mask must be 3-D, got shape {vox.shape}")
        if min(vox.shape) < 8:
            raise ValueError(f"mask dims must be >= 8 per axis, got {vox.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError(f"spacing must be 3 positive values, got {self.spacing}")
        vox.setflags(write=False)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of every voxel centre, shape (nx, ny, nz, 3)."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    @property
    def half_extent(self) -> np.ndarray:
        return 0.5 * np.asarray(self.dims) * np.asarray(self.spacing)

    def world_to_index(self, points) -> np.ndarray:
        return (np.asarray(points) - np.asarray(self.origin)) / np.asarray(self.spacing)

    def equals(self, other: "VolumetricMask") -> bool:
        return (np.array_equal(self.voxels, other.voxels) and self.spacing == other.spacing
                and self.origin == other.origin)


def _vec(values) -> str:
    return "(" + ",".join(repr(float(v)) for v in values) + ")"


def write_nrrd(path: str | os.PathLike, mask: VolumetricMask) -> None:
    sx, sy, sz = mask.spacing
    header = "\n".join([
        "NRRD0004",
        "# http://teem.sourceforge.net/nrrd/format.html",
        "type: uchar",
        "dimension: 3",
        "space dimension: 3",
        "sizes: {} {} {}".format(*mask.dims),
        f"space directions: {_vec((sx, 0, 0))} {_vec((0, sy, 0))} {_vec((0, 0, sz))}",
        "kinds: domain domain domain",
        "endian: little",
        "encoding: raw",
        f"space origin: {_vec(mask.origin)}",
    ]) + "\n\n"
    data = np.asarray(mask.voxels, dtype=np.uint8).tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + data)


_VEC_RE = re.compile(r"\(([^)]*)\)")


def read_nrrd(path: str | os.PathLike) -> VolumetricMask:
    with open(path, "rb") as fh:
        buf = fh.read()
    sep = buf.find(b"\n\n")
    if not buf.startswith(b"NRRD") or sep < 0:
        raise NrrdError(f"{path}: not a NRRD file")
    fields: dict[str, str] = {}
    for lineno, line in enumerate(buf[:sep].decode("ascii").splitlines()[1:], start=2):
        if line.startswith("#") or not line.strip():
            continue
        if ": " not in line:
            if ":=" in line:  # key/value comment
                continue
            raise NrrdError(f"{path}:{lineno}: malformed header line {line!r}")
        key, value = line.split(": ", 1)
        fields[key.strip()] = value.strip()
    if fields.get("type") not in ("uchar", "unsigned char", "uint8", "uint8_t"):
        raise NrrdError(f"{path}: unsupported type {fields.get('type')!r}")
    if fields.get("encoding") != "raw":
        raise NrrdError(f"{path}: unsupported encoding {fields.get('encoding')!r}")
    if fields.get("dimension") != "3":
        raise NrrdError(f"{path}: expected dimension 3")
    try:
        dims = tuple(int(v) for v in fields["sizes"].split())
        dirs = [[float(x) for x in m.split(",")] for m in _VEC_RE.findall(fields["space directions"])]
        origin = tuple(float(x) for x in _VEC_RE.findall(fields["space origin"])[0].split(","))
    except (KeyError, ValueError, IndexError) as exc:
        raise NrrdError(f"{path}: bad geometry fields ({exc})") from exc
    dirs = np.array(dirs)
    if dirs.shape != (3, 3) or np.count_nonzero(dirs - np.diag(np.diag(dirs))):
        raise NrrdError(f"{path}: only axis-aligned space directions are supported")
    data = np.frombuffer(buf, dtype=np.uint8, offset=sep + 2)
    if data.size != np.prod(dims):
        raise NrrdError(f"{path}: expected {np.prod(dims)} voxels, found {data.size}")
    vox = np.ascontiguousarray(data.reshape(dims, order="F"))
    return VolumetricMask(vox, tuple(np.diag(dirs)), origin)
