"""Synthetic ellipsoid dataset: analytic s-reps, bend/twist deformations, masks.

The undeformed ellipsoid is axis aligned with semi-axes ``a >= b >= c`` along
x, y, z.  Its skeletal sheet is the flat ellipse in the z = 0 plane obtained by
following each boundary normal inward to that plane.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fileio import save_srep
from .mask import VolumetricMask, write_nrrd
from .srep import Srep, check_grid, ring_latitudes

log = logging.getLogger(__name__)

BASE_ELLIPSOID = (30.0, 20.0, 10.0)  # mm
SCALE_MEAN, SCALE_STD = 1.0, 0.15
BEND_MEAN, BEND_STD = math.pi / 3, math.pi / 8
TWIST_MEAN, TWIST_STD = math.pi / 6, math.pi / 8
TEST_FRACTION = 0.2
VAL_FRACTION = 0.1  # of the train/val partition
MANIFEST_FORMAT = "srep-dataset/1"


@dataclass(frozen=True)
class EllipsoidSpec:
    a: float
    b: float
    c: float

    def __post_init__(self):
        axes = sorted((float(self.a), float(self.b), float(self.c)), reverse=True)
        if not (axes[2] > 0 and all(math.isfinite(v) for v in axes)):
            raise ValueError(f"semi-axes must be finite and positive, got {(self.a, self.b, self.c)}")
        for name, v in zip("abc", axes):
            object.__setattr__(self, name, v)

    @property
    def axes(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    def implicit(self, points) -> np.ndarray:
        """(x/a)^2 + (y/b)^2 + (z/c)^2; equals 1 on the surface."""
        p = np.asarray(points, dtype=np.float64)
        return ((p / self.axes) ** 2).sum(axis=-1)

    def normals(self, points) -> np.ndarray:
        """Unit outward normals (gradient of the implicit function)."""
        g = np.asarray(points, dtype=np.float64) / self.axes ** 2
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.a * self.b * self.c

    def scaled(self, scale) -> "EllipsoidSpec":
        return EllipsoidSpec(*(self.axes * np.asarray(scale, dtype=np.float64)))


@dataclass(frozen=True)
class DeformationParams:
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bend: float = 0.0
    twist: float = 0.0

    def __post_init__(self):
        scale = tuple(float(s) for s in self.scale)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "bend", float(self.bend))
        object.__setattr__(self, "twist", float(self.twist))
        if len(scale) != 3 or not all(s > 0 and math.isfinite(s) for s in scale):
            raise ValueError(f"scale factors must be finite and positive, got {self.scale}")
        if not (math.isfinite(self.bend) and abs(self.bend) < math.pi):
            raise ValueError(f"bend angle must satisfy |bend| < pi, got {self.bend}")
        if not math.isfinite(self.twist):
            raise ValueError(f"twist angle must be finite, got {self.twist}")


# ------------------------------------------------------------ medial geometry

def medial_map(p, spec: EllipsoidSpec, tol: float = 1e-9):
    """Skeletal point and radius for boundary point(s) ``p``.

    The skeletal point is where the inward normal line at ``p`` meets z = 0;
    the radius is the distance back to ``p``.
    """
    p = np.asarray(p, dtype=np.float64)
    dev = np.abs(spec.implicit(p) - 1.0)
    if np.any(dev > tol):
        raise ValueError(f"point not on ellipsoid surface (implicit deviation {float(np.max(dev)):.3g})")
    a2, b2, c2 = spec.axes ** 2
    m = np.stack([p[..., 0] * (a2 - c2) / a2, p[..., 1] * (b2 - c2) / b2, np.zeros(p.shape[:-1])], axis=-1)
    r = c2 * np.sqrt(p[..., 0] ** 2 / a2 ** 2 + p[..., 1] ** 2 / b2 ** 2 + p[..., 2] ** 2 / c2 ** 2)
    return m, r


def _ellipse_root(r0: float, z0: float, z1: float, g: float) -> float:
    n0 = r0 * z0
    s0, s1 = z1 - 1.0, (0.0 if g < 0 else math.hypot(n0, z1) - 1.0)
    s = s0
    for _ in range(2200):
        s = 0.5 * (s0 + s1)
        if s == s0 or s == s1:
            break
        ratio0, ratio1 = n0 / (s + r0), z1 / (s + 1.0)
        val = ratio0 * ratio0 + ratio1 * ratio1 - 1.0
        if val > 0:
            s0 = s
        elif val < 0:
            s1 = s
        else:
            break
    return s


def closest_point_on_ellipse(e0: float, e1: float, y, hint_angle: float = 0.0) -> np.ndarray:
    """Closest point of the ellipse (x/e0)^2 + (y/e1)^2 = 1 (e0 >= e1) to the 2-D point ``y``.

    Robust bisection after reflecting into the first quadrant.  Where the
    answer is not unique (the symmetric cases on an axis, or the centre of a
    circle) ``hint_angle`` picks the branch.
    """
    y0, y1 = float(y[0]), float(y[1])
    if e0 - e1 <= 1e-12 * e0:
        rad = math.hypot(y0, y1)
        if rad <= 1e-12 * e0:
            return np.array([e0 * math.cos(hint_angle), e0 * math.sin(hint_angle)])
        return np.array([e0 * y0 / rad, e0 * y1 / rad])
    # round-off off an axis makes the bisection ill-conditioned; snap to the axis
    if abs(y0) <= 1e-12 * e0:
        y0 = 0.0
    if abs(y1) <= 1e-12 * e0:
        y1 = 0.0
    sx = -1.0 if y0 < 0 or (y0 == 0 and math.cos(hint_angle) < 0) else 1.0
    sy = -1.0 if y1 < 0 or (y1 == 0 and math.sin(hint_angle) < 0) else 1.0
    y0, y1 = abs(y0), abs(y1)
    if y1 > 0:
        if y0 > 0:
            z0, z1 = y0 / e0, y1 / e1
            g = z0 * z0 + z1 * z1 - 1.0
            if g != 0:
                r0 = (e0 / e1) ** 2
                sbar = _ellipse_root(r0, z0, z1, g)
                x0, x1 = r0 * y0 / (sbar + r0), y1 / (sbar + 1.0)
            else:
                x0, x1 = y0, y1
        else:
            x0, x1 = 0.0, e1
    else:
        numer, denom = e0 * y0, e0 * e0 - e1 * e1
        if numer < denom:
            xde0 = numer / denom
            x0, x1 = e0 * xde0, e1 * math.sqrt(max(0.0, 1.0 - xde0 * xde0))
        else:
            x0, x1 = e0, 0.0
    return np.array([sx * x0, sy * x1])


def analytic_srep(spec: EllipsoidSpec, rings: int = 3, angular_samples: int = 8) -> Srep:
    """Exactly medial s-rep of an axis-aligned ellipsoid.

    Ring j samples boundary latitude ``ring_latitudes(rings)[j-1]`` at angles
    ``2*pi*i/T``; up/down spokes run from the shared skeletal point to the two
    mirror boundary points.  Each crest spoke runs from a fold-ring skeletal
    point to its closest point on the equator, so it is normal there too.
    """
    check_grid(rings, angular_samples)
    a, b, c = spec.a, spec.b, spec.c
    theta = 2 * np.pi * np.arange(angular_samples) / angular_samples
    phi = ring_latitudes(rings)
    ph, th = np.meshgrid(phi, theta, indexing="ij")
    ph, th = ph.reshape(-1), th.reshape(-1)
    p_up = np.stack([a * np.cos(ph) * np.cos(th), b * np.cos(ph) * np.sin(th), c * np.sin(ph)], axis=1)
    p_up = np.concatenate([[[0.0, 0.0, c]], p_up])
    p_down = p_up * np.array([1.0, 1.0, -1.0])
    m, _ = medial_map(p_up, spec)
    fold = m[-angular_samples:]
    crest_tips = np.array([
        [*closest_point_on_ellipse(a, b, fm[:2], hint_angle=t), 0.0] for fm, t in zip(fold, theta)
    ])
    return Srep(rings, angular_samples, m, p_up - m, p_down - m, crest_tips - fold)


# --------------------------------------------------------------- deformations

def _sinc(u):
    """sin(u)/u, exact at 0."""
    return np.sinc(np.asarray(u) / np.pi)


def _bend(q, kappa):
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    u = kappa * x
    xb = x * _sinc(u) - z * np.sin(u)
    zb = 0.5 * kappa * x * x * _sinc(0.5 * u) ** 2 + z * np.cos(u)
    return np.stack([xb, y, zb], axis=-1)


def _unbend(q, kappa):
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    if kappa == 0:
        return q.copy()
    w = 1.0 - kappa * z
    ang = np.arctan2(kappa * x, w)
    xu = ang / kappa
    zu = (2.0 * z - kappa * (x * x + z * z)) / (1.0 + np.hypot(kappa * x, w))
    return np.stack([xu, y, zu], axis=-1)


def _twist(q, rate):
    ang = rate * q[..., 0]
    cs, sn = np.cos(ang), np.sin(ang)
    y, z = q[..., 1], q[..., 2]
    return np.stack([q[..., 0], cs * y - sn * z, sn * y + cs * z], axis=-1)


def _rates(params: DeformationParams, a: float):
    half_length = a * params.scale[0]
    return params.bend / (2 * half_length), params.twist / (2 * half_length)


def apply_deformation(q, params: DeformationParams, a: float) -> np.ndarray:
    """Scale, then bend the long (x) axis in the x-z plane, then twist about x.

    ``a`` is the undeformed long semi-axis; bend curvature and twist rate are
    set so the scaled axis [-a*sx, a*sx] turns by ``bend`` and twists by ``twist``.
    """
    q = np.asarray(q, dtype=np.float64) * np.asarray(params.scale)
    kappa, rate = _rates(params, a)
    return _twist(_bend(q, kappa), rate)


def inverse_deformation(q, params: DeformationParams, a: float) -> np.ndarray:
    """Exact inverse of :func:`apply_deformation` (untwist, unbend, unscale)."""
    q = np.asarray(q, dtype=np.float64)
    kappa, rate = _rates(params, a)
    return _unbend(_twist(q, -rate), kappa) / np.asarray(params.scale)


def deform_srep(srep: Srep, params: DeformationParams, a: float) -> Srep:
    """Deform skeletal points and spoke tips; spokes are re-derived as tip - base."""
    skel = apply_deformation(srep.skeletal_points, params, a)
    up = apply_deformation(srep.up_tips, params, a)
    down = apply_deformation(srep.down_tips, params, a)
    crest = apply_deformation(srep.crest_tips, params, a)
    return Srep(srep.rings, srep.angular_samples, skel, up - skel, down - skel,
                crest - skel[srep.fold_indices])


def surface_samples(spec: EllipsoidSpec, n_lat: int = 65, n_lon: int = 128) -> np.ndarray:
    lat = np.linspace(-np.pi / 2, np.pi / 2, n_lat)
    lon = np.linspace(0, 2 * np.pi, n_lon, endpoint=False)
    la, lo = np.meshgrid(lat, lon, indexing="ij")
    return np.stack([spec.a * np.cos(la) * np.cos(lo), spec.b * np.cos(la) * np.sin(lo),
                     spec.c * np.sin(la)], axis=-1).reshape(-1, 3)


def fit_geometry(spec: EllipsoidSpec, params: DeformationParams, dims, occupancy: float = 0.7,
                 margin: int = 2):
    """Isotropic spacing and origin so the deformed shape fills ``occupancy`` of the image, centred.

    Small images get a coarser spacing if needed to keep ``margin`` clear voxels.
    """
    pts = apply_deformation(surface_samples(spec), params, spec.a)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    dims = np.asarray(dims)
    spacing = float(max(np.max((hi - lo) / (occupancy * dims)),
                        np.max((hi - lo) / (dims - 1 - 2 * margin - 0.5))))
    origin = 0.5 * (lo + hi) - 0.5 * (dims - 1) * spacing
    return (spacing,) * 3, tuple(origin)


def voxelize(spec: EllipsoidSpec, params: DeformationParams, dims=(64, 64, 64),
             spacing=None, origin=None, margin: int = 2) -> VolumetricMask:
    """Binary mask: a voxel is foreground iff its centre maps back inside the ellipsoid."""
    dims = tuple(int(n) for n in dims)
    if spacing is None or origin is None:
        fit_spacing, fit_origin = fit_geometry(spec, params, dims, margin=margin)
        spacing = fit_spacing if spacing is None else spacing
        origin = fit_origin if origin is None else origin
    spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (3,))
    origin = np.asarray(origin, dtype=np.float64)
    pts = apply_deformation(surface_samples(spec), params, spec.a)
    lo_ok = origin + margin * spacing
    hi_ok = origin + (np.asarray(dims) - 1 - margin) * spacing
    for axis, name in enumerate("xyz"):
        if pts[:, axis].min() < lo_ok[axis] or pts[:, axis].max() > hi_ok[axis]:
            raise ValueError(f"deformed shape exceeds the image extent (with {margin}-voxel margin) along {name}")
    mask = VolumetricMask(np.zeros(dims, dtype=bool), tuple(spacing), tuple(origin))
    centers = mask.voxel_centers().reshape(-1, 3)
    inside = spec.implicit(inverse_deformation(centers, params, spec.a)) <= 1.0
    return VolumetricMask(inside.reshape(dims), tuple(spacing), tuple(origin))


# -------------------------------------------------------------------- dataset

def sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, sample_id)))


def draw_deformation(rng: np.random.Generator, base: EllipsoidSpec,
                     max_tries: int = 1000) -> tuple[DeformationParams, int]:
    """Draw scale ~ N(1, 0.15) per axis, bend ~ N(pi/3, pi/8), twist ~ N(pi/6, pi/8).

    Draws are rejected and redrawn while a scale is non-positive, |bend| >= pi,
    the scaled semi-axes lose their strict a > b > c order, or the bend would
    fold the thickness (curvature * c >= 1).  Returns the params and the
    number of rejected draws.
    """
    for tries in range(max_tries):
        scale = rng.normal(SCALE_MEAN, SCALE_STD, size=3)
        bend = rng.normal(BEND_MEAN, BEND_STD)
        twist = rng.normal(TWIST_MEAN, TWIST_STD)
        if np.any(scale <= 0) or abs(bend) >= math.pi:
            continue
        axes = base.axes * scale
        if not (axes[0] > axes[1] > axes[2]):
            continue
        if abs(bend) / (2 * axes[0]) * axes[2] >= 1:
            continue
        return DeformationParams(tuple(scale), bend, twist), tries
    raise RuntimeError("could not draw valid deformation parameters")


@dataclass
class SampleEntry:
    id: int
    mask: str
    srep: str
    ellipsoid: tuple[float, float, float]
    deformation: dict
    split: str
    resampled: int = 0

    @property
    def spec(self) -> EllipsoidSpec:
        return EllipsoidSpec(*self.ellipsoid)

    @property
    def params(self) -> DeformationParams:
        d = self.deformation
        return DeformationParams(tuple(d["scale"]), d["bend"], d["twist"])


@dataclass
class DatasetManifest:
    seed: int
    rings: int
    angular_samples: int
    dims: tuple[int, int, int]
    samples: list[SampleEntry] = field(default_factory=list)
    root: Path = Path(".")

    def split(self, name: str) -> list[SampleEntry]:
        return [s for s in self.samples if s.split == name]

    def fractions(self) -> dict[str, float]:
        n = len(self.samples)
        return {k: len(self.split(k)) / n for k in ("train", "val", "test")}

    def path(self, rel: str) -> Path:
        return self.root / rel

    def to_json(self) -> str:
        doc = {
            "format": MANIFEST_FORMAT,
            "seed": self.seed,
            "grid": [self.rings, self.angular_samples],
            "dims": list(self.dims),
            "fractions": self.fractions(),
            "samples": [asdict(s) for s in self.samples],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{path}: not a {MANIFEST_FORMAT} manifest")
        samples = [SampleEntry(**{**s, "ellipsoid": tuple(s["ellipsoid"])}) for s in doc["samples"]]
        ids = [s.id for s in samples]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{path}: duplicate sample ids")
        return cls(doc["seed"], doc["grid"][0], doc["grid"][1], tuple(doc["dims"]), samples, path.parent)


def assign_splits(n: int, seed: int) -> list[str]:
    """80/20 train+val/test split; 10% of train+val held out for validation."""
    n_test = int(round(TEST_FRACTION * n))
    n_tv = n - n_test
    n_val = max(1, int(round(VAL_FRACTION * n_tv))) if n_tv >= 2 else 0
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,))).permutation(n)
    labels = [""] * n
    for rank, idx in enumerate(order):
        labels[idx] = "test" if rank < n_test else ("val" if rank < n_test + n_val else "train")
    return labels


def make_sample(sample_id: int, seed: int, rings: int, angular_samples: int, dims,
                base: EllipsoidSpec = EllipsoidSpec(*BASE_ELLIPSOID)):
    """Deterministic (mask, srep, params, resample count) for one sample id."""
    rng = sample_rng(seed, sample_id)
    params, tries = draw_deformation(rng, base)
    if tries:
        log.info("sample %d: resampled deformation %d time(s)", sample_id, tries)
    scaled = base.scaled(params.scale)
    unscaled = DeformationParams((1.0, 1.0, 1.0), params.bend, params.twist)
    srep = deform_srep(analytic_srep(scaled, rings, angular_samples), unscaled, scaled.a)
    mask = voxelize(base, params, dims)
    return mask, srep, params, tries


def _write_sample(job):
    sample_id, seed, rings, T, dims, base, out_dir = job
    mask, srep, params, tries = make_sample(sample_id, seed, rings, T, dims, base)
    mask_name, srep_name = f"sample_{sample_id:05d}.nrrd", f"sample_{sample_id:05d}.srep"
    write_nrrd(Path(out_dir) / mask_name, mask)
    save_srep(srep, Path(out_dir) / srep_name)
    return mask_name, srep_name, params, tries


def generate_dataset(n: int, seed: int, out_dir: str | os.PathLike, rings: int = 3,
                     angular_samples: int = 8, dims=(64, 64, 64),
                     base: EllipsoidSpec = EllipsoidSpec(*BASE_ELLIPSOID), jobs: int = 1) -> DatasetManifest:
    """Write ``n`` NRRD masks, ``n`` s-rep files and ``manifest.json`` into ``out_dir``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    check_grid(rings, angular_samples)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dims = tuple(int(d) for d in dims)
    jobs_list = [(i, seed, rings, angular_samples, dims, base, str(out)) for i in range(n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_write_sample, jobs_list))
    else:
        results = [_write_sample(j) for j in jobs_list]
    splits = assign_splits(n, seed)
    manifest = DatasetManifest(seed, rings, angular_samples, dims, root=out)
    for i, ((mask_name, srep_name, params, tries), split) in enumerate(zip(results, splits)):
        manifest.samples.append(SampleEntry(
            i, mask_name, srep_name, (base.a, base.b, base.c),
            {"scale": list(params.scale), "bend": params.bend, "twist": params.twist},
            split, tries))
    manifest.save(out / "manifest.json")
    return manifest


__all__ = [
    "EllipsoidSpec", "DeformationParams", "DatasetManifest", "SampleEntry", "medial_map",
    "analytic_srep", "apply_deformation", "inverse_deformation", "deform_srep", "voxelize",
    "generate_dataset", "make_sample", "draw_deformation", "closest_point_on_ellipse",
    "assign_splits", "write_nrrd",
]
