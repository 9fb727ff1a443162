"""Online rotation/scaling augmentation applied consistently to mask and target."""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from ..mask import VolumetricMask

log = logging.getLogger(__name__)


def transform_matrix(angles, scales) -> np.ndarray:
    """Rotation by per-axis angles (radians, x then y then z) after per-axis scaling."""
    return Rotation.from_euler("xyz", angles).as_matrix() @ np.diag(scales)


def resample(mask: VolumetricMask, M) -> VolumetricMask:
    """Nearest-neighbour image of ``mask`` under ``x -> c + M (x - c)``, c the image centre."""
    S = np.diag(mask.spacing)
    A = np.linalg.inv(S) @ np.linalg.inv(M) @ S  # output index -> source index
    ci = 0.5 * (np.asarray(mask.dims) - 1)
    out = ndimage.affine_transform(mask.voxels.astype(np.uint8), A, offset=ci - A @ ci,
                                   order=0, mode="constant", cval=0)
    return VolumetricMask(out.astype(bool), mask.spacing, mask.origin)


def transform_points(points, mask: VolumetricMask, M) -> np.ndarray:
    c = mask.center
    return (np.asarray(points) - c) @ np.asarray(M).T + c


def _fits(mask: VolumetricMask, M, coords, margin: float = 1.0) -> bool:
    """Whether the transformed foreground bounding box and targets stay inside the image."""
    idx = np.argwhere(mask.voxels)
    if not len(idx):
        return True
    lo, hi = idx.min(axis=0) - 0.5, idx.max(axis=0) + 0.5
    corners = np.array([[hx if b else lx for b, lx, hx in zip(bits, lo, hi)]
                        for bits in np.ndindex(2, 2, 2)])
    world = np.asarray(mask.origin) + corners * np.asarray(mask.spacing)
    pts = np.concatenate([transform_points(world, mask, M), transform_points(coords, mask, M)])
    ix = mask.world_to_index(pts)
    return bool(np.all(ix >= margin) and np.all(ix <= np.asarray(mask.dims) - 1 - margin))


def augment(mask: VolumetricMask, coords, rng: np.random.Generator, rotation_deg: float = 10.0,
            scale_range=(0.9, 1.1), max_tries: int = 20):
    """Random rotation (uniform +-rotation_deg per axis) and per-axis scaling.

    Returns ``(mask', coords', M)``.  Draws that push the shape out of the
    image are redrawn; after ``max_tries`` the sample is returned unchanged.
    """
    lim = math.radians(rotation_deg)
    for attempt in range(max_tries):
        M = transform_matrix(rng.uniform(-lim, lim, 3), rng.uniform(*scale_range, 3))
        if _fits(mask, M, coords):
            if attempt:
                log.info("augmentation redrawn %d time(s)", attempt)
            return resample(mask, M), transform_points(coords, mask, M), M
    log.warning("no in-frame augmentation after %d draws; using the sample unchanged", max_tries)
    return mask, np.asarray(coords, dtype=np.float64), np.eye(3)
