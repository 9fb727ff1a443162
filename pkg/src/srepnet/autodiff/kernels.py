"""Hot conv3d kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``SREPNET_PURE_PYTHON=1``
to force the numpy path.  ``BACKEND`` names the active choice.
"""
from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col3d_numpy(xp, kx, ky, kz, stride, ox, oy, oz):
    win = sliding_window_view(xp, (kx, ky, kz), axis=(2, 3, 4))
    win = win[:, :, : (ox - 1) * stride + 1 : stride,
              : (oy - 1) * stride + 1 : stride,
              : (oz - 1) * stride + 1 : stride]
    # (B, C, ox, oy, oz, kx, ky, kz) -> (B, C, kx, ky, kz, ox, oy, oz)
    return np.ascontiguousarray(win.transpose(0, 1, 5, 6, 7, 2, 3, 4))


def col2im3d_numpy(cols, px, py, pz, stride):
    nb, nc, kx, ky, kz, ox, oy, oz = cols.shape
    out = np.zeros((nb, nc, px, py, pz))
    for dx in range(kx):
        for dy in range(ky):
            for dz in range(kz):
                out[:, :,
                    dx : dx + (ox - 1) * stride + 1 : stride,
                    dy : dy + (oy - 1) * stride + 1 : stride,
                    dz : dz + (oz - 1) * stride + 1 : stride] += cols[:, :, dx, dy, dz]
    return out


def _select():
    if os.environ.get("SREPNET_PURE_PYTHON", "") not in ("", "0"):
        return "numpy", im2col3d_numpy, col2im3d_numpy
    try:
        from . import _kernels
    except ImportError:
        return "numpy", im2col3d_numpy, col2im3d_numpy
    return "cython", _kernels.im2col3d, _kernels.col2im3d


BACKEND, im2col3d, col2im3d = _select()
